//! `fedring train`: one experiment, written to a run directory.

use std::path::Path;
use std::time::Instant;

use fedring_core::adversary::AttackContext;
use fedring_core::csahe::AheKeyPair;
use fedring_core::engine::{
    run_training, Algorithm, CipherKind, RoundTransport, TrainingHistory, TrainingRun,
};
use serde::{Deserialize, Serialize};

use crate::config::Resolved;
use crate::output::{fmt_opt, write_json, ManifestRef, RunManifest, Table};
use crate::CliError;

pub const HISTORY: &str = "history.json";
pub const METRICS: &str = "metrics.csv";
pub const SERVER_MODEL: &str = "server_model.csv";
pub const RESULTS: &str = "results.csv";
pub const TRACE: &str = "trace.json";
pub const KEYS: &str = "keys.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryFile {
    #[serde(flatten)]
    pub source: ManifestRef,
    pub history: TrainingHistory,
}

/// Everything that crossed the wire, with the public parameters an
/// eavesdropper would know.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceFile {
    #[serde(flatten)]
    pub source: ManifestRef,
    pub context: AttackContext,
    pub rounds: Vec<RoundTransport>,
}

/// The run's key pair, kept apart from the trace so that reading it is an
/// explicit choice.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeysFile {
    #[serde(flatten)]
    pub source: ManifestRef,
    pub keys: AheKeyPair,
}

fn planned_outputs(resolved: &Resolved) -> Vec<&'static str> {
    let e = &resolved.experiment;
    let mut outputs = vec![HISTORY, METRICS, RESULTS];
    if e.algorithm != Algorithm::LocalOnly {
        outputs.push(SERVER_MODEL);
    }
    if matches!(e.algorithm, Algorithm::Fedavg | Algorithm::Pppml) {
        outputs.push(TRACE);
    }
    if e.algorithm == Algorithm::Pppml && e.cipher == CipherKind::Paillier {
        outputs.push(KEYS);
    }
    outputs
}

/// Trains `resolved` and writes the manifest and every result file to `out`.
pub fn train_into(resolved: &Resolved, out: &Path) -> Result<TrainingRun, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let outputs = planned_outputs(resolved);
    let mut manifest = RunManifest::start(
        "train",
        &resolved.config,
        Some(&resolved.experiment),
        &outputs,
    );
    manifest.write(out)?;

    let started = Instant::now();
    let result = run_training(&resolved.experiment, &resolved.users)
        .map_err(CliError::from)
        .and_then(|run| write_results(&manifest.run_id, resolved, &run, out).map(|()| run));
    manifest.finish(
        started.elapsed().as_secs_f64(),
        &result.as_ref().map(|_| ()).map_err(CliError::clone),
    );
    manifest.write(out)?;
    result
}

fn write_results(
    run_id: &str,
    resolved: &Resolved,
    run: &TrainingRun,
    out: &Path,
) -> Result<(), CliError> {
    let source = ManifestRef::local(run_id);
    let history = &run.history;
    write_json(
        &out.join(HISTORY),
        &HistoryFile {
            source: source.clone(),
            history: history.clone(),
        },
    )?;

    let mut metrics = Table::new(&["run_id", "epoch", "user", "train_loss"]);
    for record in &history.epochs {
        for (user, loss) in record.user_train_loss.iter().enumerate() {
            metrics.row(&[
                run_id.to_string(),
                record.epoch.to_string(),
                user.to_string(),
                loss.to_string(),
            ]);
        }
    }
    metrics.write(&out.join(METRICS))?;

    let mut results = Table::new(&[
        "run_id",
        "user",
        "stage",
        "train_loss",
        "test_loss",
        "test_accuracy",
    ]);
    for r in &history.results {
        let stages = [
            ("before-adaptation", Some(&r.before_adaptation)),
            ("adapted", r.adapted.as_ref()),
        ];
        for (stage, eval) in stages {
            if let Some(eval) = eval {
                results.row(&[
                    run_id.to_string(),
                    r.user.to_string(),
                    stage.to_string(),
                    eval.train_loss.to_string(),
                    fmt_opt(eval.test_loss),
                    fmt_opt(eval.test_accuracy),
                ]);
            }
        }
    }
    results.write(&out.join(RESULTS))?;

    if resolved.experiment.algorithm != Algorithm::LocalOnly {
        let dim = resolved.experiment.model.param_dim();
        let mut header = vec!["run_id".to_string(), "epoch".to_string()];
        header.extend((0..dim).map(|i| format!("w{i}")));
        let mut table = Table::new(&header);
        for record in &history.epochs {
            if let Some(w) = &record.server_model {
                let mut row = vec![run_id.to_string(), record.epoch.to_string()];
                row.extend(w.iter().map(|v| v.to_string()));
                table.row(&row);
            }
        }
        table.write(&out.join(SERVER_MODEL))?;
    }

    if !run.transport.rounds.is_empty() {
        write_json(
            &out.join(TRACE),
            &TraceFile {
                source: source.clone(),
                context: AttackContext::from_config(&resolved.experiment),
                rounds: run.transport.rounds.clone(),
            },
        )?;
    }
    if let Some(keys) = &run.transport.keys {
        write_json(
            &out.join(KEYS),
            &KeysFile {
                source,
                keys: keys.clone(),
            },
        )?;
    }
    Ok(())
}

/// One-line summary for the terminal.
pub fn summary(run: &TrainingRun) -> String {
    let h = &run.history;
    let stage = if h.results.iter().any(|r| r.adapted.is_some()) {
        "adapted"
    } else {
        "final"
    };
    match (h.mean_final_accuracy(), h.mean_final_test_loss()) {
        (Some(acc), Some(loss)) => format!(
            "{}: mean {stage} test accuracy {acc:.4}, test loss {loss:.4}",
            h.algorithm.name()
        ),
        (None, Some(loss)) => format!("{}: mean {stage} test loss {loss:.4}", h.algorithm.name()),
        _ => format!("{}: finished {} epochs", h.algorithm.name(), h.epochs.len()),
    }
}
