//! `fedring attack`: gradient inversion against a recorded training run.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use fedring_core::adversary::{
    aggregate_view, hbc_view, idlg_attack, intercept, write_pgm, AttackOptions, AttackResult,
    AttackTarget, Observation, Provenance,
};
use fedring_core::engine::RoundTransport;
use fedring_core::SeededRng;
use serde::{Deserialize, Serialize};

use crate::output::{write_json, ManifestRef, RunManifest, MANIFEST};
use crate::train::{KeysFile, TraceFile, KEYS, TRACE};
use crate::CliError;

pub const ATTACK: &str = "attack.json";
pub const SNAPSHOTS: &str = "snapshots";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum Vantage {
    /// Reads one user's plaintext upload off a FedAvg link.
    #[value(name = "type1-fedavg")]
    #[serde(rename = "type1-fedavg")]
    Type1Fedavg,
    /// Reads one ciphertext off a ring link.
    #[value(name = "type1-csahe")]
    #[serde(rename = "type1-csahe")]
    Type1Csahe,
    /// A ring member decrypting the hop it receives with a leaked key.
    #[value(name = "type2-leakedkey")]
    #[serde(rename = "type2-leakedkey")]
    Type2Leakedkey,
    /// The decrypted ring sum.
    #[value(name = "aggregate")]
    #[serde(rename = "aggregate")]
    Aggregate,
}

#[derive(Debug, Clone, Args)]
pub struct AttackArgs {
    /// Run directory written by `fedring train`.
    #[arg(long, value_name = "DIR")]
    pub run: PathBuf,
    #[arg(long, value_enum)]
    pub vantage: Vantage,
    /// Defaults to RUN/trace.json.
    #[arg(long, value_name = "PATH")]
    pub trace: Option<PathBuf>,
    /// Leaked key file for type2-leakedkey; defaults to RUN/keys.json.
    #[arg(long, value_name = "PATH")]
    pub keys: Option<PathBuf>,
    /// Global epoch to attack.
    #[arg(long, default_value_t = 0)]
    pub round: usize,
    /// Uploading user for type1-fedavg, ring hop for type1-csahe and
    /// type2-leakedkey.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long, default_value_t = 5000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    /// Write a PGM of the dummy data every this many iterations.
    #[arg(long)]
    pub snapshot_every: Option<usize>,
    /// Seed for the dummy-data start; defaults to the run's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Defaults to the run directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackReport {
    #[serde(flatten)]
    pub source: ManifestRef,
    pub vantage: Vantage,
    pub round: usize,
    pub index: usize,
    pub plaintext_available: bool,
    /// Set for ciphertext-only observations.
    pub observation: Option<Observation>,
    pub provenance: Option<Provenance>,
    pub label: Option<usize>,
    pub label_exact: Option<bool>,
    pub mse: Option<f64>,
    pub iterations_run: usize,
    pub final_loss: Option<f64>,
    pub loss_curve: Vec<f64>,
    pub dummy_data: Vec<f64>,
    /// Relative to the report's directory.
    pub snapshots: Vec<String>,
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

/// Builds the attack target seen from `vantage`, or the ciphertext-only
/// observation when there is nothing to invert.
pub fn observe(
    args: &AttackArgs,
    trace: &TraceFile,
    round: &RoundTransport,
) -> Result<Result<AttackTarget, Observation>, CliError> {
    let ctx = &trace.context;
    let epoch = args.round;
    match (args.vantage, round) {
        (Vantage::Type1Fedavg, RoundTransport::Fedavg { .. }) => {
            let obs = intercept(round, args.index, ctx).map_err(config_err)?;
            Ok(Ok(obs.target().map_err(config_err)?.clone()))
        }
        (Vantage::Type1Csahe, RoundTransport::Csahe { .. }) => {
            Ok(Err(intercept(round, args.index, ctx).map_err(config_err)?))
        }
        (Vantage::Type2Leakedkey, RoundTransport::Csahe { .. }) => {
            let path = args.keys.clone().unwrap_or_else(|| args.run.join(KEYS));
            let keys: KeysFile = crate::config::read_json(&path)?;
            Ok(Ok(
                hbc_view(round, args.index, &keys.keys.private, ctx).map_err(config_err)?
            ))
        }
        (Vantage::Aggregate, RoundTransport::Csahe { .. }) => {
            Ok(Ok(aggregate_view(round, ctx).map_err(config_err)?))
        }
        (Vantage::Type1Fedavg, _) => Err(CliError::Config(format!(
            "round {epoch} carries ring ciphertexts, not fedavg uploads"
        ))),
        (_, _) => Err(CliError::Config(format!(
            "round {epoch} carries fedavg uploads, not a ring pass"
        ))),
    }
}

/// Training samples the attacked message could have come from.
fn candidates(
    manifest: &RunManifest,
    vantage: Vantage,
    index: usize,
) -> Result<Vec<Vec<f64>>, CliError> {
    let resolved = manifest.config.resolve()?;
    let shards: Vec<_> = match vantage {
        Vantage::Type1Fedavg => resolved
            .users
            .get(index)
            .map(|u| &u.train)
            .into_iter()
            .collect(),
        _ => resolved.users.iter().map(|u| &u.train).collect(),
    };
    Ok(shards
        .into_iter()
        .flat_map(|s| (0..s.len()).map(move |i| s.row(i).to_vec()))
        .collect())
}

fn relative_manifest(run: &Path, out: &Path) -> String {
    if run == out {
        MANIFEST.to_string()
    } else {
        run.join(MANIFEST).display().to_string()
    }
}

pub fn run(args: &AttackArgs) -> Result<AttackReport, CliError> {
    let manifest = RunManifest::read(&args.run)?;
    let trace_path = args.trace.clone().unwrap_or_else(|| args.run.join(TRACE));
    let trace: TraceFile = crate::config::read_json(&trace_path)?;
    if trace.source.run_id != manifest.run_id {
        return Err(CliError::Config(format!(
            "{} belongs to run {}, but the manifest describes run {}",
            trace_path.display(),
            trace.source.run_id,
            manifest.run_id
        )));
    }
    let round = trace.rounds.get(args.round).ok_or_else(|| {
        CliError::Config(format!(
            "round {} not in trace ({} rounds recorded)",
            args.round,
            trace.rounds.len()
        ))
    })?;
    let out = args.out.clone().unwrap_or_else(|| args.run.clone());
    std::fs::create_dir_all(&out)?;

    let mut report = AttackReport {
        source: ManifestRef {
            manifest: relative_manifest(&args.run, &out),
            run_id: manifest.run_id.clone(),
        },
        vantage: args.vantage,
        round: args.round,
        index: args.index,
        plaintext_available: false,
        observation: None,
        provenance: None,
        label: None,
        label_exact: None,
        mse: None,
        iterations_run: 0,
        final_loss: None,
        loss_curve: Vec::new(),
        dummy_data: Vec::new(),
        snapshots: Vec::new(),
    };

    match observe(args, &trace, round)? {
        Err(observation) => {
            report.observation = Some(observation);
        }
        Ok(target) => {
            let side = (target.model_spec.input_dim() as f64).sqrt().round() as usize;
            if args.snapshot_every.is_some() && side * side != target.model_spec.input_dim() {
                return Err(CliError::Config(format!(
                    "snapshot-every: {} input features do not form a square image",
                    target.model_spec.input_dim()
                )));
            }
            let target = target.with_candidates(candidates(&manifest, args.vantage, args.index)?);
            let options = AttackOptions {
                iterations: args.iterations,
                eta: args.eta,
                snapshot_every: args.snapshot_every,
                ..AttackOptions::default()
            };
            let seed = args.seed.unwrap_or(manifest.config.seed_value());
            let mut rng = SeededRng::new(seed, "attack/start");
            let result = idlg_attack(&target, &options, &mut rng).map_err(|e| match e {
                fedring_core::adversary::AdversaryError::NonFinite(m) => CliError::Divergence(m),
                e => config_err(e),
            })?;
            report.snapshots = write_snapshots(&out, &result)?;
            report.plaintext_available = true;
            report.provenance = Some(target.provenance);
            report.label = Some(result.dummy_label);
            report.label_exact = Some(result.label_exact);
            report.mse = result.reconstruction_mse;
            report.iterations_run = result.loss_curve.len();
            report.final_loss = result.loss_curve.last().copied();
            report.loss_curve = result.loss_curve;
            report.dummy_data = result.dummy_data;
        }
    }
    write_json(&out.join(ATTACK), &report)?;
    Ok(report)
}

fn write_snapshots(out: &Path, result: &AttackResult) -> Result<Vec<String>, CliError> {
    if result.snapshots.is_empty() {
        return Ok(Vec::new());
    }
    let dir = out.join(SNAPSHOTS);
    std::fs::create_dir_all(&dir)?;
    let mut names = Vec::new();
    let frames = result
        .snapshots
        .iter()
        .map(|s| (format!("iter_{:05}.pgm", s.iteration), &s.data))
        .chain(std::iter::once((
            "final.pgm".to_string(),
            &result.dummy_data,
        )));
    for (name, data) in frames {
        write_pgm(dir.join(&name), data).map_err(|e| CliError::Io(e.to_string()))?;
        names.push(format!("{SNAPSHOTS}/{name}"));
    }
    Ok(names)
}

/// One-line summary for the terminal.
pub fn summary(report: &AttackReport) -> String {
    if !report.plaintext_available {
        return "ciphertext-only observation: no plaintext gradient to invert".to_string();
    }
    let mse = report
        .mse
        .map(|m| format!("{m:.3e}"))
        .unwrap_or_else(|| "n/a".into());
    format!(
        "label {} ({}), reconstruction mse {mse} after {} iterations",
        report.label.unwrap_or_default(),
        if report.label_exact == Some(true) {
            "extracted"
        } else {
            "fallback"
        },
        report.iterations_run
    )
}
