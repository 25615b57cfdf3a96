//! `fedring compare`: a matrix of algorithms × seeds on one base config.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use fedring_core::engine::{run_training, Algorithm, TrainingHistory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{fill_seed, read_json, RunConfig, RunFlags};
use crate::output::{fmt_opt, write_json, RunManifest, Table};
use crate::CliError;

pub const SUMMARY: &str = "summary.csv";
pub const MEANS: &str = "means.csv";
pub const MATRIX: &str = "matrix.json";

/// The compare config file: a base run config plus the axes to sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareMatrix {
    #[serde(default)]
    pub base: RunConfig,
    #[serde(default)]
    pub algorithms: Option<Vec<Algorithm>>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// Comma-separated algorithms; defaults to all four.
    #[arg(long, value_delimiter = ',', value_parser = |s: &str| s.parse::<Algorithm>())]
    pub algorithms: Option<Vec<Algorithm>>,
    /// Comma-separated seeds; defaults to the base seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, value_name = "DIR", default_value = "fedring-compare")]
    pub out: PathBuf,
}

/// One matrix cell, resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub base: RunConfig,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
}

impl CompareMatrix {
    pub fn plan(mut self, flags: &CompareArgs) -> Result<Plan, CliError> {
        flags.run.apply(&mut self.base);
        if let Some(a) = &flags.algorithms {
            self.algorithms = Some(a.clone());
        }
        if let Some(s) = &flags.seeds {
            self.seeds = Some(s.clone());
        }
        fill_seed(&mut self.base)?;
        let algorithms = self.algorithms.unwrap_or_else(|| Algorithm::ALL.to_vec());
        let seeds = self.seeds.unwrap_or_else(|| vec![self.base.seed_value()]);
        if algorithms.is_empty() || seeds.is_empty() {
            return Err(CliError::Config(
                "compare matrix is empty: need at least one algorithm and one seed".into(),
            ));
        }
        Ok(Plan {
            base: self.base,
            algorithms,
            seeds,
        })
    }
}

pub fn load(args: &CompareArgs) -> Result<Plan, CliError> {
    let matrix = match &args.run.config {
        Some(path) => read_json::<CompareMatrix>(path)?,
        None => CompareMatrix {
            base: RunConfig::default(),
            algorithms: None,
            seeds: None,
        },
    };
    matrix.plan(args)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub run_id: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub user: usize,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub test_loss_before_adaptation: Option<f64>,
    pub test_accuracy_before_adaptation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanRow {
    pub algorithm: Algorithm,
    pub seeds: usize,
    pub mean_test_loss: Option<f64>,
    pub mean_test_accuracy: Option<f64>,
    pub mean_test_accuracy_before_adaptation: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub rows: Vec<SummaryRow>,
    pub means: Vec<MeanRow>,
    pub histories: Vec<(Algorithm, u64, TrainingHistory)>,
}

impl Outcome {
    pub fn mean_for(&self, algorithm: Algorithm) -> Option<&MeanRow> {
        self.means.iter().find(|m| m.algorithm == algorithm)
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v = values.collect::<Option<Vec<f64>>>()?;
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Runs every cell. Each cell seeds its own streams, so the outcome does not
/// depend on scheduling.
pub fn execute(plan: &Plan) -> Result<Outcome, CliError> {
    let cells: Vec<(Algorithm, u64)> = plan
        .algorithms
        .iter()
        .flat_map(|&a| plan.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let runs: Vec<Result<(String, TrainingHistory), CliError>> = cells
        .par_iter()
        .map(|&(algorithm, seed)| {
            let config = RunConfig {
                algorithm,
                seed: Some(seed),
                ..plan.base.clone()
            };
            let resolved = config.resolve()?;
            let run = run_training(&resolved.experiment, &resolved.users)?;
            Ok((config.run_id(), run.history))
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    let mut histories = Vec::new();
    for (&(algorithm, seed), (run_id, history)) in cells.iter().zip(runs) {
        for r in &history.results {
            let last = r.final_evaluation();
            rows.push(SummaryRow {
                run_id: run_id.clone(),
                algorithm,
                seed,
                user: r.user,
                test_loss: last.test_loss,
                test_accuracy: last.test_accuracy,
                test_loss_before_adaptation: r.before_adaptation.test_loss,
                test_accuracy_before_adaptation: r.before_adaptation.test_accuracy,
            });
        }
        histories.push((algorithm, seed, history));
    }
    let means = plan
        .algorithms
        .iter()
        .map(|&algorithm| {
            let per_seed: Vec<&TrainingHistory> = histories
                .iter()
                .filter(|(a, _, _)| *a == algorithm)
                .map(|(_, _, h)| h)
                .collect();
            MeanRow {
                algorithm,
                seeds: per_seed.len(),
                mean_test_loss: mean(per_seed.iter().map(|h| h.mean_final_test_loss())),
                mean_test_accuracy: mean(per_seed.iter().map(|h| h.mean_final_accuracy())),
                mean_test_accuracy_before_adaptation: mean(
                    per_seed.iter().map(|h| h.mean_accuracy_before_adaptation()),
                ),
            }
        })
        .collect();
    Ok(Outcome {
        rows,
        means,
        histories,
    })
}

pub fn write_outcome(outcome: &Outcome, out: &Path) -> Result<(), CliError> {
    let mut summary = Table::new(&[
        "run_id",
        "algorithm",
        "seed",
        "user",
        "test_loss",
        "test_accuracy",
        "test_loss_before_adaptation",
        "test_accuracy_before_adaptation",
    ]);
    for r in &outcome.rows {
        summary.row(&[
            r.run_id.clone(),
            r.algorithm.name().to_string(),
            r.seed.to_string(),
            r.user.to_string(),
            fmt_opt(r.test_loss),
            fmt_opt(r.test_accuracy),
            fmt_opt(r.test_loss_before_adaptation),
            fmt_opt(r.test_accuracy_before_adaptation),
        ]);
    }
    summary.write(&out.join(SUMMARY))?;

    let mut means = Table::new(&[
        "algorithm",
        "seeds",
        "mean_test_loss",
        "mean_test_accuracy",
        "mean_test_accuracy_before_adaptation",
    ]);
    for m in &outcome.means {
        means.row(&[
            m.algorithm.name().to_string(),
            m.seeds.to_string(),
            fmt_opt(m.mean_test_loss),
            fmt_opt(m.mean_test_accuracy),
            fmt_opt(m.mean_test_accuracy_before_adaptation),
        ]);
    }
    means.write(&out.join(MEANS))
}

pub fn run(plan: &Plan, out: &Path) -> Result<Outcome, CliError> {
    std::fs::create_dir_all(out)?;
    let mut manifest = RunManifest::start("compare", &plan.base, None, &[MATRIX, SUMMARY, MEANS]);
    manifest.write(out)?;
    write_json(
        &out.join(MATRIX),
        &CompareMatrix {
            base: plan.base.clone(),
            algorithms: Some(plan.algorithms.clone()),
            seeds: Some(plan.seeds.clone()),
        },
    )?;
    let started = Instant::now();
    let result = execute(plan).and_then(|o| write_outcome(&o, out).map(|()| o));
    manifest.finish(
        started.elapsed().as_secs_f64(),
        &result.as_ref().map(|_| ()).map_err(CliError::clone),
    );
    manifest.write(out)?;
    result
}

/// The means table as aligned text.
pub fn render_means(outcome: &Outcome) -> String {
    let cell = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    let mut s = format!(
        "{:<12} {:>5} {:>10} {:>10} {:>10}\n",
        "algorithm", "seeds", "test_loss", "accuracy", "pre-adapt"
    );
    for m in &outcome.means {
        s.push_str(&format!(
            "{:<12} {:>5} {:>10} {:>10} {:>10}\n",
            m.algorithm.name(),
            m.seeds,
            cell(m.mean_test_loss),
            cell(m.mean_test_accuracy),
            cell(m.mean_test_accuracy_before_adaptation)
        ));
    }
    s
}
