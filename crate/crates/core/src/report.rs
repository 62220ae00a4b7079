//! Seeded property sweeps and their JSON reports.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, ComplexVector};
use crate::random::{trial_rng, TrialRng};

pub const SCHEMA_VERSION: u32 = 1;

/// A trial fails when `bound − measured` drops below `−SLACK_TOLERANCE`.
pub const SLACK_TOLERANCE: f64 = 1e-8;

/// Sweep parameters shared by all lemma checks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FidelityCheckConfig {
    pub trials: usize,
    /// Largest dimension; trial `t` uses `2 + t mod (dim − 1)`.
    pub dim: usize,
    pub seed: u64,
    /// Largest perturbation strength `s` for high-fidelity instances.
    pub eta: f64,
    /// Target infidelity for the encoding-irrelevance instances.
    pub epsilon: f64,
    /// Largest Frobenius norm of perturbations `Δ`.
    pub delta: f64,
}

impl FidelityCheckConfig {
    pub fn new(trials: usize, dim: usize, seed: u64) -> Result<Self> {
        if trials == 0 {
            return Err(Error::Precondition("trials must be at least 1".into()));
        }
        if dim < 2 {
            return Err(Error::Precondition("dim must be at least 2".into()));
        }
        Ok(FidelityCheckConfig {
            trials,
            dim,
            seed,
            eta: 0.1,
            epsilon: 0.01,
            delta: 0.2,
        })
    }

    pub fn trial_dim(&self, trial: usize) -> usize {
        2 + trial % (self.dim - 1)
    }
}

/// Result of one trial of a sweep.
#[derive(Clone, Debug)]
pub enum Trial {
    /// `slack = bound − measured`; negative means the inequality failed.
    Checked {
        slack: f64,
        instance: Value,
        info: Vec<(&'static str, f64)>,
    },
    /// Instance did not meet the lemma's premise.
    Skipped(String),
}

impl Trial {
    pub fn checked(slack: f64, instance: Value) -> Self {
        Trial::Checked {
            slack,
            instance,
            info: Vec::new(),
        }
    }

    pub fn with_info(self, key: &'static str, value: f64) -> Self {
        match self {
            Trial::Checked {
                slack,
                instance,
                mut info,
            } => {
                info.push((key, value));
                Trial::Checked {
                    slack,
                    instance,
                    info,
                }
            }
            skipped => skipped,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub schema: u32,
    pub lemma: String,
    pub trials: usize,
    pub seed: u64,
    pub evaluated: usize,
    pub skipped: usize,
    pub errors: usize,
    /// `max(0, −min_slack)`.
    pub max_violation: f64,
    pub min_slack: f64,
    pub worst_trial: Option<usize>,
    pub worst_case_instance: Value,
    /// Trial diagnostics merged per key: `min_*` keys by minimum, `max_*`
    /// keys by maximum, all others summed.
    pub info: BTreeMap<String, f64>,
    pub pass: bool,
}

/// Runs `trials` independent trials, trial `t` drawing from stream `t` of
/// `seed`, and merges the outcomes in trial order.
pub fn run_sweep<F>(lemma: &str, trials: usize, seed: u64, trial: F) -> CheckReport
where
    F: Fn(usize, &mut TrialRng) -> Result<Trial> + Sync,
{
    let outcomes: Vec<Result<Trial>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            trial(t, &mut rng)
        })
        .collect();

    let mut evaluated = 0;
    let mut skipped = 0;
    let mut errors = 0;
    let mut min_slack = f64::INFINITY;
    let mut worst_trial = None;
    let mut worst_case_instance = Value::Null;
    let mut info: BTreeMap<String, f64> = BTreeMap::new();
    let mut first_error = None;
    for (t, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(Trial::Checked {
                slack,
                instance,
                info: extra,
            }) => {
                evaluated += 1;
                let slack = if slack.is_nan() { f64::NEG_INFINITY } else { slack };
                if slack < min_slack || worst_trial.is_none() {
                    min_slack = slack;
                    worst_trial = Some(t);
                    worst_case_instance = instance;
                }
                for (k, v) in extra {
                    merge_info(&mut info, k, v);
                }
            }
            Ok(Trial::Skipped(_)) => skipped += 1,
            Err(e) => {
                errors += 1;
                first_error.get_or_insert_with(|| (t, e.to_string()));
            }
        }
    }
    if let Some((t, msg)) = first_error {
        if worst_trial.is_none() {
            worst_case_instance = json!({ "trial": t, "error": msg });
        }
    }
    let max_violation = if min_slack.is_finite() { (-min_slack).max(0.0) } else { f64::INFINITY };
    let pass = errors == 0 && evaluated > 0 && min_slack >= -SLACK_TOLERANCE;
    CheckReport {
        schema: SCHEMA_VERSION,
        lemma: lemma.to_string(),
        trials,
        seed,
        evaluated,
        skipped,
        errors,
        max_violation: if evaluated == 0 { 0.0 } else { max_violation },
        min_slack: if evaluated == 0 { 0.0 } else { min_slack },
        worst_trial,
        worst_case_instance,
        info,
        pass,
    }
}

fn merge_info(info: &mut BTreeMap<String, f64>, key: &str, value: f64) {
    match info.get_mut(key) {
        None => {
            info.insert(key.to_string(), value);
        }
        Some(slot) if key.starts_with("min_") => *slot = slot.min(value),
        Some(slot) if key.starts_with("max_") => *slot = slot.max(value),
        Some(slot) => *slot += value,
    }
}

/// Row-major `[[re, im], …]` rows.
pub fn matrix_json(m: &ComplexMatrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|r| {
                Value::Array(
                    (0..m.ncols())
                        .map(|c| json!([m[(r, c)].re, m[(r, c)].im]))
                        .collect(),
                )
            })
            .collect(),
    )
}

pub fn vector_json(v: &ComplexVector) -> Value {
    Value::Array(v.iter().map(|z| json!([z.re, z.im])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn sweep_is_ordered_and_reports_worst_trial() {
        let report = run_sweep("demo", 50, 3, |t, rng| {
            let x: f64 = rng.random();
            Ok(Trial::checked(if t == 17 { -1.0 } else { x }, json!({ "t": t })))
        });
        assert_eq!(report.worst_trial, Some(17));
        assert_eq!(report.worst_case_instance, json!({ "t": 17 }));
        assert!(!report.pass);
        assert_eq!(report.max_violation, 1.0);
        let again = run_sweep("demo", 50, 3, |t, rng| {
            let x: f64 = rng.random();
            Ok(Trial::checked(if t == 17 { -1.0 } else { x }, json!({ "t": t })))
        });
        assert_eq!(report, again);
    }

    #[test]
    fn skipped_and_errors_are_counted() {
        let report = run_sweep("demo", 4, 0, |t, _| match t {
            0 => Ok(Trial::Skipped("premise".into())),
            1 => Err(Error::Degenerate("x".into())),
            _ => Ok(Trial::checked(0.5, Value::Null)
                .with_info("k", 1.0)
                .with_info("min_x", t as f64)
                .with_info("max_x", t as f64)),
        });
        assert_eq!(report.info["min_x"], 2.0);
        assert_eq!(report.info["max_x"], 3.0);
        assert_eq!((report.evaluated, report.skipped, report.errors), (2, 1, 1));
        assert_eq!(report.info["k"], 2.0);
        assert!(!report.pass);
    }

    #[test]
    fn config_rejects_degenerate_sizes() {
        assert!(FidelityCheckConfig::new(0, 4, 1).is_err());
        assert!(FidelityCheckConfig::new(3, 1, 1).is_err());
        let cfg = FidelityCheckConfig::new(3, 4, 1).unwrap();
        assert_eq!((0..4).map(|t| cfg.trial_dim(t)).collect::<Vec<_>>(), vec![2, 3, 4, 2]);
    }
}
