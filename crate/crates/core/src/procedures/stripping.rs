use serde::Serialize;
use serde_json::{json, Value};

use crate::channels::QuantumOperation;
use crate::error::{Error, Result};
use crate::fidelity::{entanglement_fidelity, min_pure_state_fidelity_with, MinFidelityConfig};
use crate::linalg::{
    c64, eig_hermitian, hermitize, outer, trace, ComplexMatrix, ComplexVector, DensityOperator,
    Subspace,
};
use crate::report::{matrix_json, vector_json};

/// Eigenvalues at or below this count as outside the support of `ρ`.
const SUPPORT_CUTOFF: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct StrippingStep {
    /// Removal weight `q_i`.
    pub weight: f64,
    pub state: ComplexVector,
    /// Pure-state fidelity of `state`.
    pub fidelity: f64,
    /// Rank of the residual after this step.
    pub residual_rank: usize,
    pub converged: bool,
}

/// Pure-state ensemble `{q_i, |i⟩}` for `ρ`, ordered by removal.
#[derive(Clone, Debug, PartialEq)]
pub struct StrippingEnsemble {
    pub steps: Vec<StrippingStep>,
}

impl StrippingEnsemble {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.weight).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.steps.iter().map(|s| s.weight).sum()
    }

    /// `Σ q_i |i⟩⟨i|`
    pub fn reconstruct(&self) -> ComplexMatrix {
        let d = self.steps.first().map_or(0, |s| s.state.len());
        self.steps.iter().fold(ComplexMatrix::zeros(d, d), |acc, s| {
            acc + outer(&s.state, &s.state) * c64(s.weight, 0.0)
        })
    }

    /// Largest drop `f_i − f_{i+1}` between consecutive fidelities.
    pub fn max_ordering_drop(&self) -> f64 {
        self.steps
            .windows(2)
            .map(|w| w[0].fidelity - w[1].fidelity)
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.steps
                .iter()
                .map(|s| {
                    json!({
                        "q": s.weight,
                        "state": vector_json(&s.state),
                        "fidelity": s.fidelity,
                        "residual_rank": s.residual_rank,
                        "converged": s.converged,
                    })
                })
                .collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stripping {
    pub ensemble: StrippingEnsemble,
    /// Number of leading steps removed, `n₀`.
    pub removed: usize,
    /// Support of the residual after `n₀` steps.
    pub retained: Subspace,
    /// Unnormalized residual after `n₀` steps.
    pub residual: ComplexMatrix,
    /// `α = Σ_{i≤n₀} q_i`
    pub alpha: f64,
    /// `η = 1 − F_e(ρ, op)`
    pub eta: f64,
    /// `1 − f_{n₀+1}`
    pub gamma: f64,
    /// `η / α`
    pub gamma_bound: f64,
}

impl Stripping {
    /// `Σ_{i≤n₀} q_i f_i + (1 − α) F_e(ρ_{n₀+1}, op) − F_e(ρ, op)`; nonnegative by
    /// convexity.
    pub fn convexity_gap(&self, op: &QuantumOperation) -> Result<f64> {
        let head: f64 = self.ensemble.steps[..self.removed]
            .iter()
            .map(|s| s.weight * s.fidelity)
            .sum();
        let tail_weight = trace(&self.residual).re;
        let tail = tail_weight * entanglement_fidelity(&DensityOperator::normalized(&self.residual)?, op)?;
        Ok(head + tail - (1.0 - self.eta))
    }

    pub fn to_json(&self) -> Value {
        json!({
            "ensemble": self.ensemble.to_json(),
            "removed": self.removed,
            "retained_dim": self.retained.dim(),
            "retained_basis": matrix_json(self.retained.basis()),
            "alpha": self.alpha,
            "eta": self.eta,
            "gamma": self.gamma,
            "gamma_bound": self.gamma_bound,
        })
    }
}

pub fn strip_support(rho: &DensityOperator, op: &QuantumOperation, removed: usize) -> Result<Stripping> {
    strip_support_with(rho, op, removed, &MinFidelityConfig::default())
}

/// Strips the whole support of `ρ`, one minimum-fidelity pure state at a
/// time with the largest weight that keeps the residual positive, and
/// reports the split after `removed` steps.
pub fn strip_support_with(
    rho: &DensityOperator,
    op: &QuantumOperation,
    removed: usize,
    cfg: &MinFidelityConfig,
) -> Result<Stripping> {
    let d = rho.dim();
    if op.dim_in() != d || op.dim_out() != d {
        return Err(Error::Shape(format!(
            "stripping a dim-{d} state needs a {d}->{d} operation"
        )));
    }
    let eig = rho.eigen();
    let rank = eig.rank(SUPPORT_CUTOFF);
    if rank < removed + 1 {
        return Err(Error::Precondition(format!(
            "rank {rank} leaves nothing after removing {removed} states"
        )));
    }
    let eta = 1.0 - entanglement_fidelity(rho, op)?;
    let mut basis = eig.vectors.columns(0, rank).into_owned();
    let mut values: Vec<f64> = eig.values[..rank].to_vec();
    let mut residual = rho.matrix().clone();
    let mut steps = Vec::with_capacity(rank);
    let mut split = (Subspace::new(basis.clone())?, residual.clone());

    for step in 0..rank {
        let support = Subspace::new(basis.clone())?;
        let step_cfg = MinFidelityConfig {
            seed: cfg.seed.wrapping_add(step as u64),
            ..cfg.clone()
        };
        let min = min_pure_state_fidelity_with(&support, op, &step_cfg)?;
        let coords = basis.adjoint() * &min.witness;
        let inverse: f64 = coords.iter().zip(&values).map(|(c, l)| c.norm_sqr() / l).sum();
        let weight = 1.0 / inverse;

        let r = rank - step - 1;
        if r == 0 {
            residual = ComplexMatrix::zeros(d, d);
            basis = ComplexMatrix::zeros(d, 0);
            values.clear();
        } else {
            // The residual loses exactly one dimension; the smallest restricted
            // eigenvalue is numerical noise and is dropped.
            let stripped = hermitize(&(&residual - outer(&min.witness, &min.witness) * c64(weight, 0.0)));
            let local = eig_hermitian(&support.restrict(&stripped))?;
            basis = &basis * local.vectors.columns(0, r);
            values = local.values[..r].to_vec();
            residual = ComplexMatrix::zeros(d, d);
            for (k, &v) in values.iter().enumerate() {
                let col = basis.column(k).into_owned();
                residual += outer(&col, &col) * c64(v, 0.0);
            }
        }
        steps.push(StrippingStep {
            weight,
            state: min.witness,
            fidelity: min.value,
            residual_rank: r,
            converged: min.converged,
        });
        if step + 1 == removed {
            split = (Subspace::new(basis.clone())?, residual.clone());
        }
    }

    let alpha: f64 = steps[..removed].iter().map(|s| s.weight).sum();
    let gamma = 1.0 - steps[removed].fidelity;
    let (retained, residual) = split;
    Ok(Stripping {
        ensemble: StrippingEnsemble { steps },
        removed,
        retained,
        residual,
        alpha,
        eta,
        gamma,
        gamma_bound: if alpha > 0.0 { eta / alpha } else { f64::INFINITY },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateAccounting {
    /// Leading steps needed to reach the target weight.
    pub removed: usize,
    pub alpha: f64,
    /// Retained dimension `D = rank − n₀`.
    pub retained_dim: usize,
    /// `log₂ D`
    pub rate: f64,
    /// `(1 − α) / λ_max(ρ)`
    pub lower_bound: f64,
    pub holds: bool,
}

/// Removes the fewest leading states whose weights reach `alpha_target` and
/// compares the retained dimension with `(1 − α)/λ_max(ρ)`.
pub fn rate_accounting(
    ensemble: &StrippingEnsemble,
    rho: &DensityOperator,
    alpha_target: f64,
) -> Result<RateAccounting> {
    if ensemble.is_empty() {
        return Err(Error::Precondition("empty ensemble".into()));
    }
    let total = ensemble.total_weight();
    if !(0.0..=total + 1e-12).contains(&alpha_target) {
        return Err(Error::Precondition(format!(
            "target weight {alpha_target} outside [0, {total}]"
        )));
    }
    let mut removed = 0;
    let mut alpha = 0.0;
    while alpha < alpha_target - 1e-12 {
        alpha += ensemble.steps[removed].weight;
        removed += 1;
    }
    let retained_dim = ensemble.len() - removed;
    let lambda_max = rho.eigen().values[0];
    let lower_bound = (1.0 - alpha) / lambda_max;
    Ok(RateAccounting {
        removed,
        alpha,
        retained_dim,
        rate: if retained_dim > 0 { (retained_dim as f64).log2() } else { f64::NEG_INFINITY },
        lower_bound,
        holds: retained_dim as f64 >= lower_bound - 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::channel_zoo;
    use crate::fidelity::{pure_state_fidelity, sampled_min_pure_state_fidelity, TAU_OPT};
    use crate::random::{perturbed_identity, random_density, trial_rng};
    use approx::assert_abs_diff_eq;

    fn check_ensemble(rho: &DensityOperator, s: &Stripping) {
        let e = &s.ensemble;
        assert_abs_diff_eq!(e.total_weight(), 1.0, epsilon = 1e-10);
        assert!((e.reconstruct() - rho.matrix()).norm() < 1e-8);
        let lmax = rho.eigen().values[0];
        for (i, step) in e.steps.iter().enumerate() {
            assert_eq!(step.residual_rank, e.len() - i - 1);
            assert!(step.weight <= lmax + 1e-10);
        }
        assert!(e.max_ordering_drop() <= TAU_OPT);
    }

    #[test]
    fn identity_channel_strips_to_unit_fidelities() {
        let mut rng = trial_rng(1, 0);
        let rho = random_density(&mut rng, 3, 3);
        let s = strip_support(&rho, &QuantumOperation::identity(3), 1).unwrap();
        check_ensemble(&rho, &s);
        assert!(s.ensemble.steps.iter().all(|st| (st.fidelity - 1.0).abs() < 1e-12));
        assert_eq!(s.retained.dim(), 2);
        assert_abs_diff_eq!(s.eta, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn dephased_qubit_removes_an_equator_state() {
        let p = 0.2;
        let rho = DensityOperator::maximally_mixed(2);
        let op = channel_zoo("dephasing", p).unwrap();
        let s = strip_support(&rho, &op, 1).unwrap();
        let first = &s.ensemble.steps[0];
        assert_abs_diff_eq!(first.fidelity, 1.0 - p, epsilon = 1e-9);
        assert_abs_diff_eq!(first.weight, 0.5, epsilon = 1e-9);
        // Equator: equal moduli.
        assert_abs_diff_eq!(first.state[0].norm(), first.state[1].norm(), epsilon = 1e-5);
        assert_eq!(s.retained.dim(), 1);
        assert_abs_diff_eq!(s.ensemble.steps[1].fidelity, 1.0 - p, epsilon = 1e-9);
        check_ensemble(&rho, &s);
    }

    #[test]
    fn random_rank_four_instances() {
        for seed in 0..10 {
            let mut rng = trial_rng(seed, 0);
            let rho = random_density(&mut rng, 5, 4);
            let op = perturbed_identity(&mut rng, 5, 0.1, 2);
            let s = strip_support(&rho, &op, 2).unwrap();
            check_ensemble(&rho, &s);
            // q-maximality.
            let mut residual = rho.matrix().clone();
            for step in &s.ensemble.steps {
                let over = &residual - outer(&step.state, &step.state) * c64(step.weight + 1e-6, 0.0);
                assert!(eig_hermitian(&hermitize(&over)).unwrap().values.last().unwrap() < &0.0);
                residual -= outer(&step.state, &step.state) * c64(step.weight, 0.0);
            }
            let sampled = sampled_min_pure_state_fidelity(&s.retained, &op, 2000, &mut rng).unwrap();
            assert!(sampled >= s.ensemble.steps[2].fidelity - TAU_OPT);
            assert!(s.convexity_gap(&op).unwrap() >= -TAU_OPT);
            assert!(s.gamma <= s.gamma_bound + TAU_OPT);
            assert_abs_diff_eq!(
                pure_state_fidelity(&s.ensemble.steps[0].state, &op).unwrap(),
                s.ensemble.steps[0].fidelity,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn rank_exhaustion_is_rejected() {
        let rho = DensityOperator::from_diagonal(&[0.5, 0.5, 0.0]).unwrap();
        assert!(strip_support(&rho, &QuantumOperation::identity(3), 2).is_err());
        assert!(strip_support(&rho, &QuantumOperation::identity(2), 0).is_err());
    }

    #[test]
    fn rate_accounting_examples() {
        let rho = DensityOperator::maximally_mixed(8);
        let s = strip_support(&rho, &QuantumOperation::identity(8), 2).unwrap();
        for step in &s.ensemble.steps {
            assert_abs_diff_eq!(step.weight, 0.125, epsilon = 1e-10);
        }
        let none = rate_accounting(&s.ensemble, &rho, 0.0).unwrap();
        assert_eq!((none.removed, none.retained_dim), (0, 8));
        let r = rate_accounting(&s.ensemble, &rho, 0.25).unwrap();
        assert_eq!((r.removed, r.retained_dim), (2, 6));
        assert!(r.holds);
        assert_abs_diff_eq!(r.lower_bound, 6.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.rate, 6f64.log2(), epsilon = 1e-12);
        assert!(rate_accounting(&s.ensemble, &rho, 1.5).is_err());
    }
}
