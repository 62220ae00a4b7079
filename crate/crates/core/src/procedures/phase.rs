use std::f64::consts::TAU;

use rand::Rng;
use serde::Serialize;
use serde_json::json;

use crate::channels::QuantumOperation;
use crate::error::{Error, Result};
use crate::fidelity::{
    entanglement_fidelity, min_pure_state_fidelity, pure_state_fidelity, sampled_min_pure_state_fidelity,
    TAU_OPT,
};
use crate::linalg::{c64, outer, sandwich, ComplexMatrix, ComplexVector, DensityOperator, ZERO_EIGENVALUE};
use crate::random::{perturbed_identity, random_density, random_subspace, random_vector, trial_rng};
use crate::report::{matrix_json, run_sweep, CheckReport, FidelityCheckConfig, Trial};

/// Phases assigned independently to each eigenvector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PhaseSet {
    /// `{1, i, −1, −i}`
    FourPoint,
    /// `m` equally spaced phases.
    Grid(usize),
}

impl PhaseSet {
    fn points(self) -> usize {
        match self {
            PhaseSet::FourPoint => 4,
            PhaseSet::Grid(m) => m,
        }
    }
}

/// Phase tuples are enumerated exactly up to this count and sampled above.
pub const PHASE_ENUMERATION_CAP: usize = 4096;
pub const PHASE_SAMPLES: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhaseAverage {
    pub value: f64,
    pub tuples: usize,
    pub exact: bool,
}

/// Mean pure-state fidelity of `Σ_k √λ_k e^{iφ_k}|k⟩` over phase tuples
/// drawn from `set`. The first phase is fixed to zero (global phase).
pub fn phase_average_fidelity(
    rho: &DensityOperator,
    op: &QuantumOperation,
    set: PhaseSet,
    seed: u64,
) -> Result<PhaseAverage> {
    let m = set.points();
    if m < 3 {
        return Err(Error::Precondition("phase grids need at least 3 points".into()));
    }
    let eig = rho.eigen();
    let r = eig.rank(ZERO_EIGENVALUE);
    let amplitudes: Vec<ComplexVector> = (0..r)
        .map(|k| eig.vector(k) * c64(eig.values[k].sqrt(), 0.0))
        .collect();
    let state = |phases: &[usize]| -> ComplexVector {
        let mut psi = amplitudes[0].clone();
        for (k, &j) in phases.iter().enumerate() {
            psi += &amplitudes[k + 1] * c64(0.0, TAU * j as f64 / m as f64).exp();
        }
        psi
    };
    let free = r - 1;
    let count = (m as u128).checked_pow(free as u32).unwrap_or(u128::MAX);
    if count <= PHASE_ENUMERATION_CAP as u128 {
        let count = count as usize;
        let mut sum = 0.0;
        let mut digits = vec![0usize; free];
        for _ in 0..count {
            sum += pure_state_fidelity(&state(&digits), op)?;
            for d in digits.iter_mut() {
                *d += 1;
                if *d < m {
                    break;
                }
                *d = 0;
            }
        }
        return Ok(PhaseAverage {
            value: sum / count as f64,
            tuples: count,
            exact: true,
        });
    }
    let mut rng = trial_rng(seed, 0);
    let mut sum = 0.0;
    for _ in 0..PHASE_SAMPLES {
        let digits: Vec<usize> = (0..free).map(|_| rng.random_range(0..m)).collect();
        sum += pure_state_fidelity(&state(&digits), op)?;
    }
    Ok(PhaseAverage {
        value: sum / PHASE_SAMPLES as f64,
        tuples: PHASE_SAMPLES,
        exact: false,
    })
}

/// `F_e(ρ, op) + Σ_{k≠m} λ_k λ_m ⟨m|op(|k⟩⟨k|)|m⟩` in the eigenbasis of `ρ`.
pub fn cross_term_identity(rho: &DensityOperator, op: &QuantumOperation) -> Result<f64> {
    let eig = rho.eigen();
    let r = eig.rank(ZERO_EIGENVALUE);
    let mut total = entanglement_fidelity(rho, op)?;
    for k in 0..r {
        let vk = eig.vector(k);
        let out = op.apply(&outer(&vk, &vk))?;
        for m in (0..r).filter(|&m| m != k) {
            let vm = eig.vector(m);
            total += eig.values[k] * eig.values[m] * sandwich(&vm, &out, &vm).re;
        }
    }
    Ok(total)
}

/// `F_e(ρ, op) ≥ 1 − 3η/2` for trace-preserving `op` and `ρ` supported in a
/// subspace where every pure state has fidelity at least `1 − η`.
pub fn check_three_halves_theorem(cfg: &FidelityCheckConfig) -> CheckReport {
    run_sweep("three-halves", cfg.trials, cfg.seed, |t, rng| {
        let ambient = cfg.dim.max(2);
        let k = rng.random_range(2..=3).min(ambient);
        let s = random_subspace(rng, ambient, k);
        let strength = cfg.eta * rng.random_range(0.05..=1.0);
        let n_kraus = rng.random_range(1..=3);
        let op = perturbed_identity(rng, ambient, strength, n_kraus);
        let min = min_pure_state_fidelity(&s, &op)?;
        let eta = 1.0 - min.value;
        if eta > 0.1 {
            return Ok(Trial::Skipped("η above 0.1".into()));
        }
        let sampled = sampled_min_pure_state_fidelity(&s, &op, 200, rng)?;
        let local = if t % 5 == 0 {
            // Two equal eigenvalues: the extremal spectrum.
            let a = random_vector(rng, k);
            let b = random_vector(rng, k);
            let b = &b - &a * a.dotc(&b);
            let b = b.unscale(b.norm());
            (outer(&a, &a) + outer(&b, &b)).unscale(2.0)
        } else {
            let rank = rng.random_range(1..=k);
            random_density(rng, k, rank).into_matrix()
        };
        let rho: ComplexMatrix = s.basis() * local * s.basis().adjoint();
        let rho = DensityOperator::normalized(&rho)?;
        let fe = entanglement_fidelity(&rho, &op)?;
        Ok(Trial::checked(
            fe - (1.0 - 1.5 * eta - TAU_OPT),
            json!({
                "rho": matrix_json(rho.matrix()),
                "op": op,
                "subspace": matrix_json(s.basis()),
                "eta": eta,
                "fe": fe,
            }),
        )
        .with_info("max_eta", eta)
        .with_info("max_oracle_gap", min.value - sampled)
        .with_info("optimizer_nonconverged", if min.converged { 0.0 } else { 1.0 }))
    })
}
