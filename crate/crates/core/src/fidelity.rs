//! Entanglement, Uhlmann and minimum pure-state fidelities, plus sweeps for
//! the fidelity lemmas.

use rand::Rng;
use serde::Serialize;
use serde_json::json;

use crate::channels::{QuantumOperation, RemixMatrix};
use crate::error::{Error, Result};
use crate::linalg::{
    c64, hermitize, orthonormal_completion, sqrt_psd, svd, trace, trace_norm_hermitian,
    ComplexMatrix, ComplexVector, DensityOperator, Purification, Subspace, Tolerances, C64,
};
use crate::random::{
    perturbed_identity, random_channel, random_density, random_hermitian, random_subchannel,
    random_vector, trial_rng, TrialRng,
};
use crate::report::{matrix_json, run_sweep, CheckReport, FidelityCheckConfig, Trial};

/// Slack granted to optimizer-derived minima.
pub const TAU_OPT: f64 = 1e-4;

fn check_square(op: &QuantumOperation, dim: usize) -> Result<()> {
    if op.dim_in() != dim || op.dim_out() != dim {
        return Err(Error::Shape(format!(
            "fidelity needs a {dim}->{dim} operation, got {}->{}",
            op.dim_in(),
            op.dim_out()
        )));
    }
    Ok(())
}

/// Components `a_i = tr(A_i ρ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeTermVector {
    pub components: ComplexVector,
}

impl FeTermVector {
    pub fn squared_norm(&self) -> f64 {
        self.components.norm_squared()
    }
}

pub fn fe_term_vector(rho: &ComplexMatrix, op: &QuantumOperation) -> Result<FeTermVector> {
    check_square(op, rho.nrows())?;
    let components = ComplexVector::from_iterator(
        op.len(),
        op.kraus().iter().map(|a| {
            // tr(Aρ) = Σ_ab A_ab ρ_ba
            a.iter().zip(rho.transpose().iter()).map(|(x, y)| x * y).sum::<C64>()
        }),
    );
    Ok(FeTermVector { components })
}

/// `F_e(ρ, A) = Σ_i |tr A_i ρ|²`.
pub fn entanglement_fidelity(rho: &DensityOperator, op: &QuantumOperation) -> Result<f64> {
    entanglement_fidelity_unnormalized(rho.matrix(), op)
}

/// The same Kraus formula for an arbitrary operator in place of `ρ`.
pub fn entanglement_fidelity_unnormalized(b: &ComplexMatrix, op: &QuantumOperation) -> Result<f64> {
    Ok(fe_term_vector(b, op)?.squared_norm())
}

/// `(I ⊗ A)(|ψ⟩⟨ψ|)` on `R ⊗ Q_out`, reference index slow.
pub fn joint_state(psi: &Purification, op: &QuantumOperation) -> Result<ComplexMatrix> {
    if op.dim_in() != psi.dim_q {
        return Err(Error::Shape("operation input does not match purified system".into()));
    }
    let amps = psi.amplitudes();
    let dout = op.dim_out();
    let n = psi.dim_r * dout;
    let mut joint = ComplexMatrix::zeros(n, n);
    for a in op.kraus() {
        let image = &amps * a.transpose();
        let phi = ComplexVector::from_fn(n, |i, _| image[(i / dout, i % dout)]);
        joint += &phi * phi.adjoint();
    }
    Ok(hermitize(&joint))
}

/// `⟨ψ|(I ⊗ A)(|ψ⟩⟨ψ|)|ψ⟩` for a given purification.
pub fn entanglement_fidelity_purified(psi: &Purification, op: &QuantumOperation) -> Result<f64> {
    check_square(op, psi.dim_q)?;
    let joint = joint_state(psi, op)?;
    Ok((psi.vector.adjoint() * joint * &psi.vector)[(0, 0)].re)
}

/// `F̂_e = F_e / tr A(ρ)`.
pub fn entanglement_fidelity_renormalized(rho: &DensityOperator, op: &QuantumOperation) -> Result<f64> {
    let fe = entanglement_fidelity(rho, op)?;
    let out = trace(&op.apply_density(rho)?).re;
    if out <= Tolerances::default().trace {
        return Err(Error::Degenerate(format!("output trace {out:e} vanishes")));
    }
    Ok(fe / out)
}

/// `F(ρ₁, ρ₂) = (tr|√ρ₁ √ρ₂|)²`.
pub fn uhlmann_fidelity(rho1: &ComplexMatrix, rho2: &ComplexMatrix) -> Result<f64> {
    if rho1.shape() != rho2.shape() || rho1.nrows() != rho1.ncols() {
        return Err(Error::Shape("fidelity of operators with different dims".into()));
    }
    let s1 = sqrt_psd(&hermitize(rho1))?;
    let s2 = sqrt_psd(&hermitize(rho2))?;
    let nuclear: f64 = svd(&(s1 * s2))?.singular_values.iter().sum();
    Ok(nuclear * nuclear)
}

/// `Σ_i |⟨ψ|A_i|ψ⟩|²` for a unit vector.
pub fn pure_state_fidelity(psi: &ComplexVector, op: &QuantumOperation) -> Result<f64> {
    check_square(op, psi.len())?;
    Ok(op
        .kraus()
        .iter()
        .map(|a| psi.dotc(&(a * psi)).norm_sqr())
        .sum())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinFidelityConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Stop when one accepted step improves the value by less than this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for MinFidelityConfig {
    fn default() -> Self {
        MinFidelityConfig {
            restarts: 32,
            max_iterations: 500,
            tolerance: 1e-12,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinPureFidelity {
    /// Best value found; an upper bound on the true minimum.
    pub value: f64,
    /// Ambient-space unit vector achieving `value`.
    pub witness: ComplexVector,
    pub converged: bool,
    pub best_restart: usize,
    pub iterations: usize,
}

struct Restricted {
    ops: Vec<ComplexMatrix>,
}

impl Restricted {
    fn value_terms(&self, c: &ComplexVector) -> (f64, Vec<(C64, ComplexVector)>) {
        let mut value = 0.0;
        let mut terms = Vec::with_capacity(self.ops.len());
        for a in &self.ops {
            let ac = a * c;
            let z = c.dotc(&ac);
            value += z.norm_sqr();
            terms.push((z, ac));
        }
        (value, terms)
    }

    fn value(&self, c: &ComplexVector) -> f64 {
        self.ops.iter().map(|a| c.dotc(&(a * c)).norm_sqr()).sum()
    }

    /// Gradient of `Σ|c†Ac|²` with respect to `c̄`.
    fn gradient(&self, c: &ComplexVector, terms: &[(C64, ComplexVector)]) -> ComplexVector {
        let mut g = ComplexVector::zeros(c.len());
        for (a, (z, ac)) in self.ops.iter().zip(terms) {
            g.axpy(z.conj(), ac, c64(1.0, 0.0));
            g.axpy(*z, &(a.adjoint() * c), c64(1.0, 0.0));
        }
        g
    }
}

/// Projected gradient descent on the unit sphere from one start point.
fn descend(
    f: &Restricted,
    start: ComplexVector,
    cfg: &MinFidelityConfig,
) -> (f64, ComplexVector, bool, usize) {
    let mut c = start;
    let (mut value, mut terms) = f.value_terms(&c);
    let mut step = 0.5;
    for it in 0..cfg.max_iterations {
        let g = f.gradient(&c, &terms);
        let radial = c.dotc(&g);
        let tangent = &g - &c * radial;
        let gnorm2 = tangent.norm_squared();
        if gnorm2 < 1e-24 {
            return (value, c, true, it);
        }
        let mut accepted = None;
        let mut t = step;
        for _ in 0..60 {
            let trial = &c - &tangent * c64(t, 0.0);
            let trial = trial.unscale(trial.norm());
            let v = f.value(&trial);
            if v <= value - 1e-4 * t * gnorm2 {
                accepted = Some((trial, v));
                break;
            }
            t *= 0.5;
        }
        let Some((next, v)) = accepted else {
            return (value, c, true, it);
        };
        let improvement = value - v;
        c = next;
        (value, terms) = f.value_terms(&c);
        step = (2.0 * t).min(4.0);
        if improvement < cfg.tolerance {
            return (value, c, true, it + 1);
        }
    }
    (value, c, false, cfg.max_iterations)
}

/// Rotates `v` so its largest-magnitude entry (lowest index on ties) is
/// real and positive.
pub fn fix_phase(v: &ComplexVector) -> ComplexVector {
    let max = v.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    match v.iter().find(|z| z.norm() >= max - 1e-12) {
        Some(z) if z.norm() > 0.0 => v * (z.conj() / z.norm()),
        _ => v.clone(),
    }
}

/// `F_p(H, A) = min_{|ψ⟩ ∈ H} Σ_i |⟨ψ|A_i|ψ⟩|²` by multi-start local search.
pub fn min_pure_state_fidelity(h: &Subspace, op: &QuantumOperation) -> Result<MinPureFidelity> {
    min_pure_state_fidelity_with(h, op, &MinFidelityConfig::default())
}

pub fn min_pure_state_fidelity_with(
    h: &Subspace,
    op: &QuantumOperation,
    cfg: &MinFidelityConfig,
) -> Result<MinPureFidelity> {
    check_square(op, h.ambient_dim())?;
    if h.dim() == 0 {
        return Err(Error::Precondition("subspace is empty".into()));
    }
    let f = Restricted {
        ops: op.kraus().iter().map(|a| h.restrict(a)).collect(),
    };
    let k = h.dim();
    let mut best: Option<(f64, ComplexVector, bool, usize, usize)> = None;
    for r in 0..cfg.restarts.max(1) {
        let start = if k == 1 {
            ComplexVector::from_element(1, c64(1.0, 0.0))
        } else {
            random_vector(&mut trial_rng(cfg.seed, r as u64), k)
        };
        let (value, c, converged, iterations) = descend(&f, start, cfg);
        // Lowest restart index wins among values equal to within 1e-12.
        if best.as_ref().is_none_or(|b| value < b.0 - 1e-12) {
            best = Some((value, c, converged, r, iterations));
        }
        if k == 1 {
            break;
        }
    }
    let (value, c, converged, best_restart, iterations) = best.expect("at least one restart");
    let witness = fix_phase(&h.embed(&c));
    Ok(MinPureFidelity {
        value,
        witness,
        converged,
        best_restart,
        iterations,
    })
}

/// Smallest pure-state fidelity over `samples` random unit vectors of `h`.
pub fn sampled_min_pure_state_fidelity<R: Rng + ?Sized>(
    h: &Subspace,
    op: &QuantumOperation,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..samples {
        let psi = h.embed(&random_vector(rng, h.dim()));
        best = best.min(pure_state_fidelity(&psi, op)?);
    }
    Ok(best)
}

/// Remixes `op` by a unitary whose first row is `a*/‖a‖`, concentrating the
/// entanglement fidelity in the first Kraus operator. Returns the rotated
/// operation and that operator's index.
pub fn single_operator_rotation(
    rho: &DensityOperator,
    op: &QuantumOperation,
) -> Result<(QuantumOperation, usize)> {
    let a = fe_term_vector(rho.matrix(), op)?.components;
    let norm = a.norm();
    if norm * norm <= 1e-15 {
        return Err(Error::Degenerate("entanglement fidelity is zero".into()));
    }
    let u = orthonormal_completion(&ComplexMatrix::from_column_slice(a.len(), 1, a.unscale(norm).as_slice()));
    let rotated = op.remix(&RemixMatrix::new(u.adjoint())?)?;
    Ok((rotated, 0))
}

fn density_json(rho: &DensityOperator) -> serde_json::Value {
    matrix_json(rho.matrix())
}

fn random_rank<R: Rng + ?Sized>(rng: &mut R, d: usize) -> usize {
    rng.random_range(1..=d)
}

fn random_op(rng: &mut TrialRng, d: usize) -> QuantumOperation {
    let k = rng.random_range(1..=3);
    if rng.random_bool(0.5) {
        random_channel(rng, d, d, k)
    } else {
        let scale = rng.random_range(0.3..1.0);
        random_subchannel(rng, d, d, k, scale)
    }
}

fn strength(rng: &mut TrialRng, max: f64) -> f64 {
    max * rng.random_range(0.01..=1.0)
}

/// `F_e(λρ₁ + (1−λ)ρ₂, A) ≤ λF_e(ρ₁, A) + (1−λ)F_e(ρ₂, A)`.
pub fn check_convexity(cfg: &FidelityCheckConfig) -> CheckReport {
    run_sweep("convexity", cfg.trials, cfg.seed, |t, rng| {
        let d = cfg.trial_dim(t);
        let r1 = random_rank(rng, d);
        let rho1 = random_density(rng, d, r1);
        let r2 = random_rank(rng, d);
        let rho2 = random_density(rng, d, r2);
        let lambda: f64 = rng.random();
        let op = random_op(rng, d);
        let mixed = rho1.mix(lambda, &rho2)?;
        let lhs = entanglement_fidelity(&mixed, &op)?;
        let rhs = lambda * entanglement_fidelity(&rho1, &op)?
            + (1.0 - lambda) * entanglement_fidelity(&rho2, &op)?;
        Ok(Trial::checked(
            rhs - lhs,
            json!({
                "rho1": density_json(&rho1),
                "rho2": density_json(&rho2),
                "lambda": lambda,
                "op": op,
            }),
        ))
    })
}

/// `|F_e(ρ, A∘E) − F_e(ρ, A)| ≤ 2η` for `F_e(ρ, E) = 1 − η`. The slack of
/// the weaker bound `√η` is reported as `min_sqrt_eta_slack`.
pub fn check_composition_lemma(cfg: &FidelityCheckConfig) -> CheckReport {
    run_sweep("composition", cfg.trials, cfg.seed, |t, rng| {
        let d = cfg.trial_dim(t);
        let rank = random_rank(rng, d);
        let rho = random_density(rng, d, rank);
        let s = strength(rng, cfg.eta);
        let k = rng.random_range(1..=3);
        let e = perturbed_identity(rng, d, s, k);
        let a = random_op(rng, d);
        let eta = 1.0 - entanglement_fidelity(&rho, &e)?;
        let ae = crate::channels::compose(&a, &e)?;
        let gap = (entanglement_fidelity(&rho, &ae)? - entanglement_fidelity(&rho, &a)?).abs();
        Ok(Trial::checked(
            2.0 * eta - gap,
            json!({ "rho": density_json(&rho), "E": e, "A": a, "eta": eta, "gap": gap }),
        )
        .with_info("min_sqrt_eta_slack", eta.max(0.0).sqrt() - gap))
    })
}

/// `F(A(ρ), B(ρ)) ≥ 1 − ε₁ − ε₂` for trace-preserving `A`, `B`.
pub fn check_close_final(cfg: &FidelityCheckConfig) -> CheckReport {
    run_sweep("close-final", cfg.trials, cfg.seed, |t, rng| {
        let d = cfg.trial_dim(t);
        let rank = random_rank(rng, d);
        let rho = random_density(rng, d, rank);
        let s1 = strength(rng, cfg.eta);
        let s2 = strength(rng, cfg.eta);
        let k1 = rng.random_range(1..=3);
        let a = perturbed_identity(rng, d, s1, k1);
        let k2 = rng.random_range(1..=3);
        let b = perturbed_identity(rng, d, s2, k2);
        let eps1 = 1.0 - entanglement_fidelity(&rho, &a)?;
        let eps2 = 1.0 - entanglement_fidelity(&rho, &b)?;
        let f = uhlmann_fidelity(&a.apply_density(&rho)?, &b.apply_density(&rho)?)?;
        Ok(Trial::checked(
            f - (1.0 - eps1 - eps2),
            json!({ "rho": density_json(&rho), "A": a, "B": b, "eps1": eps1, "eps2": eps2, "fidelity": f }),
        ))
    })
}

/// `|F_e(B + Δ, A) − F_e(B, A)| ≤ (tr|Δ|)² + 2 tr|Δ|`.
pub fn check_fe_continuity(cfg: &FidelityCheckConfig) -> CheckReport {
    run_sweep("fe-continuity", cfg.trials, cfg.seed, |t, rng| {
        let d = cfg.trial_dim(t);
        let rank = random_rank(rng, d);
        let scale = rng.random_range(0.2..=1.0);
        let b = random_density(rng, d, rank).matrix().scale(scale);
        let h = random_hermitian(rng, d);
        let size = cfg.delta * rng.random_range(0.0..=1.0);
        let delta = h.scale(size / h.norm());
        let op = random_op(rng, d);
        let tn = trace_norm_hermitian(&delta)?;
        let gap = (entanglement_fidelity_unnormalized(&(&b + &delta), &op)?
            - entanglement_fidelity_unnormalized(&b, &op)?)
        .abs();
        Ok(Trial::checked(
            tn * tn + 2.0 * tn - gap,
            json!({ "B": matrix_json(&b), "Delta": matrix_json(&delta), "op": op, "trace_norm": tn }),
        ))
    })
}
