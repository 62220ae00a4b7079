//! Entropies, coherent information and the finite-block capacity bound.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::channels::{compose, tensor_power, Instrument, QuantumOperation};
use crate::error::{Error, Result};
use crate::fidelity::{entanglement_fidelity, joint_state, uhlmann_fidelity};
use crate::linalg::{
    c64, eig_hermitian, hermitize, identity, partial_trace, purify, trace, ComplexMatrix,
    DensityOperator, Factor, Tolerances, ZERO_EIGENVALUE,
};
use crate::procedures::extract_isometry;
use crate::random::{
    isometry_reversal, perturbed_identity, perturbed_isometry, random_density, random_hermitian,
    random_isometry, random_matrix, trial_rng, TrialRng,
};
use crate::report::{matrix_json, run_sweep, CheckReport, FidelityCheckConfig, Trial};

/// Probability vector.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassicalDistribution {
    probabilities: Vec<f64>,
}

impl ClassicalDistribution {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        let tol = Tolerances::default();
        if probabilities.iter().any(|p| !p.is_finite() || *p < -tol.psd) {
            return Err(Error::Precondition("probabilities must be nonnegative".into()));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > tol.trace {
            return Err(Error::Precondition(format!("probabilities sum to {total}")));
        }
        Ok(ClassicalDistribution { probabilities })
    }

    /// Eigenvalues of a density operator, sorted descending.
    pub fn spectrum(rho: &ComplexMatrix) -> Result<Self> {
        let values = eig_hermitian(&hermitize(rho))?.values;
        Self::new(values.iter().map(|v| v.max(0.0)).collect())
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }
}

fn same_length(p: &ClassicalDistribution, q: &ClassicalDistribution) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "distributions of lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// `½ Σ |p_i − q_i|`
pub fn kolmogorov_distance(p: &ClassicalDistribution, q: &ClassicalDistribution) -> Result<f64> {
    same_length(p, q)?;
    Ok(0.5
        * p.probabilities
            .iter()
            .zip(&q.probabilities)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

/// `Σ √(p_i q_i)`
pub fn bhattacharyya_overlap(p: &ClassicalDistribution, q: &ClassicalDistribution) -> Result<f64> {
    same_length(p, q)?;
    Ok(p.probabilities
        .iter()
        .zip(&q.probabilities)
        .map(|(a, b)| (a.max(0.0) * b.max(0.0)).sqrt())
        .sum())
}

/// `−Σ p log₂ p`, entries at or below `1e-14` counted as zero.
pub fn shannon_entropy(probabilities: &[f64]) -> f64 {
    probabilities
        .iter()
        .filter(|&&p| p > ZERO_EIGENVALUE)
        .map(|&p| -p * p.log2())
        .sum()
}

/// `S(ρ)` in bits for a unit-trace positive operator.
pub fn von_neumann_entropy(rho: &ComplexMatrix) -> Result<f64> {
    let tol = Tolerances::default();
    let tr = trace(rho).re;
    if (tr - 1.0).abs() > tol.trace {
        return Err(Error::Precondition(format!("entropy input has trace {tr}")));
    }
    let values = eig_hermitian(rho)?.values;
    if let Some(v) = values.iter().find(|&&v| v < -tol.psd) {
        return Err(Error::Precondition(format!("negative eigenvalue {v:e}")));
    }
    Ok(shannon_entropy(&values))
}

/// `S(X / tr X)` for a positive operator with positive trace.
pub fn normalized_entropy(x: &ComplexMatrix) -> Result<f64> {
    let tr = trace(x).re;
    if tr <= Tolerances::default().trace {
        return Err(Error::Degenerate(format!("trace {tr:e} vanishes")));
    }
    von_neumann_entropy(&x.unscale(tr))
}

/// `S(Q|R) = S(ρ^{RQ}) − S(ρ^Q)` with `ρ^Q = tr_R ρ^{RQ}`.
pub fn conditional_entropy(rho_rq: &ComplexMatrix, dims: (usize, usize)) -> Result<f64> {
    let q = partial_trace(rho_rq, Factor::First, dims)?;
    Ok(von_neumann_entropy(rho_rq)? - von_neumann_entropy(&q)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoherentInfoResult {
    pub value: f64,
    pub output_entropy: f64,
    pub joint_entropy: f64,
    pub output_trace: f64,
}

/// `I_c(ρ, E) = S(E(ρ)/t) − S((I ⊗ E)(|ψ⟩⟨ψ|)/t)` with `t = tr E(ρ)`.
pub fn coherent_information(rho: &DensityOperator, op: &QuantumOperation) -> Result<CoherentInfoResult> {
    let psi = purify(rho);
    let joint = joint_state(&psi, op)?;
    let output = op.apply_density(rho)?;
    let output_trace = trace(&output).re;
    if output_trace <= Tolerances::default().trace {
        return Err(Error::Degenerate(format!("output trace {output_trace:e} vanishes")));
    }
    let output_entropy = von_neumann_entropy(&output.unscale(output_trace))?;
    let joint_entropy = von_neumann_entropy(&joint.unscale(output_trace))?;
    Ok(CoherentInfoResult {
        value: output_entropy - joint_entropy,
        output_entropy,
        joint_entropy,
        output_trace,
    })
}

/// The same quantity via the environment output: `S(E(ρ)/t) − S(E^c(ρ)/t)`.
pub fn coherent_information_complementary(rho: &ComplexMatrix, op: &QuantumOperation) -> Result<f64> {
    let out = op.apply(rho)?;
    let env = op.complementary(rho)?;
    Ok(normalized_entropy(&out)? - normalized_entropy(&env)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BranchTerm {
    /// `tr N(E_m(ρ))`
    pub weight: f64,
    /// `None` when the branch output vanishes.
    pub coherent_information: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservedCoherentInfo {
    pub total: f64,
    pub branches: Vec<BranchTerm>,
    /// `I_c(ρ, N ∘ Σ_m E_m)`
    pub blind: f64,
    pub dominates_blind: bool,
}

/// Coherent information when the instrument outcome is observed:
/// `Σ_m tr(N E_m(ρ)) · I_c(ρ, N ∘ E_m)`.
pub fn observed_coherent_information(
    rho: &DensityOperator,
    channel: &QuantumOperation,
    instrument: &Instrument,
) -> Result<ObservedCoherentInfo> {
    let tol = Tolerances::default();
    let mut total = 0.0;
    let mut branches = Vec::with_capacity(instrument.len());
    for e in instrument.branches() {
        let ne = compose(channel, e)?;
        let weight = trace(&ne.apply_density(rho)?).re;
        if weight <= tol.trace {
            branches.push(BranchTerm {
                weight: weight.max(0.0),
                coherent_information: None,
            });
            continue;
        }
        let ic = coherent_information(rho, &ne)?.value;
        total += weight * ic;
        branches.push(BranchTerm {
            weight,
            coherent_information: Some(ic),
        });
    }
    let blind = coherent_information(rho, &compose(channel, &instrument.total()?)?)?.value;
    Ok(ObservedCoherentInfo {
        total,
        branches,
        blind,
        dominates_blind: total >= blind - tol.svd,
    })
}

/// For `V = WΓ` returns `(tr(VρV†)·I_c(ρ, N∘V), tr(Γρ)·I_c(WΓρΓW†/tr(Γρ), N))`.
pub fn isometric_branch_terms(
    rho: &DensityOperator,
    channel: &QuantumOperation,
    v: &ComplexMatrix,
) -> Result<(f64, f64)> {
    let (w, gamma) = crate::linalg::polar(v)?;
    let branch = QuantumOperation::new(vec![v.clone()])?;
    let nv = compose(channel, &branch)?;
    let lhs_weight = trace(&nv.apply_density(rho)?).re;
    let lhs = lhs_weight * coherent_information(rho, &nv)?.value;
    let weight = trace(&(&gamma * rho.matrix())).re;
    let placed = w.matrix() * &gamma * rho.matrix() * &gamma * w.matrix().adjoint();
    let sigma = DensityOperator::normalized(&placed)?;
    let rhs = weight * coherent_information(&sigma, channel)?.value;
    Ok((lhs, rhs))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizerConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Stop once an accepted step improves the value by less than this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            restarts: 16,
            max_iterations: 2000,
            tolerance: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpperBoundResult {
    pub n: usize,
    pub argmax_state: DensityOperator,
    /// Best value found divided by `n`; a lower bound on the true maximum.
    pub value_per_use: f64,
    pub restarts: usize,
    pub best_restart: usize,
    pub iterations: usize,
    pub converged: bool,
}

fn log2_psd(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(eig_hermitian(m)?.map(|v| v.max(ZERO_EIGENVALUE).log2()))
}

/// `Σ_ij X_ji A_j†A_i`, the dual of the complementary map.
fn complementary_adjoint(op: &QuantumOperation, x: &ComplexMatrix) -> ComplexMatrix {
    let k = op.kraus();
    let mut out = ComplexMatrix::zeros(op.dim_in(), op.dim_in());
    for i in 0..k.len() {
        for j in 0..k.len() {
            let c = x[(j, i)];
            if c.norm() > 0.0 {
                out += k[j].adjoint() * &k[i] * c;
            }
        }
    }
    hermitize(&out)
}

/// `I_c` of a trace-preserving channel at `ρ` and its gradient in `ρ`.
fn objective(op: &QuantumOperation, rho: &ComplexMatrix, with_gradient: bool) -> Result<(f64, Option<ComplexMatrix>)> {
    let out = op.apply(rho)?;
    let env = op.complementary(rho)?;
    let value = shannon_entropy(&eig_hermitian(&out)?.values) - shannon_entropy(&eig_hermitian(&env)?.values);
    if !with_gradient {
        return Ok((value, None));
    }
    let g = op.apply_adjoint(&(-log2_psd(&out)?))? + complementary_adjoint(op, &log2_psd(&env)?);
    Ok((value, Some(g)))
}

fn state_of(t: &ComplexMatrix) -> ComplexMatrix {
    let rho = t.adjoint() * t;
    let tr = trace(&rho).re;
    hermitize(&rho.unscale(tr))
}

fn ascend(op: &QuantumOperation, start: ComplexMatrix, cfg: &OptimizerConfig) -> Result<(f64, ComplexMatrix, bool, usize)> {
    let mut t = start.unscale(start.norm());
    let mut rho = state_of(&t);
    let (mut value, mut grad) = objective(op, &rho, true)?;
    let mut step = 1.0;
    for it in 0..cfg.max_iterations {
        let g = grad.take().expect("gradient requested");
        let centered = &g - identity(g.nrows()) * c64(trace(&(&g * &rho)).re, 0.0);
        let direction = &t * centered;
        let slope = 2.0 * direction.norm_squared();
        if slope < 1e-20 {
            return Ok((value, rho, true, it));
        }
        let mut accepted = None;
        let mut s = step;
        for _ in 0..50 {
            let cand = &t + &direction * c64(s, 0.0);
            let cand = cand.unscale(cand.norm());
            let cand_rho = state_of(&cand);
            let (v, _) = objective(op, &cand_rho, false)?;
            if v >= value + 1e-4 * s * slope {
                accepted = Some((cand, cand_rho, v));
                break;
            }
            s *= 0.5;
        }
        let Some((next_t, next_rho, v)) = accepted else {
            return Ok((value, rho, true, it));
        };
        let improvement = v - value;
        t = next_t;
        rho = next_rho;
        (value, grad) = objective(op, &rho, true)?;
        step = (2.0 * s).min(1e3);
        if improvement < cfg.tolerance {
            return Ok((value, rho, true, it + 1));
        }
    }
    Ok((value, rho, false, cfg.max_iterations))
}

/// Maximizes `I_c(ρ, N^{⊗n})` over input states by multi-start ascent on
/// `ρ = T†T / tr(T†T)`. Restart 0 starts at `I/d`.
pub fn maximize_coherent_information(
    channel: &QuantumOperation,
    n: usize,
    cfg: &OptimizerConfig,
) -> Result<UpperBoundResult> {
    if !channel.is_trace_preserving() {
        return Err(Error::Precondition("capacity bound needs a trace-preserving channel".into()));
    }
    if n == 3 && channel.dim_in() != 2 {
        return Err(Error::Resource("block length 3 is only allowed for qubit channels".into()));
    }
    let op = tensor_power(channel, n)?;
    let d = op.dim_in();
    let restarts = cfg.restarts.max(1);
    let runs: Vec<Result<(f64, ComplexMatrix, bool, usize)>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let start = if r == 0 {
                identity(d)
            } else {
                random_matrix(&mut trial_rng(cfg.seed, r as u64), d, d)
            };
            ascend(&op, start, cfg)
        })
        .collect();
    let mut best: Option<(usize, f64, ComplexMatrix, bool, usize)> = None;
    for (r, run) in runs.into_iter().enumerate() {
        let (value, rho, converged, iterations) = run?;
        if best.as_ref().is_none_or(|b| value > b.1 + 1e-12) {
            best = Some((r, value, rho, converged, iterations));
        }
    }
    let (best_restart, value, rho, converged, iterations) = best.expect("at least one restart");
    Ok(UpperBoundResult {
        n,
        argmax_state: DensityOperator::new(rho)?,
        value_per_use: value / n as f64,
        restarts,
        best_restart,
        iterations,
        converged,
    })
}

fn unitary_exp(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    let eig = eig_hermitian(h)?;
    let phases = ComplexMatrix::from_diagonal(&crate::linalg::ComplexVector::from_iterator(
        eig.values.len(),
        eig.values.iter().map(|v| c64(0.0, t * v).exp()),
    ));
    Ok(&eig.vectors * phases * eig.vectors.adjoint())
}

/// Random state near `rho`: mixed with noise of strength `s`, then rotated
/// by `exp(i·r·H)`.
fn perturbed_state(rng: &mut TrialRng, rho: &DensityOperator, s: f64, r: f64) -> Result<DensityOperator> {
    let d = rho.dim();
    let rank = rng.random_range(1..=d);
    let noise = random_density(rng, d, rank);
    let mixed = noise.mix(s, rho)?;
    let h = random_hermitian(rng, d);
    let u = unitary_exp(&h.unscale(h.norm()), r)?;
    Ok(mixed.rotated(&u))
}

/// `|S(ρ₁) − S(ρ₂)| ≤ 2√(1−F) log₂ d + 1` when `2√(1−F) < ⅓`, together with
/// `B ≥ F` and `d_K ≤ √(1 − B²)` on sorted spectra.
pub fn check_entropy_continuity(cfg: &FidelityCheckConfig) -> CheckReport {
    run_sweep("entropy-continuity", cfg.trials, cfg.seed, |t, rng| {
        let d = cfg.trial_dim(t);
        let rank = rng.random_range(1..=d);
        let rho1 = random_density(rng, d, rank);
        let s = rng.random_range(0.0..=0.02);
        let r = rng.random_range(0.0..=0.1);
        let rho2 = perturbed_state(rng, &rho1, s, r)?;
        let f = uhlmann_fidelity(rho1.matrix(), rho2.matrix())?;
        let root = (1.0 - f).max(0.0).sqrt();
        if 2.0 * root >= 1.0 / 3.0 {
            return Ok(Trial::Skipped("2√(1−F) ≥ 1/3".into()));
        }
        let s1 = von_neumann_entropy(rho1.matrix())?;
        let s2 = von_neumann_entropy(rho2.matrix())?;
        let gap = (s1 - s2).abs();
        let log_d = (d as f64).log2();
        let lemma = 2.0 * root * log_d + 1.0 - gap;

        let p1 = ClassicalDistribution::spectrum(rho1.matrix())?;
        let p2 = ClassicalDistribution::spectrum(rho2.matrix())?;
        let dk = kolmogorov_distance(&p1, &p2)?;
        let b = bhattacharyya_overlap(&p1, &p2)?;
        let overlap = b - f;
        let kraft = (1.0 - b * b).max(0.0).sqrt() - dk;
        let sqrt_one_minus_b_fails = dk > (1.0 - b).max(0.0).sqrt() + 1e-12;

        let l1 = crate::linalg::trace_norm_hermitian(&(rho1.matrix() - rho2.matrix()))?;
        let fannes = l1 * log_d + if l1 > 0.0 { -l1 * l1.log2() } else { 0.0 } - gap;

        Ok(Trial::checked(
            lemma.min(overlap).min(kraft),
            json!({
                "rho1": matrix_json(rho1.matrix()),
                "rho2": matrix_json(rho2.matrix()),
                "fidelity": f,
                "entropy_gap": gap,
                "kolmogorov": dk,
                "bhattacharyya": b,
            }),
        )
        .with_info("min_lemma_slack", lemma)
        .with_info("min_fannes_form_slack", fannes)
        .with_info("kraft_sqrt_one_minus_b_failures", if sqrt_one_minus_b_fails { 1.0 } else { 0.0 }))
    })
}

/// `|S(Q₁|R₁) − S(Q₂|R₂)| ≤ 6√(1−F) log₂ d + 2` when `F > 5/9`.
pub fn check_conditional_entropy_continuity(cfg: &FidelityCheckConfig) -> CheckReport {
    run_sweep("cond-entropy-continuity", cfg.trials, cfg.seed, |t, rng| {
        let d = cfg.trial_dim(t).min(4);
        let rank = rng.random_range(1..=d * d);
        let rho1 = random_density(rng, d * d, rank);
        let s = rng.random_range(0.0..=0.4);
        let r = rng.random_range(0.0..=0.5);
        let rho2 = perturbed_state(rng, &rho1, s, r)?;
        let f = uhlmann_fidelity(rho1.matrix(), rho2.matrix())?;
        if f <= 5.0 / 9.0 {
            return Ok(Trial::Skipped("F ≤ 5/9".into()));
        }
        let c1 = conditional_entropy(rho1.matrix(), (d, d))?;
        let c2 = conditional_entropy(rho2.matrix(), (d, d))?;
        let gap = (c1 - c2).abs();
        let bound = 6.0 * (1.0 - f).max(0.0).sqrt() * (d as f64).log2() + 2.0;
        Ok(Trial::checked(
            bound - gap,
            json!({
                "rho1": matrix_json(rho1.matrix()),
                "rho2": matrix_json(rho2.matrix()),
                "d": d,
                "fidelity": f,
                "gap": gap,
            }),
        ))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EncodingIrrelevance {
    /// `1 − F_e(ρ, D∘N∘E)`
    pub epsilon: f64,
    /// `F_e(ρ, D∘N∘F)`
    pub fe_extension: f64,
    /// `F` between the decoded joint states of the two encodings.
    pub decoded_fidelity: f64,
    /// `F` between the joint states after the channel.
    pub channel_fidelity: f64,
    pub coherent_info_general: f64,
    pub coherent_info_extension: f64,
    /// `6√(3ε) log₂ d_c + 2`
    pub bound: f64,
    pub gap: f64,
    pub source_entropy: f64,
    /// `I_c(ρ, N∘F) + 2 + 4(1 − F_e(ρ, D∘N∘F)) log₂ d_c`
    pub capstone_bound: f64,
    pub extension_holds: bool,
    pub close_final_holds: bool,
    pub premise_holds: bool,
    pub bound_holds: bool,
    pub capstone_holds: bool,
}

impl EncodingIrrelevance {
    /// Smallest slack among the asserted steps.
    pub fn slack(&self) -> f64 {
        let ext = self.fe_extension - (1.0 - 2.0 * self.epsilon);
        let cap = self.capstone_bound - self.source_entropy;
        (self.bound - self.gap).min(ext).min(cap)
    }
}

/// Compares `I_c(ρ, N∘E)` with `I_c(ρ, N∘F)` for a trace-preserving
/// extension `F` of the isometry extracted from `(E, D∘N)`.
pub fn encoding_irrelevance_check(
    rho: &DensityOperator,
    channel: &QuantumOperation,
    general: &QuantumOperation,
    extension: &QuantumOperation,
    decoder: &QuantumOperation,
) -> Result<EncodingIrrelevance> {
    let tol = Tolerances::default();
    let ne = compose(channel, general)?;
    let nf = compose(channel, extension)?;
    let dne = compose(decoder, &ne)?;
    let dnf = compose(decoder, &nf)?;
    let epsilon = 1.0 - entanglement_fidelity(rho, &dne)?;
    let fe_extension = entanglement_fidelity(rho, &dnf)?;
    let psi = purify(rho);
    let decoded_fidelity = uhlmann_fidelity(&joint_state(&psi, &dne)?, &joint_state(&psi, &dnf)?)?;
    let channel_fidelity = uhlmann_fidelity(&joint_state(&psi, &ne)?, &joint_state(&psi, &nf)?)?;
    let coherent_info_general = coherent_information(rho, &ne)?.value;
    let coherent_info_extension = coherent_information(rho, &nf)?.value;
    let log_dc = (channel.dim_out() as f64).log2();
    let bound = 6.0 * (3.0 * epsilon.max(0.0)).sqrt() * log_dc + 2.0;
    let gap = (coherent_info_general - coherent_info_extension).abs();
    let source_entropy = von_neumann_entropy(rho.matrix())?;
    let capstone_bound = coherent_info_extension + 2.0 + 4.0 * (1.0 - fe_extension) * log_dc;
    Ok(EncodingIrrelevance {
        epsilon,
        fe_extension,
        decoded_fidelity,
        channel_fidelity,
        coherent_info_general,
        coherent_info_extension,
        bound,
        gap,
        source_entropy,
        capstone_bound,
        extension_holds: fe_extension >= 1.0 - 2.0 * epsilon - tol.svd,
        close_final_holds: decoded_fidelity >= 1.0 - 3.0 * epsilon - tol.svd,
        premise_holds: 1.0 - 3.0 * epsilon > 5.0 / 9.0,
        bound_holds: gap < bound,
        capstone_holds: source_entropy <= capstone_bound + tol.svd,
    })
}

/// Random encoding, channel and decoder with `F_e(ρ, D∘N∘E)` near
/// `1 − cfg.epsilon`.
pub fn check_encoding_irrelevance(cfg: &FidelityCheckConfig) -> CheckReport {
    run_sweep("encoding-irrelevance", cfg.trials, cfg.seed, |t, rng| {
        let dc = cfg.trial_dim(t).min(4);
        let ds = 2;
        let dc = dc.max(ds);
        let rank = rng.random_range(1..=ds);
        let rho = random_density(rng, ds, rank);
        let v = random_isometry(rng, dc, ds);
        let se = cfg.epsilon * rng.random_range(0.1..=0.5);
        let sn = cfg.epsilon * rng.random_range(0.1..=0.5);
        let ke = rng.random_range(1..=3);
        let general = perturbed_isometry(rng, &v, se, ke);
        let kn = rng.random_range(1..=3);
        let channel = perturbed_identity(rng, dc, sn, kn);
        let decoder = isometry_reversal(&v);
        let a = compose(&decoder, &channel)?;
        let extracted = extract_isometry(&rho, &general, &a)?;
        let extension = extracted.w.as_operation().embed();
        let r = encoding_irrelevance_check(&rho, &channel, &general, &extension, &decoder)?;
        if !r.premise_holds {
            return Ok(Trial::Skipped("1 − 3ε ≤ 5/9".into()));
        }
        Ok(Trial::checked(
            r.slack(),
            json!({
                "rho": matrix_json(rho.matrix()),
                "E": general,
                "N": channel,
                "D": decoder,
                "result": r,
            }),
        )
        .with_info("min_bound_slack", r.bound - r.gap)
        .with_info("max_epsilon", r.epsilon)
        .with_info("close_final_3eps_failures", if r.close_final_holds { 0.0 } else { 1.0 })
        .with_info("min_channel_fidelity", r.channel_fidelity))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::channel_zoo;
    use crate::linalg::{diag, ComplexVector};
    use approx::assert_abs_diff_eq;

    fn h(p: f64) -> f64 {
        shannon_entropy(&[p, 1.0 - p])
    }

    fn bell() -> ComplexMatrix {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = ComplexVector::from_vec(vec![c64(s, 0.), c64(0., 0.), c64(0., 0.), c64(s, 0.)]);
        &v * v.adjoint()
    }

    #[test]
    fn entropy_examples() {
        assert_abs_diff_eq!(von_neumann_entropy(&diag(&[1.0, 0.0])).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(von_neumann_entropy(&identity(4).unscale(4.0)).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(von_neumann_entropy(&diag(&[0.9, 0.1])).unwrap(), 0.468996, epsilon = 1e-5);
        assert!(von_neumann_entropy(&diag(&[0.5, 0.4])).is_err());
        assert!(von_neumann_entropy(&diag(&[1.1, -0.1])).is_err());
    }

    #[test]
    fn conditional_entropy_examples() {
        let prod = diag(&[1.0, 0.0, 0.0, 0.0]);
        assert_abs_diff_eq!(conditional_entropy(&prod, (2, 2)).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(conditional_entropy(&bell(), (2, 2)).unwrap(), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(conditional_entropy(&identity(4).unscale(4.0), (2, 2)).unwrap(), 1.0, epsilon = 1e-12);
        assert!(conditional_entropy(&identity(4), (2, 3)).is_err());
    }

    #[test]
    fn classical_examples() {
        let p = ClassicalDistribution::new(vec![0.9, 0.1]).unwrap();
        let q = ClassicalDistribution::new(vec![0.8, 0.2]).unwrap();
        assert_abs_diff_eq!(kolmogorov_distance(&p, &p).unwrap(), 0.0);
        assert_abs_diff_eq!(kolmogorov_distance(&p, &q).unwrap(), 0.1, epsilon = 1e-15);
        let b = bhattacharyya_overlap(&p, &q).unwrap();
        assert_abs_diff_eq!(b, 0.72f64.sqrt() + 0.02f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(b, 0.989949, epsilon = 1e-6);
        let e0 = ClassicalDistribution::new(vec![1.0, 0.0]).unwrap();
        let e1 = ClassicalDistribution::new(vec![0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(kolmogorov_distance(&e0, &e1).unwrap(), 1.0);
        assert_abs_diff_eq!(bhattacharyya_overlap(&e0, &e1).unwrap(), 0.0);
        assert_abs_diff_eq!(bhattacharyya_overlap(&p, &p).unwrap(), 1.0, epsilon = 1e-15);
        let three = ClassicalDistribution::new(vec![0.5, 0.25, 0.25]).unwrap();
        assert!(kolmogorov_distance(&p, &three).is_err());
        assert!(ClassicalDistribution::new(vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn kraft_chain_on_commuting_pair() {
        let p = ClassicalDistribution::new(vec![0.5, 0.5]).unwrap();
        let q = ClassicalDistribution::new(vec![0.6, 0.4]).unwrap();
        let dk = kolmogorov_distance(&p, &q).unwrap();
        let b = bhattacharyya_overlap(&p, &q).unwrap();
        // The square-root-of-(1−B) form fails here; the (1−B²) form holds.
        assert!(dk > (1.0 - b).sqrt());
        assert!(dk <= (1.0 - b * b).sqrt());
        let f = uhlmann_fidelity(&diag(&[0.5, 0.5]), &diag(&[0.6, 0.4])).unwrap();
        assert_abs_diff_eq!(f, b * b, epsilon = 1e-12);
        assert!(b >= f);
        let gap = (von_neumann_entropy(&diag(&[0.5, 0.5])).unwrap() - von_neumann_entropy(&diag(&[0.6, 0.4])).unwrap()).abs();
        assert!(gap <= 2.0 * (1.0 - f).sqrt() + 1.0);
    }

    #[test]
    fn coherent_information_closed_forms() {
        let half = DensityOperator::maximally_mixed(2);
        for k in 0..=5 {
            let p = k as f64 / 10.0;
            let ic = coherent_information(&half, &channel_zoo("dephasing", p).unwrap()).unwrap();
            assert_abs_diff_eq!(ic.value, 1.0 - h(p), epsilon = 1e-10);
            assert_abs_diff_eq!(ic.value, ic.output_entropy - ic.joint_entropy, epsilon = 1e-15);
        }
        let ic = coherent_information(&half, &channel_zoo("depolarizing", 1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(ic.value, -1.0, epsilon = 1e-10);
        let mut rng = trial_rng(1, 0);
        let rho = random_density(&mut rng, 3, 3);
        let ic = coherent_information(&rho, &QuantumOperation::identity(3)).unwrap();
        assert_abs_diff_eq!(ic.value, von_neumann_entropy(rho.matrix()).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn complementary_route_agrees() {
        let mut rng = trial_rng(2, 0);
        for (din, dout, k) in [(2, 2, 3), (3, 2, 2), (2, 3, 4)] {
            let rho = random_density(&mut rng, din, din);
            let op = crate::random::random_subchannel(&mut rng, din, dout, k, 0.6);
            let a = coherent_information(&rho, &op).unwrap().value;
            let b = coherent_information_complementary(rho.matrix(), &op).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = trial_rng(3, 0);
        let op = crate::random::random_channel(&mut rng, 3, 3, 2);
        let rho = random_density(&mut rng, 3, 3);
        let (_, g) = objective(&op, rho.matrix(), true).unwrap();
        let g = g.unwrap();
        let dir = random_hermitian(&mut rng, 3);
        let dir = &dir - identity(3) * c64(trace(&dir).re / 3.0, 0.0);
        let step = 1e-6;
        let plus = objective(&op, &(rho.matrix() + &dir * c64(step, 0.0)), false).unwrap().0;
        let minus = objective(&op, &(rho.matrix() - &dir * c64(step, 0.0)), false).unwrap().0;
        let numeric = (plus - minus) / (2.0 * step);
        let analytic = trace(&(&g * &dir)).re;
        assert_abs_diff_eq!(numeric, analytic, epsilon = 1e-6);
    }

    #[test]
    fn observed_examples() {
        let mut rng = trial_rng(4, 0);
        let rho = random_density(&mut rng, 2, 2);
        let dep = channel_zoo("depolarizing", 0.2).unwrap();
        let single = Instrument::new(vec![QuantumOperation::identity(2)]).unwrap();
        let obs = observed_coherent_information(&rho, &dep, &single).unwrap();
        assert_abs_diff_eq!(obs.total, coherent_information(&rho, &dep).unwrap().value, epsilon = 1e-12);

        let rho = DensityOperator::from_diagonal(&[0.8, 0.2]).unwrap();
        let deph = channel_zoo("dephasing", 0.2).unwrap();
        let keep = QuantumOperation::new(vec![diag(&[1.0, 0.0])]).unwrap();
        let rest = QuantumOperation::new(vec![diag(&[0.0, 1.0])]).unwrap();
        let inst = Instrument::new(vec![keep, rest]).unwrap();
        let obs = observed_coherent_information(&rho, &deph, &inst).unwrap();
        assert_abs_diff_eq!(obs.branches[0].weight, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(obs.branches[0].coherent_information.unwrap(), 0.0, epsilon = 1e-10);
        assert!(obs.dominates_blind);

        let (lhs, rhs) = isometric_branch_terms(&rho, &deph, &diag(&[1.0, 0.0])).unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
        assert_abs_diff_eq!(lhs, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn observed_dominates_blind_on_random_instruments() {
        let mut rng = trial_rng(5, 0);
        for _ in 0..20 {
            let rho = random_density(&mut rng, 2, 2);
            let ch = crate::random::random_channel(&mut rng, 2, 2, 2);
            let split = crate::random::random_channel(&mut rng, 2, 2, 3);
            let branches = split
                .kraus()
                .iter()
                .map(|k| QuantumOperation::new(vec![k.clone()]).unwrap())
                .collect();
            let obs = observed_coherent_information(&rho, &ch, &Instrument::new(branches).unwrap()).unwrap();
            assert!(obs.dominates_blind, "{obs:?}");
        }
    }

    #[test]
    fn isometric_branch_identity_on_random_partial_isometry() {
        let mut rng = trial_rng(6, 0);
        let rho = random_density(&mut rng, 3, 3);
        let w = random_isometry(&mut rng, 3, 3);
        let gamma = diag(&[1.0, 1.0, 0.0]);
        let ch = crate::random::random_channel(&mut rng, 3, 3, 2);
        let (lhs, rhs) = isometric_branch_terms(&rho, &ch, &(&w * &gamma)).unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-9);
    }

    #[test]
    fn optimizer_examples() {
        let cfg = OptimizerConfig::default();
        let id = maximize_coherent_information(&QuantumOperation::identity(2), 1, &cfg).unwrap();
        assert_abs_diff_eq!(id.value_per_use, 1.0, epsilon = 1e-8);
        let deph = channel_zoo("dephasing", 0.2).unwrap();
        let r = maximize_coherent_information(&deph, 1, &cfg).unwrap();
        assert!(r.value_per_use >= 1.0 - h(0.2) - 1e-8);
        assert!(r.value_per_use <= 1.0 + 1e-9);
        assert!(matches!(
            maximize_coherent_information(&crate::random::random_channel(&mut trial_rng(7, 0), 3, 3, 2), 3, &cfg),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn small_sweeps_pass() {
        let cfg = FidelityCheckConfig::new(40, 4, 3).unwrap();
        for report in [
            check_entropy_continuity(&cfg),
            check_conditional_entropy_continuity(&cfg),
            check_encoding_irrelevance(&cfg),
        ] {
            assert!(report.pass, "{report:?}");
        }
    }
}
