use rand::Rng;
use serde_json::{json, Value};

use crate::channels::{compose, Instrument, PartialIsometry, QuantumOperation, RemixMatrix};
use crate::error::{Error, Result};
use crate::fidelity::entanglement_fidelity;
use crate::linalg::{
    orthonormal_completion, polar, svd, trace, ComplexMatrix, DensityOperator, Tolerances, C64,
};
use crate::random::{isometry_reversal, perturbed_identity, perturbed_isometry, random_density, random_isometry};
use crate::report::{matrix_json, run_sweep, CheckReport, FidelityCheckConfig, Trial};

#[derive(Clone, Debug, PartialEq)]
pub struct IsometryExtractionResult {
    /// Maximal partial isometry from the source space into the channel input.
    pub w: PartialIsometry,
    /// Index `k` of the diagonal coupling used to build `w`.
    pub chosen_index: usize,
    /// Singular values of `X_ij = tr(A_i E_j ρ)`, descending.
    pub coupling: Vec<f64>,
    /// `λ_k = tr(E'_k ρ E'_k†)` in the diagonalizing decomposition of `E`.
    pub branch_weights: Vec<f64>,
    /// `F_e(ρ, A∘E)`
    pub fe_before: f64,
    /// `F_e(ρ, A∘W)`
    pub fe_after: f64,
    /// Frobenius norm of the off-diagonal part of the remixed `X`.
    pub off_diagonal: f64,
    /// `fe_before ≤ ½`: the `2F − 1` guarantee says nothing.
    pub guarantee_vacuous: bool,
}

impl IsometryExtractionResult {
    pub fn guarantee_slack(&self) -> f64 {
        self.fe_after - (2.0 * self.fe_before - 1.0)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "w": matrix_json(self.w.matrix()),
            "chosen_index": self.chosen_index,
            "coupling": self.coupling,
            "branch_weights": self.branch_weights,
            "fe_before": self.fe_before,
            "fe_after": self.fe_after,
            "off_diagonal": self.off_diagonal,
            "maximality_defect": self.w.maximality_defect(),
            "guarantee_vacuous": self.guarantee_vacuous,
        })
    }
}

/// `X_ij = tr(A_i E_j ρ)`
fn coupling_matrix(rho: &ComplexMatrix, e: &QuantumOperation, a: &QuantumOperation) -> ComplexMatrix {
    let er: Vec<ComplexMatrix> = e.kraus().iter().map(|ej| ej * rho).collect();
    ComplexMatrix::from_fn(a.len(), e.len(), |i, j| trace(&(&a.kraus()[i] * &er[j])))
}

/// Replaces an encoding `E` (with `tr E(ρ) = 1`) by a maximal partial
/// isometry `W` with `F_e(ρ, A∘W) ≥ 2F_e(ρ, A∘E) − 1`.
pub fn extract_isometry(
    rho: &DensityOperator,
    e: &QuantumOperation,
    a: &QuantumOperation,
) -> Result<IsometryExtractionResult> {
    let tol = Tolerances::default();
    let ds = rho.dim();
    if e.dim_in() != ds || a.dim_out() != ds || a.dim_in() != e.dim_out() {
        return Err(Error::Shape(format!(
            "extraction needs E: {ds}->d and A: d->{ds}, got E: {}->{} and A: {}->{}",
            e.dim_in(),
            e.dim_out(),
            a.dim_in(),
            a.dim_out()
        )));
    }
    let t = trace(&e.apply_density(rho)?).re;
    if (t - 1.0).abs() > tol.trace {
        return Err(Error::Precondition(format!("encoding output has trace {t}, expected 1")));
    }
    let x = coupling_matrix(rho.matrix(), e, a);
    let fe_before = x.norm_squared();

    let dec = svd(&x)?;
    let u = orthonormal_completion(&dec.u);
    let v = orthonormal_completion(&dec.v.adjoint());
    // A'_k = Σ_i conj(U_ik) A_i and E'_l = Σ_j V_jl E_j make X' = U†XV diagonal.
    let a_mixed = a.remix(&RemixMatrix::new(u.adjoint())?)?;
    let e_mixed = e.remix(&RemixMatrix::new(v.transpose())?)?;
    let x_mixed = coupling_matrix(rho.matrix(), &e_mixed, &a_mixed);
    let off_diagonal = x_mixed
        .iter()
        .enumerate()
        .filter(|(idx, _)| idx % x_mixed.nrows() != idx / x_mixed.nrows())
        .map(|(_, z): (usize, &C64)| z.norm_sqr())
        .sum::<f64>()
        .sqrt();

    let branch_weights: Vec<f64> = e_mixed
        .kraus()
        .iter()
        .map(|ek| trace(&(ek * rho.matrix() * ek.adjoint())).re)
        .collect();
    let pairs = a.len().min(e.len());
    let mut chosen: Option<(usize, f64)> = None;
    for k in 0..pairs {
        let lambda = branch_weights[k];
        if lambda <= tol.trace {
            continue;
        }
        let ratio = x_mixed[(k, k)].norm_sqr() / lambda;
        if chosen.is_none_or(|(_, best)| ratio > best) {
            chosen = Some((k, ratio));
        }
    }
    let (chosen_index, _) = chosen.ok_or_else(|| {
        Error::Degenerate("every diagonal coupling has vanishing encoding weight".into())
    })?;

    let (polar_factor, _) = polar(&a_mixed.kraus()[chosen_index])?;
    let w = PartialIsometry::new(polar_factor.matrix().adjoint())?;
    let fe_after = entanglement_fidelity(rho, &compose(a, &w.as_operation())?)?;
    Ok(IsometryExtractionResult {
        w,
        chosen_index,
        coupling: dec.singular_values,
        branch_weights,
        fe_before,
        fe_after,
        off_diagonal,
        guarantee_vacuous: fe_before <= 0.5,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FccResult {
    /// Branch whose renormalized fidelity clears `1 − η`.
    pub index: usize,
    pub extraction: IsometryExtractionResult,
    /// `F_e(ρ, D_j∘N∘W)`
    pub fe: f64,
    /// `1 − Σ_m F_e(ρ, D_m∘N∘E_m)`
    pub eta: f64,
    pub branch_fidelities: Vec<f64>,
    pub branch_traces: Vec<f64>,
}

impl FccResult {
    pub fn to_json(&self) -> Value {
        json!({
            "index": self.index,
            "extraction": self.extraction.to_json(),
            "fe": self.fe,
            "eta": self.eta,
            "branch_fidelities": self.branch_fidelities,
            "branch_traces": self.branch_traces,
        })
    }
}

/// Turns a scheme whose encoder outcome `m` is forwarded to the decoder into
/// a single isometric encoding with fidelity above `1 − 2η`.
pub fn derandomize_fcc(
    rho: &DensityOperator,
    instrument: &Instrument,
    decoders: &[QuantumOperation],
    channel: &QuantumOperation,
) -> Result<FccResult> {
    let tol = Tolerances::default();
    if decoders.len() != instrument.len() {
        return Err(Error::Shape(format!(
            "{} decoders for {} branches",
            decoders.len(),
            instrument.len()
        )));
    }
    if decoders.iter().any(|d| !d.is_trace_preserving()) {
        return Err(Error::Precondition("decoders must be trace-preserving".into()));
    }
    let mut branch_fidelities = Vec::with_capacity(decoders.len());
    let mut branch_traces = Vec::with_capacity(decoders.len());
    for (e, d) in instrument.branches().iter().zip(decoders) {
        let dn = compose(d, channel)?;
        branch_fidelities.push(entanglement_fidelity(rho, &compose(&dn, e)?)?);
        branch_traces.push(trace(&e.apply_density(rho)?).re);
    }
    let eta = 1.0 - branch_fidelities.iter().sum::<f64>();
    if eta >= 0.25 {
        return Err(Error::Precondition(format!("total fidelity {} is not above 3/4", 1.0 - eta)));
    }
    let mut best: Option<(usize, f64)> = None;
    for (m, (&f, &t)) in branch_fidelities.iter().zip(&branch_traces).enumerate() {
        if t <= tol.trace {
            continue;
        }
        let renormalized = f / t;
        if best.is_none_or(|(_, b)| renormalized > b) {
            best = Some((m, renormalized));
        }
    }
    let index = match best {
        // Pigeonhole: some branch reaches the average, up to rounding.
        Some((m, f)) if f >= 1.0 - eta - 1e-12 => m,
        _ => {
            return Err(Error::InconsistentInput(
                "no branch reaches the averaged fidelity".into(),
            ))
        }
    };
    let normalized = instrument.branches()[index].scaled(1.0 / branch_traces[index].sqrt())?;
    let a = compose(&decoders[index], channel)?;
    let extraction = extract_isometry(rho, &normalized, &a)?;
    Ok(FccResult {
        index,
        fe: extraction.fe_after,
        extraction,
        eta,
        branch_fidelities,
        branch_traces,
    })
}

/// Negative excess of a structural defect over its tolerance, else `slack`.
fn structural(slack: f64, defect: f64, limit: f64) -> f64 {
    if defect < limit {
        slack
    } else {
        slack.min(-defect)
    }
}

/// `F_e(ρ, A∘W) ≥ 2F_e(ρ, A∘E) − 1` on perturbed encode/decode pairs with
/// `F_e(ρ, A∘E) ≥ 0.9`, with `W` maximal and the coupling diagonalized.
pub fn check_isometry_extraction(cfg: &FidelityCheckConfig) -> CheckReport {
    run_sweep("isometry", cfg.trials, cfg.seed, |t, rng| {
        let ds = cfg.trial_dim(t).min(3);
        let dc = ds + rng.random_range(0..=1);
        let rank = rng.random_range(1..=ds);
        let rho = random_density(rng, ds, rank);
        let v = random_isometry(rng, dc, ds);
        let se = cfg.eta * rng.random_range(0.0..=0.5);
        let sn = cfg.eta * rng.random_range(0.0..=0.5);
        let ke = rng.random_range(1..=3);
        let e = perturbed_isometry(rng, &v, se, ke);
        let kn = rng.random_range(1..=3);
        let a = compose(&isometry_reversal(&v), &perturbed_identity(rng, dc, sn, kn))?;
        let r = extract_isometry(&rho, &e, &a)?;
        if r.fe_before < 0.9 {
            return Ok(Trial::Skipped("F_e(ρ, A∘E) below 0.9".into()));
        }
        let defect = r.w.maximality_defect();
        let slack = structural(structural(r.guarantee_slack(), defect, 1e-9), r.off_diagonal, 1e-10);
        Ok(Trial::checked(
            slack,
            json!({
                "rho": matrix_json(rho.matrix()),
                "E": e,
                "A": a,
                "result": r.to_json(),
            }),
        )
        .with_info("max_maximality_defect", defect)
        .with_info("max_off_diagonal", r.off_diagonal)
        .with_info("min_fe_after", r.fe_after))
    })
}

/// Derandomization on three-branch instruments with total fidelity at
/// least 0.95.
pub fn check_fcc(cfg: &FidelityCheckConfig) -> CheckReport {
    run_sweep("fcc", cfg.trials, cfg.seed, |t, rng| {
        let ds = 2;
        let dc = cfg.trial_dim(t).clamp(2, 4);
        let rank = rng.random_range(1..=ds);
        let rho = random_density(rng, ds, rank);
        let mut weights: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..=1.0)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let mut branches = Vec::with_capacity(3);
        let mut decoders = Vec::with_capacity(3);
        for &p in &weights {
            let v = random_isometry(rng, dc, ds);
            let s = 0.02 * rng.random_range(0.0..=1.0);
            let k = rng.random_range(1..=2);
            branches.push(perturbed_isometry(rng, &v, s, k).scaled(p.sqrt())?);
            decoders.push(isometry_reversal(&v));
        }
        let instrument = Instrument::new(branches)?;
        let sn = 0.02 * rng.random_range(0.0..=1.0);
        let kn = rng.random_range(1..=2);
        let channel = perturbed_identity(rng, dc, sn, kn);
        let r = derandomize_fcc(&rho, &instrument, &decoders, &channel)?;
        if r.eta > 0.05 {
            return Ok(Trial::Skipped("total fidelity below 0.95".into()));
        }
        let defect = r.extraction.w.maximality_defect();
        let slack = structural(r.fe - (1.0 - 2.0 * r.eta), defect, 1e-9);
        Ok(Trial::checked(
            slack,
            json!({
                "rho": matrix_json(rho.matrix()),
                "instrument": instrument,
                "decoders": decoders,
                "N": channel,
                "result": r.to_json(),
            }),
        )
        .with_info("min_fe", r.fe)
        .with_info("max_eta", r.eta))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, identity};
    use crate::random::{random_channel, random_unitary, trial_rng};
    use approx::assert_abs_diff_eq;

    #[test]
    fn perfect_transmission_recovers_the_isometry() {
        let mut rng = trial_rng(1, 0);
        let rho = random_density(&mut rng, 2, 2);
        let v = random_isometry(&mut rng, 4, 2);
        let e = QuantumOperation::new(vec![v.clone()]).unwrap();
        let r = extract_isometry(&rho, &e, &isometry_reversal(&v)).unwrap();
        assert_abs_diff_eq!(r.fe_before, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.fe_after, 1.0, epsilon = 1e-10);
        assert!(r.w.is_maximal());
        assert!(r.w.maximality_defect() < 1e-9);
    }

    #[test]
    fn unitary_encoding_is_recovered_up_to_phase() {
        let mut rng = trial_rng(2, 0);
        let rho = random_density(&mut rng, 3, 3);
        let u = random_unitary(&mut rng, 3);
        let e = QuantumOperation::new(vec![u.clone()]).unwrap();
        let a = QuantumOperation::new(vec![u.adjoint()]).unwrap();
        let r = extract_isometry(&rho, &e, &a).unwrap();
        let probe = random_density(&mut rng, 3, 3);
        let lhs = r.w.as_operation().apply_density(&probe).unwrap();
        let rhs = e.apply_density(&probe).unwrap();
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn random_instances_meet_the_guarantee() {
        let mut rng = trial_rng(3, 0);
        for _ in 0..50 {
            let rho = random_density(&mut rng, 2, 2);
            let v = random_isometry(&mut rng, 3, 2);
            let e = perturbed_isometry(&mut rng, &v, 0.02, 2);
            let a = compose(&isometry_reversal(&v), &perturbed_identity(&mut rng, 3, 0.02, 2)).unwrap();
            let r = extract_isometry(&rho, &e, &a).unwrap();
            assert!(r.off_diagonal < 1e-10);
            assert!(r.guarantee_slack() >= -1e-9, "{r:?}");
            assert!(r.fe_before >= 0.9);
            assert!(!r.guarantee_vacuous);
            // Best diagonal ratio dominates the total coupling weight.
            let k = r.chosen_index;
            assert!(r.coupling[k].powi(2) / r.branch_weights[k] >= r.fe_before - 1e-12);
        }
    }

    #[test]
    fn preconditions() {
        let rho = DensityOperator::maximally_mixed(2);
        let half = QuantumOperation::new(vec![identity(2).scale(0.5f64.sqrt())]).unwrap();
        assert!(extract_isometry(&rho, &half, &QuantumOperation::identity(2)).is_err());
        let zero = QuantumOperation::new(vec![ComplexMatrix::zeros(2, 2)]).unwrap();
        let e = QuantumOperation::identity(2);
        assert!(matches!(extract_isometry(&rho, &e, &zero), Ok(r) if r.guarantee_vacuous));
        let mut rng = trial_rng(4, 0);
        let noisy = random_channel(&mut rng, 2, 2, 4);
        let r = extract_isometry(&rho, &noisy, &QuantumOperation::identity(2)).unwrap();
        assert!(r.w.is_maximal());
        let wrong = QuantumOperation::identity(3);
        assert!(extract_isometry(&rho, &e, &wrong).is_err());
    }

    #[test]
    fn fcc_single_branch_reduces_to_extraction() {
        let mut rng = trial_rng(5, 0);
        let rho = random_density(&mut rng, 2, 2);
        let v = random_isometry(&mut rng, 3, 2);
        let e = perturbed_isometry(&mut rng, &v, 0.03, 2);
        let n = perturbed_identity(&mut rng, 3, 0.03, 2);
        let d = isometry_reversal(&v);
        let inst = Instrument::new(vec![e.clone()]).unwrap();
        let r = derandomize_fcc(&rho, &inst, std::slice::from_ref(&d), &n).unwrap();
        let direct = extract_isometry(&rho, &e, &compose(&d, &n).unwrap()).unwrap();
        assert_eq!(r.index, 0);
        assert_abs_diff_eq!(r.fe, direct.fe_after, epsilon = 1e-12);
    }

    #[test]
    fn fcc_picks_the_perfect_branch() {
        let mut rng = trial_rng(6, 0);
        let rho = random_density(&mut rng, 2, 2);
        let u = random_unitary(&mut rng, 2);
        let perfect = QuantumOperation::new(vec![u.scale(0.8f64.sqrt())]).unwrap();
        // Useless branch: replaces the input by |0⟩.
        let reset: Vec<ComplexMatrix> = (0..2)
            .map(|j| {
                ComplexMatrix::from_fn(2, 2, |r, c| {
                    if r == 0 && c == j { c64(0.2f64.sqrt(), 0.0) } else { c64(0.0, 0.0) }
                })
            })
            .collect();
        let useless = QuantumOperation::new(reset).unwrap();
        let inst = Instrument::new(vec![useless, perfect]).unwrap();
        let decoders = vec![QuantumOperation::identity(2), QuantumOperation::new(vec![u.adjoint()]).unwrap()];
        let r = derandomize_fcc(&rho, &inst, &decoders, &QuantumOperation::identity(2)).unwrap();
        assert_eq!(r.index, 1);
        assert_abs_diff_eq!(r.fe, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn fcc_rejects_low_total_fidelity() {
        let rho = DensityOperator::maximally_mixed(2);
        let dep = crate::channels::channel_zoo("depolarizing", 1.0).unwrap();
        let inst = Instrument::new(vec![dep]).unwrap();
        let err = derandomize_fcc(&rho, &inst, &[QuantumOperation::identity(2)], &QuantumOperation::identity(2));
        assert!(err.is_err());
    }

    #[test]
    fn small_sweeps_pass() {
        let cfg = FidelityCheckConfig::new(40, 4, 9).unwrap();
        for report in [check_isometry_extraction(&cfg), check_fcc(&cfg)] {
            assert!(report.pass, "{report:?}");
        }
    }
}
