use proptest::prelude::*;
use qfidkit::capacity::{
    bhattacharyya_overlap, coherent_information, kolmogorov_distance, von_neumann_entropy,
    ClassicalDistribution,
};
use qfidkit::channels::{compose, Instrument, QuantumOperation, RemixMatrix};
use qfidkit::fidelity::{
    entanglement_fidelity, entanglement_fidelity_purified, entanglement_fidelity_renormalized,
    fe_term_vector, min_pure_state_fidelity_with, pure_state_fidelity, sampled_min_pure_state_fidelity, uhlmann_fidelity,
    MinFidelityConfig, TAU_OPT,
};
use qfidkit::linalg::{
    c64, eig_hermitian, hermitize, identity, outer, partial_trace, polar, purify, svd, tensor,
    trace, ComplexMatrix, ComplexVector, DensityOperator, Factor, Subspace,
};
use qfidkit::procedures::{
    cross_term_identity, extract_isometry, phase_average_fidelity, strip_support_with, PhaseSet,
};
use qfidkit::random::{
    isometry_reversal, perturbed_identity, perturbed_isometry, random_channel, random_density,
    random_hermitian, random_isometry, random_matrix, random_subchannel, random_subspace,
    random_unitary, random_vector, trial_rng, TrialRng,
};
use qfidkit::sources::{compression_scheme, typical_subspace, IIDSource};
use rand::Rng;

fn rng(seed: u64) -> TrialRng {
    trial_rng(seed, 0)
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

fn any_density(rng: &mut TrialRng, d: usize) -> DensityOperator {
    let rank = rng.random_range(1..=d);
    random_density(rng, d, rank)
}

fn frob(m: &ComplexMatrix) -> f64 {
    m.norm()
}

/// Derivative-free minimum of the pure-state fidelity over `h`: best of
/// random starts refined by shrinking random perturbations.
fn random_search_minimum(h: &Subspace, op: &QuantumOperation, g: &mut TrialRng) -> f64 {
    let f = |c: &ComplexVector| pure_state_fidelity(&h.embed(&c.normalize()), op).unwrap();
    let mut best = f64::INFINITY;
    for _ in 0..8 {
        let mut c = random_vector(g, h.dim());
        let mut value = f(&c);
        let mut step = 0.5;
        while step > 1e-7 {
            let mut improved = false;
            for _ in 0..40 {
                let trial = &c + random_vector(g, h.dim()) * c64(step, 0.0);
                let v = f(&trial);
                if v < value {
                    (c, value, improved) = (trial.normalize(), v, true);
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best = best.min(value);
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn eig_reconstructs(seed: u64, d in 2usize..=16) {
        let m = random_hermitian(&mut rng(seed), d);
        let e = eig_hermitian(&m).unwrap();
        prop_assert!(frob(&(e.map(|x| x) - &m)) < 1e-10 * m.norm().max(1.0));
        prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_reconstructs(seed: u64, r in 2usize..=16, c in 2usize..=16) {
        let m = random_matrix(&mut rng(seed), r, c);
        let s = svd(&m).unwrap();
        prop_assert!(frob(&(s.reconstruct() - &m)) < 1e-10 * m.norm().max(1.0));
        prop_assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn polar_reconstructs(seed: u64, r in 2usize..=16, c in 2usize..=16) {
        let m = random_matrix(&mut rng(seed), r, c);
        let (w, p) = polar(&m).unwrap();
        prop_assert!(frob(&(w.matrix() * &p - &m)) < 1e-10 * m.norm().max(1.0));
        prop_assert!(w.is_maximal());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn purification_reduces_to_state(seed: u64, d in 2usize..=8) {
        let rho = any_density(&mut rng(seed), d);
        let psi = purify(&rho);
        prop_assert!(frob(&(psi.reduced() - rho.matrix())) < 1e-10);
    }

    #[test]
    fn tensor_is_associative_and_mixed_product(seed: u64, a in 1usize..=3, b in 1usize..=3, c in 1usize..=3) {
        let mut g = rng(seed);
        let (x, y, z) = (random_matrix(&mut g, a, a), random_matrix(&mut g, b, b), random_matrix(&mut g, c, c));
        let left = tensor(&tensor(&x, &y), &z);
        let right = tensor(&x, &tensor(&y, &z));
        prop_assert!(frob(&(left - right)) < 1e-12);
        let (x2, y2) = (random_matrix(&mut g, a, a), random_matrix(&mut g, b, b));
        let lhs = tensor(&x, &y) * tensor(&x2, &y2);
        let rhs = tensor(&(&x * &x2), &(&y * &y2));
        prop_assert!(frob(&(lhs - rhs)) < 1e-12);
    }

    #[test]
    fn remixing_preserves_action(seed: u64, d in 2usize..=4, k in 1usize..=3, extra in 0usize..=2) {
        let mut g = rng(seed);
        let op = random_op(&mut g, d);
        let m = RemixMatrix::new(random_isometry(&mut g, op.len() + extra, op.len())).unwrap();
        let remixed = op.remix(&m).unwrap();
        prop_assert_eq!(remixed.len(), op.len() + extra);
        prop_assert!(frob(&(remixed.gram() - op.gram())) < 1e-10);
        let mut worst: f64 = 0.0;
        for _ in 0..k * 10 {
            let rho = any_density(&mut g, d);
            worst = worst.max(frob(&(remixed.apply_density(&rho).unwrap() - op.apply_density(&rho).unwrap())));
        }
        prop_assert!(worst < 1e-9);
    }

    #[test]
    fn dilation_is_faithful(seed: u64, d in 2usize..=4, k in 1usize..=3) {
        let mut g = rng(seed);
        let op = random_channel(&mut g, d, d, k);
        let dil = op.dilate().unwrap();
        prop_assert!(dil.unitarity_defect() < 1e-10);
        let back = dil.to_operation().unwrap();
        for _ in 0..5 {
            let rho = any_density(&mut g, d);
            prop_assert!(frob(&(back.apply_density(&rho).unwrap() - op.apply_density(&rho).unwrap())) < 1e-9);
        }
    }

    #[test]
    fn composition_is_associative(seed: u64, d in 2usize..=4) {
        let mut g = rng(seed);
        let (a, b, c) = (random_op(&mut g, d), random_op(&mut g, d), random_op(&mut g, d));
        let left = compose(&compose(&a, &b).unwrap(), &c).unwrap();
        let right = compose(&a, &compose(&b, &c).unwrap()).unwrap();
        let rho = any_density(&mut g, d);
        let direct = a.apply(&b.apply(&c.apply_density(&rho).unwrap()).unwrap()).unwrap();
        prop_assert!(frob(&(left.apply_density(&rho).unwrap() - &direct)) < 1e-10);
        prop_assert!(frob(&(right.apply_density(&rho).unwrap() - &direct)) < 1e-10);
    }

    #[test]
    fn instrument_branches_sum_to_channel(seed: u64, d in 2usize..=4, split in 1usize..=3) {
        let mut g = rng(seed);
        let ch = random_channel(&mut g, d, d, 4);
        let kraus = ch.kraus().to_vec();
        let branches = vec![
            QuantumOperation::new(kraus[..split].to_vec()).unwrap(),
            QuantumOperation::new(kraus[split..].to_vec()).unwrap(),
        ];
        let inst = Instrument::new(branches).unwrap();
        let rho = any_density(&mut g, d);
        let total: f64 = inst.branches().iter().map(|b| trace(&b.apply_density(&rho).unwrap()).re).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fe_two_paths_and_purification_independence(seed: u64, d in 2usize..=8) {
        let mut g = rng(seed);
        let rho = any_density(&mut g, d);
        let op = random_op(&mut g, d);
        let kraus_path = entanglement_fidelity(&rho, &op).unwrap();
        let psi = purify(&rho);
        prop_assert!((kraus_path - entanglement_fidelity_purified(&psi, &op).unwrap()).abs() < 1e-9);
        let rotated = psi.rotate_reference(&random_unitary(&mut g, psi.dim_r)).unwrap();
        prop_assert!((kraus_path - entanglement_fidelity_purified(&rotated, &op).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn embedding_splits_fidelity_additively(seed: u64, d in 2usize..=4) {
        let mut g = rng(seed);
        let rho = any_density(&mut g, d);
        let scale = g.random_range(0.2..0.9);
        let branch = random_subchannel(&mut g, d, d, 2, scale);
        let full = branch.embed();
        prop_assert!(full.is_trace_preserving());
        let g_op = branch.completion().unwrap();
        let split = fe_term_vector(rho.matrix(), &branch).unwrap().squared_norm()
            + fe_term_vector(rho.matrix(), &g_op).unwrap().squared_norm();
        prop_assert!((entanglement_fidelity(&rho, &full).unwrap() - split).abs() < 1e-10);
    }

    #[test]
    fn renormalized_fidelity_is_between(seed: u64, d in 2usize..=6) {
        let mut g = rng(seed);
        let rho = any_density(&mut g, d);
        let op = random_op(&mut g, d);
        let fe = entanglement_fidelity(&rho, &op).unwrap();
        let hat = entanglement_fidelity_renormalized(&rho, &op).unwrap();
        prop_assert!(fe <= hat + 1e-12);
        prop_assert!(hat <= 1.0 + 1e-12);
    }

    #[test]
    fn geometry_fact_sqrt_form(seed: u64, eta in 0.0f64..1.0, d in 2usize..=4) {
        // The stated 2η form only follows from the √η form when η ≥ ¼.
        let mut g = rng(seed);
        let one = random_vector(&mut g, d).normalize();
        let mut perp = random_vector(&mut g, d);
        perp -= &one * one.dotc(&perp);
        let perp = perp.normalize();
        let two = &one * c64((1.0 - eta).sqrt(), 0.0) + &perp * c64(eta.sqrt(), 0.0);
        let k = g.random_range(1..=d);
        let p = random_subspace(&mut g, d, k).projector();
        let gap = (one.dotc(&(&p * &one)) - two.dotc(&(&p * &two))).re.abs();
        prop_assert!(gap <= eta.sqrt() + 1e-10);
        if eta >= 0.25 {
            prop_assert!(gap <= 2.0 * eta + 1e-10);
        }
    }

    #[test]
    fn ic_is_bounded_and_identity_gives_entropy(seed: u64, d in 2usize..=4) {
        let mut g = rng(seed);
        let rho = any_density(&mut g, d);
        let s = von_neumann_entropy(rho.matrix()).unwrap();
        let ic_id = coherent_information(&rho, &QuantumOperation::identity(d)).unwrap().value;
        prop_assert!((ic_id - s).abs() < 1e-9);
        let op = random_channel(&mut g, d, d, 3);
        let ic = coherent_information(&rho, &op).unwrap().value;
        prop_assert!(ic.abs() <= (d as f64).log2() + 1e-9);
    }

    #[test]
    fn classical_chain_on_sorted_spectra(seed: u64, d in 2usize..=6) {
        let mut g = rng(seed);
        let (r1, r2) = (any_density(&mut g, d), any_density(&mut g, d));
        let p = ClassicalDistribution::spectrum(r1.matrix()).unwrap();
        let q = ClassicalDistribution::spectrum(r2.matrix()).unwrap();
        let dk = kolmogorov_distance(&p, &q).unwrap();
        let b = bhattacharyya_overlap(&p, &q).unwrap();
        let f = uhlmann_fidelity(r1.matrix(), r2.matrix()).unwrap();
        prop_assert!(b + 1e-9 >= f.sqrt());
        prop_assert!(dk <= (1.0 - b * b).max(0.0).sqrt() + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn min_fidelity_is_an_upper_bound(seed: u64, d in 2usize..=3) {
        let mut g = rng(seed);
        let h = random_subspace(&mut g, d + 1, d);
        let op = perturbed_identity(&mut g, d + 1, 0.3, 2);
        let cfg = MinFidelityConfig { seed, ..MinFidelityConfig::default() };
        let m = min_pure_state_fidelity_with(&h, &op, &cfg).unwrap();
        let sampled = sampled_min_pure_state_fidelity(&h, &op, 2000, &mut g).unwrap();
        prop_assert!(m.value <= sampled + 1e-12);
        let oracle = random_search_minimum(&h, &op, &mut g);
        prop_assert!((oracle - m.value).abs() < 1e-4, "oracle {oracle}, optimizer {}", m.value);
    }

    #[test]
    fn typical_projector_commutes_and_bounds_hold(p in 0.55f64..0.95, n in 2usize..=8, eps in 0.05f64..0.4) {
        let src = IIDSource::diagonal(&[p, 1.0 - p]).unwrap();
        let t = typical_subspace(&src, n, eps).unwrap();
        let proj = t.projector().unwrap();
        let block = src.block_state(n).unwrap();
        let comm = &proj * block.matrix() - block.matrix() * &proj;
        prop_assert!(frob(&comm) < 1e-10);
        let b = t.dimension_bounds(0.1);
        prop_assert!(b.upper_holds);
        prop_assert!(b.lower_holds);
    }

    #[test]
    fn window_edges_are_included(p in 0.55f64..0.95, n in 2usize..=8, k_frac in 0.0f64..1.0) {
        let src = IIDSource::diagonal(&[p, 1.0 - p]).unwrap();
        let k = ((n as f64) * k_frac) as usize;
        let rate = -((n - k) as f64 * p.log2() + k as f64 * (1.0 - p).log2()) / n as f64;
        let eps = (rate - src.entropy_rate()).abs();
        prop_assume!(eps > 1e-6);
        let t = typical_subspace(&src, n, eps).unwrap();
        let ones = |idx: &Vec<usize>| idx.iter().filter(|&&x| x == 1).count();
        prop_assert!(t.indices().iter().any(|idx| ones(idx) == k));
    }

    #[test]
    fn compression_is_trace_preserving(p in 0.55f64..0.95, n in 1usize..=5, eps in 0.05f64..0.4) {
        let src = IIDSource::diagonal(&[p, 1.0 - p]).unwrap();
        if let Ok(scheme) = compression_scheme(&src, n, eps) {
            prop_assert!(scheme.to_operation().unwrap().is_trace_preserving());
        }
    }

    #[test]
    fn stripping_invariants(seed: u64, d in 2usize..=4) {
        let mut g = rng(seed);
        let rho = random_density(&mut g, d, d);
        let op = perturbed_identity(&mut g, d, 0.2, 2);
        let cfg = MinFidelityConfig { seed, ..MinFidelityConfig::default() };
        let s = strip_support_with(&rho, &op, 1, &cfg).unwrap();
        let ens = &s.ensemble;
        prop_assert!(frob(&(ens.reconstruct() - rho.matrix())) < 1e-8);
        prop_assert!((ens.total_weight() - 1.0).abs() < 1e-10);
        prop_assert!(ens.max_ordering_drop() <= TAU_OPT);
        prop_assert!(s.convexity_gap(&op).unwrap() >= -TAU_OPT);
        let mut residual = rho.matrix().clone();
        for step in &ens.steps {
            let proj = outer(&step.state, &step.state);
            let over = &residual - &proj * c64(step.weight + 1e-6, 0.0);
            prop_assert!(*eig_hermitian(&hermitize(&over)).unwrap().values.last().unwrap() < 0.0);
            residual -= proj * c64(step.weight, 0.0);
        }
    }

    #[test]
    fn extraction_is_maximal_and_meets_guarantee(seed: u64, ds in 2usize..=3, extra in 0usize..=1) {
        let mut g = rng(seed);
        let dc = ds + extra;
        let rho = any_density(&mut g, ds);
        let v = random_isometry(&mut g, dc, ds);
        let e = perturbed_isometry(&mut g, &v, 0.05, 2);
        let a = compose(&isometry_reversal(&v), &perturbed_identity(&mut g, dc, 0.05, 2)).unwrap();
        let r = extract_isometry(&rho, &e, &a).unwrap();
        let small = r.w.dim_in().min(r.w.dim_out());
        let wtw = if r.w.dim_in() <= r.w.dim_out() {
            r.w.matrix().adjoint() * r.w.matrix()
        } else {
            r.w.matrix() * r.w.matrix().adjoint()
        };
        prop_assert!(frob(&(wtw - identity(small))) < 1e-9);
        prop_assert!(r.off_diagonal < 1e-10);
        prop_assert!(r.fe_after >= 2.0 * r.fe_before - 1.0 - 1e-8);
    }

    #[test]
    fn grid_and_four_point_phase_averages_agree(seed: u64, d in 2usize..=3) {
        let mut g = rng(seed);
        let rho = random_density(&mut g, d, d);
        let op = perturbed_identity(&mut g, d, 0.2, 2);
        let four = phase_average_fidelity(&rho, &op, PhaseSet::FourPoint, seed).unwrap();
        let grid = phase_average_fidelity(&rho, &op, PhaseSet::Grid(8), seed).unwrap();
        prop_assert!((four.value - grid.value).abs() < 1e-6);
        prop_assert!((four.value - cross_term_identity(&rho, &op).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn partial_trace_of_product(seed: u64, a in 1usize..=4, b in 1usize..=4) {
        let mut g = rng(seed);
        let (x, y) = (any_density(&mut g, a), any_density(&mut g, b));
        let xy = tensor(x.matrix(), y.matrix());
        prop_assert!(frob(&(partial_trace(&xy, Factor::First, (a, b)).unwrap() - y.matrix())) < 1e-12);
        prop_assert!(frob(&(partial_trace(&xy, Factor::Second, (a, b)).unwrap() - x.matrix())) < 1e-12);
    }
}
