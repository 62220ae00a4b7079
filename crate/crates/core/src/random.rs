//! Seeded random instances: states, unitaries, isometries, channels.
//!
//! Every trial draws from its own counter-based stream `(seed, stream)`, so
//! sweeps produce identical instances regardless of how trials are spread
//! across worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channels::QuantumOperation;
use crate::linalg::{
    c64, hermitize, identity, orthonormal_completion, trace, ComplexMatrix, ComplexVector,
    DensityOperator, Subspace,
};

pub type TrialRng = ChaCha8Rng;

pub fn trial_rng(seed: u64, stream: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Ginibre matrix with i.i.d. standard complex normal entries.
pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

pub fn random_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> ComplexVector {
    let m = random_matrix(rng, dim, 1);
    let v = m.column(0).into_owned();
    let n = v.norm();
    v.unscale(n)
}

/// Haar-random unitary (QR of a Ginibre matrix with phase correction).
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> ComplexMatrix {
    let g = random_matrix(rng, dim, dim);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..dim {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c64(1.0, 0.0) };
        let mut col = q.column_mut(k);
        col *= phase;
    }
    q
}

/// Random isometry `dim_out × dim_in`, `dim_out ≥ dim_in`.
pub fn random_isometry<R: Rng + ?Sized>(rng: &mut R, dim_out: usize, dim_in: usize) -> ComplexMatrix {
    assert!(dim_out >= dim_in);
    random_unitary(rng, dim_out).columns(0, dim_in).into_owned()
}

/// Random density operator of the given rank (induced measure).
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, dim: usize, rank: usize) -> DensityOperator {
    let g = random_matrix(rng, dim, rank.max(1));
    let m = hermitize(&(&g * g.adjoint()));
    let tr = trace(&m).re;
    DensityOperator::new(m.unscale(tr)).expect("Ginibre state is valid")
}

/// Random Hermitian matrix with unit trace norm scale.
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> ComplexMatrix {
    let g = random_matrix(rng, dim, dim);
    hermitize(&g)
}

/// Random `k`-dimensional subspace of a `dim`-dimensional space.
pub fn random_subspace<R: Rng + ?Sized>(rng: &mut R, dim: usize, k: usize) -> Subspace {
    Subspace::new(random_isometry(rng, dim, k)).expect("isometry columns are orthonormal")
}

/// Random trace-preserving channel with `n_kraus` operators, obtained by
/// slicing a random isometry `C^{dim_in} → C^{dim_out} ⊗ C^{n_kraus}`.
pub fn random_channel<R: Rng + ?Sized>(
    rng: &mut R,
    dim_in: usize,
    dim_out: usize,
    n_kraus: usize,
) -> QuantumOperation {
    let v = random_isometry(rng, dim_out * n_kraus, dim_in);
    let kraus = (0..n_kraus)
        .map(|i| v.rows(i * dim_out, dim_out).into_owned())
        .collect();
    QuantumOperation::new(kraus).expect("isometry slices form a channel")
}

/// Trace-nonincreasing operation: a random channel scaled by `√scale`.
pub fn random_subchannel<R: Rng + ?Sized>(
    rng: &mut R,
    dim_in: usize,
    dim_out: usize,
    n_kraus: usize,
    scale: f64,
) -> QuantumOperation {
    let ch = random_channel(rng, dim_in, dim_out, n_kraus);
    QuantumOperation::new(ch.kraus().iter().map(|k| k.scale(scale.sqrt())).collect())
        .expect("scaled channel is trace-nonincreasing")
}

/// `(1−s)·id + s·(random channel)`, mixed at the Kraus level.
pub fn perturbed_identity<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    strength: f64,
    n_kraus: usize,
) -> QuantumOperation {
    let noise = random_channel(rng, dim, dim, n_kraus);
    let mut kraus = vec![identity(dim).scale((1.0 - strength).sqrt())];
    kraus.extend(noise.kraus().iter().map(|k| k.scale(strength.sqrt())));
    QuantumOperation::new(kraus).expect("convex mixture of channels")
}

/// `(1−s)·U(·)U† + s·(random channel)` for a fixed unitary or isometry `u`.
pub fn perturbed_isometry<R: Rng + ?Sized>(
    rng: &mut R,
    u: &ComplexMatrix,
    strength: f64,
    n_kraus: usize,
) -> QuantumOperation {
    let noise = random_channel(rng, u.ncols(), u.nrows(), n_kraus);
    let mut kraus = vec![u.scale((1.0 - strength).sqrt())];
    kraus.extend(noise.kraus().iter().map(|k| k.scale(strength.sqrt())));
    QuantumOperation::new(kraus).expect("convex mixture of channels")
}

/// Trace-preserving decoder reversing an isometry `v: C^d → C^D`: Kraus
/// operators `v†` plus `|0⟩⟨c_j|` for an orthonormal complement `{c_j}`.
pub fn isometry_reversal(v: &ComplexMatrix) -> QuantumOperation {
    let (big, small) = v.shape();
    let full = orthonormal_completion(v);
    let mut kraus = vec![v.adjoint()];
    for j in small..big {
        let c = full.column(j).into_owned();
        let mut k = ComplexMatrix::zeros(small, big);
        k.set_row(0, &c.adjoint());
        kraus.push(k);
    }
    QuantumOperation::new(kraus).expect("reversal is trace-preserving")
}
