//! i.i.d. sources, typical subspaces and Schumacher-style compression.
//!
//! Block states `ρ^{⊗n}` are handled through the base eigendecomposition:
//! eigenvalues of the block are products of base eigenvalues and
//! eigenvectors are tensor products of base eigenvectors. Dense block
//! matrices are only built on request and below fixed caps.

use rand::Rng;
use serde::Serialize;
use serde_json::json;

use crate::capacity::shannon_entropy;
use crate::channels::{compose, QuantumOperation};
use crate::error::{Error, Result};
use crate::fidelity::entanglement_fidelity;
use crate::linalg::{
    c64, outer, tensor, ComplexMatrix, ComplexVector, DensityOperator, EigenDecomposition,
    Subspace, ZERO_EIGENVALUE,
};
use crate::random::{random_channel, random_density};
use crate::report::{run_sweep, CheckReport, FidelityCheckConfig, Trial};

/// Largest block dimension `dim^n` accepted anywhere.
pub const BLOCK_DIM_CAP: usize = 4096;

/// Largest block dimension for which dense projectors and states are built.
pub const DENSE_BLOCK_CAP: usize = 256;

/// Largest block dimension for which the compression map is materialized
/// as a Kraus family (it needs one operator per non-typical eigenvector).
pub const COMPRESSION_KRAUS_CAP: usize = 64;

/// Inclusive tolerance on the typical-eigenvalue window, in bits per symbol.
const WINDOW_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct IIDSource {
    base: DensityOperator,
    label: String,
    eigen: EigenDecomposition,
}

impl IIDSource {
    pub fn new(base: DensityOperator, label: impl Into<String>) -> Self {
        let eigen = base.eigen();
        IIDSource {
            base,
            label: label.into(),
            eigen,
        }
    }

    /// Source with a diagonal base state.
    pub fn diagonal(probabilities: &[f64]) -> Result<Self> {
        let label = probabilities
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join(",");
        Ok(Self::new(DensityOperator::from_diagonal(probabilities)?, format!("diag({label})")))
    }

    pub fn base(&self) -> &DensityOperator {
        &self.base
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Base eigenvalues (descending) with sub-`1e-14` noise clamped to zero.
    pub fn base_spectrum(&self) -> Vec<f64> {
        self.eigen
            .values
            .iter()
            .map(|&v| if v > ZERO_EIGENVALUE { v } else { 0.0 })
            .collect()
    }

    /// `S(ρ)` in bits, which is the entropy rate of an i.i.d. source.
    pub fn entropy_rate(&self) -> f64 {
        shannon_entropy(&self.base_spectrum())
    }

    pub fn block_dim(&self, n: usize) -> Result<usize> {
        if n == 0 {
            return Err(Error::Precondition("block length must be at least 1".into()));
        }
        let mut total: usize = 1;
        for _ in 0..n {
            total = total
                .checked_mul(self.dim())
                .filter(|&t| t <= BLOCK_DIM_CAP)
                .ok_or_else(|| {
                    Error::Resource(format!(
                        "block dim {}^{n} exceeds cap {BLOCK_DIM_CAP}",
                        self.dim()
                    ))
                })?;
        }
        Ok(total)
    }

    /// Dense `ρ^{⊗n}`.
    pub fn block_state(&self, n: usize) -> Result<DensityOperator> {
        let d = self.block_dim(n)?;
        if d > DENSE_BLOCK_CAP {
            return Err(Error::Resource(format!(
                "dense block state of dim {d} exceeds cap {DENSE_BLOCK_CAP}"
            )));
        }
        let mut m = self.base.matrix().clone();
        for _ in 1..n {
            m = tensor(&m, self.base.matrix());
        }
        DensityOperator::new(m)
    }

    /// Block eigenvalues in multi-index order (first factor slowest).
    pub fn block_spectrum(&self, n: usize) -> Result<Vec<f64>> {
        let total = self.block_dim(n)?;
        let spectrum = self.base_spectrum();
        Ok((0..total)
            .map(|idx| multi_index(idx, self.dim(), n).iter().map(|&k| spectrum[k]).product())
            .collect())
    }

    /// `ρ^{⊗n} v` without forming the block matrix.
    pub fn apply_block(&self, n: usize, v: &ComplexVector) -> Result<ComplexVector> {
        let total = self.block_dim(n)?;
        if v.len() != total {
            return Err(Error::Shape("vector does not match block dim".into()));
        }
        let d = self.dim();
        let base = self.base.matrix();
        let mut cur = v.clone();
        let mut left = 1;
        for _ in 0..n {
            let right = total / (left * d);
            let mut next = ComplexVector::zeros(total);
            for l in 0..left {
                for r in 0..right {
                    for i in 0..d {
                        let mut acc = c64(0.0, 0.0);
                        for j in 0..d {
                            acc += base[(i, j)] * cur[(l * d + j) * right + r];
                        }
                        next[(l * d + i) * right + r] = acc;
                    }
                }
            }
            cur = next;
            left *= d;
        }
        Ok(cur)
    }

    /// Product eigenvector `|k_1⟩ ⊗ … ⊗ |k_n⟩` of the block state.
    pub fn block_eigenvector(&self, indices: &[usize]) -> ComplexVector {
        let mut v = self.eigen.vector(indices[0]);
        for &k in &indices[1..] {
            v = crate::linalg::tensor_vec(&v, &self.eigen.vector(k));
        }
        v
    }
}

/// Base-`d` digits of `idx`, most significant first.
fn multi_index(mut idx: usize, d: usize, n: usize) -> Vec<usize> {
    let mut digits = vec![0; n];
    for slot in digits.iter_mut().rev() {
        *slot = idx % d;
        idx /= d;
    }
    digits
}

/// Typical subspace of `ρ^{⊗n}`: product eigenvectors with eigenvalue in
/// `[2^{−n(S+ε)}, 2^{−n(S−ε)}]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TypicalSubspace {
    pub n: usize,
    pub epsilon: f64,
    pub entropy_rate: f64,
    source: IIDSource,
    /// Multi-indices of the retained eigenvectors, in block order.
    indices: Vec<Vec<usize>>,
    eigenvalues: Vec<f64>,
    block_dim: usize,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DimensionBounds {
    pub dim: usize,
    pub upper: f64,
    pub lower: f64,
    pub upper_holds: bool,
    /// Whether `weight ≥ 1 − δ`, the premise of the lower bound.
    pub lower_applicable: bool,
    pub lower_holds: bool,
}

impl TypicalSubspace {
    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `δ_n = 1 − tr(Λρ^{(n)})`.
    pub fn delta(&self) -> f64 {
        1.0 - self.weight
    }

    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }

    /// Retained block eigenvalues, in block order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Eigenvalues of the renormalized restriction `ΛρΛ / tr(Λρ)`.
    pub fn renormalized_eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|v| v / self.weight).collect()
    }

    pub fn source(&self) -> &IIDSource {
        &self.source
    }

    pub fn vector(&self, j: usize) -> ComplexVector {
        self.source.block_eigenvector(&self.indices[j])
    }

    /// Index of the retained eigenvector with the largest eigenvalue
    /// (lowest position on ties).
    pub fn top_index(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (j, &v) in self.eigenvalues.iter().enumerate() {
            if best.is_none_or(|b| v > self.eigenvalues[b]) {
                best = Some(j);
            }
        }
        best
    }

    fn dense_guard(&self) -> Result<()> {
        if self.block_dim > DENSE_BLOCK_CAP {
            return Err(Error::Resource(format!(
                "dense typical projector of dim {} exceeds cap {DENSE_BLOCK_CAP}",
                self.block_dim
            )));
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<Subspace> {
        self.dense_guard()?;
        let vectors: Vec<ComplexVector> = (0..self.dim()).map(|j| self.vector(j)).collect();
        if vectors.is_empty() {
            return Subspace::new(ComplexMatrix::zeros(self.block_dim, 0));
        }
        Subspace::new(ComplexMatrix::from_columns(&vectors))
    }

    /// Dense projector `Λ`.
    pub fn projector(&self) -> Result<ComplexMatrix> {
        self.dense_guard()?;
        let mut p = ComplexMatrix::zeros(self.block_dim, self.block_dim);
        for j in 0..self.dim() {
            let v = self.vector(j);
            p += outer(&v, &v);
        }
        Ok(p)
    }

    pub fn dim_upper_bound(&self) -> f64 {
        (self.n as f64 * (self.entropy_rate + self.epsilon)).exp2()
    }

    pub fn dim_lower_bound(&self, delta: f64) -> f64 {
        (1.0 - delta) * (self.n as f64 * (self.entropy_rate - self.epsilon)).exp2()
    }

    pub fn dimension_bounds(&self, delta: f64) -> DimensionBounds {
        let dim = self.dim();
        let upper = self.dim_upper_bound();
        let lower = self.dim_lower_bound(delta);
        let lower_applicable = self.weight >= 1.0 - delta;
        DimensionBounds {
            dim,
            upper,
            lower,
            upper_holds: dim as f64 <= upper * (1.0 + 1e-12),
            lower_applicable,
            lower_holds: !lower_applicable || dim as f64 >= lower * (1.0 - 1e-12),
        }
    }

    /// `tr(Πρ^{(n)})` for the span of `vectors` (orthonormal block vectors).
    fn probability_of(&self, basis: &ComplexMatrix) -> Result<f64> {
        let mut p = 0.0;
        for k in 0..basis.ncols() {
            let v = basis.column(k).into_owned();
            p += v.dotc(&self.source.apply_block(self.n, &v)?).re;
        }
        Ok(p)
    }
}

/// Typical subspace of `src` at block length `n` and window `ε`.
pub fn typical_subspace(src: &IIDSource, n: usize, epsilon: f64) -> Result<TypicalSubspace> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::ParamOutOfRange {
            name: "epsilon".into(),
            value: epsilon,
        });
    }
    let block_dim = src.block_dim(n)?;
    let d = src.dim();
    let spectrum = src.base_spectrum();
    let logs: Vec<f64> = spectrum
        .iter()
        .map(|&v| if v > 0.0 { v.log2() } else { f64::NEG_INFINITY })
        .collect();
    let s = src.entropy_rate();
    let mut indices = Vec::new();
    let mut eigenvalues = Vec::new();
    for idx in 0..block_dim {
        let digits = multi_index(idx, d, n);
        // Sum logs by occupation counts so that permuted multi-indices of a
        // degenerate eigenvalue give bit-identical rates.
        let mut counts = vec![0usize; d];
        for &k in &digits {
            counts[k] += 1;
        }
        if counts.iter().zip(&spectrum).any(|(&c, &v)| c > 0 && v == 0.0) {
            continue;
        }
        let log_value: f64 = counts
            .iter()
            .zip(&logs)
            .filter(|(&c, _)| c > 0)
            .map(|(&c, &l)| c as f64 * l)
            .sum();
        let rate = -log_value / n as f64;
        if rate >= s - epsilon - WINDOW_TOLERANCE && rate <= s + epsilon + WINDOW_TOLERANCE {
            let value: f64 = counts
                .iter()
                .zip(&spectrum)
                .map(|(&c, &v)| v.powi(c as i32))
                .product();
            indices.push(digits);
            eigenvalues.push(value);
        }
    }
    let weight = eigenvalues.iter().sum();
    Ok(TypicalSubspace {
        n,
        epsilon,
        entropy_rate: s,
        source: src.clone(),
        indices,
        eigenvalues,
        block_dim,
        weight,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QaepRow {
    pub n: usize,
    pub epsilon: f64,
    pub weight: f64,
    pub dim: usize,
    pub log2dim_over_n: f64,
}

/// Weight and dimension of the typical subspace for each block length.
pub fn qaep_profile(
    src: &IIDSource,
    epsilon: f64,
    n_range: impl IntoIterator<Item = usize>,
) -> Result<Vec<QaepRow>> {
    n_range
        .into_iter()
        .map(|n| {
            let t = typical_subspace(src, n, epsilon)?;
            let dim = t.dim();
            Ok(QaepRow {
                n,
                epsilon,
                weight: t.weight,
                dim,
                log2dim_over_n: if dim == 0 { f64::NEG_INFINITY } else { (dim as f64).log2() / n as f64 },
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SmallSubspaceCheck {
    pub probability: f64,
    /// `δ + 2^{−n(S−ε)}·dim Π`.
    pub bound: f64,
    /// Whether `tr(Πρ) ≤ δ`.
    pub below_delta: bool,
    pub holds: bool,
}

/// Probability carried by a subspace smaller than the typical-dimension
/// lower bound.
pub fn small_subspace_probability_bound(
    src: &IIDSource,
    n: usize,
    epsilon: f64,
    delta: f64,
    pi: &Subspace,
) -> Result<SmallSubspaceCheck> {
    let typical = typical_subspace(src, n, epsilon)?;
    if pi.ambient_dim() != typical.block_dim() {
        return Err(Error::Shape("subspace does not live on the block space".into()));
    }
    if typical.weight < 1.0 - delta {
        return Err(Error::Precondition(format!(
            "typical weight {} is below 1 − δ = {}",
            typical.weight,
            1.0 - delta
        )));
    }
    if pi.dim() as f64 >= typical.dim_lower_bound(delta) {
        return Err(Error::Precondition(format!(
            "subspace dim {} is not below (1−δ)2^(n(S−ε)) = {}",
            pi.dim(),
            typical.dim_lower_bound(delta)
        )));
    }
    let probability = typical.probability_of(pi.basis())?;
    let bound = delta + (-(n as f64) * (typical.entropy_rate - epsilon)).exp2() * pi.dim() as f64;
    Ok(SmallSubspaceCheck {
        probability,
        bound,
        below_delta: probability <= delta,
        holds: probability <= bound + 1e-12,
    })
}

/// `C(ρ) = ΛρΛ + |t⟩⟨t|·tr((I−Λ)ρ)` with `t` the top typical eigenvector.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressionScheme {
    pub n: usize,
    pub typical: TypicalSubspace,
    garbage_state: ComplexVector,
}

impl CompressionScheme {
    pub fn garbage_state(&self) -> &ComplexVector {
        &self.garbage_state
    }

    /// Structural action on a dense block operator.
    pub fn apply(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        let lambda = self.typical.projector()?;
        if rho.nrows() != lambda.nrows() || rho.ncols() != lambda.ncols() {
            return Err(Error::Shape("input does not match block dim".into()));
        }
        let kept = &lambda * rho * &lambda;
        let lost = crate::linalg::trace(rho) - crate::linalg::trace(&(&lambda * rho));
        Ok(kept + outer(&self.garbage_state, &self.garbage_state) * lost)
    }

    /// Garbage map `C₂` with Kraus operators `|t⟩⟨e_k|` over the
    /// non-typical product eigenvectors `e_k`.
    pub fn garbage_map(&self) -> Result<Option<QuantumOperation>> {
        let total = self.typical.block_dim();
        if total > COMPRESSION_KRAUS_CAP {
            return Err(Error::Resource(format!(
                "compression Kraus family on dim {total} exceeds cap {COMPRESSION_KRAUS_CAP}"
            )));
        }
        let src = self.typical.source();
        let n = self.n;
        let kept: std::collections::HashSet<&Vec<usize>> = self.typical.indices().iter().collect();
        let kraus: Vec<ComplexMatrix> = (0..total)
            .map(|idx| multi_index(idx, src.dim(), n))
            .filter(|digits| !kept.contains(digits))
            .map(|digits| outer(&self.garbage_state, &src.block_eigenvector(&digits)))
            .collect();
        if kraus.is_empty() {
            return Ok(None);
        }
        QuantumOperation::new(kraus).map(Some)
    }

    /// The full trace-preserving map `C` as a Kraus family, `Λ` first.
    pub fn to_operation(&self) -> Result<QuantumOperation> {
        let mut kraus = vec![self.typical.projector()?];
        if let Some(g) = self.garbage_map()? {
            kraus.extend(g.kraus().iter().cloned());
        }
        QuantumOperation::new(kraus)
    }
}

pub fn compression_scheme(src: &IIDSource, n: usize, epsilon: f64) -> Result<CompressionScheme> {
    let typical = typical_subspace(src, n, epsilon)?;
    let top = typical
        .top_index()
        .ok_or_else(|| Error::Degenerate("typical subspace is empty".into()))?;
    let garbage_state = typical.vector(top);
    Ok(CompressionScheme {
        n,
        typical,
        garbage_state,
    })
}

/// `ρ_ε^{(n)} = Λρ^{(n)}Λ / tr(Λρ^{(n)})`, dense.
pub fn renormalized_typical_restriction(src: &IIDSource, n: usize, epsilon: f64) -> Result<DensityOperator> {
    let typical = typical_subspace(src, n, epsilon)?;
    if typical.weight <= crate::linalg::Tolerances::default().trace {
        return Err(Error::Degenerate(format!("typical weight {} vanishes", typical.weight)));
    }
    typical.dense_guard()?;
    let mut m = ComplexMatrix::zeros(typical.block_dim(), typical.block_dim());
    for (j, &q) in typical.renormalized_eigenvalues().iter().enumerate() {
        let v = typical.vector(j);
        m += outer(&v, &v) * c64(q, 0.0);
    }
    DensityOperator::new(m)
}

fn random_source<R: Rng + ?Sized>(rng: &mut R, d: usize) -> IIDSource {
    let rank = rng.random_range(1..=d);
    IIDSource::new(random_density(rng, d, rank), "random")
}

/// Block length with `d^n ≤ COMPRESSION_KRAUS_CAP`, chosen at random.
fn random_block_length<R: Rng + ?Sized>(rng: &mut R, d: usize) -> usize {
    let mut max_n = 1;
    while d.pow(max_n as u32 + 1) <= COMPRESSION_KRAUS_CAP {
        max_n += 1;
    }
    rng.random_range(1..=max_n.clamp(1, 3))
}

/// `|F_e(ρ^{(n)}, A∘C) − F_e(ρ^{(n)}, A)| ≤ 2δ_n` for trace-preserving `A`.
pub fn check_compression_lemma(cfg: &FidelityCheckConfig) -> CheckReport {
    run_sweep("compression", cfg.trials, cfg.seed, |t, rng| {
        let d = cfg.trial_dim(t).min(4);
        let src = random_source(rng, d);
        let n = random_block_length(rng, d);
        let epsilon = rng.random_range(0.05..=0.6);
        let k = rng.random_range(1..=3);
        let block = src.block_dim(n)?;
        let a = random_channel(rng, block, block, k);
        let scheme = match compression_scheme(&src, n, epsilon) {
            Ok(s) => s,
            Err(Error::Degenerate(msg)) => return Ok(Trial::Skipped(msg)),
            Err(e) => return Err(e),
        };
        let c = scheme.to_operation()?;
        let rho = src.block_state(n)?;
        let delta = scheme.typical.delta();
        let gap = (entanglement_fidelity(&rho, &compose(&a, &c)?)? - entanglement_fidelity(&rho, &a)?).abs();
        Ok(Trial::checked(
            2.0 * delta - gap,
            json!({
                "base": crate::report::matrix_json(src.base().matrix()),
                "n": n,
                "epsilon": epsilon,
                "delta": delta,
                "A": a,
                "gap": gap,
            }),
        ))
    })
}
