//! Dense complex linear algebra: Hermitian eigendecomposition, SVD, polar
//! decomposition, Kronecker products, partial traces and purifications.
//!
//! Composite spaces are always ordered with the left factor as the slow
//! index, so a vector on `R ⊗ Q` is stored at `r * dim_q + q`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channels::PartialIsometry;
use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

/// Eigenvalues below this are treated as exact zeros (ranks, logarithms).
pub const ZERO_EIGENVALUE: f64 = 1e-14;

const SOLVER_EPS: f64 = 1e-15;
const SOLVER_MAX_ITER: usize = 10_000;

/// Numerical tolerances shared by validity checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Hermiticity defect, relative to the Frobenius norm.
    pub herm: f64,
    /// Allowed trace deviation.
    pub trace: f64,
    /// Most negative eigenvalue accepted as positive semidefinite.
    pub psd: f64,
    /// Decomposition reconstruction residual, relative to the Frobenius norm.
    pub svd: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            herm: 1e-9,
            trace: 1e-9,
            psd: 1e-9,
            svd: 1e-8,
        }
    }
}

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn diag(values: &[f64]) -> ComplexMatrix {
    let n = values.len();
    ComplexMatrix::from_fn(n, n, |i, j| if i == j { c64(values[i], 0.0) } else { C64::default() })
}

pub fn basis_vector(n: usize, k: usize) -> ComplexVector {
    let mut v = ComplexVector::zeros(n);
    v[k] = c64(1.0, 0.0);
    v
}

/// `|u⟩⟨v|`
pub fn outer(u: &ComplexVector, v: &ComplexVector) -> ComplexMatrix {
    u * v.adjoint()
}

pub fn trace(m: &ComplexMatrix) -> C64 {
    m.diagonal().iter().sum()
}

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn hermitize(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()) * c64(0.5, 0.0)
}

/// `‖M − M†‖_F / max(1, ‖M‖_F)`
pub fn hermiticity_defect(m: &ComplexMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    (m - m.adjoint()).norm() / m.norm().max(1.0)
}

/// `⟨u|M|v⟩`
pub fn sandwich(u: &ComplexVector, m: &ComplexMatrix, v: &ComplexVector) -> C64 {
    u.dotc(&(m * v))
}

/// Eigenpairs of a Hermitian matrix, values descending, vectors as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl EigenDecomposition {
    pub fn vector(&self, k: usize) -> ComplexVector {
        self.vectors.column(k).into_owned()
    }

    /// `V diag(f(λ)) V†`
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let mut scaled = self.vectors.clone();
        for (k, &lambda) in self.values.iter().enumerate() {
            let s = f(lambda);
            scaled.column_mut(k).scale_mut(s);
        }
        &scaled * self.vectors.adjoint()
    }

    pub fn rank(&self, cutoff: f64) -> usize {
        self.values.iter().filter(|&&v| v > cutoff).count()
    }
}

pub fn eig_hermitian(m: &ComplexMatrix) -> Result<EigenDecomposition> {
    eig_hermitian_with(m, &Tolerances::default())
}

pub fn eig_hermitian_with(m: &ComplexMatrix, tol: &Tolerances) -> Result<EigenDecomposition> {
    if !m.is_square() {
        return Err(Error::Shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !is_finite(m) {
        return Err(Error::Precondition("matrix has non-finite entries".into()));
    }
    let defect = hermiticity_defect(m);
    if defect > tol.herm {
        return Err(Error::Precondition(format!(
            "matrix is not Hermitian (defect {defect:e})"
        )));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(EigenDecomposition {
            values: vec![],
            vectors: ComplexMatrix::zeros(0, 0),
        });
    }
    let h = hermitize(m);
    let eig = SymmetricEigen::try_new(h.clone(), SOLVER_EPS, SOLVER_MAX_ITER).ok_or(Error::DecompositionFailure { residual: f64::NAN })?;

    // Stable sort keeps the solver's order among ties.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    let out = EigenDecomposition { values, vectors };

    let recon = out.map(|x| x);
    let residual = (&recon - &h).norm();
    if residual > tol.svd * h.norm().max(1.0) {
        return Err(Error::DecompositionFailure { residual });
    }
    Ok(out)
}

/// Thin singular value decomposition `M = U · diag(D) · V`, with `D`
/// descending, `U` of shape `m×k` and `V` of shape `k×n`, `k = min(m, n)`.
#[derive(Clone, Debug)]
pub struct SingularValueDecomposition {
    pub u: ComplexMatrix,
    pub singular_values: Vec<f64>,
    pub v: ComplexMatrix,
}

impl SingularValueDecomposition {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let mut us = self.u.clone();
        for (k, &s) in self.singular_values.iter().enumerate() {
            us.column_mut(k).scale_mut(s);
        }
        us * &self.v
    }
}

pub fn svd(m: &ComplexMatrix) -> Result<SingularValueDecomposition> {
    svd_with(m, &Tolerances::default())
}

pub fn svd_with(m: &ComplexMatrix, tol: &Tolerances) -> Result<SingularValueDecomposition> {
    if !is_finite(m) {
        return Err(Error::Precondition("matrix has non-finite entries".into()));
    }
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok(SingularValueDecomposition {
            u: ComplexMatrix::zeros(rows, 0),
            singular_values: vec![],
            v: ComplexMatrix::zeros(0, cols),
        });
    }
    let dense = faer::Mat::<C64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let dec = dense
        .thin_svd()
        .map_err(|_| Error::DecompositionFailure { residual: f64::NAN })?;
    let (u_raw, s_raw, v_raw) = (dec.U(), dec.S().column_vector(), dec.V());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s_raw[b].re.total_cmp(&s_raw[a].re));
    let mut u = ComplexMatrix::zeros(rows, k);
    let mut v = ComplexMatrix::zeros(k, cols);
    let mut singular_values = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..rows {
            u[(i, dst)] = u_raw[(i, src)];
        }
        for j in 0..cols {
            v[(dst, j)] = v_raw[(j, src)].conj();
        }
        singular_values.push(s_raw[src].re);
    }
    let out = SingularValueDecomposition {
        u,
        singular_values,
        v,
    };
    let residual = (out.reconstruct() - m).norm();
    if residual > tol.svd * m.norm().max(1.0) {
        return Err(Error::DecompositionFailure { residual });
    }
    Ok(out)
}

/// Polar decomposition `M = W · P` with `P = √(M†M)` and `W` a maximal
/// partial isometry (an isometry when `M` is tall, a co-isometry when wide).
pub fn polar(m: &ComplexMatrix) -> Result<(PartialIsometry, ComplexMatrix)> {
    let dec = svd(m)?;
    let w = &dec.u * &dec.v;
    let mut scaled = dec.v.adjoint();
    for (k, &s) in dec.singular_values.iter().enumerate() {
        scaled.column_mut(k).scale_mut(s);
    }
    let p = hermitize(&(scaled * &dec.v));
    Ok((PartialIsometry::new(w)?, p))
}

/// Kronecker product; the left factor carries the slow index.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

pub fn tensor_vec(a: &ComplexVector, b: &ComplexVector) -> ComplexVector {
    a.kronecker(b)
}

/// Which factor of a bipartite space to trace out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Factor {
    First,
    Second,
}

pub fn partial_trace(m: &ComplexMatrix, over: Factor, dims: (usize, usize)) -> Result<ComplexMatrix> {
    let (da, db) = dims;
    let n = da * db;
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Shape(format!(
            "partial trace over {da}x{db} needs a {n}x{n} matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(match over {
        Factor::First => ComplexMatrix::from_fn(db, db, |q, qp| {
            (0..da).map(|r| m[(r * db + q, r * db + qp)]).sum()
        }),
        Factor::Second => ComplexMatrix::from_fn(da, da, |r, rp| {
            (0..db).map(|q| m[(r * db + q, rp * db + q)]).sum()
        }),
    })
}

/// Principal square root of a positive semidefinite matrix; negative
/// eigenvalue noise is clamped to zero.
pub fn sqrt_psd(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(eig_hermitian(m)?.map(|x| x.max(0.0).sqrt()))
}

/// Sum of absolute eigenvalues of a Hermitian matrix, `tr|Δ|`.
pub fn trace_norm_hermitian(m: &ComplexMatrix) -> Result<f64> {
    Ok(eig_hermitian(m)?.values.iter().map(|v| v.abs()).sum())
}

fn project_out(v: &mut ComplexVector, basis: &[ComplexVector]) {
    for _ in 0..2 {
        for b in basis {
            let c = b.dotc(v);
            v.axpy(-c, b, c64(1.0, 0.0));
        }
    }
}

/// Extends orthonormal columns to a full unitary. Completion vectors come
/// from the standard basis, taking at each round the candidate with the
/// largest residual (lowest index on ties).
pub fn orthonormal_completion(cols: &ComplexMatrix) -> ComplexMatrix {
    let n = cols.nrows();
    let mut basis: Vec<ComplexVector> = (0..cols.ncols())
        .map(|k| cols.column(k).into_owned())
        .collect();
    let mut used = vec![false; n];
    while basis.len() < n {
        let mut best: Option<(usize, ComplexVector, f64)> = None;
        for (j, _) in used.iter().enumerate().filter(|(_, &u)| !u) {
            let mut v = basis_vector(n, j);
            project_out(&mut v, &basis);
            let norm = v.norm();
            if best.as_ref().is_none_or(|(_, _, b)| norm > *b + 1e-12) {
                best = Some((j, v, norm));
            }
        }
        let (j, v, norm) = best.expect("completion candidate");
        used[j] = true;
        basis.push(v.unscale(norm));
    }
    ComplexMatrix::from_columns(&basis)
}

/// Orthonormal basis (modified Gram–Schmidt) for the span of the given
/// vectors, dropping directions with residual norm below `cutoff`.
pub fn orthonormalize(vectors: &[ComplexVector], cutoff: f64) -> Vec<ComplexVector> {
    let mut basis: Vec<ComplexVector> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        project_out(&mut w, &basis);
        let norm = w.norm();
        if norm > cutoff {
            basis.push(w.unscale(norm));
        }
    }
    basis
}

/// Moore–Penrose pseudo-inverse of a Hermitian PSD matrix on its support.
pub fn pseudo_inverse_psd(m: &ComplexMatrix, cutoff: f64) -> Result<ComplexMatrix> {
    Ok(eig_hermitian(m)?.map(|x| if x > cutoff { 1.0 / x } else { 0.0 }))
}

/// Hermitian, positive semidefinite, unit-trace operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    matrix: ComplexMatrix,
}

impl DensityOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::with_tolerances(matrix, &Tolerances::default())
    }

    pub fn with_tolerances(matrix: ComplexMatrix, tol: &Tolerances) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Shape(format!(
                "density operator must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.nrows() == 0 {
            return Err(Error::Shape("density operator must have dim >= 1".into()));
        }
        let eig = eig_hermitian_with(&matrix, tol)?;
        let min = eig.values.last().copied().unwrap_or(0.0);
        if min < -tol.psd {
            return Err(Error::Precondition(format!(
                "density operator has negative eigenvalue {min:e}"
            )));
        }
        let tr = trace(&matrix);
        if (tr.re - 1.0).abs() > tol.trace || tr.im.abs() > tol.trace {
            return Err(Error::Precondition(format!(
                "density operator has trace {tr}"
            )));
        }
        Ok(DensityOperator {
            matrix: hermitize(&matrix),
        })
    }

    /// Normalizes a positive matrix by its trace.
    pub fn normalized(matrix: &ComplexMatrix) -> Result<Self> {
        let tr = trace(matrix).re;
        if tr <= 0.0 || !tr.is_finite() {
            return Err(Error::Degenerate(format!("cannot normalize matrix with trace {tr}")));
        }
        Self::new(matrix.unscale(tr))
    }

    pub fn from_diagonal(probabilities: &[f64]) -> Result<Self> {
        Self::new(diag(probabilities))
    }

    pub fn pure(state: &ComplexVector) -> Result<Self> {
        let norm = state.norm();
        if norm == 0.0 {
            return Err(Error::Degenerate("zero state vector".into()));
        }
        let s = state.unscale(norm);
        Self::new(outer(&s, &s))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityOperator {
            matrix: identity(dim).unscale(dim as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn eigen(&self) -> EigenDecomposition {
        eig_hermitian(&self.matrix).expect("density operator is Hermitian")
    }

    pub fn tensor(&self, other: &DensityOperator) -> DensityOperator {
        DensityOperator {
            matrix: tensor(&self.matrix, &other.matrix),
        }
    }

    /// `λ·self + (1−λ)·other`, `λ ∈ [0, 1]`.
    pub fn mix(&self, lambda: f64, other: &DensityOperator) -> Result<DensityOperator> {
        if self.dim() != other.dim() {
            return Err(Error::Shape("mixing operators of different dims".into()));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::ParamOutOfRange {
                name: "lambda".into(),
                value: lambda,
            });
        }
        Ok(DensityOperator {
            matrix: self.matrix.scale(lambda) + other.matrix.scale(1.0 - lambda),
        })
    }

    /// Conjugation by a unitary, `U ρ U†`.
    pub fn rotated(&self, unitary: &ComplexMatrix) -> DensityOperator {
        DensityOperator {
            matrix: hermitize(&(unitary * &self.matrix * unitary.adjoint())),
        }
    }
}

/// Unit vector on `R ⊗ Q` whose reduced state on `Q` is a given density operator.
#[derive(Clone, Debug, PartialEq)]
pub struct Purification {
    pub dim_r: usize,
    pub dim_q: usize,
    pub vector: ComplexVector,
}

impl Purification {
    pub fn new(dim_r: usize, dim_q: usize, vector: ComplexVector) -> Result<Self> {
        if vector.len() != dim_r * dim_q {
            return Err(Error::Shape(format!(
                "purification vector has length {}, expected {}",
                vector.len(),
                dim_r * dim_q
            )));
        }
        let norm = vector.norm();
        if (norm - 1.0).abs() > Tolerances::default().trace {
            return Err(Error::Precondition(format!("purification norm {norm}")));
        }
        Ok(Purification { dim_r, dim_q, vector })
    }

    pub fn projector(&self) -> ComplexMatrix {
        outer(&self.vector, &self.vector)
    }

    /// `tr_R |ψ⟩⟨ψ|`
    pub fn reduced(&self) -> ComplexMatrix {
        // Reshape ψ as Ψ[r, q]; then tr_R = Ψᵀ Ψ̄ in (q, q') indices.
        let psi = self.amplitudes();
        psi.transpose() * psi.map(|z| z.conj())
    }

    /// `ψ` reshaped as a `dim_r × dim_q` amplitude matrix.
    pub fn amplitudes(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.dim_r, self.dim_q, |r, q| self.vector[r * self.dim_q + q])
    }

    /// Applies a unitary on the reference factor.
    pub fn rotate_reference(&self, unitary: &ComplexMatrix) -> Result<Purification> {
        if unitary.nrows() != self.dim_r || unitary.ncols() != self.dim_r {
            return Err(Error::Shape("reference unitary has wrong dims".into()));
        }
        let rotated = unitary * self.amplitudes();
        let vector = ComplexVector::from_fn(self.dim_r * self.dim_q, |i, _| {
            rotated[(i / self.dim_q, i % self.dim_q)]
        });
        Purification::new(self.dim_r, self.dim_q, vector)
    }

    /// Schmidt coefficients, descending.
    pub fn schmidt_coefficients(&self) -> Result<Vec<f64>> {
        Ok(svd(&self.amplitudes())?.singular_values)
    }
}

/// Canonical purification `Σ_k √λ_k |k_R⟩|k_Q⟩` with eigenvalues descending
/// and reference dimension equal to the rank.
pub fn purify(rho: &DensityOperator) -> Purification {
    let eig = rho.eigen();
    let dim_q = rho.dim();
    let rank = eig.rank(ZERO_EIGENVALUE).max(1);
    let mut vector = ComplexVector::zeros(rank * dim_q);
    for k in 0..rank {
        let amp = eig.values[k].max(0.0).sqrt();
        for q in 0..dim_q {
            vector[k * dim_q + q] = eig.vectors[(q, k)] * amp;
        }
    }
    let norm = vector.norm();
    Purification {
        dim_r: rank,
        dim_q,
        vector: vector.unscale(norm),
    }
}

/// Subspace given by orthonormal basis columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace {
    basis: ComplexMatrix,
}

impl Subspace {
    pub fn new(basis: ComplexMatrix) -> Result<Self> {
        let k = basis.ncols();
        let gram = basis.adjoint() * &basis;
        let defect = (&gram - identity(k)).norm();
        if defect > Tolerances::default().trace {
            return Err(Error::Precondition(format!(
                "subspace basis is not orthonormal (defect {defect:e})"
            )));
        }
        Ok(Subspace { basis })
    }

    pub fn full(dim: usize) -> Self {
        Subspace { basis: identity(dim) }
    }

    /// Span of arbitrary vectors.
    pub fn span(ambient_dim: usize, vectors: &[ComplexVector]) -> Result<Self> {
        if vectors.iter().any(|v| v.len() != ambient_dim) {
            return Err(Error::Shape("vector length differs from ambient dim".into()));
        }
        let basis = orthonormalize(vectors, 1e-10);
        if basis.is_empty() {
            return Ok(Subspace {
                basis: ComplexMatrix::zeros(ambient_dim, 0),
            });
        }
        Ok(Subspace {
            basis: ComplexMatrix::from_columns(&basis),
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &ComplexMatrix {
        &self.basis
    }

    pub fn projector(&self) -> ComplexMatrix {
        &self.basis * self.basis.adjoint()
    }

    /// Ambient vector for the given coordinates.
    pub fn embed(&self, coords: &ComplexVector) -> ComplexVector {
        &self.basis * coords
    }

    /// Compression `B† M B` of an operator onto the subspace.
    pub fn restrict(&self, m: &ComplexMatrix) -> ComplexMatrix {
        self.basis.adjoint() * m * &self.basis
    }

    pub fn contains(&self, v: &ComplexVector, tol: f64) -> bool {
        let proj = self.embed(&(self.basis.adjoint() * v));
        (v - proj).norm() <= tol * v.norm().max(1.0)
    }
}
