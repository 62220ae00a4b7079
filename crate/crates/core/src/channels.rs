//! Quantum operations in Kraus form and their algebra.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    c64, eig_hermitian, hermitize, identity, orthonormal_completion, tensor, trace, ComplexMatrix,
    DensityOperator, Tolerances, C64,
};

/// Default cap on the block length accepted by [`tensor_power`].
pub const TENSOR_POWER_CAP: usize = 3;

/// Gram eigenvalues at or below this are dropped by [`QuantumOperation::compressed`].
pub const KRAUS_COMPRESSION_THRESHOLD: f64 = 1e-12;

/// Completely positive map `ρ ↦ Σ_i A_i ρ A_i†` with `Σ A_i†A_i ≤ I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OperationDocument", into = "OperationDocument")]
pub struct QuantumOperation {
    dim_in: usize,
    dim_out: usize,
    kraus: Vec<ComplexMatrix>,
    trace_preserving: bool,
}

/// Outcome of checking `Σ A_i†A_i` against the identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ValidityReport {
    /// Largest eigenvalue of `Σ A_i†A_i − I`.
    pub max_excess: f64,
    /// Largest absolute eigenvalue of `Σ A_i†A_i − I`.
    pub identity_deviation: f64,
    pub trace_preserving: bool,
}

fn check_shapes(kraus: &[ComplexMatrix]) -> Result<(usize, usize)> {
    let first = kraus
        .first()
        .ok_or_else(|| Error::Shape("operation needs at least one Kraus operator".into()))?;
    let (rows, cols) = first.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::Shape("Kraus operators must be non-empty".into()));
    }
    if let Some(bad) = kraus.iter().find(|k| k.shape() != (rows, cols)) {
        return Err(Error::Shape(format!(
            "Kraus operators disagree in shape: {rows}x{cols} vs {}x{}",
            bad.nrows(),
            bad.ncols()
        )));
    }
    if kraus.iter().any(|k| !crate::linalg::is_finite(k)) {
        return Err(Error::Precondition("Kraus operator has non-finite entries".into()));
    }
    Ok((rows, cols))
}

fn gram(kraus: &[ComplexMatrix], dim_in: usize) -> ComplexMatrix {
    let mut g = ComplexMatrix::zeros(dim_in, dim_in);
    for k in kraus {
        g += k.adjoint() * k;
    }
    hermitize(&g)
}

/// Validates a Kraus family against the trace-nonincreasing bound.
pub fn validate(kraus: &[ComplexMatrix], tol: &Tolerances) -> Result<ValidityReport> {
    let (_, dim_in) = check_shapes(kraus)?;
    let excess = gram(kraus, dim_in) - identity(dim_in);
    let eig = eig_hermitian(&excess)?;
    let max_excess = eig.values[0];
    let identity_deviation = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_excess > tol.psd {
        return Err(Error::InvalidOperation { excess: max_excess });
    }
    Ok(ValidityReport {
        max_excess,
        identity_deviation,
        trace_preserving: identity_deviation <= tol.trace,
    })
}

impl QuantumOperation {
    pub fn new(kraus: Vec<ComplexMatrix>) -> Result<Self> {
        Self::with_tolerances(kraus, &Tolerances::default())
    }

    pub fn with_tolerances(kraus: Vec<ComplexMatrix>, tol: &Tolerances) -> Result<Self> {
        let (dim_out, dim_in) = check_shapes(&kraus)?;
        let report = validate(&kraus, tol)?;
        Ok(QuantumOperation {
            dim_in,
            dim_out,
            kraus,
            trace_preserving: report.trace_preserving,
        })
    }

    /// Completely positive map without the trace-nonincreasing check, for
    /// rescaled branches such as `E/√tr E(ρ)`.
    pub fn completely_positive(kraus: Vec<ComplexMatrix>) -> Result<Self> {
        let (dim_out, dim_in) = check_shapes(&kraus)?;
        Ok(QuantumOperation {
            dim_in,
            dim_out,
            kraus,
            trace_preserving: false,
        })
    }

    pub fn identity(dim: usize) -> Self {
        QuantumOperation {
            dim_in: dim,
            dim_out: dim,
            kraus: vec![identity(dim)],
            trace_preserving: true,
        }
    }

    /// `ρ ↦ V ρ V†` for a single operator.
    pub fn conjugation(op: ComplexMatrix) -> Result<Self> {
        Self::new(vec![op])
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn kraus(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    pub fn len(&self) -> usize {
        self.kraus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kraus.is_empty()
    }

    pub fn is_trace_preserving(&self) -> bool {
        self.trace_preserving
    }

    /// `Σ A_i†A_i`
    pub fn gram(&self) -> ComplexMatrix {
        gram(&self.kraus, self.dim_in)
    }

    pub fn validate(&self) -> Result<ValidityReport> {
        validate(&self.kraus, &Tolerances::default())
    }

    pub fn apply(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        if rho.nrows() != self.dim_in || rho.ncols() != self.dim_in {
            return Err(Error::Shape(format!(
                "operation expects {0}x{0} input, got {1}x{2}",
                self.dim_in,
                rho.nrows(),
                rho.ncols()
            )));
        }
        let mut out = ComplexMatrix::zeros(self.dim_out, self.dim_out);
        for k in &self.kraus {
            out += k * rho * k.adjoint();
        }
        Ok(hermitize(&out))
    }

    pub fn apply_density(&self, rho: &DensityOperator) -> Result<ComplexMatrix> {
        self.apply(rho.matrix())
    }

    /// Dual map `X ↦ Σ A_i† X A_i`.
    pub fn apply_adjoint(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        if x.nrows() != self.dim_out || x.ncols() != self.dim_out {
            return Err(Error::Shape("adjoint map input has wrong dims".into()));
        }
        let mut out = ComplexMatrix::zeros(self.dim_in, self.dim_in);
        for k in &self.kraus {
            out += k.adjoint() * x * k;
        }
        Ok(hermitize(&out))
    }

    /// Environment output `[tr(A_i ρ A_j†)]_{ij}` of the complementary map.
    pub fn complementary(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        if rho.nrows() != self.dim_in || rho.ncols() != self.dim_in {
            return Err(Error::Shape("complementary map input has wrong dims".into()));
        }
        let n = self.kraus.len();
        let left: Vec<ComplexMatrix> = self.kraus.iter().map(|a| a * rho).collect();
        let mut out = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                // tr(A_i ρ A_j†) = Σ_{ab} (A_i ρ)_{ab} conj(A_j)_{ab}
                let v: C64 = left[i]
                    .iter()
                    .zip(self.kraus[j].iter())
                    .map(|(x, y)| x * y.conj())
                    .sum();
                out[(i, j)] = v;
                out[(j, i)] = v.conj();
            }
        }
        Ok(out)
    }

    /// Multiplies every Kraus operator by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::completely_positive(self.kraus.iter().map(|k| k.scale(factor)).collect())
            .and_then(|op| op.revalidated())
    }

    fn revalidated(self) -> Result<Self> {
        match validate(&self.kraus, &Tolerances::default()) {
            Ok(r) => Ok(QuantumOperation {
                trace_preserving: r.trace_preserving,
                ..self
            }),
            Err(Error::InvalidOperation { .. }) => Ok(self),
            Err(e) => Err(e),
        }
    }

    /// Sum of two operations with equal dims (concatenated Kraus families).
    pub fn sum(&self, other: &QuantumOperation) -> Result<Self> {
        if self.dim_in != other.dim_in || self.dim_out != other.dim_out {
            return Err(Error::Shape("summing operations of different dims".into()));
        }
        let mut kraus = self.kraus.clone();
        kraus.extend(other.kraus.iter().cloned());
        Self::new(kraus)
    }

    /// Parallel composition `A ⊗ B`.
    pub fn tensor(&self, other: &QuantumOperation) -> Self {
        let kraus = self
            .kraus
            .iter()
            .flat_map(|a| other.kraus.iter().map(move |b| tensor(a, b)))
            .collect();
        QuantumOperation {
            dim_in: self.dim_in * other.dim_in,
            dim_out: self.dim_out * other.dim_out,
            kraus,
            trace_preserving: self.trace_preserving && other.trace_preserving,
        }
    }

    /// Reduces the Kraus family to the rank of its Gram matrix
    /// `G_ij = tr(A_i†A_j)` by unitary remixing onto the eigenbasis of `G`.
    pub fn compressed(&self, threshold: f64) -> Self {
        let n = self.kraus.len();
        let g = ComplexMatrix::from_fn(n, n, |i, j| {
            self.kraus[i]
                .iter()
                .zip(self.kraus[j].iter())
                .map(|(a, b)| a.conj() * b)
                .sum()
        });
        let eig = eig_hermitian(&hermitize(&g)).expect("Gram matrix is Hermitian");
        let mut kraus: Vec<ComplexMatrix> = Vec::new();
        for (k, &lambda) in eig.values.iter().enumerate() {
            if lambda <= threshold {
                continue;
            }
            let mut b = ComplexMatrix::zeros(self.dim_out, self.dim_in);
            for (i, a) in self.kraus.iter().enumerate() {
                b += a * eig.vectors[(i, k)];
            }
            kraus.push(b);
        }
        if kraus.is_empty() {
            kraus.push(ComplexMatrix::zeros(self.dim_out, self.dim_in));
        }
        QuantumOperation {
            kraus,
            ..self.clone()
        }
    }

    /// New decomposition `A'_i = Σ_j m_ij A_j`.
    pub fn remix(&self, m: &RemixMatrix) -> Result<Self> {
        if m.cols() != self.kraus.len() {
            return Err(Error::Shape(format!(
                "remix matrix has {} columns but operation has {} Kraus operators",
                m.cols(),
                self.kraus.len()
            )));
        }
        let kraus = (0..m.rows())
            .map(|i| {
                let mut a = ComplexMatrix::zeros(self.dim_out, self.dim_in);
                for (j, b) in self.kraus.iter().enumerate() {
                    a += b * m.entries[(i, j)];
                }
                a
            })
            .collect();
        Ok(QuantumOperation {
            kraus,
            ..self.clone()
        })
    }

    /// Stinespring dilation of a trace-preserving operation with equal
    /// input and output dims.
    pub fn dilate(&self) -> Result<StinespringDilation> {
        if !self.trace_preserving {
            return Err(Error::Precondition(
                "only trace-preserving operations are dilated".into(),
            ));
        }
        if self.dim_in != self.dim_out {
            return Err(Error::Precondition(
                "dilation needs equal input and output dims".into(),
            ));
        }
        let d = self.dim_in;
        let env = self.kraus.len();
        let n = d * env;
        // Columns (q, e=0) of U hold the isometry |q⟩ ↦ Σ_i A_i|q⟩|i⟩.
        let mut iso = ComplexMatrix::zeros(n, d);
        for (i, a) in self.kraus.iter().enumerate() {
            for qp in 0..d {
                for q in 0..d {
                    iso[(qp * env + i, q)] = a[(qp, q)];
                }
            }
        }
        let completed = orthonormal_completion(&iso);
        let mut unitary = ComplexMatrix::zeros(n, n);
        let mut extra = d;
        for q in 0..d {
            for e in 0..env {
                let col = q * env + e;
                if e == 0 {
                    unitary.set_column(col, &completed.column(q));
                } else {
                    unitary.set_column(col, &completed.column(extra));
                    extra += 1;
                }
            }
        }
        Ok(StinespringDilation {
            sys_dim: d,
            env_dim: env,
            unitary,
            env_initial_index: 0,
        })
    }

    /// Trace-nonincreasing completion `G` with Kraus operators
    /// `K_b (I − Σ A†A)^{1/2}`, where the `K_b` tile the identity on the input
    /// into blocks of the output dimension. `None` when already trace-preserving.
    pub fn completion(&self) -> Option<QuantumOperation> {
        let defect = identity(self.dim_in) - self.gram();
        let root = eig_hermitian(&hermitize(&defect))
            .expect("defect is Hermitian")
            .map(|x| x.max(0.0).sqrt());
        if root.norm() <= 1e-12 {
            return None;
        }
        let blocks = self.dim_in.div_ceil(self.dim_out);
        let kraus: Vec<ComplexMatrix> = (0..blocks)
            .map(|b| {
                let k = ComplexMatrix::from_fn(self.dim_out, self.dim_in, |j, l| {
                    if l == b * self.dim_out + j {
                        c64(1.0, 0.0)
                    } else {
                        C64::default()
                    }
                });
                k * &root
            })
            .filter(|g| g.norm() > 1e-14)
            .collect();
        if kraus.is_empty() {
            return None;
        }
        Some(QuantumOperation::new(kraus).expect("completion is trace-nonincreasing"))
    }

    /// Trace-preserving operation `F = self + G` in which `self` is embedded.
    pub fn embed(&self) -> QuantumOperation {
        match self.completion() {
            None => self.clone(),
            Some(g) => {
                let mut kraus = self.kraus.clone();
                kraus.extend(g.kraus);
                QuantumOperation::new(kraus).expect("embedding is a valid operation")
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Sequential composition: `before` followed by `after`, Kraus family
/// `{A_i E_j}` with `i` the slow index.
pub fn compose(after: &QuantumOperation, before: &QuantumOperation) -> Result<QuantumOperation> {
    if before.dim_out != after.dim_in {
        return Err(Error::Shape(format!(
            "cannot compose: first op outputs dim {}, second expects {}",
            before.dim_out, after.dim_in
        )));
    }
    let kraus: Vec<ComplexMatrix> = after
        .kraus
        .iter()
        .flat_map(|a| before.kraus.iter().map(move |e| a * e))
        .collect();
    let trace_preserving = after.trace_preserving && before.trace_preserving;
    Ok(QuantumOperation {
        dim_in: before.dim_in,
        dim_out: after.dim_out,
        kraus,
        trace_preserving,
    })
}

/// `op^{⊗n}`, Kraus-compressed.
pub fn tensor_power(op: &QuantumOperation, n: usize) -> Result<QuantumOperation> {
    tensor_power_capped(op, n, TENSOR_POWER_CAP)
}

pub fn tensor_power_capped(op: &QuantumOperation, n: usize, cap: usize) -> Result<QuantumOperation> {
    if n == 0 {
        return Err(Error::Precondition("tensor power needs n >= 1".into()));
    }
    if n > cap {
        return Err(Error::Resource(format!("tensor power {n} exceeds cap {cap}")));
    }
    let mut out = op.clone();
    for _ in 1..n {
        out = out.tensor(op).compressed(KRAUS_COMPRESSION_THRESHOLD);
    }
    Ok(out)
}

/// Operator `V` with `V†V` a projector.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialIsometry {
    matrix: ComplexMatrix,
    maximal: bool,
}

impl PartialIsometry {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let tol = Tolerances::default();
        let g = matrix.adjoint() * &matrix;
        let scale = g.norm().max(1.0);
        if (&g * &g - &g).norm() > tol.svd * scale || crate::linalg::hermiticity_defect(&g) > tol.svd {
            return Err(Error::Precondition("V†V is not a projector".into()));
        }
        let (rows, cols) = matrix.shape();
        let maximal = (&g - identity(cols)).norm() <= tol.trace
            || (&matrix * matrix.adjoint() - identity(rows)).norm() <= tol.trace;
        Ok(PartialIsometry { matrix, maximal })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim_in(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn dim_out(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_maximal(&self) -> bool {
        self.maximal
    }

    /// `V†V`
    pub fn initial_projector(&self) -> ComplexMatrix {
        self.matrix.adjoint() * &self.matrix
    }

    /// `VV†`
    pub fn final_projector(&self) -> ComplexMatrix {
        &self.matrix * self.matrix.adjoint()
    }

    /// `‖W†W − I‖_F` or `‖WW† − I‖_F`, whichever acts on the smaller space.
    pub fn maximality_defect(&self) -> f64 {
        if self.dim_in() <= self.dim_out() {
            (self.initial_projector() - identity(self.dim_in())).norm()
        } else {
            (self.final_projector() - identity(self.dim_out())).norm()
        }
    }

    /// `ρ ↦ VρV†`
    pub fn as_operation(&self) -> QuantumOperation {
        QuantumOperation::new(vec![self.matrix.clone()]).expect("partial isometry is a contraction")
    }
}

/// Isometric remixing matrix `m` (`rows ≥ cols`, `m†m = I`).
#[derive(Clone, Debug, PartialEq)]
pub struct RemixMatrix {
    entries: ComplexMatrix,
}

impl RemixMatrix {
    pub fn new(entries: ComplexMatrix) -> Result<Self> {
        let (r, s) = entries.shape();
        if r < s {
            return Err(Error::Precondition(format!(
                "remix matrix must have rows >= cols, got {r}x{s}"
            )));
        }
        let defect = (entries.adjoint() * &entries - identity(s)).norm();
        if defect > Tolerances::default().trace {
            return Err(Error::Precondition(format!(
                "remix matrix is not a maximal partial isometry (defect {defect:e})"
            )));
        }
        Ok(RemixMatrix { entries })
    }

    pub fn identity(n: usize) -> Self {
        RemixMatrix { entries: identity(n) }
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &ComplexMatrix {
        &self.entries
    }
}

/// Trace-nonincreasing branches summing to a trace-preserving operation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Instrument {
    branches: Vec<QuantumOperation>,
}

impl Instrument {
    pub fn new(branches: Vec<QuantumOperation>) -> Result<Self> {
        let first = branches
            .first()
            .ok_or_else(|| Error::Shape("instrument needs at least one branch".into()))?;
        let dims = (first.dim_in, first.dim_out);
        if branches.iter().any(|b| (b.dim_in, b.dim_out) != dims) {
            return Err(Error::Shape("instrument branches differ in dims".into()));
        }
        let instrument = Instrument { branches };
        let total = instrument.total()?;
        if !total.is_trace_preserving() {
            return Err(Error::Precondition(
                "instrument branches do not sum to a trace-preserving operation".into(),
            ));
        }
        Ok(instrument)
    }

    pub fn branches(&self) -> &[QuantumOperation] {
        &self.branches
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn total(&self) -> Result<QuantumOperation> {
        QuantumOperation::new(
            self.branches
                .iter()
                .flat_map(|b| b.kraus.iter().cloned())
                .collect(),
        )
    }
}

/// Unitary `U` on `Q ⊗ E` (system slow index) with the environment starting
/// in `|env_initial_index⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct StinespringDilation {
    pub sys_dim: usize,
    pub env_dim: usize,
    pub unitary: ComplexMatrix,
    pub env_initial_index: usize,
}

impl StinespringDilation {
    /// Operators `⟨i^E|U|0^E⟩`.
    pub fn kraus(&self) -> Vec<ComplexMatrix> {
        let (d, env) = (self.sys_dim, self.env_dim);
        (0..env)
            .map(|i| {
                ComplexMatrix::from_fn(d, d, |qp, q| {
                    self.unitary[(qp * env + i, q * env + self.env_initial_index)]
                })
            })
            .collect()
    }

    pub fn unitarity_defect(&self) -> f64 {
        let n = self.unitary.nrows();
        (self.unitary.adjoint() * &self.unitary - identity(n)).norm()
    }

    pub fn to_operation(&self) -> Result<QuantumOperation> {
        QuantumOperation::new(self.kraus())
    }
}

/// Standard test channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZooChannel {
    Identity,
    Depolarizing,
    Dephasing,
    AmplitudeDamping,
    ErasureLike,
}

impl ZooChannel {
    pub const ALL: [ZooChannel; 5] = [
        ZooChannel::Identity,
        ZooChannel::Depolarizing,
        ZooChannel::Dephasing,
        ZooChannel::AmplitudeDamping,
        ZooChannel::ErasureLike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ZooChannel::Identity => "identity",
            ZooChannel::Depolarizing => "depolarizing",
            ZooChannel::Dephasing => "dephasing",
            ZooChannel::AmplitudeDamping => "amplitude_damping",
            ZooChannel::ErasureLike => "erasure_like",
        }
    }

    pub fn build(self, p: f64) -> Result<QuantumOperation> {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(Error::ParamOutOfRange {
                name: self.name().into(),
                value: p,
            });
        }
        let z = C64::default();
        let one = c64(1.0, 0.0);
        let m = |a: [C64; 4]| ComplexMatrix::from_row_slice(2, 2, &a);
        let kraus = match self {
            ZooChannel::Identity => vec![identity(2)],
            ZooChannel::Depolarizing => {
                let (x, y, zz) = paulis();
                vec![
                    identity(2).scale((1.0 - 0.75 * p).sqrt()),
                    x.scale((p / 4.0).sqrt()),
                    y.scale((p / 4.0).sqrt()),
                    zz.scale((p / 4.0).sqrt()),
                ]
            }
            ZooChannel::Dephasing => {
                let (_, _, zz) = paulis();
                vec![identity(2).scale((1.0 - p).sqrt()), zz.scale(p.sqrt())]
            }
            ZooChannel::AmplitudeDamping => vec![
                m([one, z, z, c64((1.0 - p).sqrt(), 0.0)]),
                m([z, c64(p.sqrt(), 0.0), z, z]),
            ],
            ZooChannel::ErasureLike => {
                // Qubit in, qutrit out; |2⟩ flags the erasure.
                let keep = ComplexMatrix::from_fn(3, 2, |i, j| {
                    if i == j {
                        c64((1.0 - p).sqrt(), 0.0)
                    } else {
                        z
                    }
                });
                let flag = |j: usize| {
                    ComplexMatrix::from_fn(3, 2, |i, l| {
                        if i == 2 && l == j {
                            c64(p.sqrt(), 0.0)
                        } else {
                            z
                        }
                    })
                };
                vec![keep, flag(0), flag(1)]
            }
        };
        QuantumOperation::new(kraus)
    }
}

impl fmt::Display for ZooChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ZooChannel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.replace('-', "_");
        ZooChannel::ALL
            .into_iter()
            .find(|c| c.name() == key)
            .ok_or_else(|| Error::UnknownChannel(s.to_string()))
    }
}

/// Looks up a standard channel by name.
pub fn channel_zoo(name: &str, param: f64) -> Result<QuantumOperation> {
    name.parse::<ZooChannel>()?.build(param)
}

/// Pauli matrices `(X, Y, Z)`.
pub fn paulis() -> (ComplexMatrix, ComplexMatrix, ComplexMatrix) {
    let z = C64::default();
    let one = c64(1.0, 0.0);
    let i = c64(0.0, 1.0);
    (
        ComplexMatrix::from_row_slice(2, 2, &[z, one, one, z]),
        ComplexMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        ComplexMatrix::from_row_slice(2, 2, &[one, z, z, -one]),
    )
}

/// Serialized form: row-major Kraus entries as `[re, im]` pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OperationDocument {
    pub dim_in: usize,
    pub dim_out: usize,
    pub kraus: Vec<Vec<[f64; 2]>>,
}

impl From<QuantumOperation> for OperationDocument {
    fn from(op: QuantumOperation) -> Self {
        let kraus = op
            .kraus
            .iter()
            .map(|k| {
                let mut flat = Vec::with_capacity(k.len());
                for r in 0..k.nrows() {
                    for c in 0..k.ncols() {
                        let z = k[(r, c)];
                        flat.push([z.re, z.im]);
                    }
                }
                flat
            })
            .collect();
        OperationDocument {
            dim_in: op.dim_in,
            dim_out: op.dim_out,
            kraus,
        }
    }
}

impl TryFrom<OperationDocument> for QuantumOperation {
    type Error = Error;

    fn try_from(doc: OperationDocument) -> Result<Self> {
        let expected = doc.dim_in * doc.dim_out;
        let kraus = doc
            .kraus
            .iter()
            .map(|flat| {
                if flat.len() != expected {
                    return Err(Error::Parse(format!(
                        "Kraus operator has {} entries, expected {expected}",
                        flat.len()
                    )));
                }
                Ok(ComplexMatrix::from_fn(doc.dim_out, doc.dim_in, |r, c| {
                    let [re, im] = flat[r * doc.dim_in + c];
                    c64(re, im)
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        QuantumOperation::new(kraus)
    }
}

/// `tr(op(ρ))`
pub fn output_trace(op: &QuantumOperation, rho: &ComplexMatrix) -> Result<f64> {
    Ok(trace(&op.apply(rho)?).re)
}
