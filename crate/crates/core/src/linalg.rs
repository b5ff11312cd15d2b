//! Dense complex-matrix core.
//!
//! Everything here works on small dense matrices (system dimensions of a
//! handful, history spaces of a few hundred at most). Validated wrapper types
//! ([`Projector`], [`Decomposition`], [`DensityMatrix`], [`Unitary`]) carry
//! their algebraic invariants from construction onward; all checks use the
//! max-entry norm against an explicit tolerance.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use thiserror::Error;

pub use num_complex::Complex64 as C64;

/// Default tolerance for every algebraic invariant, in max-entry norm.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("ragged or empty matrix rows")]
    BadShape,
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("not a projector (|PP-P| = {idempotence:.3e}, |P'-P| = {hermiticity:.3e})")]
    NotProjector { idempotence: f64, hermiticity: f64 },
    #[error("not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("not unitary (|U'U-I| = {0:.3e})")]
    NotUnitary(f64),
    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),
    #[error("decomposition is empty")]
    EmptyDecomposition,
    #[error("decomposition member {0} is the zero projector")]
    ZeroProjector(usize),
    #[error("decomposition members {0} and {1} are not orthogonal (|PiPj| = {2:.3e})")]
    NotOrthogonal(usize, usize, f64),
    #[error("decomposition is incomplete (|sum - I| = {0:.3e})")]
    Incomplete(f64),
    #[error("decomposition member {index}: {source}")]
    Member {
        index: usize,
        #[source]
        source: Box<LinalgError>,
    },
}

pub type Result<T, E = LinalgError> = std::result::Result<T, E>;

/// A dense complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self(DMatrix::from_fn(rows, cols, f))
    }

    /// Builds a matrix from row-major nested rows. Rows must be nonempty and
    /// of equal length.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map(Vec::len).unwrap_or(0);
        if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
            return Err(LinalgError::BadShape);
        }
        if rows.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn diag(entries: &[C64]) -> Self {
        let n = entries.len();
        Self::from_fn(n, n, |i, j| if i == j { entries[i] } else { C64::new(0.0, 0.0) })
    }

    /// The outer product `|v><v|` of the normalised vector `v`.
    pub fn ket_projector(v: &[C64]) -> Self {
        let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        Self::from_fn(v.len(), v.len(), |i, j| v[i] * v[j].conj() / norm2)
    }

    pub fn from_nalgebra(m: DMatrix<C64>) -> Self {
        Self(m)
    }

    pub fn as_nalgebra(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.nrows() == self.ncols()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    /// Row-major nested rows.
    pub fn to_rows(&self) -> Vec<Vec<C64>> {
        (0..self.nrows())
            .map(|i| (0..self.ncols()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self(&self.0 * factor)
    }

    pub fn trace(&self) -> C64 {
        self.0.diagonal().iter().sum()
    }

    /// Largest entry modulus.
    pub fn max_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Max-entry distance; `f64::INFINITY` for mismatched shapes.
    pub fn max_dist(&self, other: &Self) -> f64 {
        if self.0.shape() != other.0.shape() {
            return f64::INFINITY;
        }
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.max_dist(other) <= tol
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.max_norm() <= tol
    }

    pub fn hermiticity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        self.max_dist(&self.adjoint())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn try_mul(&self, rhs: &Self) -> Result<Self> {
        if self.ncols() != rhs.nrows() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.ncols(),
                found: rhs.nrows(),
            });
        }
        Ok(Self(&self.0 * &rhs.0))
    }

    pub fn try_add(&self, rhs: &Self) -> Result<Self> {
        self.check_same_shape(rhs)?;
        Ok(Self(&self.0 + &rhs.0))
    }

    fn check_same_shape(&self, rhs: &Self) -> Result<()> {
        if self.nrows() != rhs.nrows() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.nrows(),
                found: rhs.nrows(),
            });
        }
        if self.ncols() != rhs.ncols() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.ncols(),
                found: rhs.ncols(),
            });
        }
        Ok(())
    }

    fn check_square(&self) -> Result<usize> {
        if self.is_square() {
            Ok(self.nrows())
        } else {
            Err(LinalgError::NotSquare {
                rows: self.nrows(),
                cols: self.ncols(),
            })
        }
    }

    /// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
    /// Only the lower triangle is read.
    pub fn hermitian_eigen(&self) -> Result<(Vec<f64>, ComplexMatrix)> {
        self.check_square()?;
        let eig = self.0.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let n = self.nrows();
        let vectors = Self::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
        Ok((values, vectors))
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self
            .0
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.nrows(), self.ncols())?;
        for i in 0..self.nrows() {
            write!(f, "  ")?;
            for j in 0..self.ncols() {
                let z = self.0[(i, j)];
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

// The operator impls panic on shape mismatch, like nalgebra's; call sites
// check dimensions first or use the `try_` variants.
impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 - &rhs.0)
    }
}

pub fn adjoint(m: &ComplexMatrix) -> ComplexMatrix {
    m.adjoint()
}

fn projector_defects(m: &ComplexMatrix) -> (f64, f64) {
    let idempotence = (m * m).max_dist(m);
    (idempotence, m.hermiticity_defect())
}

/// Whether `P·P = P` and `P† = P` hold within `tol`.
pub fn is_projector(m: &ComplexMatrix, tol: f64) -> Result<bool> {
    m.check_square()?;
    let (idem, herm) = projector_defects(m);
    Ok(idem <= tol && herm <= tol)
}

/// Whether the matrices are pairwise orthogonal projectors summing to the
/// identity. Zero members are allowed here; [`Decomposition::new`] is
/// stricter.
pub fn is_decomposition(ps: &[ComplexMatrix], tol: f64) -> Result<bool> {
    match check_decomposition(ps, tol, true) {
        Ok(()) => Ok(true),
        Err(
            e @ (LinalgError::EmptyDecomposition
            | LinalgError::NotSquare { .. }
            | LinalgError::DimensionMismatch { .. }),
        ) => Err(e),
        Err(_) => Ok(false),
    }
}

fn check_decomposition(ps: &[ComplexMatrix], tol: f64, allow_zero: bool) -> Result<()> {
    let first = ps.first().ok_or(LinalgError::EmptyDecomposition)?;
    let dim = first.check_square()?;
    for p in ps {
        if p.check_square()? != dim {
            return Err(LinalgError::DimensionMismatch {
                expected: dim,
                found: p.nrows(),
            });
        }
    }
    for (index, p) in ps.iter().enumerate() {
        let (idempotence, hermiticity) = projector_defects(p);
        if idempotence > tol || hermiticity > tol {
            return Err(LinalgError::Member {
                index,
                source: Box::new(LinalgError::NotProjector {
                    idempotence,
                    hermiticity,
                }),
            });
        }
        if !allow_zero && p.is_zero(tol) {
            return Err(LinalgError::ZeroProjector(index));
        }
    }
    for i in 0..ps.len() {
        for j in i + 1..ps.len() {
            let overlap = (&ps[i] * &ps[j]).max_norm();
            if overlap > tol {
                return Err(LinalgError::NotOrthogonal(i, j, overlap));
            }
        }
    }
    let mut sum = ComplexMatrix::zeros(dim, dim);
    for p in ps {
        sum = &sum + p;
    }
    let defect = sum.max_dist(&ComplexMatrix::identity(dim));
    if defect > tol {
        return Err(LinalgError::Incomplete(defect));
    }
    Ok(())
}

/// `Tr[ρ·K1†·K2]`.
pub fn hs_inner(rho: &DensityMatrix, k1: &ComplexMatrix, k2: &ComplexMatrix) -> Result<C64> {
    let d = rho.dim();
    for k in [k1, k2] {
        if k.nrows() != d || k.ncols() != d {
            return Err(LinalgError::DimensionMismatch {
                expected: d,
                found: if k.nrows() != d { k.nrows() } else { k.ncols() },
            });
        }
    }
    Ok(hs_inner_unchecked(rho.matrix(), k1, k2))
}

pub(crate) fn hs_inner_unchecked(rho: &ComplexMatrix, k1: &ComplexMatrix, k2: &ComplexMatrix) -> C64 {
    let left = rho * &k1.adjoint();
    let (a, b) = (left.as_nalgebra(), k2.as_nalgebra());
    let d = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Kronecker product with `A[i,j]·B` blocks in row-major order.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix(a.0.kronecker(&b.0))
}

/// `exp(-i·H·dt)` for Hermitian `H`, via its eigendecomposition.
pub fn mat_exp_skew(h: &ComplexMatrix, dt: f64) -> Result<Unitary> {
    let spectrum = HermitianSpectrum::new(h, DEFAULT_TOL)?;
    Ok(spectrum.evolve(dt))
}

/// Cached eigendecomposition of a Hermitian matrix, used to evaluate
/// `exp(-i·H·dt)` for many `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianSpectrum {
    values: Vec<f64>,
    vectors: ComplexMatrix,
}

impl HermitianSpectrum {
    pub fn new(h: &ComplexMatrix, tol: f64) -> Result<Self> {
        h.check_square()?;
        let defect = h.hermiticity_defect();
        if defect > tol {
            return Err(LinalgError::NotHermitian(defect));
        }
        let (values, vectors) = h.hermitian_eigen()?;
        Ok(Self { values, vectors })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn evolve(&self, dt: f64) -> Unitary {
        let phases: Vec<C64> = self.values.iter().map(|&e| C64::from_polar(1.0, -e * dt)).collect();
        let v = &self.vectors;
        let scaled = ComplexMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v.get(i, j) * phases[j]);
        Unitary(&scaled * &v.adjoint())
    }
}

/// An orthogonal projector: `P·P = P† = P`.
#[derive(Clone, PartialEq)]
pub struct Projector(ComplexMatrix);

impl Projector {
    pub fn new(m: ComplexMatrix, tol: f64) -> Result<Self> {
        m.check_square()?;
        let (idempotence, hermiticity) = projector_defects(&m);
        if idempotence > tol || hermiticity > tol {
            return Err(LinalgError::NotProjector {
                idempotence,
                hermiticity,
            });
        }
        Ok(Self(m))
    }

    /// Skips the projector check; for sums of orthogonal projectors and other
    /// values that are projectors by construction.
    pub(crate) fn new_unchecked(m: ComplexMatrix) -> Self {
        Self(m)
    }

    pub fn identity(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim))
    }

    pub fn zero(dim: usize) -> Self {
        Self(ComplexMatrix::zeros(dim, dim))
    }

    /// Projector onto the ray of `v` (which need not be normalised).
    pub fn onto(v: &[C64]) -> Self {
        Self(ComplexMatrix::ket_projector(v))
    }

    /// Projector onto the span of a set of orthonormal columns.
    pub fn onto_columns(basis: &ComplexMatrix, columns: &[usize]) -> Self {
        let d = basis.nrows();
        let mut sum = ComplexMatrix::zeros(d, d);
        for &c in columns {
            let col: Vec<C64> = (0..d).map(|i| basis.get(i, c)).collect();
            sum = &sum + &ComplexMatrix::from_fn(d, d, |i, j| col[i] * col[j].conj());
        }
        Self(sum)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    /// Rank, read off the trace.
    pub fn rank(&self) -> usize {
        self.0.trace().re.round().max(0.0) as usize
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.0.is_zero(tol)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.0.approx_eq(&other.0, tol)
    }

    pub fn is_orthogonal_to(&self, other: &Self, tol: f64) -> bool {
        (&self.0 * &other.0).is_zero(tol)
    }

    /// `U·P·U†`.
    pub fn conjugate_by(&self, u: &Unitary) -> Self {
        Self(&(u.matrix() * &self.0) * &u.matrix().adjoint())
    }
}

impl fmt::Debug for Projector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Projector(rank {}) {:?}", self.rank(), self.0)
    }
}

/// A decomposition of the identity: nonzero, pairwise-orthogonal projectors
/// summing to `I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition(Vec<Projector>);

impl Decomposition {
    pub fn new(members: Vec<ComplexMatrix>, tol: f64) -> Result<Self> {
        check_decomposition(&members, tol, false)?;
        Ok(Self(members.into_iter().map(Projector).collect()))
    }

    /// Like [`Decomposition::new`] but admits zero projectors.
    pub fn new_relaxed(members: Vec<ComplexMatrix>, tol: f64) -> Result<Self> {
        check_decomposition(&members, tol, true)?;
        Ok(Self(members.into_iter().map(Projector).collect()))
    }

    pub fn from_projectors(members: Vec<Projector>, tol: f64) -> Result<Self> {
        Self::new(members.into_iter().map(Projector::into_matrix).collect(), tol)
    }

    pub fn trivial(dim: usize) -> Self {
        Self(vec![Projector::identity(dim)])
    }

    /// One rank-1 projector per column of `basis`, which must be unitary.
    pub fn from_basis(basis: &Unitary) -> Self {
        let d = basis.dim();
        let m = basis.matrix();
        Self(
            (0..d)
                .map(|c| Projector::onto(&(0..d).map(|i| m.get(i, c)).collect::<Vec<_>>()))
                .collect(),
        )
    }

    /// Groups columns of a unitary `basis` into projectors.
    pub fn from_basis_groups(basis: &Unitary, groups: &[Vec<usize>], tol: f64) -> Result<Self> {
        let members = groups
            .iter()
            .map(|g| Projector::onto_columns(basis.matrix(), g).into_matrix())
            .collect();
        Self::new(members, tol)
    }

    pub fn computational(dim: usize) -> Self {
        Self::from_basis(&Unitary::identity(dim))
    }

    pub fn dim(&self) -> usize {
        self.0[0].dim()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn projectors(&self) -> &[Projector] {
        &self.0
    }

    pub fn into_projectors(self) -> Vec<Projector> {
        self.0
    }

    pub fn conjugate_by(&self, u: &Unitary) -> Self {
        Self(self.0.iter().map(|p| p.conjugate_by(u)).collect())
    }
}

/// A density matrix: Hermitian, positive semidefinite, unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    pub fn new(m: ComplexMatrix, tol: f64) -> Result<Self> {
        m.check_square()?;
        let defect = m.hermiticity_defect();
        if defect > tol {
            return Err(LinalgError::InvalidDensity(format!(
                "not Hermitian (deviation {defect:.3e})"
            )));
        }
        let trace = m.trace();
        if (trace.re - 1.0).abs() > tol || trace.im.abs() > tol {
            return Err(LinalgError::InvalidDensity(format!(
                "trace is {:.12} rather than 1",
                trace.re
            )));
        }
        let (values, _) = m.hermitian_eigen()?;
        if let Some(&min) = values.first() {
            if min < -tol {
                return Err(LinalgError::InvalidDensity(format!("negative eigenvalue {min:.3e}")));
            }
        }
        Ok(Self(m))
    }

    /// `I / dim`.
    pub fn maximally_mixed(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim).scale(C64::new(1.0 / dim as f64, 0.0)))
    }

    /// The pure state `|v><v|` (normalising `v`).
    pub fn pure(v: &[C64]) -> Self {
        Self(ComplexMatrix::ket_projector(v))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    /// `U·ρ·U†`.
    pub fn conjugate_by(&self, u: &Unitary) -> Self {
        Self(&(u.matrix() * &self.0) * &u.matrix().adjoint())
    }
}

/// A unitary operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Unitary(ComplexMatrix);

impl Unitary {
    pub fn new(m: ComplexMatrix, tol: f64) -> Result<Self> {
        let d = m.check_square()?;
        let defect = (&m.adjoint() * &m).max_dist(&ComplexMatrix::identity(d));
        if defect > tol {
            return Err(LinalgError::NotUnitary(defect));
        }
        Ok(Self(m))
    }

    pub fn identity(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim))
    }

    /// The normalised Hadamard gate.
    pub fn hadamard() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self(ComplexMatrix::from_real_rows(&[vec![s, s], vec![s, -s]]).expect("2x2"))
    }

    /// Unitary discrete Fourier transform matrix of size `dim`.
    pub fn fourier(dim: usize) -> Self {
        let n = dim as f64;
        Self(ComplexMatrix::from_fn(dim, dim, |i, j| {
            C64::from_polar(1.0 / n.sqrt(), 2.0 * std::f64::consts::PI * (i * j) as f64 / n)
        }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn compose(&self, after: &Unitary) -> Self {
        Self(&after.0 * &self.0)
    }
}
