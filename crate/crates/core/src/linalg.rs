//! Dense complex linear algebra for small Hermitian problems.
//!
//! Everything here targets matrices of array-covariance size (tens of
//! rows), where a cyclic Jacobi eigensolver is simple, accurate to a few
//! ulps, and fast enough that no external LAPACK binding is warranted.
//!
//! The eigensolver [`eigh`] applies complex Givens rotations that zero one
//! off-diagonal pair per step. For the pivot `a_pq ≠ 0` with phase
//! `β = a_pq / |a_pq|` the rotation
//!
//! ```text
//! R[p,p] = c        R[p,q] = s·β
//! R[q,p] = −s·β̄     R[q,q] = c
//! ```
//!
//! with `τ = (a_qq − a_pp) / (2|a_pq|)`, `t = sign(τ) / (|τ| + √(1+τ²))`,
//! `c = 1/√(1+t²)`, `s = t·c` annihilates `a_pq` in `RᴴAR` and moves its
//! mass onto the diagonal (`a_pp − t|a_pq|` and `a_qq + t|a_pq|`), so the
//! off-diagonal Frobenius mass decreases monotonically and the sweep
//! converges quadratically once it is small.
//!
//! [`generalized_eigh`] reduces the pencil `(R, Q)` with diagonal positive
//! `Q` to an ordinary Hermitian problem by symmetric whitening
//! `Q^{-1/2} R Q^{-1/2}` and maps the eigenvectors back.

use num_complex::Complex;
use num_traits::{One, Zero};
use std::fmt;
use std::ops::{Index, IndexMut, Range};
use thiserror::Error;

use crate::Scalar;

/// Maximum number of full Jacobi sweeps before giving up.
const MAX_SWEEPS: usize = 100;

/// Errors from the dense solvers.
#[derive(Debug, Error)]
pub enum LinalgError {
    /// Cyclic Jacobi failed to push the off-diagonal mass below target.
    #[error("eigensolver did not converge after {sweeps} sweeps (relative off-diagonal residual {residual:.3e})")]
    NoConvergence { sweeps: usize, residual: f64 },
    /// Generalized problems require a positive definite metric.
    #[error("noise covariance not positive definite")]
    NoisePowerNotPositive,
    /// Column set is numerically rank deficient.
    #[error("columns are numerically rank deficient (pivot {pivot:.3e})")]
    RankDeficient { pivot: f64 },
    /// Operands with incompatible shapes.
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
}

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> ComplexMatrix<T> {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![Complex::zero(); rows * cols],
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::one();
        }
        m
    }

    /// Builds a matrix entry by entry from `f(row, col)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Copy of column `j`.
    pub fn column(&self, j: usize) -> Vec<Complex<T>> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Matrix restricted to a contiguous range of columns.
    pub fn column_range(&self, range: Range<usize>) -> Self {
        assert!(range.end <= self.cols, "column range out of bounds");
        Self::from_fn(self.rows, range.len(), |i, j| self[(i, range.start + j)])
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    /// Matrix product `self · rhs`.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "inner dimensions must agree");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                if aik == Complex::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += aik * rhs[(k, j)];
                }
            }
        }
        out
    }

    /// Matrix-vector product `self · v`.
    pub fn mul_vec(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(self.cols, v.len(), "vector length must match columns");
        (0..self.rows)
            .map(|i| {
                let mut acc = Complex::zero();
                for j in 0..self.cols {
                    acc += self[(i, j)] * v[j];
                }
                acc
            })
            .collect()
    }

    /// Entrywise sum.
    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] + rhs[(i, j)])
    }

    /// Entrywise difference.
    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] - rhs[(i, j)])
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> T {
        self.data
            .iter()
            .map(|z| z.norm_sqr())
            .fold(T::zero(), |acc, x| acc + x)
            .sqrt()
    }

    /// Orthogonal projector onto the column span, `self · selfᴴ`.
    pub fn projector(&self) -> Self {
        self.matmul(&self.adjoint())
    }
}

impl<T> Index<(usize, usize)> for ComplexMatrix<T> {
    type Output = Complex<T>;

    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for ComplexMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: fmt::Debug> fmt::Debug for ComplexMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                write!(f, "{:?} ", self.data[i * self.cols + j])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Hermitian matrix; the constructor symmetrizes its input so the
/// invariant `H = Hᴴ` holds exactly in storage.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix<T> {
    mat: ComplexMatrix<T>,
}

impl<T: Scalar> HermitianMatrix<T> {
    /// Wraps a square matrix, replacing it with `(M + Mᴴ)/2` and forcing
    /// the diagonal imaginary parts to zero.
    pub fn new(mat: ComplexMatrix<T>) -> Result<Self, LinalgError> {
        if mat.rows() != mat.cols() {
            return Err(LinalgError::DimensionMismatch {
                context: format!("Hermitian matrix must be square, got {}x{}", mat.rows(), mat.cols()),
            });
        }
        let half = T::from(0.5).unwrap();
        let n = mat.rows();
        let sym = ComplexMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex::new(mat[(i, i)].re, T::zero())
            } else {
                (mat[(i, j)] + mat[(j, i)].conj()).scale(half)
            }
        });
        Ok(Self { mat: sym })
    }

    /// Builds from an entry generator; only `f(i, j)` with `i ≤ j` is
    /// consulted, the lower triangle is mirrored.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut m = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let z = if i == j {
                    Complex::new(f(i, i).re, T::zero())
                } else {
                    f(i, j)
                };
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        Self { mat: m }
    }

    /// Hermitian matrix with the given real diagonal and zeros elsewhere.
    pub fn from_diag(d: &DiagonalMatrix<T>) -> Self {
        Self::from_fn(d.dim(), |i, j| {
            if i == j {
                Complex::new(d.entries()[i], T::zero())
            } else {
                Complex::zero()
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    /// Underlying storage.
    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.mat
    }

    /// Real diagonal.
    pub fn diag(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).collect()
    }

    /// `H + b·I`.
    pub fn shifted(&self, b: T) -> Self {
        let n = self.dim();
        Self::from_fn(n, |i, j| {
            if i == j {
                self.mat[(i, i)] + Complex::new(b, T::zero())
            } else {
                self.mat[(i, j)]
            }
        })
    }

    pub fn frobenius_norm(&self) -> T {
        self.mat.frobenius_norm()
    }
}

impl<T> Index<(usize, usize)> for HermitianMatrix<T> {
    type Output = Complex<T>;

    fn index(&self, idx: (usize, usize)) -> &Complex<T> {
        &self.mat[idx]
    }
}

/// Real positive-oriented diagonal matrix, stored as its diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalMatrix<T> {
    diag: Vec<T>,
}

impl<T: Scalar> DiagonalMatrix<T> {
    pub fn new(diag: Vec<T>) -> Self {
        assert!(!diag.is_empty(), "diagonal must be non-empty");
        Self { diag }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn entries(&self) -> &[T] {
        &self.diag
    }

    /// Dense Hermitian view.
    pub fn to_hermitian(&self) -> HermitianMatrix<T> {
        HermitianMatrix::from_diag(self)
    }
}

/// Eigendecomposition result; `values` ascending, `vectors` holds the
/// matching eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct EigenPairs<T> {
    values: Vec<T>,
    vectors: ComplexMatrix<T>,
}

impl<T: Scalar> EigenPairs<T> {
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn vectors(&self) -> &ComplexMatrix<T> {
        &self.vectors
    }

    /// Eigenvectors for the `count` smallest eigenvalues.
    pub fn smallest_vectors(&self, count: usize) -> ComplexMatrix<T> {
        self.vectors.column_range(0..count)
    }
}

/// Convergence target relative to ‖H‖_F. Kept above machine precision so
/// the same solver instantiates for `f32`.
fn jacobi_tolerance<T: Scalar>() -> T {
    let floor = T::from(1e-12).unwrap();
    floor.max(T::epsilon() * T::from(32.0).unwrap())
}

fn off_diagonal_norm<T: Scalar>(a: &ComplexMatrix<T>) -> T {
    let n = a.rows();
    let mut acc = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

/// Applies one Jacobi rotation annihilating `a[(p, q)]`, accumulating the
/// rotation into `v`. Hermitian structure of `a` is enforced exactly by
/// mirroring updated entries.
fn jacobi_rotate<T: Scalar>(a: &mut ComplexMatrix<T>, v: &mut ComplexMatrix<T>, p: usize, q: usize) {
    let n = a.rows();
    let apq = a[(p, q)];
    let abs_apq = apq.norm();
    let phase = apq.unscale(abs_apq);
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;

    let two = T::from(2.0).unwrap();
    let tau = (aqq - app) / (two * abs_apq);
    let hyp = (T::one() + tau * tau).sqrt();
    let t = if tau >= T::zero() {
        T::one() / (tau + hyp)
    } else {
        -T::one() / (-tau + hyp)
    };
    let c = T::one() / (T::one() + t * t).sqrt();
    let s = t * c;

    let s_phase = phase.scale(s);
    let s_phase_conj = phase.conj().scale(s);

    for i in 0..n {
        if i == p || i == q {
            continue;
        }
        let aip = a[(i, p)];
        let aiq = a[(i, q)];
        let new_ip = aip.scale(c) - aiq * s_phase_conj;
        let new_iq = aip * s_phase + aiq.scale(c);
        a[(i, p)] = new_ip;
        a[(p, i)] = new_ip.conj();
        a[(i, q)] = new_iq;
        a[(q, i)] = new_iq.conj();
    }
    a[(p, p)] = Complex::new(app - t * abs_apq, T::zero());
    a[(q, q)] = Complex::new(aqq + t * abs_apq, T::zero());
    a[(p, q)] = Complex::zero();
    a[(q, p)] = Complex::zero();

    for i in 0..n {
        let vip = v[(i, p)];
        let viq = v[(i, q)];
        v[(i, p)] = vip.scale(c) - viq * s_phase_conj;
        v[(i, q)] = vip * s_phase + viq.scale(c);
    }
}

/// Fixes each column's arbitrary unit phase so the entry of largest
/// magnitude is real and positive. Ties resolve to the first maximum.
fn fix_column_phases<T: Scalar>(v: &mut ComplexMatrix<T>) {
    let (rows, cols) = (v.rows(), v.cols());
    for j in 0..cols {
        let mut best = 0;
        let mut best_mag = T::zero();
        for i in 0..rows {
            let mag = v[(i, j)].norm_sqr();
            if mag > best_mag {
                best_mag = mag;
                best = i;
            }
        }
        if best_mag == T::zero() {
            continue;
        }
        let pivot = v[(best, j)];
        let rot = pivot.conj().unscale(pivot.norm());
        for i in 0..rows {
            let z = v[(i, j)];
            v[(i, j)] = z * rot;
        }
        // The pivot itself lands exactly on the real axis.
        v[(best, j)] = Complex::new(pivot.norm(), T::zero());
    }
}

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi sweeps.
///
/// Eigenvalues are returned in ascending order; eigenvectors are unit
/// norm with the phase convention of [`fix_column_phases`], making the
/// result deterministic for a given input. Fails only if the off-diagonal
/// mass is not below `~1e-12·‖H‖_F` after 100 sweeps, which for Hermitian
/// input would indicate non-finite entries rather than a hard problem.
pub fn eigh<T: Scalar>(h: &HermitianMatrix<T>) -> Result<EigenPairs<T>, LinalgError> {
    let n = h.dim();
    let mut a = h.matrix().clone();
    let mut v = ComplexMatrix::identity(n);
    let fro = a.frobenius_norm();
    let tol = jacobi_tolerance::<T>();
    let target = tol * fro;
    // Pivots this small cannot keep the total mass above target.
    let skip = target / T::from(n * n).unwrap();

    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= target {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                if a[(p, q)].norm() > skip {
                    jacobi_rotate(&mut a, &mut v, p, q);
                }
            }
        }
    }
    if !converged && off_diagonal_norm(&a) > target {
        let residual = (off_diagonal_norm(&a) / fro).as_f64();
        return Err(LinalgError::NoConvergence {
            sweeps: MAX_SWEEPS,
            residual,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<T> = (0..n).map(|i| a[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).expect("finite eigenvalues"));

    let values: Vec<T> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = ComplexMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    fix_column_phases(&mut vectors);

    Ok(EigenPairs { values, vectors })
}

/// Generalized eigendecomposition of the pencil `(R, Q)` with diagonal
/// positive definite `Q`, via symmetric whitening `Q^{-1/2} R Q^{-1/2}`.
///
/// Generalized eigenvalues come back ascending; the returned vectors
/// satisfy `R u = λ Q u` and are rescaled to unit Euclidean norm (they are
/// orthogonal in the `Q` inner product, not the Euclidean one).
pub fn generalized_eigh<T: Scalar>(
    r: &HermitianMatrix<T>,
    q: &DiagonalMatrix<T>,
) -> Result<EigenPairs<T>, LinalgError> {
    if r.dim() != q.dim() {
        return Err(LinalgError::DimensionMismatch {
            context: format!("pencil operands of order {} and {}", r.dim(), q.dim()),
        });
    }
    if q.entries().iter().any(|&d| d <= T::zero()) {
        return Err(LinalgError::NoisePowerNotPositive);
    }
    let w: Vec<T> = q.entries().iter().map(|&d| T::one() / d.sqrt()).collect();
    let n = r.dim();
    let whitened = HermitianMatrix::from_fn(n, |i, j| r[(i, j)].scale(w[i] * w[j]));
    let inner = eigh(&whitened)?;

    let mut vectors = ComplexMatrix::from_fn(n, n, |i, j| inner.vectors()[(i, j)].scale(w[i]));
    for j in 0..n {
        let norm = (0..n)
            .map(|i| vectors[(i, j)].norm_sqr())
            .fold(T::zero(), |acc, x| acc + x)
            .sqrt();
        for i in 0..n {
            let z = vectors[(i, j)];
            vectors[(i, j)] = z.unscale(norm);
        }
    }
    fix_column_phases(&mut vectors);

    Ok(EigenPairs {
        values: inner.values().to_vec(),
        vectors,
    })
}

/// Orthonormalizes the columns of `m` by modified Gram-Schmidt with one
/// reorthogonalization pass. The column span is preserved and an
/// already-orthonormal input passes through unchanged up to roundoff.
pub fn orthonormalize_columns<T: Scalar>(m: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>, LinalgError> {
    let (rows, cols) = (m.rows(), m.cols());
    assert!(cols <= rows, "cannot orthonormalize more columns than rows");
    let mut q = m.clone();
    let tol = T::from(1e-12).unwrap().max(T::epsilon() * T::from(16.0).unwrap());

    for j in 0..cols {
        for _pass in 0..2 {
            for i in 0..j {
                let mut proj = Complex::zero();
                for row in 0..rows {
                    proj += q[(row, i)].conj() * q[(row, j)];
                }
                for row in 0..rows {
                    let update = q[(row, i)] * proj;
                    let z = q[(row, j)];
                    q[(row, j)] = z - update;
                }
            }
        }
        let norm = (0..rows)
            .map(|row| q[(row, j)].norm_sqr())
            .fold(T::zero(), |acc, x| acc + x)
            .sqrt();
        if norm < tol {
            return Err(LinalgError::RankDeficient {
                pivot: norm.as_f64(),
            });
        }
        for row in 0..rows {
            let z = q[(row, j)];
            q[(row, j)] = z.unscale(norm);
        }
    }
    Ok(q)
}
