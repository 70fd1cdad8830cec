//! Dense linear-algebra kernels shared by the design modules: spectra,
//! Hurwitz tests, Lyapunov solves, ranks and stabilizing-gain synthesis.
//!
//! Everything here is a pure function of its arguments.

use nalgebra::linalg::{Schur, SymmetricEigen, SVD};
use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

const EIG_MAX_ITER: usize = 10_000;

/// Eigenvalues of a square matrix together with the largest real part.
#[derive(Debug, Clone)]
pub struct Spectrum<T: Real> {
    pub values: Vec<Complex<T>>,
    pub max_real: T,
}

impl<T: Real> Spectrum<T> {
    pub fn min_real(&self) -> T {
        self.values.iter().map(|v| v.re).fold(T::max_value().unwrap(), |a, b| a.min(b))
    }
}

pub(crate) fn ensure_square<T: Real>(a: &DMatrix<T>, what: &str) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare { what: what.to_string(), rows: a.nrows(), cols: a.ncols() });
    }
    Ok(a.nrows())
}

pub(crate) fn ensure_shape<T: Real>(
    m: &DMatrix<T>,
    rows: usize,
    cols: usize,
    context: &str,
    name: &str,
) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::Dimension {
            context: context.to_string(),
            matrix: name.to_string(),
            expected_rows: rows,
            expected_cols: cols,
            got_rows: m.nrows(),
            got_cols: m.ncols(),
        });
    }
    Ok(())
}

pub(crate) fn all_finite<T: Real>(m: &DMatrix<T>) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Column-major vectorization.
pub fn vec_of<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec<T: Real>(v: &[T], rows: usize, cols: usize) -> DMatrix<T> {
    DMatrix::from_column_slice(rows, cols, v)
}

pub fn symmetrize<T: Real>(p: &DMatrix<T>) -> DMatrix<T> {
    (p + p.transpose()) * T::lit(0.5)
}

/// All eigenvalues (with multiplicity) via the real Schur form.
pub fn spectrum<T: Real>(a: &DMatrix<T>) -> Result<Spectrum<T>> {
    let n = ensure_square(a, "spectrum")?;
    if n == 0 {
        return Err(Error::InvalidInput("spectrum: empty matrix".into()));
    }
    if !all_finite(a) {
        return Err(Error::InvalidInput("spectrum: matrix has non-finite entries".into()));
    }
    let schur = Schur::try_new(a.clone(), T::default_epsilon(), EIG_MAX_ITER)
        .ok_or_else(|| Error::NoConvergence { what: "Schur decomposition".into(), iterations: EIG_MAX_ITER })?;
    let values: Vec<Complex<T>> = schur.complex_eigenvalues().iter().cloned().collect();
    let max_real = values.iter().map(|v| v.re).fold(T::min_value().unwrap(), |a, b| a.max(b));
    Ok(Spectrum { values, max_real })
}

/// `true` iff every eigenvalue has real part `< -margin`.
pub fn is_hurwitz<T: Real>(a: &DMatrix<T>, margin: T) -> Result<bool> {
    Ok(spectrum(a)?.max_real < -margin)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues<T: Real>(a: &DMatrix<T>) -> Result<Vec<T>> {
    ensure_square(a, "symmetric eigenvalues")?;
    let eig = SymmetricEigen::try_new(symmetrize(a), T::default_epsilon(), EIG_MAX_ITER)
        .ok_or_else(|| Error::NoConvergence { what: "symmetric eigensolver".into(), iterations: EIG_MAX_ITER })?;
    let mut v: Vec<T> = eig.eigenvalues.iter().cloned().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(v)
}

pub fn min_symmetric_eigenvalue<T: Real>(a: &DMatrix<T>) -> Result<T> {
    Ok(symmetric_eigenvalues(a)?[0])
}

pub fn singular_values<T: Real>(a: &DMatrix<T>) -> Result<Vec<T>> {
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let svd = SVD::try_new(a.clone(), false, false, T::default_epsilon(), EIG_MAX_ITER)
        .ok_or_else(|| Error::NoConvergence { what: "SVD".into(), iterations: EIG_MAX_ITER })?;
    let mut s: Vec<T> = svd.singular_values.iter().cloned().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(s)
}

/// Relative threshold shared by every rank decision in the crate.
pub const RANK_RTOL: f64 = 1e-9;

/// Numerical rank: number of singular values above `1e-9 * sigma_max`.
pub fn rank<T: Real>(a: &DMatrix<T>) -> Result<usize> {
    let s = singular_values(a)?;
    let Some(&smax) = s.first() else { return Ok(0) };
    if smax == T::zero() {
        return Ok(0);
    }
    let thresh = T::tol(RANK_RTOL) * smax;
    Ok(s.iter().filter(|&&v| v > thresh).count())
}

/// Rank of the complex matrix `re + i*im`, computed on its real embedding
/// `[[re, -im], [im, re]]` whose rank is exactly twice the complex rank.
pub fn complex_rank<T: Real>(re: &DMatrix<T>, im: &DMatrix<T>) -> Result<usize> {
    let (r, c) = re.shape();
    let mut emb = DMatrix::zeros(2 * r, 2 * c);
    emb.view_mut((0, 0), (r, c)).copy_from(re);
    emb.view_mut((0, c), (r, c)).copy_from(&(-im));
    emb.view_mut((r, 0), (r, c)).copy_from(im);
    emb.view_mut((r, c), (r, c)).copy_from(re);
    Ok(rank(&emb)? / 2)
}

/// Frobenius norm of `Abar^T P + P Abar + Q`.
pub fn lyapunov_residual<T: Real>(abar: &DMatrix<T>, q: &DMatrix<T>, p: &DMatrix<T>) -> T {
    (abar.transpose() * p + p * abar + q).norm()
}

/// Solves `Abar^T P + P Abar + Q = 0` for Hurwitz `Abar` by Kronecker
/// vectorization: `(I (x) Abar^T + Abar^T (x) I) vec(P) = -vec(Q)`.
pub fn solve_lyapunov<T: Real>(abar: &DMatrix<T>, q: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = ensure_square(abar, "Lyapunov: Abar")?;
    ensure_shape(q, n, n, "Lyapunov", "Q")?;
    let asym = (q - q.transpose()).norm();
    if asym > T::tol(1e-12) * (T::one() + q.norm()) {
        return Err(Error::InvalidInput(format!("Lyapunov: Q is not symmetric (asymmetry {asym:e})")));
    }
    let spec = spectrum(abar)?;
    if spec.max_real >= T::zero() {
        return Err(Error::NotHurwitz { what: "Lyapunov: Abar".into(), max_real: spec.max_real.as_f64() });
    }
    let at = abar.transpose();
    let eye = DMatrix::<T>::identity(n, n);
    let big = eye.kronecker(&at) + at.kronecker(&eye);
    let lu = big.lu();
    let singular = || Error::Singular { what: "Lyapunov vectorized system".into() };
    let solve = |rhs: &DVector<T>| lu.solve(rhs).filter(|s| s.iter().all(|x| x.is_finite())).ok_or_else(singular);
    let p = symmetrize(&unvec(solve(&-vec_of(q))?.as_slice(), n, n));
    // one step of iterative refinement with the same factors
    let corr = solve(&-vec_of(&(at * &p + &p * abar + q)))?;
    Ok(symmetrize(&(p + unvec(corr.as_slice(), n, n))))
}

/// Synthesizes `K` with `A - B K` Hurwitz.
///
/// Returns `K = 0` when `A` is already Hurwitz. Otherwise uses the Lyapunov
/// shift construction: with `beta = |A|_F + 1`, solve
/// `(A + beta I) W + W (A + beta I)^T = 2 B B^T` and take `K = B^T W^{-1}`,
/// which places the closed loop left of `-beta` when `(A, B)` is controllable.
pub fn stabilize<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = ensure_square(a, "stabilize: A")?;
    if b.nrows() != n {
        return Err(Error::Dimension {
            context: "stabilize".into(),
            matrix: "B".into(),
            expected_rows: n,
            expected_cols: b.ncols(),
            got_rows: b.nrows(),
            got_cols: b.ncols(),
        });
    }
    let m = b.ncols();
    if !all_finite(a) || !all_finite(b) {
        return Err(Error::InvalidInput("stabilize: non-finite entries".into()));
    }
    if is_hurwitz(a, T::zero())? {
        return Ok(DMatrix::zeros(m, n));
    }
    let beta = a.norm() + T::one();
    let shifted = a + DMatrix::<T>::identity(n, n) * beta;
    // (-shifted) W + W (-shifted)^T + 2 B B^T = 0, i.e. Abar = -shifted^T.
    let q = b * b.transpose() * T::lit(2.0);
    let w = solve_lyapunov(&(-shifted.transpose()), &q)
        .map_err(|e| Error::Synthesis { reason: format!("Gramian solve failed: {e}") })?;
    let w_inv = w.clone().try_inverse().filter(all_finite).ok_or_else(|| Error::Synthesis {
        reason: "shifted Gramian W is not invertible (pair not controllable)".into(),
    })?;
    let k = b.transpose() * w_inv;
    let closed = a - b * &k;
    if !all_finite(&k) || !is_hurwitz(&closed, T::zero())? {
        return Err(Error::Synthesis { reason: "closed loop A - B K is not Hurwitz".into() });
    }
    Ok(k)
}
