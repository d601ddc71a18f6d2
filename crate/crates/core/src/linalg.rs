//! Hermitian helpers on top of nalgebra: PSD factors, Cholesky solves and
//! eigenvalue-thresholded pseudo-inverses.

use nalgebra::{Cholesky, ComplexField, DMatrix};

use crate::error::{Error, Result};
use crate::scalar::{real, CMat, CVec, Cx, Real};

/// Relative eigenvalue cutoff for the pseudo-inverses used by the estimators.
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-10;

/// Below this many multiply-adds the plain complex product is used.
const SPLIT_GEMM_MIN_WORK: usize = 1 << 15;

fn split<T: Real>(a: &CMat<T>) -> (DMatrix<T>, DMatrix<T>) {
    (a.map(|z| z.re), a.map(|z| z.im))
}

/// A B, computed as four real products so large sizes hit the tuned real
/// kernel instead of the generic complex loop.
pub fn mul<T: Real>(a: &CMat<T>, b: &CMat<T>) -> CMat<T> {
    assert_eq!(a.ncols(), b.nrows(), "mul: inner dimensions differ");
    if a.nrows() * a.ncols() * b.ncols() < SPLIT_GEMM_MIN_WORK {
        return a * b;
    }
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let mut re = &ar * &br;
    re.gemm(-T::one(), &ai, &bi, T::one());
    let mut im = &ar * &bi;
    im.gemm(T::one(), &ai, &br, T::one());
    re.zip_map(&im, |r, i| Cx::new(r, i))
}

/// A B^H.
pub fn mul_adj<T: Real>(a: &CMat<T>, b: &CMat<T>) -> CMat<T> {
    mul(a, &b.adjoint())
}

/// A^H B.
pub fn adj_mul<T: Real>(a: &CMat<T>, b: &CMat<T>) -> CMat<T> {
    mul(&a.adjoint(), b)
}

/// V diag(w) V^H.
fn weighted_outer<T: Real>(v: &CMat<T>, w: &[T]) -> CMat<T> {
    let mut scaled = v.clone();
    for (j, &x) in w.iter().enumerate() {
        let mut col = scaled.column_mut(j);
        col *= real(x);
    }
    mul_adj(&scaled, v)
}

/// (A + A^H) / 2.
pub fn hermitian_part<T: Real>(a: &CMat<T>) -> CMat<T> {
    let half = real(T::lit(0.5));
    (a + a.adjoint()) * half
}

/// Largest entrywise modulus of A - A^H.
pub fn hermitian_defect<T: Real>(a: &CMat<T>) -> T {
    let d = a - a.adjoint();
    d.iter().fold(T::zero(), |m, z| m.max(z.modulus()))
}

pub fn trace_re<T: Real>(a: &CMat<T>) -> T {
    a.diagonal().iter().fold(T::zero(), |acc, z| acc + z.re)
}

/// Eigen-decomposition of the Hermitian part, computed on a copy scaled to
/// unit max-modulus so the solver's tolerances are relative.
fn hermitian_eigen<T: Real>(a: &CMat<T>) -> (Vec<T>, CMat<T>) {
    let h = hermitian_part(a);
    let scale = max_abs(&h);
    if scale == T::zero() {
        return (vec![T::zero(); h.nrows()], CMat::identity(h.nrows(), h.ncols()));
    }
    let eig = (h * real(T::one() / scale)).symmetric_eigen();
    (eig.eigenvalues.iter().map(|&l| l * scale).collect(), eig.eigenvectors)
}

/// Eigenvalues of the Hermitian part, ascending.
pub fn hermitian_eigenvalues<T: Real>(a: &CMat<T>) -> Vec<T> {
    let mut ev = hermitian_eigen(a).0;
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

pub fn min_eigenvalue<T: Real>(a: &CMat<T>) -> T {
    hermitian_eigenvalues(a).first().copied().unwrap_or_else(T::zero)
}

/// Factor L with L L^H = A for a Hermitian positive semidefinite A.
///
/// Uses the eigendecomposition with negative eigenvalues clipped to zero, so
/// it also works on the nearly singular matrices produced by strong spatial
/// correlation. Eigenvalues below `-tol * max(1, lambda_max)` are rejected.
pub fn psd_factor<T: Real>(a: &CMat<T>, tol: T) -> Result<CMat<T>> {
    if !a.is_square() {
        return Err(Error::Dimension(format!("psd_factor on {}x{}", a.nrows(), a.ncols())));
    }
    let (values, vectors) = hermitian_eigen(a);
    let lmax = values.iter().fold(T::zero(), |m, &l| m.max(l));
    let lmin = values.iter().fold(lmax, |m, &l| m.min(l));
    if lmin < -tol * T::one().max(lmax) {
        return Err(Error::Numerical(format!(
            "matrix is not positive semidefinite (min eigenvalue {lmin})"
        )));
    }
    let mut factor = vectors;
    for (j, &l) in values.iter().enumerate() {
        let s = real(l.max(T::zero()).sqrt());
        let mut col = factor.column_mut(j);
        col *= s;
    }
    Ok(factor)
}

const SOLVE_BLOCK: usize = 48;

/// Lower Cholesky factor of the Hermitian part of A.
///
/// The complex square root never fails, so definiteness is checked on the
/// pivots: each must be real, positive and finite.
pub fn cholesky_lower<T: Real>(a: &CMat<T>) -> Result<CMat<T>> {
    let fail = || {
        Error::Numerical(format!(
            "Cholesky factorization failed on {}x{} matrix (not positive definite)",
            a.nrows(),
            a.ncols()
        ))
    };
    let l = Cholesky::new(hermitian_part(a)).map(|c| c.unpack()).ok_or_else(fail)?;
    let tiny = T::eps() * T::lit(64.0);
    let pivots_ok = l.diagonal().iter().all(|d| {
        d.re.is_finite() && d.im.is_finite() && d.re > T::zero() && d.im.abs() <= tiny * d.re
    });
    if pivots_ok {
        Ok(l)
    } else {
        Err(fail())
    }
}

/// Solves L L^H X = B given the lower factor, in blocks so the bulk of the
/// work runs through [`mul`].
pub fn cholesky_solve_with<T: Real>(l: &CMat<T>, b: &CMat<T>) -> CMat<T> {
    let n = l.nrows();
    let mut x = b.clone();
    let blocks: Vec<(usize, usize)> = (0..n).step_by(SOLVE_BLOCK).map(|r| (r, SOLVE_BLOCK.min(n - r))).collect();
    // L Y = B
    for &(r, w) in &blocks {
        if r > 0 {
            let update = mul(&l.view((r, 0), (w, r)).into_owned(), &x.rows(0, r).into_owned());
            let mut rows = x.rows_mut(r, w);
            rows -= update;
        }
        let diag = l.view((r, r), (w, w)).into_owned();
        let mut rows = x.rows(r, w).into_owned();
        diag.solve_lower_triangular_mut(&mut rows);
        x.rows_mut(r, w).copy_from(&rows);
    }
    // L^H X = Y
    for &(r, w) in blocks.iter().rev() {
        let end = r + w;
        if end < n {
            let update = adj_mul(&l.view((end, r), (n - end, w)).into_owned(), &x.rows(end, n - end).into_owned());
            let mut rows = x.rows_mut(r, w);
            rows -= update;
        }
        let diag = l.view((r, r), (w, w)).into_owned();
        let mut rows = x.rows(r, w).into_owned();
        diag.ad_solve_lower_triangular_mut(&mut rows);
        x.rows_mut(r, w).copy_from(&rows);
    }
    x
}

/// Solves A X = B for Hermitian positive definite A.
pub fn chol_solve<T: Real>(a: &CMat<T>, b: &CMat<T>) -> Result<CMat<T>> {
    Ok(cholesky_solve_with(&cholesky_lower(a)?, b))
}

pub fn chol_solve_vec<T: Real>(a: &CMat<T>, b: &CVec<T>) -> Result<CVec<T>> {
    let x = chol_solve(a, &CMat::from_column_slice(b.len(), 1, b.as_slice()))?;
    Ok(x.column(0).into_owned())
}

/// Pseudo-inverse of a Hermitian PSD matrix.
#[derive(Clone, Debug)]
pub struct HermitianPinv<T: Real> {
    pub inverse: CMat<T>,
    pub rank: usize,
    /// True when an eigenvalue that was not numerically zero fell below
    /// the cutoff, i.e. the matrix is ill-conditioned rather than merely
    /// rank-deficient by construction.
    pub truncated: bool,
}

/// Eigenvalue-thresholded pseudo-inverse; eigenvalues at or below
/// `rel_cutoff * lambda_max` are treated as zero.
pub fn hermitian_pinv<T: Real>(a: &CMat<T>, rel_cutoff: T) -> HermitianPinv<T> {
    let n = a.nrows();
    let (values, vectors) = hermitian_eigen(a);
    let lmax = values.iter().fold(T::zero(), |m, &l| m.max(l.abs()));
    let cut = rel_cutoff * lmax;
    let noise_floor = T::eps() * T::lit(n.max(1) as f64) * T::lit(10.0) * lmax;
    let mut rank = 0;
    let mut truncated = false;
    let weights: Vec<T> = values
        .iter()
        .map(|&l| {
            if l > cut && l > T::zero() {
                rank += 1;
                T::one() / l
            } else {
                truncated |= l.abs() > noise_floor;
                T::zero()
            }
        })
        .collect();
    let inverse = if n == 0 { CMat::zeros(0, 0) } else { weighted_outer(&vectors, &weights) };
    HermitianPinv { inverse, rank, truncated }
}

/// Thin SVD `A = U diag(s) V^H`.
#[derive(Clone, Debug)]
pub struct ThinSvd<T: Real> {
    pub u: CMat<T>,
    pub singular_values: Vec<T>,
    pub v: CMat<T>,
}

fn svd_attempt<T: Real>(a: &CMat<T>) -> Option<ThinSvd<T>> {
    let svd = a.clone().try_svd(true, true, T::eps(), 0)?;
    Some(ThinSvd {
        u: svd.u?,
        singular_values: svd.singular_values.iter().copied().collect(),
        v: svd.v_t?.adjoint(),
    })
}

fn svd_residual<T: Real>(a: &CMat<T>, f: &ThinSvd<T>) -> T {
    let mut us = f.u.clone();
    for (j, &s) in f.singular_values.iter().enumerate() {
        let mut col = us.column_mut(j);
        col *= real(s);
    }
    max_abs_diff(&mul_adj(&us, &f.v), a)
}

/// One-sided (Hestenes) Jacobi SVD of a matrix with `nrows >= ncols`.
/// Slower than the bidiagonal route but accurate to working precision.
fn jacobi_svd<T: Real>(a: &CMat<T>) -> ThinSvd<T> {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = CMat::<T>::identity(n, n);
    let tol = T::eps() * T::lit(m as f64);
    for _ in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dotc(&w.column(q));
                let g = gamma.modulus();
                if g <= tol * (alpha * beta).sqrt() || g == T::zero() {
                    continue;
                }
                rotated = true;
                // Turn the pair product real, then apply a plane rotation.
                let phase = (gamma / real(g)).conj();
                let zeta = (beta - alpha) / (T::lit(2.0) * g);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for mat in [&mut w, &mut v] {
                    for i in 0..mat.nrows() {
                        let x = mat[(i, p)];
                        let y = mat[(i, q)] * phase;
                        mat[(i, p)] = x * real(c) - y * real(s);
                        mat[(i, q)] = x * real(s) + y * real(c);
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<T> = w.column_iter().map(|c| c.norm()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));
    let mut u = CMat::<T>::zeros(m, n);
    let top = norms.iter().fold(T::zero(), |acc, &x| acc.max(x));
    let mut basis = 0;
    for (k, &j) in order.iter().enumerate() {
        if norms[j] > T::eps() * top && norms[j] > T::zero() {
            u.set_column(k, &(w.column(j) * real(T::one() / norms[j])));
            continue;
        }
        // Complete U with unit vectors orthogonal to what is already there.
        loop {
            let mut e = CVec::<T>::zeros(m);
            e[basis % m] = real(T::one());
            basis += 1;
            for _ in 0..2 {
                for i in 0..k {
                    let proj = u.column(i).dotc(&e);
                    e -= u.column(i) * proj;
                }
            }
            let len = e.norm();
            if len > T::lit(0.5) {
                u.set_column(k, &(e * real(T::one() / len)));
                break;
            }
        }
    }
    ThinSvd {
        u,
        singular_values: order.iter().map(|&j| norms[j]).collect(),
        v: CMat::from_fn(n, n, |i, k| v[(i, order[k])]),
    }
}

/// Thin SVD with the input scaled to unit max-modulus and the
/// factorization checked by reconstruction.
///
/// nalgebra's complex SVD can return an inaccurate factorization without
/// signalling failure, even on well-scaled inputs, so a
/// failed check retries on the adjoint, then falls back to one-sided Jacobi.
pub fn thin_svd<T: Real>(a: &CMat<T>) -> Result<ThinSvd<T>> {
    let scale = max_abs(a);
    if scale == T::zero() || a.is_empty() {
        let q = a.nrows().min(a.ncols());
        return Ok(ThinSvd {
            u: CMat::identity(a.nrows(), q),
            singular_values: vec![T::zero(); q],
            v: CMat::identity(a.ncols(), q),
        });
    }
    let unit = a * real(T::one() / scale);
    let tol = T::lit(1e-10) * T::lit(a.nrows().max(a.ncols()) as f64).sqrt();
    let rescale = |mut f: ThinSvd<T>| {
        f.singular_values.iter_mut().for_each(|s| *s *= scale);
        f
    };
    if let Some(f) = svd_attempt(&unit).filter(|f| svd_residual(&unit, f) <= tol) {
        return Ok(rescale(f));
    }
    let adj = unit.adjoint();
    if let Some(f) = svd_attempt(&adj).filter(|f| svd_residual(&adj, f) <= tol) {
        return Ok(rescale(ThinSvd { u: f.v, singular_values: f.singular_values, v: f.u }));
    }
    let tall = a.nrows() >= a.ncols();
    let f = if tall { jacobi_svd(&unit) } else { jacobi_svd(&adj) };
    if svd_residual(if tall { &unit } else { &adj }, &f) <= tol {
        let f = if tall { f } else { ThinSvd { u: f.v, singular_values: f.singular_values, v: f.u } };
        return Ok(rescale(f));
    }
    Err(Error::Numerical(format!("SVD of a {}x{} matrix did not reconstruct its input", a.nrows(), a.ncols())))
}

/// Moore-Penrose pseudo-inverse of a general matrix through the SVD.
/// Returns the rank alongside the inverse.
pub fn pinv<T: Real>(a: &CMat<T>, rel_cutoff: T) -> Result<(CMat<T>, usize)> {
    let svd = thin_svd(a)?;
    let smax = svd.singular_values.iter().fold(T::zero(), |m, &s| m.max(s));
    let cut = rel_cutoff * smax;
    let mut rank = 0;
    let mut v = svd.v;
    for (j, &s) in svd.singular_values.iter().enumerate() {
        let w = if s > cut && s > T::zero() {
            rank += 1;
            T::one() / s
        } else {
            T::zero()
        };
        let mut col = v.column_mut(j);
        col *= real(w);
    }
    Ok((mul_adj(&v, &svd.u), rank))
}

/// Submatrix selecting `rows` x `cols`.
pub fn select<T: Real>(a: &CMat<T>, rows: &[usize], cols: &[usize]) -> CMat<T> {
    CMat::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

pub fn select_cols<T: Real>(a: &CMat<T>, cols: &[usize]) -> CMat<T> {
    CMat::from_fn(a.nrows(), cols.len(), |i, j| a[(i, cols[j])])
}

pub fn select_rows<T: Real>(a: &CMat<T>, rows: &[usize]) -> CMat<T> {
    CMat::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

/// Scatters the columns of `a` into a zero matrix with `ncols` columns.
pub fn scatter_cols<T: Real>(a: &CMat<T>, cols: &[usize], ncols: usize) -> CMat<T> {
    let mut out = CMat::zeros(a.nrows(), ncols);
    for (j, &c) in cols.iter().enumerate() {
        out.set_column(c, &a.column(j));
    }
    out
}

pub fn scatter_rows<T: Real>(a: &CMat<T>, rows: &[usize], nrows: usize) -> CMat<T> {
    let mut out = CMat::zeros(nrows, a.ncols());
    for (i, &r) in rows.iter().enumerate() {
        out.set_row(r, &a.row(i));
    }
    out
}

/// max |a_ij - b_ij|.
pub fn max_abs_diff<T: Real>(a: &CMat<T>, b: &CMat<T>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |m, (x, y)| m.max((x - y).modulus()))
}

pub fn max_abs<T: Real>(a: &CMat<T>) -> T {
    a.iter().fold(T::zero(), |m, x| m.max(x.modulus()))
}
