//! Dense kernels: sorted thin SVD, sign-fixed QR orthonormalization,
//! column-space residuals and a few Frobenius helpers.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative cutoff below which singular values are set to exactly zero.
pub const SINGULAR_VALUE_CUTOFF: f64 = 1e-14;

/// Thin SVD `A = P Σ Qᵀ` of a tall `l × r` matrix.
#[derive(Clone, Debug)]
pub struct ThinSvd {
    /// `l × r`, orthonormal columns.
    pub left: DMatrix<f64>,
    /// Nonincreasing, entries below `cutoff·σ_max` replaced by `0`.
    pub sigma: Vec<f64>,
    /// `r × r` orthogonal.
    pub right: DMatrix<f64>,
}

/// Computed as Householder QR followed by one-sided Jacobi on the `r × r`
/// triangular factor. The bidiagonal SVD in nalgebra returns inconsistent
/// factors on a few percent of exactly rank-deficient inputs, which are
/// routine here once columns are thresholded to zero.
pub fn thin_svd(a: &DMatrix<f64>, cutoff: f64) -> Result<ThinSvd> {
    let (l, r) = a.shape();
    if l < r {
        return Err(Error::Dimension(format!("thin SVD expects a tall matrix, got {l}x{r}")));
    }
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::Svd("input contains non-finite entries".into()));
    }
    let qr = a.clone().qr();
    let (q, rfac) = (qr.q(), qr.r());
    let (w, raw_sigma, v) = jacobi_svd(rfac)?;

    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&x, &y| raw_sigma[y].total_cmp(&raw_sigma[x]).then(x.cmp(&y)));
    let mut left = DMatrix::zeros(l, r);
    let mut right = DMatrix::zeros(r, r);
    let mut sigma = Vec::with_capacity(r);
    for (dst, &src) in order.iter().enumerate() {
        let s = raw_sigma[src];
        if s > 0.0 {
            left.set_column(dst, &(&q * (w.column(src) / s)));
        }
        right.set_column(dst, &v.column(src));
        sigma.push(s);
    }
    let smax = sigma.first().copied().unwrap_or(0.0);
    for s in &mut sigma {
        if *s <= cutoff * smax {
            *s = 0.0;
        }
    }
    let keep = sigma.iter().take_while(|&&s| s > 0.0).count();
    complete_orthonormal(&mut left, keep);
    complete_orthonormal(&mut right, keep);
    Ok(ThinSvd { left, sigma, right })
}

/// One-sided Jacobi: rotates column pairs of `w` until they are mutually
/// orthogonal, accumulating the rotations in `v`. Returns `(W V, σ, V)` with
/// `σ_j = ‖(W V)_j‖`, unsorted.
fn jacobi_svd(mut w: DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    const MAX_SWEEPS: usize = 100;
    let n = w.ncols();
    let mut v = DMatrix::identity(n, n);
    let rotate = |m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64| {
        for i in 0..m.nrows() {
            let (a, b) = (m[(i, p)], m[(i, q)]);
            m[(i, p)] = c * a - s * b;
            m[(i, q)] = s * a + c * b;
        }
    };
    let tol = f64::EPSILON * n.max(1) as f64;
    // Columns this small are roundoff far below any singular value cutoff.
    let negligible = (1e-3 * f64::EPSILON * w.norm()).powi(2);
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if alpha <= negligible || beta <= negligible || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + 1f64.hypot(zeta));
                let c = 1.0 / 1f64.hypot(t);
                rotate(&mut w, p, q, c, c * t);
                rotate(&mut v, p, q, c, c * t);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Svd(format!(
            "Jacobi sweeps did not converge on a {n}x{n} factor"
        )));
    }
    let sigma = w.column_iter().map(|c| c.norm()).collect();
    Ok((w, sigma, v))
}

/// Singular values of any matrix, nonincreasing.
pub fn singular_values(x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let svd = if x.nrows() >= x.ncols() {
        thin_svd(x, 0.0)?
    } else {
        thin_svd(&x.transpose(), 0.0)?
    };
    Ok(svd.sigma)
}

/// Replaces columns `keep..` of `q` by an orthonormal completion of the
/// (assumed orthonormal) first `keep` columns, unless `q` already has
/// orthonormal columns.
pub fn complete_orthonormal(q: &mut DMatrix<f64>, keep: usize) {
    let r = q.ncols();
    let gram = q.transpose() * &*q;
    if (gram - DMatrix::identity(r, r)).norm() <= 1e-10 {
        return;
    }
    let l = q.nrows();
    let mut filled = keep;
    let mut basis = 0;
    while filled < r && basis < l {
        let mut v = DMatrix::zeros(l, 1);
        v[(basis, 0)] = 1.0;
        basis += 1;
        // Two passes of Gram-Schmidt.
        for _ in 0..2 {
            for k in 0..filled {
                let c = q.column(k).dot(&v.column(0));
                v.column_mut(0).axpy(-c, &q.column(k), 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            q.set_column(filled, &(v.column(0) / norm));
            filled += 1;
        }
    }
}

/// Orthonormal basis of `col(A)` by Householder QR, with the sign of each
/// column chosen so that `R` has a nonnegative diagonal.
pub fn orthonormalize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = a.clone().qr();
    let mut q = qr.q();
    let rmat = qr.r();
    for k in 0..q.ncols() {
        if rmat[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}

/// `l × r` matrix of independent standard normals, filled column by column.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, l: usize, r: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(l, r);
    for j in 0..r {
        for i in 0..l {
            out[(i, j)] = rng.sample(StandardNormal);
        }
    }
    out
}

/// `‖(I − Π_{col(B)}) A‖_F`, the projector built from the singular vectors
/// of `B` whose singular values exceed `rank_tol·σ_max`.
pub fn colspace_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, rank_tol: f64) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "column spaces live in different spaces: {} vs {} rows",
            a.nrows(),
            b.nrows()
        )));
    }
    if b.ncols() == 0 {
        return Ok(a.norm());
    }
    // For a wide B, col(B) is spanned by the right vectors of Bᵀ.
    let (svd, from_right) = if b.nrows() >= b.ncols() {
        (thin_svd(b, rank_tol)?, false)
    } else {
        (thin_svd(&b.transpose(), rank_tol)?, true)
    };
    let rank = svd.sigma.iter().filter(|&&s| s > 0.0).count();
    let basis = if from_right {
        svd.right.columns(0, rank).into_owned()
    } else {
        svd.left.columns(0, rank).into_owned()
    };
    let coeffs = basis.transpose() * a;
    Ok((a - basis * coeffs).norm())
}

/// `‖A Bᵀ − C Dᵀ‖_F` without forming either product: with `[A, −C] = Q R`,
/// the difference equals `Q (R [B, D]ᵀ)`, whose norm is that of `R [B, D]ᵀ`.
pub fn product_distance(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    let (n, r1) = a.shape();
    let r2 = c.ncols();
    let mut left = DMatrix::zeros(n, r1 + r2);
    left.columns_mut(0, r1).copy_from(a);
    left.columns_mut(r1, r2).copy_from(&(-c));
    let m = b.nrows();
    let mut right = DMatrix::zeros(m, r1 + r2);
    right.columns_mut(0, r1).copy_from(b);
    right.columns_mut(r1, r2).copy_from(d);
    if n < r1 + r2 {
        return (left * right.transpose()).norm();
    }
    let rfac = left.qr().r();
    (rfac * right.transpose()).norm()
}

/// `‖A Bᵀ‖_F` without forming the product.
pub fn product_norm(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let ga = a.transpose() * a;
    let gb = b.transpose() * b;
    ga.component_mul(&gb).sum().max(0.0).sqrt()
}

/// Indices of columns whose norm exceeds `rel_tol` times the largest column
/// norm.
pub fn nonzero_columns(w: &DMatrix<f64>, rel_tol: f64) -> Vec<usize> {
    let norms: Vec<f64> = w.column_iter().map(|c| c.norm()).collect();
    let max = norms.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Vec::new();
    }
    norms
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > rel_tol * max)
        .map(|(k, _)| k)
        .collect()
}

/// `diag(d)` as a dense matrix.
pub fn diag(d: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d))
}

/// `A · diag(d)`.
pub fn scale_columns(a: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let mut out = a.clone();
    for (k, mut col) in out.column_iter_mut().enumerate() {
        col *= d[k];
    }
    out
}
