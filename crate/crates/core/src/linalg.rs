//! Dense real-matrix primitives.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::tol;

pub type DenseMatrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Symmetric eigendecomposition with eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vector,
    pub vectors: DenseMatrix,
}

impl Spectrum {
    /// V diag(f(λ)) Vᵀ.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[k]);
        }
        &scaled * self.vectors.transpose()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.map(|x| x)
    }
}

pub fn ensure_finite(m: &DenseMatrix) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

pub fn ensure_finite_vec(v: &Vector) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn ensure_square(m: &DenseMatrix, what: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension {
            what,
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    Ok(())
}

/// Max |S - Sᵀ| relative to the largest entry.
pub fn asymmetry(s: &DenseMatrix) -> f64 {
    let scale = s.amax().max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for i in 0..s.nrows() {
        for j in (i + 1)..s.ncols() {
            worst = worst.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    worst / scale
}

fn ensure_symmetric(s: &DenseMatrix) -> Result<()> {
    ensure_square(s, "symmetric matrix")?;
    ensure_finite(s)?;
    let a = asymmetry(s);
    if a > tol::SYMMETRY {
        return Err(Error::NotSymmetric(a));
    }
    Ok(())
}

pub fn eig_sym(s: &DenseMatrix) -> Result<Spectrum> {
    ensure_symmetric(s)?;
    Ok(eig_sym_unchecked(s))
}

/// Eigendecomposition of the symmetric part of `s`, skipping validation.
pub(crate) fn eig_sym_unchecked(s: &DenseMatrix) -> Spectrum {
    let sym = (s + s.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let d = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = Vector::from_iterator(d, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DenseMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Spectrum { values, vectors }
}

pub fn sym_psd_sqrt(s: &DenseMatrix) -> Result<DenseMatrix> {
    let spec = eig_sym(s)?;
    let top = spec.values.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let min = spec.values.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -tol::PSD_CLAMP * top.max(1.0) {
        return Err(Error::Indefinite(min));
    }
    Ok(spec.map(|x| x.max(0.0).sqrt()))
}

pub fn pseudoinverse(m: &DenseMatrix) -> Result<DenseMatrix> {
    ensure_finite(m)?;
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Ok(DenseMatrix::zeros(c, r));
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = tol::pinv_cutoff(r, c, smax);
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested Vᵀ");
    let mut out = DenseMatrix::zeros(c, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += (vt.row(k).transpose() / s) * u.column(k).transpose();
        }
    }
    Ok(out)
}

/// Solves S x = rhs for symmetric positive-definite S via Cholesky.
pub fn spd_solve(s: &DenseMatrix, rhs: &Vector) -> Option<Vector> {
    let chol = Cholesky::<f64, Dyn>::new(s.clone())?;
    Some(chol.solve(rhs))
}

/// Smallest over largest eigenvalue of a symmetric PSD matrix.
pub fn min_max_eig_ratio(s: &DenseMatrix) -> f64 {
    let spec = eig_sym_unchecked(s);
    let top = spec.values[0];
    let bottom = spec.values[spec.values.len() - 1];
    if top <= 0.0 {
        0.0
    } else {
        bottom / top
    }
}

/// Z⁺ v computed through the Gram matrix of the smaller side of `z`.
///
/// Equivalent to `pseudoinverse(z) * v` but avoids a full SVD of tall or
/// wide matrices. Falls back to an eigen-based pseudoinverse of the Gram
/// matrix when it is numerically singular.
pub fn min_norm_solve(z: &DenseMatrix, v: &Vector) -> Vector {
    let (r, c) = z.shape();
    if r >= c {
        let g = z.tr_mul(z);
        let rhs = z.tr_mul(v);
        gram_pinv_apply(&g, &rhs, r, c)
    } else {
        let g = z * z.transpose();
        let w = gram_pinv_apply(&g, v, r, c);
        z.tr_mul(&w)
    }
}

fn gram_pinv_apply(g: &DenseMatrix, rhs: &Vector, rows: usize, cols: usize) -> Vector {
    if let Some(chol) = Cholesky::<f64, Dyn>::new(g.clone()) {
        let l = chol.l_dirty();
        let diag_max = (0..l.nrows()).map(|i| l[(i, i)]).fold(0.0f64, f64::max);
        let diag_min = (0..l.nrows()).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
        // Pivots of L are ~singular values of the underlying matrix; stay on
        // the Cholesky path only when the matrix is comfortably full rank.
        if diag_min > 1e3 * tol::pinv_cutoff(rows, cols, diag_max) {
            return chol.solve(rhs);
        }
    }
    let spec = eig_sym_unchecked(g);
    let top = spec.values[0].max(0.0);
    // Gram eigenvalues carry absolute error ~eps * λ_max.
    let cutoff = tol::pinv_cutoff(rows, cols, top);
    let proj = spec.vectors.tr_mul(rhs);
    let mut scaled = proj;
    for (k, x) in scaled.iter_mut().enumerate() {
        let lam = spec.values[k];
        *x = if lam > cutoff { *x / lam } else { 0.0 };
    }
    &spec.vectors * scaled
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eig_sorted_descending() {
        let s = DenseMatrix::from_diagonal(&Vector::from_vec(vec![3.0, 1.0, 2.0]));
        let spec = eig_sym(&s).unwrap();
        assert_eq!(spec.values.as_slice(), &[3.0, 2.0, 1.0]);
    }

    #[test]
    fn asymmetric_rejected() {
        let s = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(eig_sym(&s), Err(Error::NotSymmetric(_))));
        assert!(matches!(sym_psd_sqrt(&s), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn indefinite_rejected() {
        let s = DenseMatrix::from_diagonal(&Vector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(sym_psd_sqrt(&s), Err(Error::Indefinite(_))));
    }

    #[test]
    fn nonfinite_pinv_rejected() {
        let m = DenseMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert_eq!(pseudoinverse(&m), Err(Error::NonFinite));
    }

    #[test]
    fn zero_pinv_is_transposed_zero() {
        let p = pseudoinverse(&DenseMatrix::zeros(2, 3)).unwrap();
        assert_eq!(p.shape(), (3, 2));
        assert_eq!(p.amax(), 0.0);
    }

    #[test]
    fn min_norm_solve_matches_pinv_on_rank_deficient() {
        // rank one 3x3
        let u = Vector::from_vec(vec![1.0, 2.0, -1.0]);
        let z = &u * u.transpose();
        let v = Vector::from_vec(vec![0.5, 1.0, 2.0]);
        let a = min_norm_solve(&z, &v);
        let b = pseudoinverse(&z).unwrap() * &v;
        assert!((a - b).norm() < 1e-10);
    }
}
