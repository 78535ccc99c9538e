use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Vector};

use super::{region, rho, Flagged, RegionFlag};

#[derive(Debug, Clone)]
pub struct PretrainedMoments {
    pub mean: Vector,
    pub cov: Flagged<DenseMatrix>,
}

/// Conditional mean and covariance of a min-norm pretrained model given β.
pub fn pretrained_mean_cov(
    beta: &Vector,
    h: &DenseMatrix,
    n_tilde: usize,
    d: usize,
    sigma_eta_sq: f64,
    sigma_xi_sq: f64,
) -> Result<PretrainedMoments> {
    if h.shape() != (d, beta.len()) {
        return Err(Error::Dimension {
            what: "relation matrix",
            expected: d,
            got: h.nrows(),
        });
    }
    let theta = h * beta;
    let df = d as f64;
    let nt = n_tilde as f64;
    let mean = &theta * rho(n_tilde, d);
    let cov = match region(n_tilde, d) {
        RegionFlag::Underparam => Flagged::Finite(
            DenseMatrix::identity(d, d) * (sigma_eta_sq / df + sigma_xi_sq / (nt - df - 1.0)),
        ),
        RegionFlag::Threshold => Flagged::Infinite,
        RegionFlag::Overparam => {
            let norm_sq = theta.norm_squared();
            let mut c = &theta * theta.transpose() * ((df - nt) / (df * (df + 1.0)));
            let diag_coef = (df - nt) / (df * df - 1.0);
            let noise = sigma_eta_sq / df + sigma_xi_sq / (df - nt - 1.0);
            for k in 0..d {
                c[(k, k)] += diag_coef * (norm_sq - theta[k] * theta[k]) + noise;
            }
            Flagged::Finite(c * (nt / df))
        }
    };
    Ok(PretrainedMoments { mean, cov })
}

/// Exact finite-d covariance of Z⁺(Zθ + ξ) for isotropic Gaussian Z (k × d,
/// k ≤ d − 2), θ = Hβ + η, using the Haar moments of a uniformly random
/// rank-k projector. Diagnostic reference for `pretrained_mean_cov`.
pub fn projector_moment_exact(
    beta: &Vector,
    h: &DenseMatrix,
    n_tilde: usize,
    d: usize,
    sigma_eta_sq: f64,
    sigma_xi_sq: f64,
) -> Result<DenseMatrix> {
    if region(n_tilde, d) != RegionFlag::Overparam {
        return Err(Error::Threshold(format!(
            "exact projector moment needs d >= n_tilde + 2 (d = {d}, n_tilde = {n_tilde})"
        )));
    }
    let theta = h * beta;
    let df = d as f64;
    let k = n_tilde as f64;
    let r = k / df;
    let bp = k * (df - k) / (df * (df + 2.0) * (df - 1.0));
    let a = r - df * bp;
    let mut c = &theta * theta.transpose() * (a - r * r);
    let iso = bp * theta.norm_squared() + r * (sigma_eta_sq / df + sigma_xi_sq / (df - k - 1.0));
    for i in 0..d {
        c[(i, i)] += iso;
    }
    Ok(c)
}
