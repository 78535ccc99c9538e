use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

use super::{region, rho, RegionFlag};

/// Both sides of a strict inequality `lhs < rhs` and its verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl ConditionReport {
    fn new(lhs: f64, rhs: f64) -> Self {
        ConditionReport {
            lhs,
            rhs,
            holds: lhs < rhs,
        }
    }
}

/// Beneficial-transfer condition: σ_η² + dσ_ξ²/(|d − ñ| − 1) < b(m + (m − 1)(1 − ρ)).
pub fn negative_transfer_check(
    m: usize,
    n_tilde: usize,
    d: usize,
    sigma_eta_sq: f64,
    sigma_xi_sq: f64,
    b: f64,
) -> Result<ConditionReport> {
    if region(n_tilde, d) == RegionFlag::Threshold {
        return Err(Error::Threshold(format!("d = {d}, n_tilde = {n_tilde}")));
    }
    if m == 0 {
        return Err(invalid("m", "must be >= 1"));
    }
    let df = d as f64;
    let gap = (df - n_tilde as f64).abs() - 1.0;
    let mf = m as f64;
    let lhs = sigma_eta_sq + df * sigma_xi_sq / gap;
    let rhs = b * (mf + (mf - 1.0) * (1.0 - rho(n_tilde, d)));
    Ok(ConditionReport::new(lhs, rhs))
}

/// Beneficial-debiasing condition:
/// (σ_η² + dσ_ξ²/(d − ñ − 1))(d/ñ + 2d/(d − ñ)) < (m − 1 − d/ñ) b.
pub fn debias_beneficial_check(
    m: usize,
    n_tilde: usize,
    d: usize,
    sigma_eta_sq: f64,
    sigma_xi_sq: f64,
    b: f64,
) -> Result<ConditionReport> {
    if region(n_tilde, d) != RegionFlag::Overparam {
        return Err(Error::Threshold(format!(
            "debiasing condition needs d >= n_tilde + 2 (d = {d}, n_tilde = {n_tilde})"
        )));
    }
    if n_tilde == 0 {
        return Err(invalid("n_tilde", "must be >= 1"));
    }
    let df = d as f64;
    let nt = n_tilde as f64;
    let t = sigma_eta_sq + df * sigma_xi_sq / (df - nt - 1.0);
    let lhs = t * (df / nt + 2.0 * df / (df - nt));
    let rhs = (m as f64 - 1.0 - df / nt) * b;
    Ok(ConditionReport::new(lhs, rhs))
}

/// Smallest m with m > 1 + d/ñ, a necessary condition for beneficial debiasing.
pub fn debias_min_models(n_tilde: usize, d: usize) -> usize {
    let bound = 1.0 + d as f64 / n_tilde as f64;
    bound.floor() as usize + 1
}
