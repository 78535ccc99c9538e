//! Analytical engine: fixed points, closed-form errors, optimal
//! hyperparameters, moment formulas and decision conditions.

mod conditions;
mod fixed_point;
mod general;
mod moments;
mod simple;

pub use conditions::{
    debias_beneficial_check, debias_min_models, negative_transfer_check, ConditionReport,
};
pub use fixed_point::{
    shrinkage_operator, solve_c, solve_c_prime, solve_c_spectrum, solve_fixed_point, solve_q0,
    FixedPointSolution,
};
pub use general::{expected_error_general, gamma_multi, gamma_single, GeneralSettingParams, GeneralTheory};
pub use moments::{pretrained_mean_cov, projector_moment_exact, PretrainedMoments};
pub use simple::{
    alpha_inf, c_term, optimal_alpha_equal, debias_alpha_inf, debias_c_term, debias_error_asymptotic,
    debias_optimal_alpha, debias_optimal_alpha_equal, error_nonasym_trace, error_simple_asymptotic,
    optimal_alpha_nonasym, plateau_scale, ridge_optimal, SimpleSettingParams, WishartSample,
};

use serde::{Deserialize, Serialize};

/// A value that may be infinite on a semantic branch (interpolation threshold).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Flagged<T> {
    Finite(T),
    Infinite,
}

impl<T> Flagged<T> {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Flagged::Infinite)
    }

    pub fn finite(self) -> Option<T> {
        match self {
            Flagged::Finite(v) => Some(v),
            Flagged::Infinite => None,
        }
    }

    pub fn as_ref(&self) -> Flagged<&T> {
        match self {
            Flagged::Finite(v) => Flagged::Finite(v),
            Flagged::Infinite => Flagged::Infinite,
        }
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Flagged<U> {
        match self {
            Flagged::Finite(v) => Flagged::Finite(f(v)),
            Flagged::Infinite => Flagged::Infinite,
        }
    }
}

/// Position of a source size relative to the interpolation threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionFlag {
    /// d ≤ ñ − 2
    Underparam,
    /// ñ − 1 ≤ d ≤ ñ + 1
    Threshold,
    /// d ≥ ñ + 2
    Overparam,
}

pub fn region(n_tilde: usize, d: usize) -> RegionFlag {
    if d + 2 <= n_tilde {
        RegionFlag::Underparam
    } else if d >= n_tilde + 2 {
        RegionFlag::Overparam
    } else {
        RegionFlag::Threshold
    }
}

/// Finite-sample overparameterization bias factor.
pub fn rho(n_tilde: usize, d: usize) -> f64 {
    if n_tilde >= d {
        1.0
    } else {
        n_tilde as f64 / d as f64
    }
}

/// Asymptotic overparameterization bias factor.
pub fn rho_inf(gamma_src: f64) -> f64 {
    if gamma_src <= 1.0 {
        1.0
    } else {
        1.0 / gamma_src
    }
}

/// g(−φ; γ), Stieltjes transform of the Marchenko–Pastur law, in the
/// cancellation-free form 2/(√(ζ² + 4γφ) + ζ), ζ = φ + 1 − γ.
pub fn stieltjes_mp(phi: f64, gamma: f64) -> f64 {
    let zeta = phi + 1.0 - gamma;
    let root = (zeta * zeta + 4.0 * gamma * phi).sqrt();
    if zeta >= 0.0 {
        2.0 / (root + zeta)
    } else {
        // root + zeta cancels when ζ < 0; the direct form is stable here.
        (root - zeta) / (2.0 * gamma * phi)
    }
}

/// g(−φ; γ) in the direct (unrationalized) form.
pub fn stieltjes_mp_direct(phi: f64, gamma: f64) -> f64 {
    let zeta = phi + 1.0 - gamma;
    (-zeta + (zeta * zeta + 4.0 * gamma * phi).sqrt()) / (2.0 * gamma * phi)
}
