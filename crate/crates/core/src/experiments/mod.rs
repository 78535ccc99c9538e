//! Seeded Monte-Carlo harness: parameter sweeps with tuned hyperparameters,
//! baselines, bias–variance decomposition and theory curves.

mod biasvar;
mod curves;
mod sweep;

pub use biasvar::{bias_variance, BiasVarAlpha, BiasVarConfig, BiasVarRecord};
pub use curves::{theory_curve, TheoryAlpha, TheoryConfig, TheoryMode, TheoryRecord};
pub use sweep::{
    run_point, run_sweep, run_sweep_points, tune_factor, MethodRun, PointResult, RunOutcome,
    SweepConfig, SweepRecord, TuneFactorRecord,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{mse, LinearPredictor};
use crate::linalg::DenseMatrix;
use crate::taskmodel::{Dataset, TaskRelationSpec};
use crate::theory::rho;

/// How the transfer estimator forms its assumed relations H̃_j.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumedMode {
    /// H̃_j = I.
    #[default]
    Identity,
    /// H̃_j = H_j.
    TrueH,
    /// H̃_j = ρ(ñ_j, d)·I.
    DebiasKnown,
    /// H̃_j = ρ̃·I with (α, ρ̃) tuned on validation data.
    DebiasTuned,
    /// H̃_j = ρ(ñ_j, d)·H_j.
    ScaledTrueH,
}

impl AssumedMode {
    pub fn label(self) -> &'static str {
        match self {
            AssumedMode::Identity => "transfer_identity",
            AssumedMode::TrueH => "transfer_true_h",
            AssumedMode::DebiasKnown => "transfer_debias_known",
            AssumedMode::DebiasTuned => "transfer_debias_tuned",
            AssumedMode::ScaledTrueH => "transfer_scaled_true_h",
        }
    }

    /// Assumed relations for this mode, or `None` for `DebiasTuned`.
    pub fn assumed_relations(
        self,
        true_relations: &[DenseMatrix],
        n_tilde: usize,
        d: usize,
    ) -> Option<Vec<DenseMatrix>> {
        let r = rho(n_tilde, d);
        let eye = DenseMatrix::identity(d, d);
        match self {
            AssumedMode::Identity => Some(vec![eye; true_relations.len()]),
            AssumedMode::TrueH => Some(true_relations.to_vec()),
            AssumedMode::DebiasKnown => Some(vec![eye * r; true_relations.len()]),
            AssumedMode::ScaledTrueH => Some(true_relations.iter().map(|h| h * r).collect()),
            AssumedMode::DebiasTuned => None,
        }
    }
}

pub const BASELINE_LABELS: [&str; 4] = ["min_norm_ls", "ridge_tuned", "ridge_formula", "null"];

/// 25 source levels in [0.1, 5.1], geometrically spaced in |γ − 1| on each
/// side of the threshold so that points cluster near γ = 1.
pub fn default_gamma_grid() -> Vec<f64> {
    let below = crate::debias::log_grid(0.9, 0.05, 12);
    let above = crate::debias::log_grid(0.05, 4.1, 13);
    below
        .iter()
        .map(|g| 1.0 - g)
        .chain(above.iter().map(|g| 1.0 + g))
        .collect()
}

/// Index of the first minimum, so ties go to the earlier (smaller) grid value.
pub fn argmin_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some(b) if values[b] <= *v => {}
            _ => best = Some(k),
        }
    }
    best
}

/// α from `alpha_grid` minimizing validation MSE of `fit_fn(α)`; ties go to
/// the smaller α. Returns the selection and its validation error.
pub fn tune_alpha<F>(val: &Dataset, alpha_grid: &[f64], mut fit_fn: F) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<LinearPredictor>,
{
    validate_grid("alpha_grid", alpha_grid)?;
    if val.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let errs = alpha_grid
        .iter()
        .map(|&a| Ok(mse(&fit_fn(a)?.predict(&val.inputs), &val.outputs)))
        .collect::<Result<Vec<f64>>>()?;
    let k = argmin_first(&errs).ok_or(Error::NonFinite)?;
    Ok((alpha_grid[k], errs[k]))
}

pub(crate) fn validate_grid(name: &'static str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid(name, "must be nonempty"));
    }
    if grid.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(invalid(name, "entries must be finite and > 0"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(name, "must be strictly ascending"));
    }
    Ok(())
}

pub(crate) fn validate_source_grid(name: &'static str, grid: &[f64], d: usize) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid(name, "must be nonempty"));
    }
    for &g in grid {
        if !(g.is_finite() && g > 0.0) {
            return Err(invalid(name, format!("{g} must be finite and > 0")));
        }
        if sample_count(d, g) == 0 {
            return Err(invalid(name, format!("{g} leaves no samples at d = {d}")));
        }
    }
    Ok(())
}

pub(crate) fn validate_noise(eps: f64, eta: f64, xi: f64, b: f64) -> Result<()> {
    for (name, v) in [("sigma_eps_sq", eps), ("sigma_eta_sq", eta), ("sigma_xi_sq", xi)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(invalid(name, format!("{v} must be finite and >= 0")));
        }
    }
    if !(b.is_finite() && b > 0.0) {
        return Err(invalid("b", format!("{b} must be finite and > 0")));
    }
    Ok(())
}

pub(crate) fn validate_common(
    d: usize,
    gamma_tgt: f64,
    gamma_src_grid: &[f64],
    m_list: &[usize],
    relation: &TaskRelationSpec,
) -> Result<()> {
    if d < 2 {
        return Err(invalid("d", "must be >= 2"));
    }
    if !(gamma_tgt.is_finite() && gamma_tgt > 0.0) || sample_count(d, gamma_tgt) == 0 {
        return Err(invalid("gamma_tgt", format!("{gamma_tgt} leaves no target samples")));
    }
    validate_source_grid("gamma_src_grid", gamma_src_grid, d)?;
    if m_list.is_empty() || m_list.contains(&0) {
        return Err(invalid("m_list", "must be nonempty with entries >= 1"));
    }
    relation.validate(d)
}

/// ⌊d/γ⌋.
pub fn sample_count(d: usize, gamma: f64) -> usize {
    (d as f64 / gamma).floor() as usize
}

fn at_point(gamma_src: f64, m: usize) -> impl Fn(Error) -> Error {
    move |e| Error::AtPoint {
        gamma_src,
        m,
        source: Box::new(e),
    }
}
