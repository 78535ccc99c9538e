use serde::{Deserialize, Serialize};

use crate::debias::default_alpha_grid;
use crate::error::{invalid, Error, Result};
use crate::linalg::DenseMatrix;
use crate::stats::rng_for;
use crate::taskmodel::{build_covariance, build_relation, CovarianceSpec, TaskRelationSpec};
use crate::theory::{
    optimal_alpha_equal, debias_error_asymptotic, debias_optimal_alpha_equal, error_simple_asymptotic, region,
    GeneralSettingParams, GeneralTheory, RegionFlag, SimpleSettingParams,
};

use super::{
    argmin_first, at_point, default_gamma_grid, sample_count, validate_common, validate_grid, validate_noise,
    AssumedMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoryMode {
    /// Finite-d general-case expected error.
    General,
    /// Limiting error in the simple setting at the limiting optimal α.
    SimpleAsymptotic,
    /// Limiting error of known-size debiasing at its limiting optimal α.
    DebiasAsymptotic,
}

impl TheoryMode {
    pub fn label(self) -> &'static str {
        match self {
            TheoryMode::General => "general",
            TheoryMode::SimpleAsymptotic => "simple_asymptotic",
            TheoryMode::DebiasAsymptotic => "debias_asymptotic",
        }
    }
}

/// α at which the general-case error is evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TheoryAlpha {
    /// Nonasymptotic closed-form optimum for isotropic relations.
    #[default]
    Formula,
    Fixed {
        alpha: f64,
    },
    /// Minimum of the theoretical error over `alpha_grid`.
    GridMin,
}

fn default_d() -> usize {
    128
}
fn default_b() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConfig {
    pub mode: TheoryMode,
    #[serde(default = "default_d")]
    pub d: usize,
    pub gamma_tgt: f64,
    #[serde(default = "default_gamma_grid")]
    pub gamma_src_grid: Vec<f64>,
    pub m_list: Vec<usize>,
    pub sigma_eps_sq: f64,
    pub sigma_eta_sq: f64,
    pub sigma_xi_sq: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default)]
    pub relation: TaskRelationSpec,
    #[serde(default)]
    pub assumed: AssumedMode,
    #[serde(default)]
    pub cov_x: CovarianceSpec,
    #[serde(default)]
    pub alpha: TheoryAlpha,
    #[serde(default = "default_alpha_grid")]
    pub alpha_grid: Vec<f64>,
    /// Seeds the relation draw for random relation specs.
    #[serde(default)]
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryRecord {
    pub gamma_src: f64,
    pub m: usize,
    pub mode: String,
    /// `None` on the threshold band.
    pub error: Option<f64>,
    /// "finite" or "threshold".
    pub flag: String,
    pub alpha: Option<f64>,
}

impl TheoryConfig {
    pub fn validate(&self) -> Result<()> {
        validate_common(self.d, self.gamma_tgt, &self.gamma_src_grid, &self.m_list, &self.relation)?;
        validate_noise(self.sigma_eps_sq, self.sigma_eta_sq, self.sigma_xi_sq, self.b)?;
        self.cov_x.validate()?;
        if self.mode != TheoryMode::General {
            return Ok(());
        }
        if self.assumed == AssumedMode::DebiasTuned {
            return Err(invalid("assumed", "debias_tuned has no closed-form curve"));
        }
        match self.alpha {
            TheoryAlpha::Formula if self.relation != TaskRelationSpec::Identity || !self.cov_x.is_identity() => Err(
                invalid("alpha", "the formula policy requires relation = identity and cov_x = identity"),
            ),
            TheoryAlpha::Fixed { alpha } if !(alpha.is_finite() && alpha > 0.0) => {
                Err(invalid("alpha", format!("{alpha} must be finite and > 0")))
            }
            TheoryAlpha::GridMin => validate_grid("alpha_grid", &self.alpha_grid),
            _ => Ok(()),
        }
    }

    fn simple(&self, gamma_src: f64, m: usize) -> SimpleSettingParams {
        SimpleSettingParams {
            gamma_tgt: self.gamma_tgt,
            gamma_src,
            m,
            b: self.b,
            sigma_eta_sq: self.sigma_eta_sq,
            sigma_xi_sq: self.sigma_xi_sq,
            sigma_eps_sq: self.sigma_eps_sq,
        }
    }
}

fn finite(gamma_src: f64, m: usize, mode: TheoryMode, error: f64, alpha: Option<f64>) -> TheoryRecord {
    TheoryRecord {
        gamma_src,
        m,
        mode: mode.label().to_string(),
        error: Some(error),
        flag: "finite".to_string(),
        alpha,
    }
}

fn threshold(gamma_src: f64, m: usize, mode: TheoryMode) -> TheoryRecord {
    TheoryRecord {
        gamma_src,
        m,
        mode: mode.label().to_string(),
        error: None,
        flag: "threshold".to_string(),
        alpha: None,
    }
}

/// Theory curve over the configured (γ_src, m) grid, γ_src-major.
pub fn theory_curve(cfg: &TheoryConfig) -> Result<Vec<TheoryRecord>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for (gi, &g) in cfg.gamma_src_grid.iter().enumerate() {
        for (mi, &m) in cfg.m_list.iter().enumerate() {
            out.push(curve_point(cfg, gi, mi).map_err(at_point(g, m))?);
        }
    }
    Ok(out)
}

fn curve_point(cfg: &TheoryConfig, gi: usize, mi: usize) -> Result<TheoryRecord> {
    let g = cfg.gamma_src_grid[gi];
    let m = cfg.m_list[mi];
    let mode = cfg.mode;
    let asymptotic = |r: Result<f64>| match r {
        Ok(e) => Ok(finite(g, m, mode, e, None)),
        Err(Error::Threshold(_)) => Ok(threshold(g, m, mode)),
        Err(e) => Err(e),
    };
    match mode {
        TheoryMode::SimpleAsymptotic => asymptotic(error_simple_asymptotic(&cfg.simple(g, m))),
        TheoryMode::DebiasAsymptotic => {
            if g > 1.0 {
                asymptotic(debias_error_asymptotic(&cfg.simple(g, m)))
            } else if g < 1.0 {
                // No overparameterization bias: debiasing leaves the estimator unchanged.
                asymptotic(error_simple_asymptotic(&cfg.simple(g, m)))
            } else {
                Ok(threshold(g, m, mode))
            }
        }
        TheoryMode::General => general_point(cfg, gi, mi),
    }
}

fn general_point(cfg: &TheoryConfig, gi: usize, mi: usize) -> Result<TheoryRecord> {
    let d = cfg.d;
    let g = cfg.gamma_src_grid[gi];
    let m = cfg.m_list[mi];
    let mode = TheoryMode::General;
    let n_tilde = sample_count(d, g);
    let n = sample_count(d, cfg.gamma_tgt);
    if region(n_tilde, d) == RegionFlag::Threshold {
        return Ok(threshold(g, m, mode));
    }
    let mut rng = rng_for(cfg.master_seed, &[gi as u64, mi as u64]);
    let relations = (0..m)
        .map(|_| build_relation(&cfg.relation, d, &mut rng))
        .collect::<Result<Vec<DenseMatrix>>>()?;
    let assumed = cfg
        .assumed
        .assumed_relations(&relations, n_tilde, d)
        .expect("validated mode");
    let params = GeneralSettingParams::new(
        d as f64 / n as f64,
        build_covariance(cfg.cov_x, d)?,
        relations,
        assumed,
        vec![d as f64 / n_tilde as f64; m],
        cfg.b,
        cfg.sigma_eta_sq,
        cfg.sigma_xi_sq,
        cfg.sigma_eps_sq,
    );
    let theory = GeneralTheory::new(&params)?;
    let alpha = match cfg.alpha {
        TheoryAlpha::Fixed { alpha } => alpha,
        TheoryAlpha::Formula => {
            let debiased = matches!(cfg.assumed, AssumedMode::DebiasKnown | AssumedMode::ScaledTrueH);
            if debiased && region(n_tilde, d) == RegionFlag::Overparam {
                debias_optimal_alpha_equal(n_tilde, n, d, cfg.b, cfg.sigma_eta_sq, cfg.sigma_xi_sq, cfg.sigma_eps_sq)?
            } else {
                match optimal_alpha_equal(m, n_tilde, n, d, cfg.b, cfg.sigma_eta_sq, cfg.sigma_xi_sq, cfg.sigma_eps_sq)
                    .finite()
                {
                    Some(a) => a,
                    None => return Ok(threshold(g, m, mode)),
                }
            }
        }
        TheoryAlpha::GridMin => {
            let errs = cfg
                .alpha_grid
                .iter()
                .map(|&a| Ok(theory.error(a)?.finite().unwrap_or(f64::NAN)))
                .collect::<Result<Vec<f64>>>()?;
            match argmin_first(&errs) {
                Some(k) => cfg.alpha_grid[k],
                None => return Ok(threshold(g, m, mode)),
            }
        }
    };
    Ok(match theory.error(alpha)?.finite() {
        Some(e) => finite(g, m, mode, e, Some(alpha)),
        None => threshold(g, m, mode),
    })
}
