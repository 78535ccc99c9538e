use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::debias::default_alpha_grid;
use crate::error::{invalid, Error, Result};
use crate::estimators::{fit_min_norm_ls, fit_transfer, test_error_mc};
use crate::linalg::{DenseMatrix, Vector};
use crate::stats::{rng_for, McEstimate};
use crate::taskmodel::{build_relation, make_source_theta, sample_beta, CovarianceSpec, DesignSampler, TaskRelationSpec};
use crate::theory::{optimal_alpha_equal, debias_optimal_alpha_equal, region, RegionFlag};

use super::{at_point, sample_count, tune_alpha, validate_common, validate_grid, validate_noise, AssumedMode};

fn default_d() -> usize {
    128
}
fn default_b() -> f64 {
    1.0
}
fn default_methods() -> Vec<AssumedMode> {
    vec![AssumedMode::Identity]
}
fn default_main_runs() -> usize {
    150
}
fn default_sub_runs() -> usize {
    50
}
fn default_holdout() -> usize {
    1000
}

/// Regularization level used inside the bias–variance protocol.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BiasVarAlpha {
    /// Closed-form optimal α for the method (isotropic relations only).
    #[default]
    Formula,
    Fixed {
        alpha: f64,
    },
    /// Validation-tuned per sub-run.
    Tuned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasVarConfig {
    #[serde(default = "default_d")]
    pub d: usize,
    pub gamma_tgt: f64,
    pub gamma_src_grid: Vec<f64>,
    pub m_list: Vec<usize>,
    pub sigma_eps_sq: f64,
    pub sigma_eta_sq: f64,
    pub sigma_xi_sq: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default)]
    pub relation: TaskRelationSpec,
    #[serde(default = "default_methods")]
    pub methods: Vec<AssumedMode>,
    #[serde(default)]
    pub cov_x: CovarianceSpec,
    #[serde(default)]
    pub cov_z: CovarianceSpec,
    #[serde(default = "default_main_runs")]
    pub main_runs: usize,
    #[serde(default = "default_sub_runs")]
    pub sub_runs: usize,
    #[serde(default = "default_holdout")]
    pub val_size: usize,
    #[serde(default = "default_holdout")]
    pub test_size: usize,
    #[serde(default)]
    pub alpha: BiasVarAlpha,
    #[serde(default = "default_alpha_grid")]
    pub alpha_grid: Vec<f64>,
    #[serde(default)]
    pub master_seed: u64,
}

impl BiasVarConfig {
    pub fn validate(&self) -> Result<()> {
        validate_common(self.d, self.gamma_tgt, &self.gamma_src_grid, &self.m_list, &self.relation)?;
        validate_noise(self.sigma_eps_sq, self.sigma_eta_sq, self.sigma_xi_sq, self.b)?;
        if !self.cov_x.is_identity() {
            return Err(invalid("cov_x", "the bias-variance protocol requires Sigma_x = I"));
        }
        self.cov_z.validate()?;
        if self.methods.is_empty() {
            return Err(invalid("methods", "must be nonempty"));
        }
        if self.methods.contains(&AssumedMode::DebiasTuned) {
            return Err(invalid("methods", "debias_tuned is not supported here; use debias_known"));
        }
        if self.main_runs == 0 || self.test_size == 0 || self.val_size == 0 {
            return Err(invalid("main_runs, val_size, test_size", "must be >= 1"));
        }
        if self.sub_runs < 2 {
            return Err(invalid("sub_runs", "must be >= 2 to estimate a covariance"));
        }
        match self.alpha {
            BiasVarAlpha::Formula if self.relation != TaskRelationSpec::Identity => {
                Err(invalid("alpha", "the formula policy requires relation = identity"))
            }
            BiasVarAlpha::Fixed { alpha } if !(alpha.is_finite() && alpha > 0.0) => {
                Err(invalid("alpha", format!("{alpha} must be finite and > 0")))
            }
            BiasVarAlpha::Tuned => validate_grid("alpha_grid", &self.alpha_grid),
            _ => Ok(()),
        }
    }

    fn formula_alpha(&self, method: AssumedMode, m: usize, n_tilde: usize, n: usize) -> Result<f64> {
        let d = self.d;
        let debiased = matches!(method, AssumedMode::DebiasKnown | AssumedMode::ScaledTrueH);
        if debiased && region(n_tilde, d) == RegionFlag::Overparam {
            return debias_optimal_alpha_equal(
                n_tilde,
                n,
                d,
                self.b,
                self.sigma_eta_sq,
                self.sigma_xi_sq,
                self.sigma_eps_sq,
            );
        }
        optimal_alpha_equal(m, n_tilde, n, d, self.b, self.sigma_eta_sq, self.sigma_xi_sq, self.sigma_eps_sq)
            .finite()
            .ok_or_else(|| Error::Threshold(format!("formula alpha at d = {d}, n_tilde = {n_tilde}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVarRecord {
    pub gamma_src: f64,
    pub m: usize,
    pub method: String,
    /// Unbiased estimate of ‖E[β̂] − β‖², averaged over β; may dip below 0.
    pub bias_sq: f64,
    pub bias_sq_stderr: f64,
    pub variance: f64,
    pub variance_stderr: f64,
    pub total: f64,
    pub total_stderr: f64,
    /// |total − σ_ε² − bias² − variance|.
    pub residual: f64,
    pub residual_stderr: f64,
}

struct MainRunStats {
    bias_sq: f64,
    variance: f64,
    total: f64,
    residual: f64,
}

struct BvPoint<'a> {
    cfg: &'a BiasVarConfig,
    gi: usize,
    mi: usize,
    m: usize,
    n_tilde: usize,
    n: usize,
    sampler: DesignSampler,
    z_sampler: DesignSampler,
    alphas: Vec<Option<f64>>,
}

impl BvPoint<'_> {
    fn main_run(&self, k: usize) -> Result<Vec<MainRunStats>> {
        let cfg = self.cfg;
        let d = cfg.d;
        let path = [self.gi as u64, self.mi as u64, k as u64];
        let mut rng = rng_for(cfg.master_seed, &path);
        let beta = sample_beta(cfg.b, d, &mut rng)?;
        let relations = (0..self.m)
            .map(|_| build_relation(&cfg.relation, d, &mut rng))
            .collect::<Result<Vec<DenseMatrix>>>()?;
        let test = self.sampler.dataset(&beta, cfg.sigma_eps_sq, cfg.test_size, &mut rng)?;
        let assumed: Vec<Vec<DenseMatrix>> = cfg
            .methods
            .iter()
            .map(|mode| mode.assumed_relations(&relations, self.n_tilde, d).expect("validated mode"))
            .collect();

        let nm = cfg.methods.len();
        let mut coefs: Vec<Vec<Vector>> = vec![Vec::with_capacity(cfg.sub_runs); nm];
        let mut errors: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.sub_runs); nm];
        for s in 0..cfg.sub_runs {
            let mut rng = rng_for(cfg.master_seed, &[path[0], path[1], path[2], s as u64 + 1]);
            let mut pretrained = Vec::with_capacity(self.m);
            for h in &relations {
                let theta = make_source_theta(&beta, h, cfg.sigma_eta_sq, d, &mut rng)?;
                let src = self.z_sampler.dataset(&theta, cfg.sigma_xi_sq, self.n_tilde, &mut rng)?;
                pretrained.push(fit_min_norm_ls(&src.inputs, &src.outputs)?);
            }
            let train = self.sampler.dataset(&beta, cfg.sigma_eps_sq, self.n, &mut rng)?;
            let val = match cfg.alpha {
                BiasVarAlpha::Tuned => Some(self.sampler.dataset(&beta, cfg.sigma_eps_sq, cfg.val_size, &mut rng)?),
                _ => None,
            };
            for (j, h_tilde) in assumed.iter().enumerate() {
                let fit = |a: f64| {
                    fit_transfer(&train.inputs, &train.outputs, &pretrained, h_tilde, a, self.n).map(|f| f.predictor)
                };
                let alpha = match (self.alphas[j], &val) {
                    (Some(a), _) => a,
                    (None, Some(val)) => tune_alpha(val, &cfg.alpha_grid, fit)?.0,
                    (None, None) => unreachable!("alpha is fixed unless tuned"),
                };
                let pred = fit(alpha)?;
                errors[j].push(test_error_mc(&pred, &test)?);
                coefs[j].push(pred.coef);
            }
        }

        let sf = cfg.sub_runs as f64;
        Ok((0..nm)
            .map(|j| {
                let mut mean = Vector::zeros(d);
                for c in &coefs[j] {
                    mean += c;
                }
                mean /= sf;
                let variance = coefs[j].iter().map(|c| (c - &mean).norm_squared()).sum::<f64>() / (sf - 1.0);
                let bias_sq = (&mean - &beta).norm_squared() - variance / sf;
                let total = errors[j].iter().sum::<f64>() / sf;
                MainRunStats {
                    bias_sq,
                    variance,
                    total,
                    residual: total - cfg.sigma_eps_sq - bias_sq - variance,
                }
            })
            .collect())
    }
}

/// Bias–variance decomposition: β is redrawn per main run, datasets per
/// sub-run. Bias² and variance use unbiased estimators, so the identity
/// total = σ_ε² + bias² + variance holds in expectation.
pub fn bias_variance(cfg: &BiasVarConfig) -> Result<Vec<BiasVarRecord>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for (gi, &gamma_src) in cfg.gamma_src_grid.iter().enumerate() {
        for (mi, &m) in cfg.m_list.iter().enumerate() {
            out.extend(bias_variance_point(cfg, gi, mi).map_err(at_point(gamma_src, m))?);
        }
    }
    Ok(out)
}

fn bias_variance_point(cfg: &BiasVarConfig, gi: usize, mi: usize) -> Result<Vec<BiasVarRecord>> {
    let d = cfg.d;
    let gamma_src = cfg.gamma_src_grid[gi];
    let m = cfg.m_list[mi];
    let n_tilde = sample_count(d, gamma_src);
    let n = sample_count(d, cfg.gamma_tgt);
    let alphas = cfg
        .methods
        .iter()
        .map(|&mode| match cfg.alpha {
            BiasVarAlpha::Formula => cfg.formula_alpha(mode, m, n_tilde, n).map(Some),
            BiasVarAlpha::Fixed { alpha } => Ok(Some(alpha)),
            BiasVarAlpha::Tuned => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    let point = BvPoint {
        cfg,
        gi,
        mi,
        m,
        n_tilde,
        n,
        sampler: DesignSampler::new(CovarianceSpec::Identity, d)?,
        z_sampler: DesignSampler::new(cfg.cov_z, d)?,
        alphas,
    };
    let mains = (0..cfg.main_runs)
        .into_par_iter()
        .map(|k| point.main_run(k))
        .collect::<Result<Vec<_>>>()?;
    Ok(cfg
        .methods
        .iter()
        .enumerate()
        .map(|(j, mode)| {
            let est = |f: fn(&MainRunStats) -> f64| {
                McEstimate::from_samples(&mains.iter().map(|r| f(&r[j])).collect::<Vec<_>>())
            };
            let bias = est(|s| s.bias_sq);
            let var = est(|s| s.variance);
            let total = est(|s| s.total);
            let resid = est(|s| s.residual);
            BiasVarRecord {
                gamma_src,
                m,
                method: mode.label().to_string(),
                bias_sq: bias.mean,
                bias_sq_stderr: bias.stderr,
                variance: var.mean,
                variance_stderr: var.stderr,
                total: total.mean,
                total_stderr: total.stderr,
                residual: resid.mean.abs(),
                residual_stderr: resid.stderr,
            }
        })
        .collect())
}
