use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::debias::{default_alpha_grid, default_rho_grid, tune_validation, DebiasGrid};
use crate::error::{invalid, Result};
use crate::estimators::{
    fit_min_norm_ls, fit_ridge, fit_transfer, mse, null_predictor, pretrained_pull, test_error_analytic,
    test_error_mc, LinearPredictor, PenaltyPath,
};
use crate::linalg::{DenseMatrix, Vector};
use crate::stats::{rng_for, McEstimate};
use crate::taskmodel::{
    build_covariance, build_relation, gram_sum, make_source_theta, sample_beta, CovarianceSpec, Dataset,
    DesignSampler, TaskRelationSpec,
};
use crate::theory::{region, rho, ridge_optimal, GeneralSettingParams, GeneralTheory, RegionFlag};

use super::{
    argmin_first, at_point, default_gamma_grid, sample_count, validate_common, validate_grid, validate_noise,
    AssumedMode, BASELINE_LABELS,
};

fn default_d() -> usize {
    128
}
fn default_b() -> f64 {
    1.0
}
fn default_runs() -> usize {
    200
}
fn default_holdout() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
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
    pub cov_z: CovarianceSpec,
    #[serde(default = "default_runs")]
    pub runs_per_point: usize,
    #[serde(default = "default_holdout")]
    pub val_size: usize,
    #[serde(default = "default_holdout")]
    pub test_size: usize,
    #[serde(default = "default_alpha_grid")]
    pub alpha_grid: Vec<f64>,
    /// Factor grid for `debias_tuned`; defaults per point to the standard grid
    /// including 1/γ_src.
    #[serde(default)]
    pub rho_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub master_seed: u64,
    /// Evaluate the general-case expected error at each run's selected α.
    #[serde(default)]
    pub theory_overlay: bool,
}

impl SweepConfig {
    /// Config with every default filled in.
    pub fn new(gamma_tgt: f64, m_list: Vec<usize>, sigma_eps_sq: f64, sigma_eta_sq: f64, sigma_xi_sq: f64) -> Self {
        SweepConfig {
            d: default_d(),
            gamma_tgt,
            gamma_src_grid: default_gamma_grid(),
            m_list,
            sigma_eps_sq,
            sigma_eta_sq,
            sigma_xi_sq,
            b: default_b(),
            relation: TaskRelationSpec::Identity,
            assumed: AssumedMode::Identity,
            cov_x: CovarianceSpec::Identity,
            cov_z: CovarianceSpec::Identity,
            runs_per_point: default_runs(),
            val_size: default_holdout(),
            test_size: default_holdout(),
            alpha_grid: default_alpha_grid(),
            rho_grid: None,
            master_seed: 0,
            theory_overlay: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_common(self.d, self.gamma_tgt, &self.gamma_src_grid, &self.m_list, &self.relation)?;
        validate_noise(self.sigma_eps_sq, self.sigma_eta_sq, self.sigma_xi_sq, self.b)?;
        self.cov_x.validate()?;
        self.cov_z.validate()?;
        for (name, v) in [
            ("runs_per_point", self.runs_per_point),
            ("val_size", self.val_size),
            ("test_size", self.test_size),
        ] {
            if v == 0 {
                return Err(invalid(name, "must be >= 1"));
            }
        }
        validate_grid("alpha_grid", &self.alpha_grid)?;
        if let Some(r) = &self.rho_grid {
            validate_grid("rho_grid", r)?;
        }
        Ok(())
    }

    pub fn rho_grid_at(&self, gamma_src: f64) -> Vec<f64> {
        self.rho_grid
            .clone()
            .unwrap_or_else(|| default_rho_grid(&[gamma_src]))
    }
}

/// Outcome of one method in one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    /// Test-set MSE.
    pub error: f64,
    /// σ_ε² + (β̂ − β)ᵀΣ_x(β̂ − β).
    pub analytic_error: f64,
    pub alpha: Option<f64>,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub transfer: MethodRun,
    /// In `BASELINE_LABELS` order; present for the first m of each source level.
    pub baselines: Option<Vec<MethodRun>>,
    /// Expected error at the selected α, when requested and defined.
    pub theory: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub gamma_src: f64,
    pub m: usize,
    pub n_tilde: usize,
    pub n: usize,
    pub method: String,
    pub runs: Vec<RunOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub gamma_src: f64,
    /// 0 for baselines, which use no sources.
    pub m: usize,
    pub method: String,
    pub mean_error: f64,
    pub stderr: f64,
    pub mean_alpha: Option<f64>,
    pub mean_rho: Option<f64>,
    pub n_runs: usize,
    pub mean_analytic_error: f64,
    pub mean_theory: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneFactorRecord {
    pub gamma_src: f64,
    pub m: usize,
    pub mean_rho: f64,
    pub rho_stderr: f64,
    pub inverse_gamma_src: f64,
    pub mean_error: f64,
    pub stderr: f64,
    pub n_runs: usize,
}

fn summarize(gamma_src: f64, m: usize, method: &str, runs: &[MethodRun], theory: &[Option<f64>]) -> SweepRecord {
    let err = McEstimate::from_samples(&runs.iter().map(|r| r.error).collect::<Vec<_>>());
    let analytic = McEstimate::from_samples(&runs.iter().map(|r| r.analytic_error).collect::<Vec<_>>());
    let mean_of = |xs: Vec<Option<f64>>| -> Option<f64> {
        let v: Option<Vec<f64>> = xs.into_iter().collect();
        v.filter(|v| !v.is_empty())
            .map(|v| McEstimate::from_samples(&v).mean)
    };
    SweepRecord {
        gamma_src,
        m,
        method: method.to_string(),
        mean_error: err.mean,
        stderr: err.stderr,
        mean_alpha: mean_of(runs.iter().map(|r| r.alpha).collect()),
        mean_rho: mean_of(runs.iter().map(|r| r.rho).collect()),
        n_runs: runs.len(),
        mean_analytic_error: analytic.mean,
        mean_theory: mean_of(theory.to_vec()),
    }
}

impl PointResult {
    pub fn transfer_errors(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.transfer.error).collect()
    }

    /// Transfer row followed by baseline rows when they were computed.
    pub fn records(&self) -> Vec<SweepRecord> {
        let transfer: Vec<MethodRun> = self.runs.iter().map(|r| r.transfer).collect();
        let theory: Vec<Option<f64>> = self.runs.iter().map(|r| r.theory).collect();
        let mut out = vec![summarize(self.gamma_src, self.m, &self.method, &transfer, &theory)];
        if self.runs.first().is_some_and(|r| r.baselines.is_some()) {
            for (k, label) in BASELINE_LABELS.iter().enumerate() {
                let runs: Vec<MethodRun> = self
                    .runs
                    .iter()
                    .filter_map(|r| r.baselines.as_ref().map(|b| b[k]))
                    .collect();
                out.push(summarize(self.gamma_src, 0, label, &runs, &[]));
            }
        }
        out
    }
}

/// How the transfer penalty maps onto a `PenaltyPath`.
enum PathForm {
    /// H̃_j = s·I for all j: a = nα·m·s², c = nα·s with R0² = I, t0 = Σθ̂.
    Scalar(f64),
    /// General H̃_j: a = c = nα with R0² = ΣH̃ᵀH̃, t0 = ΣH̃ᵀθ̂.
    General,
}

struct PointContext<'a> {
    cfg: &'a SweepConfig,
    gi: usize,
    mi: usize,
    gamma_src: f64,
    m: usize,
    n_tilde: usize,
    n: usize,
    x_sampler: DesignSampler,
    z_sampler: DesignSampler,
    sigma_x: DenseMatrix,
    fixed_relation: Option<DenseMatrix>,
    debias_grid: Option<DebiasGrid>,
    theory_cache: Option<Vec<Option<f64>>>,
    baselines: bool,
}

impl<'a> PointContext<'a> {
    fn new(cfg: &'a SweepConfig, gi: usize, mi: usize, baselines: bool) -> Result<Self> {
        let d = cfg.d;
        let gamma_src = cfg.gamma_src_grid[gi];
        let m = cfg.m_list[mi];
        let n_tilde = sample_count(d, gamma_src);
        let n = sample_count(d, cfg.gamma_tgt);
        let fixed_relation = if cfg.relation.is_deterministic() {
            // Deterministic relations draw nothing from the generator.
            Some(build_relation(&cfg.relation, d, &mut rng_for(cfg.master_seed, &[]))?)
        } else {
            None
        };
        let debias_grid = if cfg.assumed == AssumedMode::DebiasTuned {
            Some(DebiasGrid::new(cfg.alpha_grid.clone(), cfg.rho_grid_at(gamma_src))?)
        } else {
            None
        };
        let mut ctx = PointContext {
            cfg,
            gi,
            mi,
            gamma_src,
            m,
            n_tilde,
            n,
            x_sampler: DesignSampler::new(cfg.cov_x, d)?,
            z_sampler: DesignSampler::new(cfg.cov_z, d)?,
            sigma_x: build_covariance(cfg.cov_x, d)?,
            fixed_relation,
            debias_grid,
            theory_cache: None,
            baselines,
        };
        if ctx.theory_enabled() {
            if let Some(h) = &ctx.fixed_relation {
                let relations = vec![h.clone(); m];
                let theory = ctx.theory_for(&relations)?;
                ctx.theory_cache = Some(
                    cfg.alpha_grid
                        .iter()
                        .map(|&a| theory.error(a).map(|e| e.finite()))
                        .collect::<Result<_>>()?,
                );
            }
        }
        Ok(ctx)
    }

    fn theory_enabled(&self) -> bool {
        self.cfg.theory_overlay
            && self.cfg.assumed != AssumedMode::DebiasTuned
            && region(self.n_tilde, self.cfg.d) != RegionFlag::Threshold
    }

    fn theory_for(&self, relations: &[DenseMatrix]) -> Result<GeneralTheory> {
        let d = self.cfg.d;
        let assumed = self
            .cfg
            .assumed
            .assumed_relations(relations, self.n_tilde, d)
            .expect("theory is skipped for tuned factors");
        let params = GeneralSettingParams::new(
            d as f64 / self.n as f64,
            self.sigma_x.clone(),
            relations.to_vec(),
            assumed,
            vec![d as f64 / self.n_tilde as f64; relations.len()],
            self.cfg.b,
            self.cfg.sigma_eta_sq,
            self.cfg.sigma_xi_sq,
            self.cfg.sigma_eps_sq,
        );
        GeneralTheory::new(&params)
    }

    fn relation<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DenseMatrix> {
        match &self.fixed_relation {
            Some(h) => Ok(h.clone()),
            None => build_relation(&self.cfg.relation, self.cfg.d, rng),
        }
    }

    fn eval(&self, pred: &LinearPredictor, beta: &Vector, test: &Dataset) -> Result<(f64, f64)> {
        Ok((
            test_error_mc(pred, test)?,
            test_error_analytic(pred, beta, &self.sigma_x, self.cfg.sigma_eps_sq)?,
        ))
    }

    fn run_once(&self, run: usize) -> Result<RunOutcome> {
        let cfg = self.cfg;
        let d = cfg.d;
        let mut rng = rng_for(cfg.master_seed, &[self.gi as u64, self.mi as u64, run as u64]);
        let beta = sample_beta(cfg.b, d, &mut rng)?;
        let mut relations = Vec::with_capacity(self.m);
        let mut pretrained = Vec::with_capacity(self.m);
        for _ in 0..self.m {
            let h = self.relation(&mut rng)?;
            let theta = make_source_theta(&beta, &h, cfg.sigma_eta_sq, d, &mut rng)?;
            let src = self.z_sampler.dataset(&theta, cfg.sigma_xi_sq, self.n_tilde, &mut rng)?;
            pretrained.push(fit_min_norm_ls(&src.inputs, &src.outputs)?);
            relations.push(h);
        }
        let train = self.x_sampler.dataset(&beta, cfg.sigma_eps_sq, self.n, &mut rng)?;
        let val = self.x_sampler.dataset(&beta, cfg.sigma_eps_sq, cfg.val_size, &mut rng)?;
        let test = self.x_sampler.dataset(&beta, cfg.sigma_eps_sq, cfg.test_size, &mut rng)?;

        let (transfer, theory) = match &self.debias_grid {
            Some(grid) => {
                let sel = tune_validation(&train, &val, &pretrained, grid, self.n)?;
                let (error, analytic_error) = self.eval(&sel.fit.predictor, &beta, &test)?;
                let run = MethodRun {
                    error,
                    analytic_error,
                    alpha: Some(sel.alpha),
                    rho: Some(sel.rho),
                };
                (run, None)
            }
            None => {
                let assumed = cfg
                    .assumed
                    .assumed_relations(&relations, self.n_tilde, d)
                    .expect("non-tuned mode");
                let form = match cfg.assumed {
                    AssumedMode::Identity => PathForm::Scalar(1.0),
                    AssumedMode::DebiasKnown => PathForm::Scalar(rho(self.n_tilde, d)),
                    _ => PathForm::General,
                };
                let k = self.tune_transfer(&train, &val, &pretrained, &assumed, form)?;
                let alpha = cfg.alpha_grid[k];
                let fit = fit_transfer(&train.inputs, &train.outputs, &pretrained, &assumed, alpha, self.n)?;
                let (error, analytic_error) = self.eval(&fit.predictor, &beta, &test)?;
                let theory = if !self.theory_enabled() {
                    None
                } else if let Some(cache) = &self.theory_cache {
                    cache[k]
                } else {
                    self.theory_for(&relations)?.error(alpha)?.finite()
                };
                let run = MethodRun {
                    error,
                    analytic_error,
                    alpha: Some(alpha),
                    rho: None,
                };
                (run, theory)
            }
        };

        let baselines = if self.baselines && self.mi == 0 {
            Some(self.baselines(&train, &val, &test, &beta)?)
        } else {
            None
        };
        Ok(RunOutcome {
            transfer,
            baselines,
            theory,
        })
    }

    /// Index into the α grid minimizing validation error of the transfer fit.
    fn tune_transfer(
        &self,
        train: &Dataset,
        val: &Dataset,
        pretrained: &[LinearPredictor],
        assumed: &[DenseMatrix],
        form: PathForm,
    ) -> Result<usize> {
        let nf = self.n as f64;
        let mf = pretrained.len() as f64;
        let (path, scale) = match form {
            PathForm::Scalar(s) => {
                let mut sum = Vector::zeros(self.cfg.d);
                for p in pretrained {
                    sum += &p.coef;
                }
                (PenaltyPath::new(&train.inputs, &train.outputs, None, &sum)?, Some(s))
            }
            PathForm::General => {
                let r2 = gram_sum(assumed)?;
                let t0 = pretrained_pull(pretrained, assumed);
                (PenaltyPath::new(&train.inputs, &train.outputs, Some(&r2), &t0)?, None)
            }
        };
        let design = path.design(&val.inputs);
        let errs: Vec<f64> = self
            .cfg
            .alpha_grid
            .iter()
            .map(|&a| {
                let (sa, sc) = match scale {
                    Some(s) => (nf * a * mf * s * s, nf * a * s),
                    None => (nf * a, nf * a),
                };
                mse(&path.predict(&design, sa, sc), &val.outputs)
            })
            .collect();
        argmin_first(&errs).ok_or(crate::Error::NonFinite)
    }

    fn baselines(&self, train: &Dataset, val: &Dataset, test: &Dataset, beta: &Vector) -> Result<Vec<MethodRun>> {
        let cfg = self.cfg;
        let d = cfg.d;
        let nf = self.n as f64;
        let mut out = Vec::with_capacity(4);

        let ls = fit_min_norm_ls(&train.inputs, &train.outputs)?;
        out.push(self.method_run(&ls, beta, test, None)?);

        let path = PenaltyPath::new(&train.inputs, &train.outputs, None, &Vector::zeros(d))?;
        let design = path.design(&val.inputs);
        let errs: Vec<f64> = cfg
            .alpha_grid
            .iter()
            .map(|&a| mse(&path.predict(&design, nf * a, 0.0), &val.outputs))
            .collect();
        let alpha = cfg.alpha_grid[argmin_first(&errs).ok_or(crate::Error::NonFinite)?];
        let tuned = fit_ridge(&train.inputs, &train.outputs, alpha, self.n)?;
        out.push(self.method_run(&tuned, beta, test, Some(alpha))?);

        let alpha = ridge_optimal(d, self.n, cfg.b, cfg.sigma_eps_sq);
        let formula = if alpha > 0.0 {
            fit_ridge(&train.inputs, &train.outputs, alpha, self.n)?
        } else {
            // Noiseless targets: the optimal ridge limit is the min-norm solution.
            ls.clone()
        };
        out.push(self.method_run(&formula, beta, test, Some(alpha))?);

        out.push(self.method_run(&null_predictor(d), beta, test, None)?);
        Ok(out)
    }

    fn method_run(&self, pred: &LinearPredictor, beta: &Vector, test: &Dataset, alpha: Option<f64>) -> Result<MethodRun> {
        let (error, analytic_error) = self.eval(pred, beta, test)?;
        Ok(MethodRun {
            error,
            analytic_error,
            alpha,
            rho: None,
        })
    }
}

fn run_point_inner(cfg: &SweepConfig, gi: usize, mi: usize, baselines: bool) -> Result<PointResult> {
    let ctx = PointContext::new(cfg, gi, mi, baselines)?;
    let runs = (0..cfg.runs_per_point)
        .into_par_iter()
        .map(|r| ctx.run_once(r))
        .collect::<Result<Vec<_>>>()?;
    Ok(PointResult {
        gamma_src: ctx.gamma_src,
        m: ctx.m,
        n_tilde: ctx.n_tilde,
        n: ctx.n,
        method: cfg.assumed.label().to_string(),
        runs,
    })
}

/// All runs at (γ_src index, m index). Runs execute in parallel and are
/// collected in index order.
pub fn run_point(cfg: &SweepConfig, gi: usize, mi: usize) -> Result<PointResult> {
    cfg.validate()?;
    if gi >= cfg.gamma_src_grid.len() || mi >= cfg.m_list.len() {
        return Err(invalid("point index", "outside the configured grids"));
    }
    run_point_inner(cfg, gi, mi, true)
        .map_err(at_point(cfg.gamma_src_grid[gi], cfg.m_list[mi]))
}

fn points(cfg: &SweepConfig, baselines: bool) -> Result<Vec<PointResult>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.gamma_src_grid.len() * cfg.m_list.len());
    for (gi, &g) in cfg.gamma_src_grid.iter().enumerate() {
        for (mi, &m) in cfg.m_list.iter().enumerate() {
            out.push(run_point_inner(cfg, gi, mi, baselines).map_err(at_point(g, m))?);
        }
    }
    Ok(out)
}

/// Per-run results for every grid point, γ_src-major.
pub fn run_sweep_points(cfg: &SweepConfig) -> Result<Vec<PointResult>> {
    points(cfg, true)
}

/// One record per (γ_src, m) for the transfer estimator plus four baseline
/// records per γ_src.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRecord>> {
    Ok(run_sweep_points(cfg)?
        .iter()
        .flat_map(PointResult::records)
        .collect())
}

/// Validation-tuned debiasing factor per grid point, next to 1/γ_src.
pub fn tune_factor(cfg: &SweepConfig) -> Result<Vec<TuneFactorRecord>> {
    let mut cfg = cfg.clone();
    cfg.assumed = AssumedMode::DebiasTuned;
    cfg.theory_overlay = false;
    Ok(points(&cfg, false)?
        .iter()
        .map(|p| {
            let rhos: Vec<f64> = p.runs.iter().filter_map(|r| r.transfer.rho).collect();
            let r = McEstimate::from_samples(&rhos);
            let e = McEstimate::from_samples(&p.transfer_errors());
            TuneFactorRecord {
                gamma_src: p.gamma_src,
                m: p.m,
                mean_rho: r.mean,
                rho_stderr: r.stderr,
                inverse_gamma_src: 1.0 / p.gamma_src,
                mean_error: e.mean,
                stderr: e.stderr,
                n_runs: p.runs.len(),
            }
        })
        .collect())
}
