mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::json;

use tlab_core::experiments::{
    bias_variance, run_sweep, theory_curve, tune_factor, AssumedMode, BiasVarConfig, SweepConfig,
    TheoryConfig,
};
use tlab_core::theory::{
    debias_beneficial_check, debias_min_models, negative_transfer_check, region, RegionFlag,
};

use output::*;

/// Multi-source transfer learning laboratory.
#[derive(Parser, Debug)]
#[command(name = "tlab", version)]
struct Cli {
    /// Worker threads for Monte-Carlo runs (defaults to all cores).
    #[arg(long, global = true, env = "TLAB_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Empirical error sweep over source sizes and model counts.
    Sweep(RunArgs),
    /// Theoretical error curves.
    Theory(RunArgs),
    /// Empirical bias-variance decomposition.
    Biasvar(RunArgs),
    /// Mean validation-selected debiasing factor per source size.
    TuneFactor(RunArgs),
    /// Evaluate the beneficial-transfer and beneficial-debiasing conditions.
    Check(CheckArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV; the manifest is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the number of Monte-Carlo runs per point.
    #[arg(long)]
    runs: Option<usize>,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(long)]
    d: usize,
    /// Source sample size; alternatively give --gamma-src.
    #[arg(long, required_unless_present = "gamma_src", conflicts_with = "gamma_src")]
    n_tilde: Option<usize>,
    /// Source parameterization level d/ñ; ñ = floor(d/γ).
    #[arg(long)]
    gamma_src: Option<f64>,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    sigma_eta_sq: f64,
    #[arg(long)]
    sigma_xi_sq: f64,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
}

fn load<C: DeserializeOwned>(path: &Path) -> Result<C> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

fn n_of(d: usize, gamma: f64) -> usize {
    (d as f64 / gamma).floor() as usize
}

fn cmd_sweep(args: &RunArgs, tune: bool) -> Result<()> {
    let mut cfg: SweepConfig = load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(runs) = args.runs {
        cfg.runs_per_point = runs;
    }
    if tune {
        cfg.assumed = AssumedMode::DebiasTuned;
    }
    cfg.validate()?;
    let rho_grids: Vec<Vec<f64>> = cfg.gamma_src_grid.iter().map(|&g| cfg.rho_grid_at(g)).collect();
    let grids = json!({
        "gamma_src_grid": cfg.gamma_src_grid,
        "n_tilde": cfg.gamma_src_grid.iter().map(|&g| n_of(cfg.d, g)).collect::<Vec<_>>(),
        "n": n_of(cfg.d, cfg.gamma_tgt),
        "m_list": cfg.m_list,
        "alpha_grid": cfg.alpha_grid,
        "rho_grids": if cfg.assumed == AssumedMode::DebiasTuned { json!(rho_grids) } else { json!(null) },
    });
    if tune {
        let recs = tune_factor(&cfg)?;
        write_csv(&args.out, &TUNE_FACTOR_HEADER, &tune_factor_rows(&recs))?;
        write_manifest(&args.out, "tune-factor", cfg.master_seed, &cfg, grids)
    } else {
        let recs = run_sweep(&cfg)?;
        write_csv(&args.out, &SWEEP_HEADER, &sweep_rows(&recs))?;
        write_manifest(&args.out, "sweep", cfg.master_seed, &cfg, grids)
    }
}

fn cmd_theory(args: &RunArgs) -> Result<()> {
    if args.runs.is_some() {
        bail!("--runs does not apply to theory curves");
    }
    let mut cfg: TheoryConfig = load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    let recs = theory_curve(&cfg)?;
    write_csv(&args.out, &THEORY_HEADER, &theory_rows(&recs))?;
    let alphas: Vec<Option<f64>> = recs.iter().map(|r| r.alpha).collect();
    let grids = json!({
        "gamma_src_grid": cfg.gamma_src_grid,
        "n_tilde": cfg.gamma_src_grid.iter().map(|&g| n_of(cfg.d, g)).collect::<Vec<_>>(),
        "n": n_of(cfg.d, cfg.gamma_tgt),
        "m_list": cfg.m_list,
        "alpha_grid": cfg.alpha_grid,
        "alpha_per_row": alphas,
    });
    write_manifest(&args.out, "theory", cfg.master_seed, &cfg, grids)
}

fn cmd_biasvar(args: &RunArgs) -> Result<()> {
    let mut cfg: BiasVarConfig = load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(runs) = args.runs {
        cfg.main_runs = runs;
    }
    let recs = bias_variance(&cfg)?;
    write_csv(&args.out, &BIASVAR_HEADER, &biasvar_rows(&recs))?;
    let stderrs: Vec<_> = recs
        .iter()
        .map(|r| {
            json!({
                "gamma_src": r.gamma_src, "m": r.m, "method": r.method,
                "bias_sq_stderr": r.bias_sq_stderr, "variance_stderr": r.variance_stderr,
                "total_stderr": r.total_stderr, "residual_stderr": r.residual_stderr,
            })
        })
        .collect();
    let grids = json!({
        "gamma_src_grid": cfg.gamma_src_grid,
        "n_tilde": cfg.gamma_src_grid.iter().map(|&g| n_of(cfg.d, g)).collect::<Vec<_>>(),
        "n": n_of(cfg.d, cfg.gamma_tgt),
        "m_list": cfg.m_list,
        "alpha_grid": cfg.alpha_grid,
        "stderrs": stderrs,
    });
    write_manifest(&args.out, "biasvar", cfg.master_seed, &cfg, grids)
}

fn check_report(a: &CheckArgs) -> Result<String> {
    let n_tilde = match (a.n_tilde, a.gamma_src) {
        (Some(n), _) => n,
        (None, Some(g)) if g > 0.0 => n_of(a.d, g),
        _ => bail!("--gamma-src must be > 0"),
    };
    if a.d == 0 || n_tilde == 0 || a.m == 0 {
        bail!("d, n_tilde and m must be >= 1");
    }
    if !(a.b > 0.0 && a.sigma_eta_sq >= 0.0 && a.sigma_xi_sq >= 0.0) {
        bail!("b must be > 0 and the noise variances >= 0");
    }
    let (d, m) = (a.d, a.m);
    let mut out = format!(
        "parameters: d = {d}, n_tilde = {n_tilde}, m = {m}, b = {}, sigma_eta_sq = {}, sigma_xi_sq = {}\n",
        a.b, a.sigma_eta_sq, a.sigma_xi_sq
    );
    let reg = region(n_tilde, d);
    let label = match reg {
        RegionFlag::Underparam => "underparameterized",
        RegionFlag::Threshold => "interpolation threshold band",
        RegionFlag::Overparam => "overparameterized",
    };
    out += &format!("region: {label}\n");
    if reg == RegionFlag::Threshold {
        out += "flagged: |d - n_tilde| <= 1, the pretrained error is unbounded and both conditions are undefined\n";
        return Ok(out);
    }

    let t = negative_transfer_check(m, n_tilde, d, a.sigma_eta_sq, a.sigma_xi_sq, a.b)?;
    out += "transfer: sigma_eta_sq + d*sigma_xi_sq/(|d - n_tilde| - 1) < b*(m + (m - 1)*(1 - rho))\n";
    out += &format!("  lhs = {}\n  rhs = {}\n", t.lhs, t.rhs);
    out += &format!(
        "  verdict: {}\n",
        if t.holds { "transfer is beneficial" } else { "negative transfer" }
    );
    if m == 1 && reg == RegionFlag::Overparam && a.sigma_eta_sq + a.sigma_xi_sq > a.b {
        out += "  note: negative transfer for all overparameterization levels\n";
    }

    let min_m = debias_min_models(n_tilde, d);
    if reg == RegionFlag::Overparam {
        let r = debias_beneficial_check(m, n_tilde, d, a.sigma_eta_sq, a.sigma_xi_sq, a.b)?;
        out += "debias: (sigma_eta_sq + d*sigma_xi_sq/(d - n_tilde - 1))*(d/n_tilde + 2d/(d - n_tilde)) < (m - 1 - d/n_tilde)*b\n";
        out += &format!("  lhs = {}\n  rhs = {}\n", r.lhs, r.rhs);
        out += &format!(
            "  verdict: {}\n",
            if r.holds { "debiasing is beneficial" } else { "debiasing is not guaranteed beneficial" }
        );
        if m < min_m {
            out += "  note: debiasing cannot be beneficial\n";
        }
    } else {
        out += "debias: not applicable, sources are underparameterized\n";
    }
    out += &format!("minimum m for beneficial debiasing (m > 1 + d/n_tilde): {min_m}\n");
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Sweep(a) => cmd_sweep(a, false),
        Command::TuneFactor(a) => cmd_sweep(a, true),
        Command::Theory(a) => cmd_theory(a),
        Command::Biasvar(a) => cmd_biasvar(a),
        Command::Check(a) => {
            print!("{}", check_report(a)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
