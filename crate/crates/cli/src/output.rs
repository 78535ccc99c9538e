use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use tlab_core::experiments::{BiasVarRecord, SweepRecord, TheoryRecord, TuneFactorRecord};

pub const SWEEP_HEADER: [&str; 8] = [
    "gamma_src", "m", "method", "mean_error", "stderr", "mean_alpha", "mean_rho", "n_runs",
];
pub const THEORY_HEADER: [&str; 5] = ["gamma_src", "m", "mode", "error", "flag"];
pub const BIASVAR_HEADER: [&str; 7] = ["gamma_src", "m", "method", "bias_sq", "variance", "total", "residual"];
pub const TUNE_FACTOR_HEADER: [&str; 8] = [
    "gamma_src",
    "m",
    "mean_rho",
    "rho_stderr",
    "inverse_gamma_src",
    "mean_error",
    "stderr",
    "n_runs",
];

/// 17 significant digits; non-finite values become empty cells.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn sweep_rows(recs: &[SweepRecord]) -> Vec<Vec<String>> {
    recs.iter()
        .map(|r| {
            vec![
                num(r.gamma_src),
                r.m.to_string(),
                r.method.clone(),
                num(r.mean_error),
                num(r.stderr),
                opt(r.mean_alpha),
                opt(r.mean_rho),
                r.n_runs.to_string(),
            ]
        })
        .collect()
}

pub fn theory_rows(recs: &[TheoryRecord]) -> Vec<Vec<String>> {
    recs.iter()
        .map(|r| {
            vec![
                num(r.gamma_src),
                r.m.to_string(),
                r.mode.clone(),
                opt(r.error),
                r.flag.clone(),
            ]
        })
        .collect()
}

pub fn biasvar_rows(recs: &[BiasVarRecord]) -> Vec<Vec<String>> {
    recs.iter()
        .map(|r| {
            vec![
                num(r.gamma_src),
                r.m.to_string(),
                r.method.clone(),
                num(r.bias_sq),
                num(r.variance),
                num(r.total),
                num(r.residual),
            ]
        })
        .collect()
}

pub fn tune_factor_rows(recs: &[TuneFactorRecord]) -> Vec<Vec<String>> {
    recs.iter()
        .map(|r| {
            vec![
                num(r.gamma_src),
                r.m.to_string(),
                num(r.mean_rho),
                num(r.rho_stderr),
                num(r.inverse_gamma_src),
                num(r.mean_error),
                num(r.stderr),
                r.n_runs.to_string(),
            ]
        })
        .collect()
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub master_seed: u64,
    pub timestamp: String,
    pub output: String,
    pub config: &'a C,
    pub grids: serde_json::Value,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn write_manifest<C: Serialize>(
    out: &Path,
    command: &str,
    master_seed: u64,
    config: &C,
    grids: serde_json::Value,
) -> Result<()> {
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        master_seed,
        timestamp: chrono::Utc::now().to_rfc3339(),
        output: out.display().to_string(),
        config,
        grids,
    };
    let path = manifest_path(out);
    let mut f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    writeln!(f)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(f64::INFINITY), "");
        assert_eq!(num(f64::NAN), "");
    }

    #[test]
    fn manifest_sits_next_to_output() {
        assert_eq!(manifest_path(Path::new("a/b.csv")), PathBuf::from("a/b.csv.manifest.json"));
    }
}
