//! Overparameterization debiasing: known-size scaling and validation-tuned factors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{fit_transfer, mse, LinearPredictor, PenaltyPath, TransferFit};
use crate::linalg::{DenseMatrix, Vector};
use crate::taskmodel::Dataset;
use crate::theory::rho;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasGrid {
    pub alpha_grid: Vec<f64>,
    pub rho_grid: Vec<f64>,
}

pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (count - 1) as f64))
        .collect()
}

pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count)
        .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
        .collect()
}

/// 30 log-spaced values in [1e-4, 1e2].
pub fn default_alpha_grid() -> Vec<f64> {
    log_grid(1e-4, 1e2, 30)
}

/// 20 values in [0.05, 1.5], plus 1 and 1/γ_src for every given source level.
pub fn default_rho_grid(gamma_srcs: &[f64]) -> Vec<f64> {
    let mut g = linear_grid(0.05, 1.5, 20);
    g.push(1.0);
    g.extend(gamma_srcs.iter().filter(|&&x| x > 0.0).map(|x| 1.0 / x));
    g.sort_by(f64::total_cmp);
    g.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    g
}

impl DebiasGrid {
    pub fn new(alpha_grid: Vec<f64>, rho_grid: Vec<f64>) -> Result<Self> {
        let g = DebiasGrid {
            alpha_grid,
            rho_grid,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        check_grid("alpha_grid", &self.alpha_grid)?;
        check_grid("rho_grid", &self.rho_grid)
    }
}

pub(crate) fn check_grid(name: &'static str, g: &[f64]) -> Result<()> {
    if g.is_empty() {
        return Err(Error::Empty(name));
    }
    if g.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(invalid(name, "entries must be finite and > 0"));
    }
    if g.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(name, "must be strictly ascending"));
    }
    Ok(())
}

/// H̃_j = ρ(ñ_j, d)·I.
pub fn debias_relations_known(n_tildes: &[usize], d: usize) -> Vec<DenseMatrix> {
    n_tildes
        .iter()
        .map(|&nt| DenseMatrix::identity(d, d) * rho(nt, d))
        .collect()
}

#[derive(Debug, Clone)]
pub struct FactorSelection {
    pub alpha: f64,
    pub rho: f64,
    pub val_error: f64,
    pub fit: TransferFit,
}

/// Validation errors for every (ρ̃, α) pair, ρ̃-major.
pub fn validation_surface(
    train: &Dataset,
    val: &Dataset,
    pretrained: &[LinearPredictor],
    grids: &DebiasGrid,
    n: usize,
) -> Result<Vec<f64>> {
    grids.validate()?;
    if val.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    if pretrained.is_empty() {
        return Err(Error::Empty("pretrained model list"));
    }
    let d = train.inputs.ncols();
    let m = pretrained.len() as f64;
    let mut sum = Vector::zeros(d);
    for p in pretrained {
        if p.dim() != d {
            return Err(Error::Dimension {
                what: "pretrained model",
                expected: d,
                got: p.dim(),
            });
        }
        sum += &p.coef;
    }
    let path = PenaltyPath::new(&train.inputs, &train.outputs, None, &sum)?;
    let design = path.design(&val.inputs);
    let nf = n as f64;
    let pairs: Vec<(f64, f64)> = grids
        .rho_grid
        .iter()
        .flat_map(|&r| grids.alpha_grid.iter().map(move |&a| (r, a)))
        .collect();
    Ok(pairs
        .par_iter()
        .map(|&(r, a)| {
            let pred = path.predict(&design, nf * a * m * r * r, nf * a * r);
            mse(&pred, &val.outputs)
        })
        .collect())
}

/// Exhaustive (α, ρ̃) search with H̃_j = ρ̃·I for every source.
pub fn tune_validation(
    train: &Dataset,
    val: &Dataset,
    pretrained: &[LinearPredictor],
    grids: &DebiasGrid,
    n: usize,
) -> Result<FactorSelection> {
    let errs = validation_surface(train, val, pretrained, grids, n)?;
    let na = grids.alpha_grid.len();
    let mut best = 0usize;
    for (k, e) in errs.iter().enumerate() {
        if *e < errs[best] {
            best = k;
        }
    }
    let rho = grids.rho_grid[best / na];
    let alpha = grids.alpha_grid[best % na];
    let d = train.inputs.ncols();
    let relations = vec![DenseMatrix::identity(d, d) * rho; pretrained.len()];
    let fit = fit_transfer(&train.inputs, &train.outputs, pretrained, &relations, alpha, n)?;
    Ok(FactorSelection {
        alpha,
        rho,
        val_error: errs[best],
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_factors() {
        let h = debias_relations_known(&[64, 256, 128], 128);
        assert_eq!(h[0][(0, 0)], 0.5);
        assert_eq!(h[1][(5, 5)], 1.0);
        assert_eq!(h[2][(7, 7)], 1.0);
        assert_eq!(h[0][(0, 1)], 0.0);
    }

    #[test]
    fn default_grids() {
        let a = default_alpha_grid();
        assert_eq!(a.len(), 30);
        assert!((a[0] - 1e-4).abs() < 1e-18 && (a[29] - 1e2).abs() < 1e-10);
        let r = default_rho_grid(&[4.0]);
        assert!(r.contains(&1.0) && r.contains(&0.25));
        assert!(r.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn unsorted_grid_rejected() {
        assert!(DebiasGrid::new(vec![1.0, 0.5], vec![1.0]).is_err());
        assert!(DebiasGrid::new(vec![], vec![1.0]).is_err());
    }
}
