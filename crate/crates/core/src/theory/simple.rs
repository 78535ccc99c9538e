use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::eig_sym_unchecked;
use crate::stats::{rng_for, McEstimate};
use crate::taskmodel::{standard_normal_matrix, SourceTaskParams};

use super::{region, rho, stieltjes_mp, Flagged, RegionFlag};

/// Parameters of the isotropic, well-specified orthonormal setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimpleSettingParams {
    pub gamma_tgt: f64,
    pub gamma_src: f64,
    pub m: usize,
    pub b: f64,
    pub sigma_eta_sq: f64,
    pub sigma_xi_sq: f64,
    pub sigma_eps_sq: f64,
}

impl SimpleSettingParams {
    fn validate(&self) -> Result<()> {
        if !(self.gamma_tgt > 0.0) {
            return Err(invalid("gamma_tgt", "must be > 0"));
        }
        if !(self.gamma_src > 0.0) {
            return Err(invalid("gamma_src", "must be > 0"));
        }
        if self.m == 0 {
            return Err(invalid("m", "must be >= 1"));
        }
        if !(self.b > 0.0) {
            return Err(invalid("b", "must be > 0"));
        }
        if !(self.sigma_eta_sq >= 0.0 && self.sigma_xi_sq >= 0.0 && self.sigma_eps_sq >= 0.0) {
            return Err(invalid("noise variances", "must be >= 0"));
        }
        Ok(())
    }
}

/// Per-source term C_j of the nonasymptotic optimal α; infinite on the threshold band.
pub fn c_term(n_tilde: usize, d: usize, b: f64, sigma_eta_sq: f64, sigma_xi_sq: f64) -> Flagged<f64> {
    let df = d as f64;
    let nt = n_tilde as f64;
    match region(n_tilde, d) {
        RegionFlag::Underparam => Flagged::Finite(sigma_eta_sq / df + sigma_xi_sq / (nt - df - 1.0)),
        RegionFlag::Threshold => Flagged::Infinite,
        RegionFlag::Overparam => Flagged::Finite(
            (1.0 - nt / df) * (b / df) + (nt / df) * (sigma_eta_sq / df + sigma_xi_sq / (df - nt - 1.0)),
        ),
    }
}

/// Optimal α for m orthonormal well-specified sources with possibly different ñ_j.
pub fn optimal_alpha_nonasym(
    sources: &[SourceTaskParams],
    n: usize,
    d: usize,
    b: f64,
    sigma_eps_sq: f64,
) -> Result<(Flagged<f64>, Vec<Flagged<f64>>)> {
    if sources.is_empty() {
        return Err(Error::Empty("source list"));
    }
    if n == 0 || d == 0 {
        return Err(invalid("n, d", "must be >= 1"));
    }
    let cs: Vec<Flagged<f64>> = sources
        .iter()
        .map(|s| c_term(s.n_tilde, d, b, s.sigma_eta_sq, s.sigma_xi_sq))
        .collect();
    if cs.iter().any(Flagged::is_infinite) {
        return Ok((Flagged::Infinite, cs));
    }
    let c_sum: f64 = cs.iter().map(|c| c.clone().finite().unwrap_or(0.0)).sum();
    let one_minus: Vec<f64> = sources.iter().map(|s| 1.0 - rho(s.n_tilde, d)).collect();
    let mut cross = 0.0;
    for j in 0..one_minus.len() {
        for l in 0..j {
            cross += one_minus[j] * one_minus[l];
        }
    }
    let m = sources.len() as f64;
    let denom = n as f64 * (c_sum + 2.0 * b / d as f64 * cross);
    Ok((Flagged::Finite(m * sigma_eps_sq / denom), cs))
}

/// Optimal α when all sources share ñ.
#[allow(clippy::too_many_arguments)]
pub fn optimal_alpha_equal(
    m: usize,
    n_tilde: usize,
    n: usize,
    d: usize,
    b: f64,
    sigma_eta_sq: f64,
    sigma_xi_sq: f64,
    sigma_eps_sq: f64,
) -> Flagged<f64> {
    c_term(n_tilde, d, b, sigma_eta_sq, sigma_xi_sq).map(|c| {
        let r = rho(n_tilde, d);
        let nf = n as f64;
        sigma_eps_sq / (nf * c + b * nf / d as f64 * (m as f64 - 1.0) * (1.0 - r).powi(2))
    })
}

/// dσ_ε²/(nb).
pub fn ridge_optimal(d: usize, n: usize, b: f64, sigma_eps_sq: f64) -> f64 {
    d as f64 * sigma_eps_sq / (n as f64 * b)
}

/// Eigenvalues of XᵀX for independent isotropic Gaussian designs, reusable
/// across scales so that comparisons are paired.
#[derive(Debug, Clone)]
pub struct WishartSample {
    pub n: usize,
    pub d: usize,
    /// One vector of d eigenvalues (zeros included) per draw.
    pub eigenvalues: Vec<Vec<f64>>,
}

impl WishartSample {
    pub fn new(n: usize, d: usize, draws: usize, seed: u64) -> Self {
        let eigenvalues = (0..draws)
            .into_par_iter()
            .map(|k| {
                let mut rng = rng_for(seed, &[k as u64]);
                let x = standard_normal_matrix(n, d, &mut rng);
                let gram = if n >= d { x.tr_mul(&x) } else { &x * x.transpose() };
                let spec = eig_sym_unchecked(&gram);
                let mut ev: Vec<f64> = spec.values.iter().map(|l| l.max(0.0)).collect();
                ev.resize(d, 0.0);
                ev
            })
            .collect();
        WishartSample { n, d, eigenvalues }
    }

    /// σ² + E Σ_k (σ²λ_k + q)/(λ_k + shift)².
    pub fn error_general(&self, shift: f64, q: f64, sigma_eps_sq: f64) -> McEstimate {
        let per: Vec<f64> = self
            .eigenvalues
            .iter()
            .map(|ev| {
                sigma_eps_sq
                    + ev
                        .iter()
                        .map(|&l| (sigma_eps_sq * l + q) / (l + shift).powi(2))
                        .sum::<f64>()
            })
            .collect();
        McEstimate::from_samples(&per)
    }

    /// σ²(1 + E Tr[(XᵀX + scale·I)⁻¹]).
    pub fn trace_error(&self, scale: f64, sigma_eps_sq: f64) -> McEstimate {
        let per: Vec<f64> = self
            .eigenvalues
            .iter()
            .map(|ev| sigma_eps_sq * (1.0 + ev.iter().map(|&l| 1.0 / (l + scale)).sum::<f64>()))
            .collect();
        McEstimate::from_samples(&per)
    }
}

/// Monte-Carlo estimate of σ²(1 + E Tr[(XᵀX + scale·I)⁻¹]).
pub fn error_nonasym_trace<R: Rng + ?Sized>(
    scale: f64,
    n: usize,
    d: usize,
    sigma_eps_sq: f64,
    mc_draws: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(invalid("scale", "must be finite and > 0"));
    }
    if mc_draws == 0 {
        return Err(invalid("mc_draws", "must be >= 1"));
    }
    let seed = rng.next_u64();
    Ok(WishartSample::new(n, d, mc_draws, seed).trace_error(scale, sigma_eps_sq))
}

/// Limiting optimal α in the simple setting.
pub fn alpha_inf(p: &SimpleSettingParams) -> Result<f64> {
    p.validate()?;
    let g = p.gamma_src;
    let base = p.sigma_eps_sq * p.gamma_tgt;
    if g < 1.0 {
        Ok(base / (p.sigma_eta_sq + g * p.sigma_xi_sq / (1.0 - g)))
    } else if g == 1.0 {
        Err(Error::Threshold("gamma_src = 1".into()))
    } else {
        let m1 = p.m as f64 - 1.0;
        let den = (g - 1.0) / g * p.b
            + m1 * p.b * ((1.0 - g) / g).powi(2)
            + (p.sigma_eta_sq + g * p.sigma_xi_sq / (g - 1.0)) / g;
        Ok(base / den)
    }
}

/// σ²(1 + γ_tgt·g(−m α_∞; γ_tgt)).
pub fn error_simple_asymptotic(p: &SimpleSettingParams) -> Result<f64> {
    let a = alpha_inf(p)?;
    Ok(p.sigma_eps_sq * (1.0 + p.gamma_tgt * stieltjes_mp(p.m as f64 * a, p.gamma_tgt)))
}

/// lim_{m→∞} m α_∞ for overparameterized sources.
pub fn plateau_scale(gamma_tgt: f64, gamma_src: f64, b: f64, sigma_eps_sq: f64) -> Result<f64> {
    if !(gamma_src > 1.0) {
        return Err(invalid("gamma_src", "plateau exists only for gamma_src > 1"));
    }
    Ok(sigma_eps_sq * gamma_tgt / (b * ((1.0 - gamma_src) / gamma_src).powi(2)))
}

/// Debiased per-source term C_deb,j; requires d ≥ ñ + 2.
pub fn debias_c_term(n_tilde: usize, d: usize, b: f64, sigma_eta_sq: f64, sigma_xi_sq: f64) -> Result<f64> {
    if region(n_tilde, d) != RegionFlag::Overparam {
        return Err(Error::Threshold(format!(
            "debiasing needs d >= n_tilde + 2 (d = {d}, n_tilde = {n_tilde})"
        )));
    }
    let df = d as f64;
    let r = n_tilde as f64 / df;
    Ok(r * ((1.0 - r) * b / df + sigma_eta_sq / df + sigma_xi_sq / (df - n_tilde as f64 - 1.0)))
}

/// Optimal α for debiased transfer; also returns the C_deb,j.
pub fn debias_optimal_alpha(
    sources: &[SourceTaskParams],
    n: usize,
    d: usize,
    b: f64,
    sigma_eps_sq: f64,
) -> Result<(f64, Vec<f64>)> {
    if sources.is_empty() {
        return Err(Error::Empty("source list"));
    }
    let cs = sources
        .iter()
        .map(|s| debias_c_term(s.n_tilde, d, b, s.sigma_eta_sq, s.sigma_xi_sq))
        .collect::<Result<Vec<f64>>>()?;
    let sq: Vec<f64> = sources.iter().map(|s| (s.n_tilde as f64).powi(2)).collect();
    let num = sigma_eps_sq * sq.iter().sum::<f64>();
    let den = n as f64 * sq.iter().zip(&cs).map(|(a, c)| a * c).sum::<f64>();
    Ok((num / den, cs))
}

/// σ²/(n C_deb) for sources sharing ñ.
pub fn debias_optimal_alpha_equal(
    n_tilde: usize,
    n: usize,
    d: usize,
    b: f64,
    sigma_eta_sq: f64,
    sigma_xi_sq: f64,
    sigma_eps_sq: f64,
) -> Result<f64> {
    Ok(sigma_eps_sq / (n as f64 * debias_c_term(n_tilde, d, b, sigma_eta_sq, sigma_xi_sq)?))
}

/// Limiting optimal α for debiased transfer.
pub fn debias_alpha_inf(p: &SimpleSettingParams) -> Result<f64> {
    p.validate()?;
    let g = p.gamma_src;
    if !(g > 1.0) {
        return Err(invalid("gamma_src", "debiasing applies to gamma_src > 1"));
    }
    Ok(p.gamma_tgt * p.sigma_eps_sq * g
        / ((g - 1.0) / g * p.b + p.sigma_eta_sq + g / (g - 1.0) * p.sigma_xi_sq))
}

/// σ²(1 + γ_tgt·g(−m α_deb,∞/γ_src²; γ_tgt)).
pub fn debias_error_asymptotic(p: &SimpleSettingParams) -> Result<f64> {
    let a = debias_alpha_inf(p)?;
    let phi = p.m as f64 * a / (p.gamma_src * p.gamma_src);
    Ok(p.sigma_eps_sq * (1.0 + p.gamma_tgt * stieltjes_mp(phi, p.gamma_tgt)))
}
