use crate::error::{invalid, Error, Result};
use crate::linalg::{eig_sym, eig_sym_unchecked, DenseMatrix, Spectrum};
use crate::taskmodel::gram_sum;
use crate::tol;

use super::fixed_point::solve_fixed_point;
use super::{rho_inf, Flagged};

#[derive(Debug, Clone)]
pub struct GeneralSettingParams {
    pub d: usize,
    pub gamma_tgt: f64,
    pub sigma_x: DenseMatrix,
    pub true_relations: Vec<DenseMatrix>,
    pub assumed_relations: Vec<DenseMatrix>,
    pub gamma_srcs: Vec<f64>,
    pub b: f64,
    pub sigma_eta_sq: Vec<f64>,
    pub sigma_xi_sq: Vec<f64>,
    pub sigma_eps_sq: f64,
    /// Limits of (1/d)‖H_j‖_F².
    pub kappa_h: Vec<f64>,
}

/// (1/d)‖H‖_F².
pub fn kappa_of(h: &DenseMatrix) -> f64 {
    h.norm_squared() / h.ncols() as f64
}

impl GeneralSettingParams {
    /// Fills κ_H from the given relations and uses the same noise for every source.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        gamma_tgt: f64,
        sigma_x: DenseMatrix,
        true_relations: Vec<DenseMatrix>,
        assumed_relations: Vec<DenseMatrix>,
        gamma_srcs: Vec<f64>,
        b: f64,
        sigma_eta_sq: f64,
        sigma_xi_sq: f64,
        sigma_eps_sq: f64,
    ) -> Self {
        let m = true_relations.len();
        let kappa_h = true_relations.iter().map(kappa_of).collect();
        GeneralSettingParams {
            d: sigma_x.nrows(),
            gamma_tgt,
            sigma_x,
            true_relations,
            assumed_relations,
            gamma_srcs,
            b,
            sigma_eta_sq: vec![sigma_eta_sq; m],
            sigma_xi_sq: vec![sigma_xi_sq; m],
            sigma_eps_sq,
            kappa_h,
        }
    }

    fn validate(&self) -> Result<()> {
        let m = self.true_relations.len();
        if m == 0 {
            return Err(Error::Empty("relation list"));
        }
        for (what, len) in [
            ("assumed relations", self.assumed_relations.len()),
            ("gamma_srcs", self.gamma_srcs.len()),
            ("sigma_eta_sq", self.sigma_eta_sq.len()),
            ("sigma_xi_sq", self.sigma_xi_sq.len()),
            ("kappa_h", self.kappa_h.len()),
        ] {
            if len != m {
                return Err(Error::Dimension {
                    what,
                    expected: m,
                    got: len,
                });
            }
        }
        if self.sigma_x.shape() != (self.d, self.d) {
            return Err(Error::Dimension {
                what: "Sigma_x",
                expected: self.d,
                got: self.sigma_x.nrows(),
            });
        }
        for h in self.true_relations.iter().chain(&self.assumed_relations) {
            if h.shape() != (self.d, self.d) {
                return Err(Error::Dimension {
                    what: "relation matrix",
                    expected: self.d,
                    got: h.nrows(),
                });
            }
        }
        if !(self.gamma_tgt > 0.0) {
            return Err(invalid("gamma_tgt", "must be > 0"));
        }
        if !(self.b > 0.0) {
            return Err(invalid("b", "must be > 0"));
        }
        Ok(())
    }
}

/// Single-source Γ matrix; infinite at γ_src = 1.
#[allow(clippy::too_many_arguments)]
pub fn gamma_single(
    gamma_src: f64,
    h: &DenseMatrix,
    h_assumed: &DenseMatrix,
    b: f64,
    sigma_eta_sq: f64,
    sigma_xi_sq: f64,
    d: usize,
    kappa_h: f64,
) -> Flagged<DenseMatrix> {
    let df = d as f64;
    let g = gamma_src;
    let delta = h - h_assumed;
    let ddt = &delta * delta.transpose();
    let eye = DenseMatrix::identity(d, d);
    if g < 1.0 {
        Flagged::Finite(eye * ((sigma_eta_sq + g * sigma_xi_sq / (1.0 - g)) / df) + ddt * (b / df))
    } else if g == 1.0 {
        Flagged::Infinite
    } else {
        let hht = h * h.transpose();
        let mut inner = h_assumed * h_assumed.transpose() * g - &hht;
        for k in 0..d {
            inner[(k, k)] += kappa_h - hht[(k, k)] / df;
        }
        Flagged::Finite(
            ddt * (b / (df * g))
                + eye * ((sigma_eta_sq + g * sigma_xi_sq / (g - 1.0)) / (df * g))
                + inner * (b * (g - 1.0) / (df * g * g)),
        )
    }
}

fn inverse_sqrt(r2: &DenseMatrix) -> Result<DenseMatrix> {
    let spec = eig_sym(r2)?;
    let top = spec.values[0];
    let bottom = spec.values[spec.values.len() - 1];
    if !(top > 0.0) || bottom / top <= tol::FULL_RANK {
        return Err(Error::RankDeficient {
            ratio: if top > 0.0 { bottom / top } else { 0.0 },
        });
    }
    Ok(spec.map(|x| 1.0 / x.sqrt()))
}

fn gamma_multi_with(params: &GeneralSettingParams, r_inv: &DenseMatrix) -> Flagged<DenseMatrix> {
    let d = params.d;
    let m = params.true_relations.len();
    let mut a_sum = DenseMatrix::zeros(d, d);
    let mut a_sq = DenseMatrix::zeros(d, d);
    let mut single_sum = DenseMatrix::zeros(d, d);
    for j in 0..m {
        let h = &params.true_relations[j];
        let ht = &params.assumed_relations[j];
        let gs = match gamma_single(
            params.gamma_srcs[j],
            h,
            ht,
            params.b,
            params.sigma_eta_sq[j],
            params.sigma_xi_sq[j],
            d,
            params.kappa_h[j],
        ) {
            Flagged::Finite(g) => g,
            Flagged::Infinite => return Flagged::Infinite,
        };
        let a = ht.tr_mul(&(h * rho_inf(params.gamma_srcs[j]) - ht));
        a_sq += &a * a.transpose();
        a_sum += a;
        single_sum += ht.tr_mul(&(gs * ht));
    }
    let cross = &a_sum * a_sum.transpose() - a_sq;
    let inner = cross * (params.b / d as f64) + single_sum;
    Flagged::Finite(r_inv * inner * r_inv)
}

/// R⁻¹[(b/d) Σ_{j≠l} A_j A_lᵀ + Σ_j H̃_jᵀ Γ_single^j H̃_j]R⁻¹.
pub fn gamma_multi(params: &GeneralSettingParams) -> Result<Flagged<DenseMatrix>> {
    params.validate()?;
    let r_inv = inverse_sqrt(&gram_sum(&params.assumed_relations)?)?;
    Ok(gamma_multi_with(params, &r_inv))
}

/// Quantities that do not depend on α, prepared once.
#[derive(Debug, Clone)]
pub struct GeneralTheory {
    d: usize,
    gamma_tgt: f64,
    sigma_eps_sq: f64,
    w: Spectrum,
    /// Diagonal of VᵀΓ^mV in the eigenbasis of W.
    gamma_diag: Option<Vec<f64>>,
}

impl GeneralTheory {
    pub fn new(params: &GeneralSettingParams) -> Result<Self> {
        params.validate()?;
        let r_inv = inverse_sqrt(&gram_sum(&params.assumed_relations)?)?;
        let w_mat = &r_inv * &params.sigma_x * &r_inv;
        let w = eig_sym_unchecked(&w_mat);
        let gamma_diag = gamma_multi_with(params, &r_inv).finite().map(|g| {
            let gv = &g * &w.vectors;
            (0..params.d)
                .map(|k| w.vectors.column(k).dot(&gv.column(k)))
                .collect()
        });
        Ok(GeneralTheory {
            d: params.d,
            gamma_tgt: params.gamma_tgt,
            sigma_eps_sq: params.sigma_eps_sq,
            w,
            gamma_diag,
        })
    }

    pub fn w_eigenvalues(&self) -> &[f64] {
        self.w.values.as_slice()
    }

    pub fn error(&self, alpha: f64) -> Result<Flagged<f64>> {
        let gd = match &self.gamma_diag {
            Some(g) => g,
            None => return Ok(Flagged::Infinite),
        };
        let w = self.w.values.as_slice();
        let fp = solve_fixed_point(alpha, w, self.gamma_tgt, self.d)?;
        let df = self.d as f64;
        let mut tr_w_omega = 0.0;
        let mut tr_k = 0.0;
        let mut tr_gk = 0.0;
        for (k, &wk) in w.iter().enumerate() {
            let wk = wk.max(0.0);
            let om = fp.c * wk + alpha;
            tr_w_omega += wk / om;
            let kk = wk / (om * om);
            tr_k += kk;
            tr_gk += gd[k] * kk;
        }
        let g = self.gamma_tgt;
        // σ²(1 + γ/d Tr[WΩ⁻¹] + γ s Tr[(α²/(γσ²) Γ − α/d I) Ω⁻¹WΩ⁻¹]) with σ²
        // distributed so that σ² = 0 stays finite.
        let value = self.sigma_eps_sq * (1.0 + g / df * tr_w_omega - g * fp.s * alpha / df * tr_k)
            + fp.s * alpha * alpha * tr_gk;
        Ok(Flagged::Finite(value))
    }
}

/// Expected test error of the transfer estimator at α.
pub fn expected_error_general(params: &GeneralSettingParams, alpha: f64) -> Result<Flagged<f64>> {
    GeneralTheory::new(params)?.error(alpha)
}
