//! Learning rules: min-norm least squares, ridge, Tikhonov, null and the
//! multi-source transfer closed form.

use nalgebra::{Cholesky, Dyn};

use crate::error::{invalid, Error, Result};
use crate::linalg::{eig_sym_unchecked, ensure_finite, ensure_finite_vec, min_max_eig_ratio, min_norm_solve, spd_solve, DenseMatrix, Vector};
use crate::taskmodel::{gram_sum, Dataset};
use crate::tol;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearPredictor {
    pub coef: Vector,
}

impl LinearPredictor {
    pub fn new(coef: Vector) -> Result<Self> {
        ensure_finite_vec(&coef)?;
        Ok(LinearPredictor { coef })
    }

    pub fn dim(&self) -> usize {
        self.coef.len()
    }

    pub fn predict(&self, inputs: &DenseMatrix) -> Vector {
        inputs * &self.coef
    }
}

#[derive(Debug, Clone)]
pub struct TransferFit {
    pub predictor: LinearPredictor,
    pub alpha: f64,
    pub assumed_relations: Vec<DenseMatrix>,
}

fn check_xy(x: &DenseMatrix, y: &Vector) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension {
            what: "response length",
            expected: x.nrows(),
            got: y.len(),
        });
    }
    ensure_finite(x)?;
    ensure_finite_vec(y)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(invalid("alpha", format!("{alpha} must be finite and > 0")))
    }
}

/// Z⁺v.
pub fn fit_min_norm_ls(z: &DenseMatrix, v: &Vector) -> Result<LinearPredictor> {
    check_xy(z, v)?;
    LinearPredictor::new(min_norm_solve(z, v))
}

/// (XᵀX + nαI)⁻¹Xᵀy.
pub fn fit_ridge(x: &DenseMatrix, y: &Vector, alpha: f64, n: usize) -> Result<LinearPredictor> {
    check_xy(x, y)?;
    check_alpha(alpha)?;
    let d = x.ncols();
    let mut a = x.tr_mul(x);
    for i in 0..d {
        a[(i, i)] += n as f64 * alpha;
    }
    let coef = spd_solve(&a, &x.tr_mul(y)).ok_or(Error::Indefinite(f64::NAN))?;
    LinearPredictor::new(coef)
}

fn check_penalty_rank(r2: &DenseMatrix) -> Result<()> {
    let ratio = min_max_eig_ratio(r2);
    if ratio > tol::FULL_RANK {
        Ok(())
    } else {
        Err(Error::RankDeficient { ratio })
    }
}

fn check_transfer_inputs(
    x: &DenseMatrix,
    pretrained: &[LinearPredictor],
    relations: &[DenseMatrix],
) -> Result<()> {
    if pretrained.is_empty() {
        return Err(Error::Empty("pretrained model list"));
    }
    if pretrained.len() != relations.len() {
        return Err(Error::Dimension {
            what: "relation list",
            expected: pretrained.len(),
            got: relations.len(),
        });
    }
    let d = x.ncols();
    for (p, h) in pretrained.iter().zip(relations) {
        if h.nrows() != p.dim() || h.ncols() != d {
            return Err(Error::Dimension {
                what: "assumed relation shape",
                expected: d,
                got: if h.ncols() != d { h.ncols() } else { h.nrows() },
            });
        }
    }
    Ok(())
}

/// Σ_j H̃_jᵀθ̂_j.
pub fn pretrained_pull(pretrained: &[LinearPredictor], relations: &[DenseMatrix]) -> Vector {
    let d = relations[0].ncols();
    let mut t = Vector::zeros(d);
    for (p, h) in pretrained.iter().zip(relations) {
        t += h.tr_mul(&p.coef);
    }
    t
}

/// (XᵀX + nαR²)⁻¹(Xᵀy + nα Σ_j H̃_jᵀθ̂_j) with R² = Σ_j H̃_jᵀH̃_j.
pub fn fit_transfer(
    x: &DenseMatrix,
    y: &Vector,
    pretrained: &[LinearPredictor],
    relations: &[DenseMatrix],
    alpha: f64,
    n: usize,
) -> Result<TransferFit> {
    check_xy(x, y)?;
    check_alpha(alpha)?;
    check_transfer_inputs(x, pretrained, relations)?;
    let r2 = gram_sum(relations)?;
    check_penalty_rank(&r2)?;
    let na = n as f64 * alpha;
    let a = x.tr_mul(x) + &r2 * na;
    let rhs = x.tr_mul(y) + pretrained_pull(pretrained, relations) * na;
    let coef = spd_solve(&a, &rhs).ok_or(Error::RankDeficient { ratio: 0.0 })?;
    Ok(TransferFit {
        predictor: LinearPredictor::new(coef)?,
        alpha,
        assumed_relations: relations.to_vec(),
    })
}

/// (XᵀX + nαRᵀR)⁻¹Xᵀy.
pub fn fit_tikhonov(
    x: &DenseMatrix,
    y: &Vector,
    r: &DenseMatrix,
    alpha: f64,
    n: usize,
) -> Result<LinearPredictor> {
    check_xy(x, y)?;
    check_alpha(alpha)?;
    if r.ncols() != x.ncols() {
        return Err(Error::Dimension {
            what: "Tikhonov operator columns",
            expected: x.ncols(),
            got: r.ncols(),
        });
    }
    let rtr = r.tr_mul(r);
    check_penalty_rank(&rtr)?;
    let a = x.tr_mul(x) + rtr * (n as f64 * alpha);
    let coef = spd_solve(&a, &x.tr_mul(y)).ok_or(Error::RankDeficient { ratio: 0.0 })?;
    LinearPredictor::new(coef)
}

pub fn null_predictor(d: usize) -> LinearPredictor {
    LinearPredictor {
        coef: Vector::zeros(d),
    }
}

/// Penalized objective: ‖y − Xb‖² + nα Σ_j ‖H̃_j b − θ̂_j‖².
pub fn transfer_objective(
    x: &DenseMatrix,
    y: &Vector,
    pretrained: &[LinearPredictor],
    relations: &[DenseMatrix],
    alpha: f64,
    n: usize,
    b: &Vector,
) -> f64 {
    let fit = (y - x * b).norm_squared();
    let pen: f64 = pretrained
        .iter()
        .zip(relations)
        .map(|(p, h)| (h * b - &p.coef).norm_squared())
        .sum();
    fit + n as f64 * alpha * pen
}

/// σ_ε² + (β̂ − β)ᵀΣ_x(β̂ − β).
pub fn test_error_analytic(
    pred: &LinearPredictor,
    beta: &Vector,
    sigma_x: &DenseMatrix,
    sigma_eps_sq: f64,
) -> Result<f64> {
    if pred.dim() != beta.len() || sigma_x.nrows() != beta.len() || sigma_x.ncols() != beta.len() {
        return Err(Error::Dimension {
            what: "analytic error operands",
            expected: beta.len(),
            got: pred.dim(),
        });
    }
    let e = &pred.coef - beta;
    Ok(sigma_eps_sq + e.dot(&(sigma_x * &e)))
}

/// Mean squared prediction error over a test set.
pub fn test_error_mc(pred: &LinearPredictor, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    if test.inputs.ncols() != pred.dim() {
        return Err(Error::Dimension {
            what: "test inputs",
            expected: pred.dim(),
            got: test.inputs.ncols(),
        });
    }
    Ok(mse(&pred.predict(&test.inputs), &test.outputs))
}

pub fn mse(pred: &Vector, truth: &Vector) -> f64 {
    (pred - truth).norm_squared() / truth.len() as f64
}

/// Precomputed solver for the family (XᵀX + a·R0²)⁻¹(Xᵀy + c·t0) over many
/// (a, c) pairs.
///
/// With R0² = LLᵀ and X̃ = XL⁻ᵀ the system becomes
/// L⁻ᵀ(X̃ᵀX̃ + aI)⁻¹L⁻¹(Xᵀy + c·t0), and one eigendecomposition of the smaller
/// Gram matrix of X̃ serves every shift a.
#[derive(Debug, Clone)]
pub struct PenaltyPath {
    chol: Option<Cholesky<f64, Dyn>>,
    v: DenseMatrix,
    lam: Vec<f64>,
    full: bool,
    u_y: Vector,
    u_t: Vector,
    vt_uy: Vector,
    vt_ut: Vector,
}

/// Design projected onto a `PenaltyPath` for cheap repeated predictions.
#[derive(Debug, Clone)]
pub struct PathDesign {
    mv: DenseMatrix,
    m_uy: Vector,
    m_ut: Vector,
}

impl PenaltyPath {
    /// `r0sq = None` means R0² = I.
    pub fn new(x: &DenseMatrix, y: &Vector, r0sq: Option<&DenseMatrix>, t0: &Vector) -> Result<Self> {
        check_xy(x, y)?;
        let d = x.ncols();
        if t0.len() != d {
            return Err(Error::Dimension {
                what: "penalty target",
                expected: d,
                got: t0.len(),
            });
        }
        let xty = x.tr_mul(y);
        let (chol, xt, u_y, u_t) = match r0sq {
            None => (None, x.clone(), xty, t0.clone()),
            Some(r2) => {
                check_penalty_rank(r2)?;
                let chol = Cholesky::new(r2.clone()).ok_or(Error::RankDeficient { ratio: 0.0 })?;
                let l = chol.l();
                let xt = l
                    .solve_lower_triangular(&x.transpose())
                    .expect("nonsingular factor")
                    .transpose();
                let u_y = l.solve_lower_triangular(&xty).expect("nonsingular factor");
                let u_t = l.solve_lower_triangular(t0).expect("nonsingular factor");
                (Some(chol), xt, u_y, u_t)
            }
        };
        let n = xt.nrows();
        let (v, lam, full) = if n >= d {
            let spec = eig_sym_unchecked(&xt.tr_mul(&xt));
            let lam = spec.values.iter().map(|l| l.max(0.0)).collect();
            (spec.vectors, lam, true)
        } else {
            let spec = eig_sym_unchecked(&(&xt * xt.transpose()));
            let top = spec.values[0].max(0.0);
            let cutoff = tol::pinv_cutoff(n, d, top);
            let keep: Vec<usize> = (0..n).filter(|&k| spec.values[k] > cutoff).collect();
            let mut v = DenseMatrix::zeros(d, keep.len());
            let mut lam = Vec::with_capacity(keep.len());
            for (col, &k) in keep.iter().enumerate() {
                let l = spec.values[k];
                let dir = xt.tr_mul(&spec.vectors.column(k)) / l.sqrt();
                v.set_column(col, &dir);
                lam.push(l);
            }
            (v, lam, false)
        };
        let vt_uy = v.tr_mul(&u_y);
        let vt_ut = v.tr_mul(&u_t);
        Ok(PenaltyPath {
            chol,
            v,
            lam,
            full,
            u_y,
            u_t,
            vt_uy,
            vt_ut,
        })
    }

    fn shifted_coords(&self, a: f64, c: f64) -> Vector {
        Vector::from_iterator(
            self.lam.len(),
            self.lam
                .iter()
                .enumerate()
                .map(|(k, l)| (self.vt_uy[k] + c * self.vt_ut[k]) / (l + a)),
        )
    }

    /// Coefficients for shift `a` and target weight `c`.
    pub fn coef(&self, a: f64, c: f64) -> Vector {
        let coords = self.shifted_coords(a, c);
        let mut z = &self.v * coords;
        if !self.full {
            let w = &self.u_y + &self.u_t * c;
            let vtw = &self.vt_uy + &self.vt_ut * c;
            z += (w - &self.v * vtw) / a;
        }
        match &self.chol {
            None => z,
            Some(ch) => ch
                .l()
                .transpose()
                .solve_upper_triangular(&z)
                .expect("nonsingular factor"),
        }
    }

    pub fn design(&self, m: &DenseMatrix) -> PathDesign {
        let mt = match &self.chol {
            None => m.clone(),
            Some(ch) => ch
                .l()
                .solve_lower_triangular(&m.transpose())
                .expect("nonsingular factor")
                .transpose(),
        };
        PathDesign {
            mv: &mt * &self.v,
            m_uy: &mt * &self.u_y,
            m_ut: &mt * &self.u_t,
        }
    }

    /// M·coef(a, c) for a design prepared with `design`.
    pub fn predict(&self, design: &PathDesign, a: f64, c: f64) -> Vector {
        let coords = self.shifted_coords(a, c);
        let mut out = &design.mv * coords;
        if !self.full {
            let vtw = &self.vt_uy + &self.vt_ut * c;
            let w_part = (&design.m_uy + &design.m_ut * c - &design.mv * vtw) / a;
            out += w_part;
        }
        out
    }
}
