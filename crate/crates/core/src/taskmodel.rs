//! Covariance and task-relation builders, parameter and dataset samplers.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{min_max_eig_ratio, sym_psd_sqrt, DenseMatrix, Vector};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceSpec {
    #[default]
    Identity,
    /// Entries rate^|i-l|.
    ExpDecay { rate: f64 },
}

impl CovarianceSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CovarianceSpec::Identity => Ok(()),
            CovarianceSpec::ExpDecay { rate } => {
                if (0.0..1.0).contains(&rate) {
                    Ok(())
                } else {
                    Err(invalid("rate", format!("{rate} is outside [0, 1)")))
                }
            }
        }
    }

    pub fn is_identity(&self) -> bool {
        match *self {
            CovarianceSpec::Identity => true,
            CovarianceSpec::ExpDecay { rate } => rate == 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskRelationSpec {
    #[default]
    Identity,
    /// Orthogonal projection onto a random r-dimensional subspace.
    Subspace { r: usize },
    /// sqrt(d/r) times a random rank-r projection.
    EnergySubspace { r: usize },
    /// Symmetric circulant matrix with condition number `kappa`.
    Circulant { kappa: f64 },
    Scaled {
        base: Box<TaskRelationSpec>,
        factor: f64,
    },
}

impl TaskRelationSpec {
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            TaskRelationSpec::Identity => Ok(()),
            TaskRelationSpec::Subspace { r } | TaskRelationSpec::EnergySubspace { r } => {
                if *r == 0 || *r >= d {
                    Err(invalid("r", format!("{r} must be in [1, d) with d = {d}")))
                } else {
                    Ok(())
                }
            }
            TaskRelationSpec::Circulant { kappa } => {
                if !(kappa.is_finite() && *kappa >= 1.0) {
                    Err(invalid("kappa", format!("{kappa} must be >= 1")))
                } else if !d.is_multiple_of(2) {
                    Err(invalid("d", format!("circulant relation needs even d, got {d}")))
                } else {
                    Ok(())
                }
            }
            TaskRelationSpec::Scaled { base, factor } => {
                if !(factor.is_finite() && *factor > 0.0) {
                    return Err(invalid("factor", format!("{factor} must be > 0")));
                }
                base.validate(d)
            }
        }
    }

    /// True when building consumes no randomness.
    pub fn is_deterministic(&self) -> bool {
        match self {
            TaskRelationSpec::Identity | TaskRelationSpec::Circulant { .. } => true,
            TaskRelationSpec::Subspace { .. } | TaskRelationSpec::EnergySubspace { .. } => false,
            TaskRelationSpec::Scaled { base, .. } => base.is_deterministic(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTaskParams {
    pub d: usize,
    pub n: usize,
    pub sigma_eps_sq: f64,
    pub b: f64,
    pub cov: CovarianceSpec,
}

impl TargetTaskParams {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(invalid("d", "must be >= 1"));
        }
        if self.n == 0 {
            return Err(invalid("n", "must be >= 1"));
        }
        if !(self.sigma_eps_sq >= 0.0) {
            return Err(invalid("sigma_eps_sq", "must be >= 0"));
        }
        if !(self.b > 0.0) {
            return Err(invalid("b", "must be > 0"));
        }
        self.cov.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceTaskParams {
    pub n_tilde: usize,
    pub sigma_xi_sq: f64,
    pub sigma_eta_sq: f64,
    pub relation: TaskRelationSpec,
    pub cov: CovarianceSpec,
}

impl SourceTaskParams {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.n_tilde == 0 {
            return Err(invalid("n_tilde", "must be >= 1"));
        }
        if !(self.sigma_xi_sq >= 0.0) {
            return Err(invalid("sigma_xi_sq", "must be >= 0"));
        }
        if !(self.sigma_eta_sq >= 0.0) {
            return Err(invalid("sigma_eta_sq", "must be >= 0"));
        }
        self.relation.validate(d)?;
        self.cov.validate()
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: DenseMatrix,
    pub outputs: Vector,
}

impl Dataset {
    pub fn new(inputs: DenseMatrix, outputs: Vector) -> Result<Self> {
        if inputs.nrows() != outputs.len() {
            return Err(Error::Dimension {
                what: "dataset outputs",
                expected: inputs.nrows(),
                got: outputs.len(),
            });
        }
        Ok(Dataset { inputs, outputs })
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }
}

pub fn build_covariance(spec: CovarianceSpec, d: usize) -> Result<DenseMatrix> {
    spec.validate()?;
    if d == 0 {
        return Err(invalid("d", "must be >= 1"));
    }
    Ok(match spec {
        CovarianceSpec::Identity => DenseMatrix::identity(d, d),
        CovarianceSpec::ExpDecay { rate } => {
            DenseMatrix::from_fn(d, d, |i, l| rate.powi(i.abs_diff(l) as i32))
        }
    })
}

pub fn standard_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    // Filled row by row so that a prefix of rows is reproducible.
    let mut m = DenseMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

pub fn standard_normal_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vector {
    Vector::from_iterator(len, (0..len).map(|_| StandardNormal.sample(rng)))
}

/// Eigenvalues of the circulant relation, indexed by DFT frequency.
pub fn circulant_spectrum(kappa: f64, d: usize) -> Vec<f64> {
    let half = d / 2;
    let low_sq = 2.0 / (1.0 + kappa * kappa);
    let high_sq = 2.0 - low_sq;
    let mut lam = vec![0.0; d];
    for (k, l) in lam.iter_mut().enumerate().take(half + 1) {
        let t = k as f64 / half as f64;
        *l = (high_sq + t * (low_sq - high_sq)).sqrt();
    }
    for k in half + 1..d {
        lam[k] = lam[d - k];
    }
    lam
}

pub fn build_relation<R: Rng + ?Sized>(
    spec: &TaskRelationSpec,
    d: usize,
    rng: &mut R,
) -> Result<DenseMatrix> {
    spec.validate(d)?;
    Ok(match spec {
        TaskRelationSpec::Identity => DenseMatrix::identity(d, d),
        TaskRelationSpec::Subspace { r } => random_projection(d, *r, rng),
        TaskRelationSpec::EnergySubspace { r } => {
            random_projection(d, *r, rng) * (d as f64 / *r as f64).sqrt()
        }
        TaskRelationSpec::Circulant { kappa } => {
            let lam = circulant_spectrum(*kappa, d);
            // First row of a symmetric circulant with real symmetric spectrum.
            let row: Vec<f64> = (0..d)
                .map(|s| {
                    lam.iter()
                        .enumerate()
                        .map(|(k, l)| l * (2.0 * PI * (k * s) as f64 / d as f64).cos())
                        .sum::<f64>()
                        / d as f64
                })
                .collect();
            DenseMatrix::from_fn(d, d, |a, b| row[(b + d - a) % d])
        }
        TaskRelationSpec::Scaled { base, factor } => build_relation(base, d, rng)? * *factor,
    })
}

fn random_projection<R: Rng + ?Sized>(d: usize, r: usize, rng: &mut R) -> DenseMatrix {
    let g = standard_normal_matrix(d, r, rng);
    let q = g.qr().q();
    &q * q.transpose()
}

/// β ~ N(0, (b/d) I).
pub fn sample_beta<R: Rng + ?Sized>(b: f64, d: usize, rng: &mut R) -> Result<Vector> {
    if !(b > 0.0) {
        return Err(invalid("b", "must be > 0"));
    }
    Ok(standard_normal_vector(d, rng) * (b / d as f64).sqrt())
}

/// θ = Hβ + η with η ~ N(0, (σ_η²/d) I).
pub fn make_source_theta<R: Rng + ?Sized>(
    beta: &Vector,
    h: &DenseMatrix,
    sigma_eta_sq: f64,
    d: usize,
    rng: &mut R,
) -> Result<Vector> {
    if h.ncols() != beta.len() {
        return Err(Error::Dimension {
            what: "relation columns",
            expected: beta.len(),
            got: h.ncols(),
        });
    }
    if h.nrows() != d {
        return Err(Error::Dimension {
            what: "relation rows",
            expected: d,
            got: h.nrows(),
        });
    }
    if !(sigma_eta_sq >= 0.0) {
        return Err(invalid("sigma_eta_sq", "must be >= 0"));
    }
    let mut theta = h * beta;
    if sigma_eta_sq > 0.0 {
        theta += standard_normal_vector(d, rng) * (sigma_eta_sq / d as f64).sqrt();
    }
    Ok(theta)
}

/// Draws Gaussian designs with a fixed covariance; the square root is built once.
#[derive(Debug, Clone)]
pub struct DesignSampler {
    d: usize,
    sqrt_cov: Option<DenseMatrix>,
}

impl DesignSampler {
    pub fn new(cov: CovarianceSpec, d: usize) -> Result<Self> {
        let sqrt_cov = if cov.is_identity() {
            None
        } else {
            Some(sym_psd_sqrt(&build_covariance(cov, d)?)?)
        };
        Ok(DesignSampler { d, sqrt_cov })
    }

    pub fn inputs<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> DenseMatrix {
        let g = standard_normal_matrix(count, self.d, rng);
        match &self.sqrt_cov {
            None => g,
            Some(s) => g * s,
        }
    }

    pub fn dataset<R: Rng + ?Sized>(
        &self,
        param: &Vector,
        noise_var: f64,
        count: usize,
        rng: &mut R,
    ) -> Result<Dataset> {
        if count == 0 {
            return Err(Error::Empty("dataset"));
        }
        if !(noise_var >= 0.0) {
            return Err(invalid("noise_var", "must be >= 0"));
        }
        if param.len() != self.d {
            return Err(Error::Dimension {
                what: "parameter",
                expected: self.d,
                got: param.len(),
            });
        }
        let inputs = self.inputs(count, rng);
        let mut outputs = &inputs * param;
        if noise_var > 0.0 {
            outputs += standard_normal_vector(count, rng) * noise_var.sqrt();
        }
        Ok(Dataset { inputs, outputs })
    }
}

pub fn gen_dataset<R: Rng + ?Sized>(
    param: &Vector,
    cov: CovarianceSpec,
    noise_var: f64,
    count: usize,
    rng: &mut R,
) -> Result<Dataset> {
    DesignSampler::new(cov, param.len())?.dataset(param, noise_var, count, rng)
}

/// Σ_j H̃_jᵀH̃_j.
pub fn gram_sum(relations: &[DenseMatrix]) -> Result<DenseMatrix> {
    let first = relations.first().ok_or(Error::Empty("relation list"))?;
    let d = first.ncols();
    let mut acc = DenseMatrix::zeros(d, d);
    for h in relations {
        if h.ncols() != d {
            return Err(Error::Dimension {
                what: "relation columns",
                expected: d,
                got: h.ncols(),
            });
        }
        acc += h.tr_mul(h);
    }
    Ok(acc)
}

/// Smallest/largest eigenvalue ratio of Σ_j H̃_jᵀH̃_j; the penalty needs it bounded away from 0.
pub fn relation_gram_ratio(relations: &[DenseMatrix]) -> Result<f64> {
    Ok(min_max_eig_ratio(&gram_sum(relations)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exp_decay_two_by_two() {
        let s = build_covariance(CovarianceSpec::ExpDecay { rate: 0.5 }, 2).unwrap();
        assert_eq!(s, DenseMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));
    }

    #[test]
    fn bad_rate_rejected() {
        assert!(build_covariance(CovarianceSpec::ExpDecay { rate: 1.0 }, 2).is_err());
    }

    #[test]
    fn odd_circulant_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(build_relation(&TaskRelationSpec::Circulant { kappa: 10.0 }, 5, &mut rng).is_err());
        assert!(build_relation(&TaskRelationSpec::Subspace { r: 5 }, 5, &mut rng).is_err());
    }
}
