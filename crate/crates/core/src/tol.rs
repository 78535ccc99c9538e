//! Numerical tolerances shared by production code and tests.

/// Symmetry check: max |S - Sᵀ| relative to max |S|.
pub const SYMMETRY: f64 = 1e-10;

/// Eigenvalues above `-PSD_CLAMP * max|λ|` are clamped to zero by `sym_psd_sqrt`.
pub const PSD_CLAMP: f64 = 1e-10;

/// Full-rank penalty: min eigenvalue of Σ H̃ᵀH̃ must exceed this times the max eigenvalue.
pub const FULL_RANK: f64 = 1e-10;

/// Lower end of the bisection bracket for the c fixed point.
pub const C_FLOOR: f64 = 1e-14;

/// Bisection stopping width for scalar fixed points.
pub const BISECT_WIDTH: f64 = 1e-15;

/// Maximum bisection steps.
pub const BISECT_MAX_ITER: usize = 400;

/// Residual bound enforced on returned fixed-point solutions.
pub const FIXED_POINT_RESIDUAL: f64 = 1e-10;

/// Relative pseudoinverse cutoff multiplier: singular values at or below
/// `max(rows, cols) * EPSILON * σ_max` are treated as zero.
pub fn pinv_cutoff(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}
