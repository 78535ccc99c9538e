use crate::error::{invalid, Error, Result};
use crate::linalg::{eig_sym, DenseMatrix};
use crate::tol;

/// Solution of the c / c′ fixed-point pair for a given α.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointSolution {
    pub c: f64,
    pub c_prime: f64,
    pub s: f64,
}

fn check_eigs(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::Empty("spectrum"));
    }
    let top = w.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    for &x in w {
        if !x.is_finite() {
            return Err(Error::NonFinite);
        }
        if x < -tol::PSD_CLAMP * top.max(1.0) {
            return Err(Error::Indefinite(x));
        }
    }
    Ok(())
}

/// Monotone bisection for the root of a strictly decreasing `h` on [lo, hi].
fn bisect_decreasing(mut lo: f64, mut hi: f64, h: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..tol::BISECT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= tol::BISECT_WIDTH * hi {
            break;
        }
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn c_residual(c: f64, alpha: f64, w: &[f64], gamma: f64, d: usize) -> f64 {
    let tr: f64 = w.iter().map(|&x| x.max(0.0) / (c * x.max(0.0) + alpha)).sum();
    1.0 / c - 1.0 - gamma / d as f64 * tr
}

/// Solves 1/c − 1 = (γ/d) Σ_i w_i/(c w_i + α) for c ∈ (0, 1] given the
/// eigenvalues w_i of W.
pub fn solve_c_spectrum(alpha: f64, w: &[f64], gamma: f64, d: usize) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(invalid("alpha", "must be finite and > 0"));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(invalid("gamma_tgt", "must be finite and >= 0"));
    }
    check_eigs(w)?;
    let df = d as f64;
    // c·(1/c − 1 − rhs(c)) = 1 − c − (γ/d) Σ c w/(c w + α) is strictly decreasing.
    let h = |c: f64| {
        1.0 - c
            - gamma / df
                * w.iter()
                    .map(|&x| {
                        let x = x.max(0.0);
                        c * x / (c * x + alpha)
                    })
                    .sum::<f64>()
    };
    if h(1.0) >= 0.0 {
        return Ok(1.0);
    }
    let c = bisect_decreasing(tol::C_FLOOR, 1.0, h);
    let residual = c_residual(c, alpha, w, gamma, d).abs() * c;
    if !(residual < tol::FIXED_POINT_RESIDUAL) {
        return Err(Error::NoConvergence {
            what: "c fixed point",
            residual,
        });
    }
    Ok(c)
}

pub fn solve_c(alpha: f64, w: &DenseMatrix, gamma_tgt: f64, d: usize) -> Result<f64> {
    let spec = eig_sym(w)?;
    solve_c_spectrum(alpha, spec.values.as_slice(), gamma_tgt, d)
}

fn c_prime_spectrum(alpha: f64, w: &[f64], gamma: f64, d: usize, c: f64) -> Result<f64> {
    let frob: f64 = w
        .iter()
        .map(|&x| {
            let x = x.max(0.0);
            let r = x / (c * x + alpha);
            r * r
        })
        .sum();
    let num = gamma / d as f64 * frob;
    let den = 1.0 / (c * c) - num;
    if !(den > 0.0) {
        return Err(invalid(
            "c",
            format!("c' denominator {den:.3e} <= 0; c is inconsistent with alpha and W"),
        ));
    }
    Ok(num / den)
}

/// c′ from the ratio of Frobenius traces; returns (c′, s = c′ + 1).
pub fn solve_c_prime(alpha: f64, w: &DenseMatrix, gamma_tgt: f64, d: usize, c: f64) -> Result<(f64, f64)> {
    let spec = eig_sym(w)?;
    check_eigs(spec.values.as_slice())?;
    let cp = c_prime_spectrum(alpha, spec.values.as_slice(), gamma_tgt, d, c)?;
    Ok((cp, cp + 1.0))
}

/// Both fixed points from the eigenvalues of W.
pub fn solve_fixed_point(alpha: f64, w: &[f64], gamma_tgt: f64, d: usize) -> Result<FixedPointSolution> {
    let c = solve_c_spectrum(alpha, w, gamma_tgt, d)?;
    let c_prime = c_prime_spectrum(alpha, w, gamma_tgt, d, c)?;
    Ok(FixedPointSolution {
        c,
        c_prime,
        s: c_prime + 1.0,
    })
}

/// q₀ > 0 with (1/d) Σ_i 1/(1 + q₀ μ_i) = 1 − 1/γ.
pub fn solve_q0(eigenvalues: &[f64], gamma: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 1.0) {
        return Err(invalid("gamma", format!("{gamma} must be > 1")));
    }
    if eigenvalues.is_empty() {
        return Err(Error::Empty("spectrum"));
    }
    if eigenvalues.iter().any(|&m| !(m.is_finite() && m > 0.0)) {
        return Err(invalid("eigenvalues", "must be finite and > 0"));
    }
    let d = eigenvalues.len() as f64;
    let target = 1.0 - 1.0 / gamma;
    let h = |q: f64| eigenvalues.iter().map(|&m| 1.0 / (1.0 + q * m)).sum::<f64>() / d - target;
    let mut hi = 1.0;
    while h(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::NoConvergence {
                what: "q0 bracket",
                residual: h(hi),
            });
        }
    }
    let q = bisect_decreasing(0.0, hi, h);
    let residual = h(q).abs();
    if !(residual < tol::FIXED_POINT_RESIDUAL) {
        return Err(Error::NoConvergence {
            what: "q0 fixed point",
            residual,
        });
    }
    Ok(q)
}

/// q₀Σ_z(q₀Σ_z + I)⁻¹.
pub fn shrinkage_operator(sigma_z: &DenseMatrix, gamma: f64) -> Result<DenseMatrix> {
    let spec = eig_sym(sigma_z)?;
    let q0 = solve_q0(spec.values.as_slice(), gamma)?;
    Ok(spec.map(|m| q0 * m / (1.0 + q0 * m)))
}
