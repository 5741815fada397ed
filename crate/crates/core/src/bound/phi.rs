//! The Gaussian tail function Φ and its convex relaxation.
//!
//! Φ(z) = ½(1 − erf(z/√2)) is the probability that a standard normal exceeds
//! z; it is the per-sample error of a Gaussian-randomized linear classifier.
//! Φ_cvx replaces the left branch by its tangent at 0, giving a convex upper
//! bound that agrees with Φ for z ≥ 0 and is C¹ at the junction.

use std::f64::consts::PI;

const FRAC_1_SQRT_2PI: f64 = 0.3989422804014327; // 1/√(2π)

/// Φ(z) = ½ erfc(z/√2); strictly decreasing, values in (0, 1).
pub fn phi(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Convex upper bound of Φ: linear for z ≤ 0, Φ itself for z > 0.
pub fn phi_cvx(z: f64) -> f64 {
    if z <= 0.0 {
        0.5 - z / (2.0 * PI).sqrt()
    } else {
        phi(z)
    }
}

/// dΦ_cvx/dz; the two branches agree at z = 0 with value −1/√(2π).
pub fn phi_cvx_deriv(z: f64) -> f64 {
    if z <= 0.0 {
        -FRAC_1_SQRT_2PI
    } else {
        -(-0.5 * z * z).exp() * FRAC_1_SQRT_2PI
    }
}
