//! Numerical verifiers for the two inequalities the bound rests on: the
//! change-of-measure inequality and Hoeffding's lemma. Both are checked by
//! exact summation over finite supports.

use crate::error::{Error, Result};

/// Outcome of a change-of-measure check.
#[derive(Debug, Clone, Copy)]
pub struct MeasureCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// True when Q puts mass where P has none: KL = ∞ and the inequality
    /// holds trivially.
    pub degenerate: bool,
}

fn check_distribution(p: &[f64], name: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidData(format!("{name}: empty support")));
    }
    if p.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::InvalidData(format!("{name}: probabilities must be >= 0")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidData(format!("{name}: probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

/// Check E_{f~Q} g(f) ≤ (1/λ)(KL(Q‖P) + log E_{f~P} e^{λ g(f)}) by summation.
pub fn verify_change_of_measure(p: &[f64], q: &[f64], g: &[f64], lambda: f64) -> Result<MeasureCheck> {
    check_distribution(p, "P")?;
    check_distribution(q, "Q")?;
    if p.len() != q.len() || p.len() != g.len() {
        return Err(Error::DimensionMismatch(format!(
            "support sizes differ: P={}, Q={}, g={}",
            p.len(),
            q.len(),
            g.len()
        )));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("g must be finite".into()));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidData(format!("lambda must be > 0, got {lambda}")));
    }

    let lhs: f64 = q.iter().zip(g).map(|(&qi, &gi)| qi * gi).sum();

    if q.iter().zip(p).any(|(&qi, &pi)| qi > 0.0 && pi == 0.0) {
        return Ok(MeasureCheck {
            lhs,
            rhs: f64::INFINITY,
            holds: true,
            degenerate: true,
        });
    }

    let kl: f64 = q
        .iter()
        .zip(p)
        .filter(|(&qi, _)| qi > 0.0)
        .map(|(&qi, &pi)| qi * (qi / pi).ln())
        .sum();
    // log Σ p e^{λg}, shifted by the max exponent for stability.
    let shift = g.iter().map(|&gi| lambda * gi).fold(f64::NEG_INFINITY, f64::max);
    let mgf: f64 = p
        .iter()
        .zip(g)
        .map(|(&pi, &gi)| pi * (lambda * gi - shift).exp())
        .sum();
    let rhs = (kl + mgf.ln() + shift) / lambda;
    Ok(MeasureCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-12,
        degenerate: false,
    })
}

/// Outcome of a Hoeffding-lemma check.
#[derive(Debug, Clone, Copy)]
pub struct HoeffdingCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Check E[e^{λ(ξ − X)}] ≤ e^{λ²(b−a)²/8} for a discrete X on [a, b] with
/// mean ξ, by exact summation.
pub fn verify_hoeffding_lemma(values: &[f64], probs: &[f64], lambda: f64) -> Result<HoeffdingCheck> {
    check_distribution(probs, "X")?;
    if values.len() != probs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values but {} probabilities",
            values.len(),
            probs.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) || !lambda.is_finite() {
        return Err(Error::InvalidData("values and lambda must be finite".into()));
    }
    let mean: f64 = values.iter().zip(probs).map(|(&v, &p)| p * v).sum();
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lhs: f64 = values
        .iter()
        .zip(probs)
        .map(|(&v, &p)| p * (lambda * (mean - v)).exp())
        .sum();
    let rhs = (lambda * lambda * (hi - lo) * (hi - lo) / 8.0).exp();
    Ok(HoeffdingCheck {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-12),
    })
}
