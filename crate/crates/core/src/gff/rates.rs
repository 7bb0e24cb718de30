//! Closed-form exponential rates for disconnection, in units of
//! `N^{-(d-2)} log P`, with `cap_B` the Brownian capacity of `[-1, 1]^d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum RateVariant {
    /// Lower bound `-(1/2d)(h_** - α)² cap_B` for the level set, `α ≤ h_**`.
    GffLower { h: f64 },
    /// Contour upper bound `-(1/2d) α² cap_B`, `α ≤ 0`.
    GffContour,
    /// Upper bound `-(1/2d)(h̄ - α)² cap_B`, `α ≤ h̄` (also used with `h_0`).
    GffUpper { h: f64 },
    /// Vacant-set lower bound `-(1/d)(√u_** - √u)² cap_B`, `0 ≤ u ≤ u_**`.
    InterlacementLower { u_star: f64 },
    /// Vacant-set upper bound `-(1/d)(√(h̄²/2) - √u)² cap_B`, `0 ≤ u ≤ h̄²/2`.
    InterlacementUpper { h: f64 },
    /// Random-walk upper bound `-(1/2d) h̄² cap_B`, `h̄ > 0`.
    Srw { h: f64 },
}

impl RateVariant {
    /// Name of the free parameter (`alpha` or `u`).
    pub fn parameter(&self) -> &'static str {
        match self {
            RateVariant::GffLower { .. } | RateVariant::GffContour | RateVariant::GffUpper { .. } => "alpha",
            RateVariant::InterlacementLower { .. } | RateVariant::InterlacementUpper { .. } => "u",
            RateVariant::Srw { .. } => "none",
        }
    }
}

/// Evaluates the rate at level `x` (`α` or `u`).
pub fn rate_function(variant: RateVariant, x: f64, d: usize, cap_b: f64) -> Result<f64> {
    if d < 3 {
        return Err(Error::UnsupportedDimension(d));
    }
    if !(cap_b > 0.0) {
        return Err(Error::Domain(format!("Brownian capacity {cap_b} must be positive")));
    }
    let dd = d as f64;
    let dom = |ok: bool, msg: String| if ok { Ok(()) } else { Err(Error::Domain(msg)) };
    match variant {
        RateVariant::GffLower { h } | RateVariant::GffUpper { h } => {
            dom(x <= h, format!("need α ≤ h, got α = {x} > h = {h}"))?;
            Ok(-(h - x).powi(2) * cap_b / (2.0 * dd))
        }
        RateVariant::GffContour => {
            dom(x <= 0.0, format!("need α ≤ 0, got α = {x}"))?;
            Ok(-x * x * cap_b / (2.0 * dd))
        }
        RateVariant::InterlacementLower { u_star } => {
            dom(x >= 0.0 && x <= u_star, format!("need 0 ≤ u ≤ u_** = {u_star}, got u = {x}"))?;
            Ok(-(u_star.sqrt() - x.sqrt()).powi(2) * cap_b / dd)
        }
        RateVariant::InterlacementUpper { h } => {
            dom(h > 0.0, format!("need h > 0, got {h}"))?;
            dom(x >= 0.0 && x <= h * h / 2.0, format!("need 0 ≤ u ≤ h²/2 = {}, got u = {x}", h * h / 2.0))?;
            Ok(-((h * h / 2.0).sqrt() - x.sqrt()).powi(2) * cap_b / dd)
        }
        RateVariant::Srw { h } => {
            dom(h > 0.0, format!("need h > 0, got {h}"))?;
            Ok(-h * h * cap_b / (2.0 * dd))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_vanish_at_their_critical_point() {
        assert_eq!(rate_function(RateVariant::GffLower { h: 0.7 }, 0.7, 3, 4.0).unwrap(), 0.0);
        assert_eq!(rate_function(RateVariant::InterlacementUpper { h: 1.0 }, 0.5, 3, 4.0).unwrap(), 0.0);
        assert_eq!(rate_function(RateVariant::InterlacementLower { u_star: 2.0 }, 2.0, 3, 4.0).unwrap(), 0.0);
    }

    #[test]
    fn gff_rate_at_zero_level() {
        let r = rate_function(RateVariant::GffUpper { h: 1.0 }, 0.0, 3, 6.0).unwrap();
        assert!((r + 1.0).abs() < 1e-15);
    }

    #[test]
    fn out_of_regime_parameters_are_domain_errors() {
        assert!(matches!(rate_function(RateVariant::GffContour, 0.1, 3, 1.0), Err(Error::Domain(_))));
        assert!(rate_function(RateVariant::InterlacementUpper { h: 1.0 }, 0.6, 3, 1.0).is_err());
        assert!(rate_function(RateVariant::GffLower { h: 1.0 }, 0.0, 2, 1.0).is_err());
    }
}
