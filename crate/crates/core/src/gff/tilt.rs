//! Deterministic shifts of the field. Under the tilted law the field is
//! `φ + f`, and the relative entropy with respect to the original law is
//! `E(f, f) / 2`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gff::sample::FieldSampler;
use crate::gff::Field;
use crate::lattice::{Point, Window};
use crate::potential::dirichlet::DirichletForm;

/// Smoothed plateau profile `g(y) = plateau · Π_i q(t(|y_i|))` equal to
/// `plateau` on `[-inner, inner]^d` and vanishing outside `(-outer, outer)^d`,
/// where `q` is the `C^1` quadratic spline falling from 1 to 0. The lattice
/// shift is `f_N(x) = g(x / N)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltProfile {
    pub d: usize,
    pub plateau: f64,
    pub inner: f64,
    pub outer: f64,
    pub n: i64,
}

fn spline(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else if t <= 0.5 {
        1.0 - 2.0 * t * t
    } else {
        2.0 * (1.0 - t) * (1.0 - t)
    }
}

impl TiltProfile {
    pub fn new(d: usize, plateau: f64, inner: f64, outer: f64, n: i64) -> Result<Self> {
        let mut errs = Vec::new();
        if d < 3 {
            return Err(Error::UnsupportedDimension(d));
        }
        if !(inner > 0.0 && inner < outer) {
            errs.push(format!("need 0 < inner ({inner}) < outer ({outer})"));
        }
        if n < 1 {
            errs.push(format!("N = {n} must be at least 1"));
        }
        if !plateau.is_finite() {
            errs.push("plateau must be finite".into());
        }
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        Ok(TiltProfile {
            d,
            plateau,
            inner,
            outer,
            n,
        })
    }

    /// The profile used against disconnection at level `α`: plateau
    /// `-(h - α + ε)` on `[-(1+η), 1+η]^d`, support inside `(-M, M)^d`.
    pub fn for_disconnection(d: usize, h: f64, alpha: f64, eps: f64, eta: f64, m: f64, n: i64) -> Result<Self> {
        if 1.0 + eta >= m {
            return Err(Error::Validation(vec![format!("need 1 + η = {} < M = {m}", 1.0 + eta)]));
        }
        Self::new(d, -(h - alpha + eps), 1.0 + eta, m, n)
    }

    fn axis(&self, y: f64) -> f64 {
        spline((y.abs() - self.inner) / (self.outer - self.inner))
    }

    /// The continuum profile `g(y)`.
    pub fn value(&self, y: &[f64]) -> f64 {
        self.plateau * y.iter().map(|&c| self.axis(c)).product::<f64>()
    }

    /// `f_N(x) = g(x / N)`.
    pub fn at(&self, x: &Point) -> f64 {
        let n = self.n as f64;
        self.plateau * x.coords().iter().map(|&c| self.axis(c as f64 / n)).product::<f64>()
    }

    /// Smallest sup-radius outside which `f_N` vanishes.
    pub fn support_radius(&self) -> i64 {
        (self.outer * self.n as f64).ceil() as i64
    }

    /// `f_N` on a window.
    pub fn shift(&self, window: &Window) -> Field {
        Field::from_fn(window.clone(), |p| self.at(p))
    }

    /// `E(f_N, f_N)`, exact: for a product `f = c Π u(x_i)` each axis
    /// contributes `c² Σ_k (u(k+1) - u(k))² · (Σ_k u(k)²)^{d-1}`.
    pub fn discrete_energy(&self) -> f64 {
        let r = self.support_radius();
        let n = self.n as f64;
        let u: Vec<f64> = (-r - 1..=r + 1).map(|k| self.axis(k as f64 / n)).collect();
        let s0: f64 = u.iter().map(|v| v * v).sum();
        let s1: f64 = u.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum();
        // d identical axes, each edge weighted 1/2d
        self.plateau * self.plateau * s1 * s0.powi(self.d as i32 - 1) / 2.0
    }

    /// `H(P̃_N | P) = E(f_N, f_N) / 2`.
    pub fn entropy(&self) -> f64 {
        self.discrete_energy() / 2.0
    }

    /// `(1/2d) ∫ |∇g|²`, the limit of `E(f_N, f_N) / N^{d-2}`.
    pub fn continuum_energy(&self) -> f64 {
        let w = self.outer - self.inner;
        // ∫ u² = 2 (inner + w · 23/60), ∫ u'² = 2 · (4/3) / w
        let a0 = 2.0 * (self.inner + w * 23.0 / 60.0);
        let a1 = 8.0 / (3.0 * w);
        self.plateau * self.plateau * a1 * a0.powi(self.d as i32 - 1) / 2.0
    }
}

/// `E(f, f) / 2` for a shift supported in its window.
pub fn tilt_entropy(f: &Field) -> f64 {
    DirichletForm::new(f.window().clone()).energy(f.values()) / 2.0
}

/// A sample of the tilted law: a base sample plus the shift.
pub fn sample_tilted<R: Rng + ?Sized>(sampler: &FieldSampler, f: &Field, rng: &mut R) -> Result<Field> {
    sampler.sample(rng).add(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spline_is_c1() {
        assert_eq!(spline(0.0), 1.0);
        assert!((spline(0.5) - 0.5).abs() < 1e-15);
        assert_eq!(spline(1.0), 0.0);
        let h = 1e-7;
        let left = (spline(0.5) - spline(0.5 - h)) / h;
        let right = (spline(0.5 + h) - spline(0.5)) / h;
        assert!((left - right).abs() < 1e-5);
    }

    #[test]
    fn plateau_and_support() {
        let p = TiltProfile::for_disconnection(3, 1.0, -0.5, 0.0, 0.25, 2.0, 4).unwrap();
        assert_eq!(p.plateau, -1.5);
        assert_eq!(p.at(&Point::new(&[5, -5, 0])), -1.5);
        assert_eq!(p.at(&Point::new(&[8, 0, 0])), 0.0);
        assert!(p.at(&Point::new(&[7, 0, 0])) < 0.0);
        assert!(TiltProfile::for_disconnection(3, 1.0, 0.0, 0.0, 1.5, 2.0, 4).is_err());
    }

    #[test]
    fn separable_energy_matches_edge_sum() {
        let p = TiltProfile::new(3, -1.0, 1.2, 2.0, 3).unwrap();
        let w = Window::centered(3, p.support_radius() + 1);
        let direct = tilt_entropy(&p.shift(&w));
        assert!((direct - p.entropy()).abs() < 1e-12 * direct);
    }

    #[test]
    fn energy_scales_like_n_to_the_d_minus_2() {
        let e = |n| {
            let p = TiltProfile::new(3, -1.0, 1.1, 2.0, n).unwrap();
            p.discrete_energy() / n as f64
        };
        let limit = TiltProfile::new(3, -1.0, 1.1, 2.0, 1).unwrap().continuum_energy();
        assert!((e(64) - limit).abs() < 0.01 * limit);
        assert!((e(128) - limit).abs() < (e(32) - limit).abs());
    }
}
