//! The disconnection event `A_N = {∂B_N ↮ S_N in E^{≥α}}`, with
//! `S_N = {|x|_∞ = [MN]}`, and the contours that witness it: finite sets `C`
//! surrounding `B_N` inside `B_{[MN]}` on which `φ < α`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{geometry, invalid, Result};
use crate::gff::sample::{FieldSampler, DEFAULT_DENSE_LIMIT};
use crate::gff::Field;
use crate::lattice::{boundary, floor_mul, BoxSpec, Point, PointSet, Window};
use crate::percolation::flood;
use crate::potential::equilibrium::cube_capacity;
use crate::rng::stream;
use crate::stats::{clopper_pearson_upper, McEstimate};

fn outer_radius(window: &Window, n: i64, m: f64) -> Result<i64> {
    if n < 1 {
        return geometry(format!("N = {n} must be at least 1"));
    }
    let mn = floor_mul(m, n);
    if mn < n + 1 {
        return geometry(format!("[MN] = {mn} must be at least N + 1 = {}", n + 1));
    }
    if !BoxSpec::centered(window.dim(), mn).is_subset_of(window.spec()) {
        return geometry(format!("window must cover B_{mn}"));
    }
    Ok(mn)
}

/// Whether `p ∈ ∂B_N`, the sites outside `B_N` with a nearest neighbor in it.
fn on_boundary(p: &Point, n: i64) -> bool {
    p.sup_norm() == n + 1 && p.coords().iter().filter(|c| c.abs() == n + 1).count() == 1
}

/// `A_N` for an arbitrary open set given as a mask: no nearest-neighbor path
/// in the mask from `∂B_N` to `S_N`. Paths may pass through `B_N`.
pub fn disconnected_in_mask(window: &Window, mask: &[bool], n: i64, m: f64) -> Result<bool> {
    let mn = outer_radius(window, n, m)?;
    // restricting the search to B_{[MN]} loses nothing: a path first reaches
    // S_N before leaving the ball
    let inside: Vec<bool> = (0..window.len())
        .map(|i| mask[i] && window.point(i).sup_norm() <= mn)
        .collect();
    let sources = (0..window.len()).filter(|&i| on_boundary(&window.point(i), n));
    let seen = flood(window, &inside, sources);
    Ok(!(0..window.len()).any(|i| seen[i] && window.point(i).sup_norm() == mn))
}

pub fn disconnection_event(phi: &Field, alpha: f64, n: i64, m: f64) -> Result<bool> {
    let mask: Vec<bool> = phi.values().iter().map(|&v| v >= alpha).collect();
    disconnected_in_mask(phi.window(), &mask, n, m)
}

/// A set `C = ∂(Int C)` with `Int C` finite and connected.
#[derive(Clone, Debug, PartialEq)]
pub struct Contour {
    pub c: PointSet,
    pub interior: PointSet,
}

impl Contour {
    /// Checks that `Int C` is connected and contains `B_N`, that `C = ∂(Int C)`
    /// and that `C ⊆ B_{[MN]}`; returns the violated properties.
    pub fn defects(&self, d: usize, n: i64, mn: i64) -> Vec<String> {
        let mut out = Vec::new();
        if BoxSpec::centered(d, n).points().any(|p| !self.interior.contains(&p)) {
            out.push("interior does not contain B_N".into());
        }
        if boundary(&self.interior) != self.c {
            out.push("C differs from the boundary of its interior".into());
        }
        if self.c.iter().any(|p| p.sup_norm() > mn) {
            out.push("C leaves B_[MN]".into());
        }
        if let Some(start) = self.interior.iter().next() {
            let mut seen = PointSet::new();
            let mut stack = vec![start.clone()];
            seen.insert(start.clone());
            while let Some(p) = stack.pop() {
                for q in p.neighbors() {
                    if self.interior.contains(&q) && seen.insert(q.clone()) {
                        stack.push(q);
                    }
                }
            }
            if seen.len() != self.interior.len() {
                out.push("interior is not connected".into());
            }
        }
        out
    }

    /// Sites `y ∈ C` for which the enlargement `V = Int C ∪ {y}` has
    /// `∂V ⊆ B_{[MN]}` and `φ < α` on all of `∂V`, i.e. witnesses that `C` is
    /// not the maximal contour.
    pub fn maximality_violations(&self, phi: &Field, alpha: f64, mn: i64) -> Vec<Point> {
        let below = |p: &Point| phi.get(p).is_some_and(|v| v < alpha);
        self.c
            .iter()
            .filter(|y| {
                let mut bv: PointSet = self.c.iter().filter(|p| p != y).cloned().collect();
                bv.extend(y.neighbors().filter(|q| !self.interior.contains(q)));
                bv.iter().all(|p| p.sup_norm() <= mn && below(p))
            })
            .cloned()
            .collect()
    }
}

fn component_sites(window: &Window, seen: &[bool]) -> PointSet {
    (0..window.len()).filter(|&i| seen[i]).map(|i| window.point(i)).collect()
}

/// The maximal contour surrounding `B_N` in `B_{[MN]}` with `φ < α` on it,
/// or `None` when `A_N` fails. Its interior is everything that the outside
/// of `B_{[MN]}` cannot reach through `E^{≥α}` or one step beyond it.
pub fn maximal_contour(phi: &Field, alpha: f64, n: i64, m: f64) -> Result<Option<Contour>> {
    let w = phi.window();
    let mn = outer_radius(w, n, m)?;
    let len = w.len();
    let pts: Vec<Point> = (0..len).map(|i| w.point(i)).collect();
    let ball: Vec<bool> = pts.iter().map(|p| p.sup_norm() <= mn).collect();
    let open: Vec<bool> = (0..len).map(|i| ball[i] && phi.values()[i] >= alpha).collect();
    // O: sites of B_[MN] joined to the outside through E^{≥α}
    let sources = (0..len).filter(|&i| pts[i].sup_norm() == mn);
    let outside = flood(w, &open, sources);
    // O ∪ ∂O restricted to B_[MN]; S_N itself touches the outside
    let mut blocked = outside.clone();
    for i in 0..len {
        if !ball[i] || blocked[i] {
            continue;
        }
        if pts[i].sup_norm() == mn {
            blocked[i] = true;
            continue;
        }
        for axis in 0..w.dim() {
            for up in [false, true] {
                if let Some(j) = w.step(i, axis, up) {
                    if outside[j] {
                        blocked[i] = true;
                    }
                }
            }
        }
    }
    if pts.iter().enumerate().any(|(i, p)| p.sup_norm() <= n && blocked[i]) {
        return Ok(None);
    }
    let free: Vec<bool> = (0..len).map(|i| ball[i] && !blocked[i]).collect();
    let origin = w.index(&Point::origin(w.dim())).expect("window covers B_N");
    let interior = component_sites(w, &flood(w, &free, [origin]));
    let c = boundary(&interior);
    debug_assert!(c.iter().all(|p| phi.get(p).is_some_and(|v| v < alpha)));
    Ok(Some(Contour { c, interior }))
}

/// The contour `∂K` with `K = B_N ∪ ⋃_{x ∈ ∂B_N} C_{≥α}(x)`, the clusters of
/// `E^{≥α}` met by `∂B_N` (empty at sites where `φ < α`), or `None` when
/// `A_N` fails. It sits inside the maximal contour.
pub fn inner_contour(phi: &Field, alpha: f64, n: i64, m: f64) -> Result<Option<Contour>> {
    let w = phi.window();
    let mn = outer_radius(w, n, m)?;
    let len = w.len();
    let open: Vec<bool> = (0..len)
        .map(|i| w.point(i).sup_norm() <= mn && phi.values()[i] >= alpha)
        .collect();
    let reached = flood(w, &open, (0..len).filter(|&i| on_boundary(&w.point(i), n)));
    if (0..len).any(|i| reached[i] && w.point(i).sup_norm() == mn) {
        return Ok(None);
    }
    let mut interior = component_sites(w, &reached);
    interior.extend(BoxSpec::centered(w.dim(), n).points());
    let c = boundary(&interior);
    Ok(Some(Contour { c, interior }))
}

/// Monte Carlo check of `P[A_N] ≤ 2 exp(-α² cap(B_N) / 2)` for `α < 0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContourBoundReport {
    pub d: usize,
    pub alpha: f64,
    pub n: i64,
    pub m: f64,
    pub cap: f64,
    pub bound: f64,
    pub estimate: McEstimate,
    /// One-sided 99% Clopper-Pearson upper bound on `P[A_N]`.
    pub upper: f64,
    pub pass: bool,
    /// Covariance deficit of the sampler, zero when exact.
    pub sampler_bias: f64,
}

const CONTOUR_STREAM: u64 = 0xC0_47;

pub fn contour_bound_check(
    d: usize,
    alpha: f64,
    n: i64,
    m: f64,
    n_mc: u64,
    guard_factor: f64,
    seed: u64,
) -> Result<ContourBoundReport> {
    let mut errs = Vec::new();
    if !(alpha < 0.0) {
        errs.push(format!("α = {alpha} must be negative"));
    }
    if n_mc == 0 {
        errs.push("n_mc must be positive".into());
    }
    if !errs.is_empty() {
        return Err(crate::Error::Validation(errs));
    }
    let start = Instant::now();
    let window = Window::centered(d, floor_mul(m, n));
    outer_radius(&window, n, m)?;
    let cap = cube_capacity(d, n)?;
    let bound = 2.0 * (-0.5 * alpha * alpha * cap).exp();
    let sampler = FieldSampler::for_window(window, DEFAULT_DENSE_LIMIT, guard_factor)?;
    let hits: Vec<bool> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let phi = sampler.sample(&mut stream(seed, CONTOUR_STREAM, i));
            disconnection_event(&phi, alpha, n, m).expect("geometry checked")
        })
        .collect();
    let estimate = McEstimate::from_indicators(&hits, seed, start.elapsed().as_secs_f64());
    let upper = clopper_pearson_upper(estimate.hits(), n_mc, 0.99);
    if !upper.is_finite() {
        return invalid("confidence bound is not finite");
    }
    Ok(ContourBoundReport {
        d,
        alpha,
        n,
        m,
        cap,
        bound,
        estimate,
        upper,
        pass: upper <= bound,
        sampler_bias: sampler.bias_bound()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gff::sample::sample_free;

    fn constant(r: i64, v: f64) -> Field {
        Field::from_fn(Window::centered(3, r), |_| v)
    }

    #[test]
    fn trivial_fields() {
        assert!(!disconnection_event(&constant(4, 1.0), 0.0, 2, 2.0).unwrap());
        assert!(disconnection_event(&constant(4, -1.0), 0.0, 2, 2.0).unwrap());
        assert!(maximal_contour(&constant(4, 1.0), 0.0, 2, 2.0).unwrap().is_none());
        let c = maximal_contour(&constant(4, -1.0), 0.0, 2, 2.0).unwrap().unwrap();
        // everything strictly inside S_N
        assert_eq!(c.interior, BoxSpec::centered(3, 3).to_set());
    }

    #[test]
    fn boundary_of_the_box_is_nearest_neighbor() {
        let count = BoxSpec::centered(3, 3).points().filter(|p| on_boundary(p, 1)).count();
        assert_eq!(count, boundary(&BoxSpec::centered(3, 1).to_set()).len());
    }

    #[test]
    fn geometry_is_validated() {
        assert!(disconnection_event(&constant(3, 0.0), 0.0, 2, 2.0).is_err());
        assert!(disconnection_event(&constant(4, 0.0), 0.0, 2, 1.2).is_err());
    }

    #[test]
    fn contours_exist_exactly_on_disconnection() {
        let w = Window::centered(3, 4);
        let mut rng = stream(11, 0, 0);
        let mut seen = [0; 2];
        for _ in 0..200 {
            let phi = sample_free(&w, &mut rng).unwrap();
            for alpha in [-0.5, 0.0, 0.5, 1.0] {
                let a = disconnection_event(&phi, alpha, 2, 2.0).unwrap();
                let max = maximal_contour(&phi, alpha, 2, 2.0).unwrap();
                let inner = inner_contour(&phi, alpha, 2, 2.0).unwrap();
                assert_eq!(a, max.is_some());
                assert_eq!(a, inner.is_some());
                seen[a as usize] += 1;
                if let (Some(max), Some(inner)) = (max, inner) {
                    for c in [&max, &inner] {
                        assert!(c.defects(3, 2, 4).is_empty(), "{:?}", c.defects(3, 2, 4));
                        assert!(c.c.iter().all(|p| phi.get(p).unwrap() < alpha));
                    }
                    assert!(inner.interior.is_subset(&max.interior));
                    assert!(max.maximality_violations(&phi, alpha, 4).is_empty());
                }
            }
        }
        assert!(seen[0] > 0 && seen[1] > 0, "{seen:?}");
    }

    #[test]
    fn deep_negative_level_is_never_disconnected() {
        // the analytic bound is far below anything 200 samples can certify
        let r = contour_bound_check(3, -10.0, 2, 2.0, 200, 2.0, 1).unwrap();
        assert_eq!(r.estimate.mean, 0.0);
        assert!(r.upper < 0.03);
        assert!(r.bound < 1e-100 && !r.pass);
        let easy = contour_bound_check(3, -0.5, 1, 2.0, 200, 2.0, 1).unwrap();
        assert!(easy.bound > 0.5 && easy.pass);
    }
}
