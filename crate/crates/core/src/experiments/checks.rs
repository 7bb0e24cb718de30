//! Experiments that combine several library operations.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gff::decompose::Decomposer;
use crate::gff::sample::FieldSampler;
use crate::gff::tilt::TiltProfile;
use crate::lattice::{floor_mul, BoxHierarchy, BoxSpec, Point, Window};
use crate::percolation::coarse::{grid_path_check, required_box, GoodLevels};
use crate::percolation::contour::disconnected_in_mask;
use crate::rng::stream;
use crate::stats::{correlation, wilson_upper, McEstimate};

const DISCONNECT_STREAM: u64 = 0xD15C;
const MARKOV_STREAM: u64 = 0x3A4C;
const TILT_STREAM: u64 = 0x7117;
const PATHS_STREAM: u64 = 0x9A75;

/// `P[A_N]` at several levels from common field samples, so the estimates
/// are nondecreasing in `α` sample by sample.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DisconnectionCurve {
    pub alphas: Vec<f64>,
    pub estimates: Vec<McEstimate>,
    pub sampler_bias: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn disconnection_curve(
    d: usize,
    alphas: &[f64],
    n: i64,
    m: f64,
    n_mc: u64,
    guard_factor: f64,
    dense_limit: usize,
    seed: u64,
) -> Result<DisconnectionCurve> {
    if alphas.is_empty() || n_mc == 0 {
        return Err(Error::InvalidArgument("need at least one level and one sample".into()));
    }
    let start = Instant::now();
    let sampler = FieldSampler::for_window(Window::centered(d, floor_mul(m, n)), dense_limit, guard_factor)?;
    let rows: Vec<Vec<bool>> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let phi = sampler.sample(&mut stream(seed, DISCONNECT_STREAM, i));
            alphas
                .iter()
                .map(|&a| {
                    let mask: Vec<bool> = phi.values().iter().map(|&v| v >= a).collect();
                    disconnected_in_mask(phi.window(), &mask, n, m)
                })
                .collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<_>>()?;
    let t = start.elapsed().as_secs_f64();
    let estimates = (0..alphas.len())
        .map(|k| McEstimate::from_indicators(&rows.iter().map(|r| r[k]).collect::<Vec<_>>(), seed, t))
        .collect();
    Ok(DisconnectionCurve {
        alphas: alphas.to_vec(),
        estimates,
        sampler_bias: sampler.bias_bound()?,
    })
}

/// Checks of `φ = h + ψ` on `U = B_r` inside the window `B_R`: exact
/// reconstruction, harmonicity of `h` on `U`, and vanishing correlation
/// between `ψ` inside `U` and `φ` outside.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarkovReport {
    pub window: i64,
    pub u_radius: i64,
    pub reconstruction_error: f64,
    pub harmonicity_residual: f64,
    /// `max |corr(ψ_x, φ_y)|` over the tested pairs.
    pub max_abs_corr: f64,
    /// `4 / sqrt(n)`.
    pub threshold: f64,
    pub pairs: usize,
    pub n: u64,
    pub seed: u64,
}

/// The tested pairs: three sites of `U` (center, face, corner) against
/// sites on `∂U`, just beyond it, and at the window corner.
fn markov_pairs(d: usize, r: i64, big_r: i64) -> (Vec<Point>, Vec<Point>) {
    let o = Point::origin(d);
    let xs = vec![o.clone(), o.with(0, r), Point::new(&vec![r; d])];
    let ys = vec![
        o.with(0, r + 1),
        o.with(1, -(r + 1)),
        Point::new(&vec![r + 1; d]),
        o.with(0, big_r),
        Point::new(&vec![-big_r; d]),
    ];
    (xs, ys)
}

pub fn markov_check(d: usize, window: i64, u_radius: i64, n_mc: u64, dense_limit: usize, seed: u64) -> Result<MarkovReport> {
    if n_mc < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let w = Window::centered(d, window);
    let u = BoxSpec::centered(d, u_radius);
    let dec = Decomposer::for_box(&w, &u)?;
    let sampler = FieldSampler::for_window(w.clone(), dense_limit, 2.0)?;
    let (xs, ys) = markov_pairs(d, u_radius, window);
    let xi: Vec<usize> = xs.iter().map(|p| w.index(p).expect("inside U")).collect();
    let yi: Vec<usize> = ys.iter().map(|p| w.index(p).expect("inside window")).collect();
    struct One {
        err: f64,
        res: f64,
        psi: Vec<f64>,
        phi: Vec<f64>,
    }
    let ones: Vec<One> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let phi = sampler.sample(&mut stream(seed, MARKOV_STREAM, i));
            let dc = dec.apply(&phi)?;
            let err = phi
                .values()
                .iter()
                .zip(dc.h.values().iter().zip(dc.psi.values()))
                .map(|(f, (h, p))| (f - h - p).abs())
                .fold(0.0, f64::max);
            Ok(One {
                err,
                res: dc.harmonicity_residual(),
                psi: xi.iter().map(|&k| dc.psi.values()[k]).collect(),
                phi: yi.iter().map(|&k| phi.values()[k]).collect(),
            })
        })
        .collect::<Result<_>>()?;
    let mut max_abs_corr = 0.0f64;
    for a in 0..xi.len() {
        let px: Vec<f64> = ones.iter().map(|o| o.psi[a]).collect();
        for b in 0..yi.len() {
            let py: Vec<f64> = ones.iter().map(|o| o.phi[b]).collect();
            max_abs_corr = max_abs_corr.max(correlation(&px, &py).abs());
        }
    }
    Ok(MarkovReport {
        window,
        u_radius,
        reconstruction_error: ones.iter().map(|o| o.err).fold(0.0, f64::max),
        harmonicity_residual: ones.iter().map(|o| o.res).fold(0.0, f64::max),
        max_abs_corr,
        threshold: 4.0 / (n_mc as f64).sqrt(),
        pairs: xi.len() * yi.len(),
        n: n_mc,
        seed,
    })
}

/// The change-of-measure lower bound
/// `log P[A_N] ≥ log P̃[A_N] - (H + 1/e) / P̃[A_N]`, `H = E(f_N, f_N)/2`,
/// next to a direct estimate of `P[A_N]` from the same base samples.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TiltBoundReport {
    pub alpha: f64,
    pub n: i64,
    pub m: f64,
    pub profile: TiltProfile,
    pub entropy: f64,
    pub tilted: McEstimate,
    /// `None` when no tilted sample disconnects.
    pub lower_log: Option<f64>,
    pub lower_log_stderr: Option<f64>,
    pub direct: McEstimate,
    /// `log(p̂ + 4σ)`, or the log of the Wilson `z = 4` upper bound when
    /// `p̂ = 0`.
    pub direct_log_upper: f64,
    /// The lower bound minus four of its standard errors does not exceed
    /// the direct upper value.
    pub consistent: bool,
    pub sampler_bias: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn tilt_lower_bound(
    d: usize,
    alpha: f64,
    n: i64,
    m: f64,
    plateau: f64,
    inner: f64,
    n_mc: u64,
    guard_factor: f64,
    dense_limit: usize,
    seed: u64,
) -> Result<TiltBoundReport> {
    if n_mc == 0 {
        return Err(Error::InvalidArgument("n_mc must be positive".into()));
    }
    let profile = TiltProfile::new(d, plateau, inner, m, n)?;
    let start = Instant::now();
    let window = Window::centered(d, floor_mul(m, n));
    let sampler = FieldSampler::for_window(window.clone(), dense_limit, guard_factor)?;
    let shift = profile.shift(&window);
    let pairs: Vec<(bool, bool)> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let phi = sampler.sample(&mut stream(seed, TILT_STREAM, i));
            let plain: Vec<bool> = phi.values().iter().map(|&v| v >= alpha).collect();
            let tilted: Vec<bool> = phi.values().iter().zip(shift.values()).map(|(v, f)| v + f >= alpha).collect();
            Ok((disconnected_in_mask(&window, &tilted, n, m)?, disconnected_in_mask(&window, &plain, n, m)?))
        })
        .collect::<Result<_>>()?;
    let t = start.elapsed().as_secs_f64();
    let tilted = McEstimate::from_indicators(&pairs.iter().map(|p| p.0).collect::<Vec<_>>(), seed, t);
    let direct = McEstimate::from_indicators(&pairs.iter().map(|p| p.1).collect::<Vec<_>>(), seed, t);
    let entropy = profile.entropy();
    let c = entropy + (-1.0f64).exp();
    let (lower_log, lower_log_stderr) = if tilted.mean > 0.0 {
        let p = tilted.mean;
        // delta method: d/dp (log p - c/p) = 1/p + c/p²
        (Some(p.ln() - c / p), Some((1.0 / p + c / (p * p)) * tilted.stderr))
    } else {
        (None, None)
    };
    let direct_log_upper = if direct.hits() > 0 {
        (direct.mean + 4.0 * direct.stderr).min(1.0).ln()
    } else {
        wilson_upper(0, direct.n, 4.0).ln()
    };
    let consistent = match (lower_log, lower_log_stderr) {
        (Some(l), Some(s)) => l - 4.0 * s <= direct_log_upper,
        _ => true,
    };
    Ok(TiltBoundReport {
        alpha,
        n,
        m,
        profile,
        entropy,
        tilted,
        lower_log,
        lower_log_stderr,
        direct,
        direct_log_upper,
        consistent,
        sampler_bias: sampler.bias_bound()?,
    })
}

/// Path property of adjacent good boxes, accumulated over field samples on a
/// cube of `grid^d` boxes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathReport {
    pub fields: u64,
    pub boxes: usize,
    pub good_boxes: usize,
    pub good_pairs: usize,
    pub pairs_with_path: usize,
    pub sampler_bias: f64,
    pub seed: u64,
}

#[allow(clippy::too_many_arguments)]
pub fn good_pair_paths(
    d: usize,
    l: i64,
    k: i64,
    grid: usize,
    lv: &GoodLevels,
    n_fields: u64,
    guard_factor: f64,
    dense_limit: usize,
    seed: u64,
) -> Result<PathReport> {
    let h = BoxHierarchy::new(d, l, k)?;
    let sites: Vec<Point> = BoxSpec::from_corners(Point::origin(d), Point::new(&vec![grid as i64; d]))?
        .points()
        .map(|p| p.scale(l))
        .collect();
    let mut all = sites.clone();
    for z in &sites {
        all.extend(h.neighbors(z));
    }
    let need = required_box(&h, &all).expect("nonempty grid");
    let sampler = FieldSampler::for_window(Window::new(need), dense_limit, guard_factor)?;
    let mut r = PathReport {
        fields: n_fields,
        boxes: 0,
        good_boxes: 0,
        good_pairs: 0,
        pairs_with_path: 0,
        sampler_bias: sampler.bias_bound()?,
        seed,
    };
    for i in 0..n_fields {
        let phi = sampler.sample(&mut stream(seed, PATHS_STREAM, i));
        let g = grid_path_check(&phi, &h, grid, lv)?;
        r.boxes += g.statuses.len();
        r.good_boxes += g.statuses.iter().filter(|s| s.psi_good && s.h_good).count();
        r.good_pairs += g.good_pairs;
        r.pairs_with_path += g.pairs_with_path;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disconnection_is_monotone_in_the_level() {
        let c = disconnection_curve(3, &[-1.0, 0.0, 1.0, 3.0], 2, 2.0, 200, 2.0, 4096, 4).unwrap();
        for w in c.estimates.windows(2) {
            assert!(w[0].hits() <= w[1].hits());
        }
        assert!(c.estimates[3].mean > 0.9);
        assert_eq!(c.sampler_bias, 0.0);
    }

    #[test]
    fn markov_decomposition_small() {
        let r = markov_check(3, 4, 2, 400, 4096, 1).unwrap();
        assert!(r.reconstruction_error <= 1e-12);
        assert!(r.harmonicity_residual <= 1e-10);
        assert!(r.max_abs_corr < 0.3);
        assert_eq!(r.pairs, 15);
    }

    #[test]
    fn zero_tilt_gives_the_direct_estimate() {
        let r = tilt_lower_bound(3, 0.5, 1, 2.0, 0.0, 1.25, 100, 2.0, 4096, 2).unwrap();
        assert_eq!(r.entropy, 0.0);
        assert_eq!(r.tilted.mean, r.direct.mean);
        assert!(r.consistent);
        // a deep plateau disconnects almost surely
        let r = tilt_lower_bound(3, 0.0, 2, 2.0, -8.0, 1.25, 50, 2.0, 4096, 2).unwrap();
        assert!(r.tilted.mean > 0.9);
        assert!(r.lower_log.unwrap() < 0.0);
    }
}
