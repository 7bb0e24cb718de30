//! Random-interlacement traces and simple-random-walk ranges, and
//! disconnection by their complements.
//!
//! The trajectories of `ℐ^u` that meet a finite set `K` form a Poisson cloud
//! of `Poisson(u·cap(K))` walks, each entering `K` at a site drawn from the
//! normalized equilibrium measure `ē_K` and then moving as a simple random
//! walk. Each walk is simulated inside a guard box; when it leaves, its next
//! entrance into the window is drawn from the exact entrance law, so traces
//! are exact on the window. The single-walk range used for the random-walk
//! comparison is instead stopped at the guard box, and the chance that it
//! would have come back is reported.

use std::sync::Arc;
use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Poisson;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gff::sample::{FieldSampler, DEFAULT_DENSE_LIMIT};
use crate::lattice::{floor_mul, inner_boundary, BoxSpec, Point, PointSet, Window};
use crate::linalg::dense::SpdFactor;
use crate::percolation::contour::{disconnected_in_mask, disconnection_event};
use crate::potential::equilibrium::equilibrium;
use crate::potential::green::GreenTable;
use crate::rng::stream;
use crate::stats::{poisson_gof, GofResult, McEstimate};

/// The sites of a window covered by the walks of one sample.
#[derive(Clone, Debug)]
pub struct TraceSample {
    pub u: f64,
    pub window: Window,
    pub occupied: Vec<bool>,
    pub walks: u64,
}

/// `𝒱^u` within the window.
#[derive(Clone, Debug)]
pub struct VacantMask {
    pub u: f64,
    pub window: Window,
    pub vacant: Vec<bool>,
}

impl TraceSample {
    pub fn vacant(&self) -> VacantMask {
        VacantMask {
            u: self.u,
            window: self.window.clone(),
            vacant: self.occupied.iter().map(|&o| !o).collect(),
        }
    }

    pub fn is_occupied(&self, p: &Point) -> bool {
        self.window.index(p).is_some_and(|i| self.occupied[i])
    }
}

/// Runs a walk from `start` until it leaves `guard`, marking the window sites
/// it visits, and returns the exit site.
fn walk_to_guard<R: Rng + ?Sized>(start: &Point, window: &Window, guard: &BoxSpec, occupied: &mut [bool], rng: &mut R) -> Point {
    let d = start.dim();
    let mut x: Vec<i64> = start.coords().to_vec();
    let (glo, ghi) = (guard.lo().coords(), guard.hi().coords());
    let (wlo, whi) = (window.spec().lo().coords(), window.spec().hi().coords());
    let strides = window.strides();
    loop {
        if (0..d).all(|a| x[a] >= wlo[a] && x[a] < whi[a]) {
            let i: usize = (0..d).map(|a| (x[a] - wlo[a]) as usize * strides[a]).sum();
            occupied[i] = true;
        }
        if (0..d).any(|a| x[a] < glo[a] || x[a] >= ghi[a]) {
            return Point::new(&x);
        }
        let k = rng.random_range(0..2 * d);
        x[k / 2] += if k % 2 == 0 { 1 } else { -1 };
    }
}

/// Entrance law of the walk into a box `W` from a site outside it:
/// `P_z[H_W < ∞, X_{H_W} = y] = (G_S^{-1} g(z, ·))(y)` with `S` the inner
/// boundary of `W`, where every entrance happens.
struct ReentryLaw {
    points: Vec<Point>,
    factor: SpdFactor,
    table: Arc<GreenTable>,
}

impl ReentryLaw {
    fn new(window: &Window) -> Result<Self> {
        let points: Vec<Point> = inner_boundary(&window.spec().to_set()).into_iter().collect();
        let d = window.dim();
        let table = GreenTable::shared(d, 2 * window.spec().sup_radius() as usize + 1)?;
        let factor = SpdFactor::from_fn(points.len(), |i, j| table.between(&points[i], &points[j]))?;
        Ok(ReentryLaw { points, factor, table })
    }

    fn sample<R: Rng + ?Sized>(&self, z: &Point, rng: &mut R) -> Option<&Point> {
        let a: Vec<f64> = self.points.iter().map(|w| self.table.between(z, w)).collect();
        let law = self.factor.solve(&a);
        let mut t: f64 = rng.random();
        for (i, v) in law.iter().enumerate() {
            let v = v.max(0.0);
            if t < v {
                return Some(&self.points[i]);
            }
            t -= v;
        }
        None
    }
}

/// Marks the range of a walk from `start`. With a re-entry law the walk is
/// followed forever: each time it leaves the guard box its next entrance
/// into the window (or its escape) is drawn exactly. Without one it stops at
/// the guard box.
fn mark_walk<R: Rng + ?Sized>(
    start: &Point,
    window: &Window,
    guard: &BoxSpec,
    reentry: Option<&ReentryLaw>,
    occupied: &mut [bool],
    rng: &mut R,
) {
    let mut x = start.clone();
    loop {
        let z = walk_to_guard(&x, window, guard, occupied, rng);
        match reentry.and_then(|law| law.sample(&z, rng)) {
            Some(y) => x = y.clone(),
            None => return,
        }
    }
}

/// Samples traces of `ℐ^u` through a fixed anchor set, exactly on the
/// window.
pub struct TraceSampler {
    anchors: Vec<Point>,
    entrance: WeightedIndex<f64>,
    cap: f64,
    window: Window,
    guard: BoxSpec,
    reentry: ReentryLaw,
    return_bound: f64,
}

impl TraceSampler {
    /// Walks are simulated step by step inside the guard box, the sup-ball of
    /// radius `⌈guard_factor·r⌉` with `r` the sup-radius of the window; the
    /// guard only trades step simulation against re-entry draws.
    pub fn new(k: &PointSet, window: Window, guard_factor: f64) -> Result<Self> {
        let mut errs = Vec::new();
        if k.is_empty() {
            errs.push("anchor set K is empty".to_string());
        }
        if let Some(p) = k.iter().find(|p| !window.contains(p)) {
            errs.push(format!("anchor site {p:?} is outside the window"));
        }
        if !(guard_factor >= 2.0) {
            errs.push(format!("guard factor {guard_factor} must be at least 2"));
        }
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        let d = window.dim();
        let eq = equilibrium(k)?;
        let (anchors, weights): (Vec<Point>, Vec<f64>) = eq.normalized().into_iter().unzip();
        let entrance = WeightedIndex::new(&weights).map_err(|e| Error::IllConditioned(e.to_string()))?;
        let r = window.spec().sup_radius();
        let gr = ((guard_factor * r as f64).ceil() as i64).max(r + 1);
        let guard = BoxSpec::centered(d, gr);
        let return_bound = return_bound(&window, gr)?;
        Ok(TraceSampler {
            anchors,
            entrance,
            cap: eq.cap(),
            reentry: ReentryLaw::new(&window)?,
            window,
            guard,
            return_bound,
        })
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn guard(&self) -> &BoxSpec {
        &self.guard
    }

    /// Bound on the probability that a walk outside the guard box comes back
    /// to the window; the expected number of re-entry draws per walk is at
    /// most `1 / (1 - bound)` when the bound is below one.
    pub fn return_bound(&self) -> f64 {
        self.return_bound
    }

    pub fn sample<R: Rng + ?Sized>(&self, u: f64, rng: &mut R) -> Result<TraceSample> {
        Ok(self.sample_coupled(&[u], rng)?.remove(0))
    }

    /// Traces at several levels from one cloud: walks are drawn at the largest
    /// level, each gets a uniform mark, and level `u` keeps the walks whose
    /// mark is below `u / u_max`. Occupied sets increase with `u`.
    pub fn sample_coupled<R: Rng + ?Sized>(&self, us: &[f64], rng: &mut R) -> Result<Vec<TraceSample>> {
        if us.is_empty() || us.iter().any(|&u| !(u > 0.0) || !u.is_finite()) {
            return Err(Error::InvalidArgument(format!("levels must be positive, got {us:?}")));
        }
        let u_max = us.iter().copied().fold(0.0, f64::max);
        let n: u64 = Poisson::new(u_max * self.cap)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .sample(rng) as u64;
        let mut out: Vec<TraceSample> = us
            .iter()
            .map(|&u| TraceSample {
                u,
                window: self.window.clone(),
                occupied: vec![false; self.window.len()],
                walks: 0,
            })
            .collect();
        let mut range = vec![false; self.window.len()];
        for _ in 0..n {
            let mark: f64 = rng.random();
            let start = &self.anchors[self.entrance.sample(rng)];
            range.iter_mut().for_each(|v| *v = false);
            mark_walk(start, &self.window, &self.guard, Some(&self.reentry), &mut range, rng);
            for t in out.iter_mut() {
                if mark * u_max < t.u {
                    t.walks += 1;
                    for (o, &r) in t.occupied.iter_mut().zip(&range) {
                        *o |= r;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// `P_x[H_W < ∞] ≤ cap(W) max_{|z|_∞ ≥ gr - r} g(z)` for `x` outside the
/// guard box of radius `gr`.
fn return_bound(window: &Window, gr: i64) -> Result<f64> {
    let r = window.spec().sup_radius();
    let d = window.dim();
    let cap_w = equilibrium(&window.spec().to_set())?.cap();
    let table = GreenTable::shared(d, (gr - r) as usize + 1)?;
    Ok((cap_w * table.max_beyond(gr - r)).min(1.0))
}

pub fn sample_interlacement_trace<R: Rng + ?Sized>(
    u: f64,
    k: &PointSet,
    window: &Window,
    guard_factor: f64,
    rng: &mut R,
) -> Result<TraceSample> {
    TraceSampler::new(k, window.clone(), guard_factor)?.sample(u, rng)
}

/// The law of `ℐ^u` at the origin: `P[0 ∈ ℐ^u] = 1 - e^{-u/g(0)}` and the
/// number of trajectories through `0` is Poisson with mean `u/g(0)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VacancyReport {
    pub u: f64,
    pub occupied: McEstimate,
    pub exact: f64,
    pub z_score: f64,
    pub walk_count_mean: f64,
    pub gof: GofResult,
}

const VACANCY_STREAM: u64 = 0x7AC0;

pub fn vacancy_law(d: usize, u: f64, n_mc: u64, seed: u64) -> Result<VacancyReport> {
    if n_mc < 2 {
        return Err(Error::Validation(vec![format!("n_mc = {n_mc} must be at least 2")]));
    }
    let start = Instant::now();
    let origin = Point::origin(d);
    let k: PointSet = [origin.clone()].into_iter().collect();
    let sampler = TraceSampler::new(&k, Window::centered(d, 0), 2.0)?;
    let draws: Vec<(bool, u64)> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let t = sampler.sample(u, &mut stream(seed, VACANCY_STREAM, i))?;
            Ok((t.is_occupied(&origin), t.walks))
        })
        .collect::<Result<_>>()?;
    let hits: Vec<bool> = draws.iter().map(|x| x.0).collect();
    let counts: Vec<u64> = draws.iter().map(|x| x.1).collect();
    let occupied = McEstimate::from_indicators(&hits, seed, start.elapsed().as_secs_f64());
    let mean = u * sampler.cap();
    let exact = 1.0 - (-mean).exp();
    Ok(VacancyReport {
        u,
        z_score: (occupied.mean - exact) / (exact * (1.0 - exact) / n_mc as f64).sqrt(),
        occupied,
        exact,
        walk_count_mean: counts.iter().sum::<u64>() as f64 / n_mc as f64,
        gof: poisson_gof(&counts, mean),
    })
}

/// A disconnection frequency with the truncation bias of the walks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WalkReport {
    pub estimate: McEstimate,
    /// Bound on the probability that stopping at the guard box changed a
    /// sample; zero for interlacement traces.
    pub truncation_bias: f64,
    pub mean_walks: f64,
}

const VACANT_STREAM: u64 = 0x7AC4;
const SRW_STREAM: u64 = 0x5E_77;

fn check_geometry(n: i64, m: f64, n_mc: u64) -> Result<i64> {
    let mut errs = Vec::new();
    if n < 1 {
        errs.push(format!("N = {n} must be at least 1"));
    }
    let mn = floor_mul(m, n);
    if mn < n + 1 {
        errs.push(format!("[MN] = {mn} must be at least N + 1"));
    }
    if n_mc == 0 {
        errs.push("n_mc must be positive".into());
    }
    if errs.is_empty() {
        Ok(mn)
    } else {
        Err(Error::Validation(errs))
    }
}

/// `P[∂B_N ↮ S_N in 𝒱^u]` at each level of `us`, with the anchor set
/// `B_{[MN]}` so that every trajectory meeting the window enters through it.
/// Levels share their samples through the thinning coupling.
#[allow(clippy::too_many_arguments)]
pub fn vacant_disconnection_curve(
    d: usize,
    us: &[f64],
    n: i64,
    m: f64,
    guard_factor: f64,
    n_mc: u64,
    seed: u64,
) -> Result<Vec<WalkReport>> {
    let mn = check_geometry(n, m, n_mc)?;
    let start = Instant::now();
    let window = Window::centered(d, mn);
    let sampler = TraceSampler::new(&window.spec().to_set(), window, guard_factor)?;
    let rows: Vec<Vec<(bool, u64)>> = (0..n_mc)
        .into_par_iter()
        .map(|i| -> Result<Vec<(bool, u64)>> {
            let traces = sampler.sample_coupled(us, &mut stream(seed, VACANT_STREAM, i))?;
            traces
                .iter()
                .map(|t| Ok((disconnected_in_mask(&t.window, &t.vacant().vacant, n, m)?, t.walks)))
                .collect()
        })
        .collect::<Result<_>>()?;
    let t = start.elapsed().as_secs_f64();
    Ok(us
        .iter()
        .enumerate()
        .map(|(k, _)| {
            let hits: Vec<bool> = rows.iter().map(|r| r[k].0).collect();
            let mean_walks = rows.iter().map(|r| r[k].1 as f64).sum::<f64>() / n_mc as f64;
            WalkReport {
                estimate: McEstimate::from_indicators(&hits, seed, t),
                truncation_bias: 0.0,
                mean_walks,
            }
        })
        .collect())
}

pub fn vacant_disconnection_prob(
    d: usize,
    u: f64,
    n: i64,
    m: f64,
    guard_factor: f64,
    n_mc: u64,
    seed: u64,
) -> Result<WalkReport> {
    Ok(vacant_disconnection_curve(d, &[u], n, m, guard_factor, n_mc, seed)?.remove(0))
}

/// `P_0[∂B_N ↮ S_N in 𝒱]` with `𝒱` the complement of the range of one walk
/// from the origin, stopped on leaving the guard box `B_{⌈guard_factor·[MN]⌉}`.
pub fn srw_disconnection_prob(d: usize, n: i64, m: f64, guard_factor: f64, n_mc: u64, seed: u64) -> Result<WalkReport> {
    let mn = check_geometry(n, m, n_mc)?;
    if !(guard_factor >= 1.0) {
        return Err(Error::Validation(vec![format!("guard factor {guard_factor} must be at least 1")]));
    }
    let start = Instant::now();
    let window = Window::centered(d, mn);
    let gr = ((guard_factor * mn as f64).ceil() as i64).max(mn + 1);
    let guard = BoxSpec::centered(d, gr);
    let hits: Vec<bool> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let mut occupied = vec![false; window.len()];
            mark_walk(&Point::origin(d), &window, &guard, None, &mut occupied, &mut stream(seed, SRW_STREAM, i));
            let vacant: Vec<bool> = occupied.iter().map(|&o| !o).collect();
            disconnected_in_mask(&window, &vacant, n, m)
        })
        .collect::<Result<_>>()?;
    Ok(WalkReport {
        estimate: McEstimate::from_indicators(&hits, seed, start.elapsed().as_secs_f64()),
        truncation_bias: return_bound(&window, gr)?,
        mean_walks: 1.0,
    })
}

/// Paired comparison of two frequencies with the combined standard error.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Comparison {
    pub lhs: McEstimate,
    pub rhs: McEstimate,
    /// Multiplier applied to the right side.
    pub factor: f64,
    pub joint_stderr: f64,
    /// `lhs ≤ factor·rhs + 4·joint_stderr`.
    pub holds: bool,
}

impl Comparison {
    pub fn new(lhs: McEstimate, rhs: McEstimate, factor: f64) -> Self {
        let joint = (lhs.stderr.powi(2) + (factor * rhs.stderr).powi(2)).sqrt();
        let holds = lhs.mean <= factor * rhs.mean + 4.0 * joint;
        Comparison {
            lhs,
            rhs,
            factor,
            joint_stderr: joint,
            holds,
        }
    }
}

const GFF_STREAM: u64 = 0x6FF;

/// `P[A_N]` for the level set `E^{≥α}` of the free field on `B_{[MN]}`.
pub fn gff_disconnection_prob(d: usize, alpha: f64, n: i64, m: f64, guard_factor: f64, n_mc: u64, seed: u64) -> Result<McEstimate> {
    let mn = check_geometry(n, m, n_mc)?;
    let start = Instant::now();
    let sampler = FieldSampler::for_window(Window::centered(d, mn), DEFAULT_DENSE_LIMIT, guard_factor)?;
    let hits: Vec<bool> = (0..n_mc)
        .into_par_iter()
        .map(|i| disconnection_event(&sampler.sample(&mut stream(seed, GFF_STREAM, i)), alpha, n, m))
        .collect::<Result<_>>()?;
    Ok(McEstimate::from_indicators(&hits, seed, start.elapsed().as_secs_f64()))
}

/// The two orderings implied by the coupling of the free field with
/// interlacements and by the domination of one walk by the interlacement:
/// `p_vacant(u) ≤ p_GFF(√(2u))` and
/// `p_SRW ≤ (1 - e^{-u/g(0)})^{-1} p_vacant(u)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CouplingReport {
    pub u: f64,
    pub vacant_vs_gff: Comparison,
    pub srw_vs_vacant: Comparison,
    pub truncation_bias: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn coupling_order_check(d: usize, u: f64, n: i64, m: f64, guard_factor: f64, n_mc: u64, seed: u64) -> Result<CouplingReport> {
    if !(u > 0.0) {
        return Err(Error::Validation(vec![format!("u = {u} must be positive")]));
    }
    let vac = vacant_disconnection_prob(d, u, n, m, guard_factor, n_mc, seed)?;
    let gff = gff_disconnection_prob(d, (2.0 * u).sqrt(), n, m, guard_factor, n_mc, seed)?;
    let srw = srw_disconnection_prob(d, n, m, guard_factor, n_mc, seed)?;
    let g0 = GreenTable::shared(d, 1)?.g0();
    let factor = 1.0 / (1.0 - (-u / g0).exp());
    Ok(CouplingReport {
        u,
        vacant_vs_gff: Comparison::new(vac.estimate.clone(), gff, 1.0),
        srw_vs_vacant: Comparison::new(srw.estimate.clone(), vac.estimate, factor),
        truncation_bias: vac.truncation_bias.max(srw.truncation_bias),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin_set() -> PointSet {
        [Point::origin(3)].into_iter().collect()
    }

    #[test]
    fn walk_counts_are_poisson_and_the_origin_law_is_exact() {
        let w = Window::centered(3, 1);
        let s = TraceSampler::new(&origin_set(), w, 2.0).unwrap();
        let g0 = GreenTable::shared(3, 1).unwrap().g0();
        assert!((s.cap() - 1.0 / g0).abs() < 1e-9);
        let u = 0.5;
        let n = 20_000;
        let samples: Vec<TraceSample> = (0..n).map(|i| s.sample(u, &mut stream(1, 0, i)).unwrap()).collect();
        let counts: Vec<u64> = samples.iter().map(|t| t.walks).collect();
        assert!(poisson_gof(&counts, u * s.cap()).p_value > 0.01);
        let hit: Vec<bool> = samples.iter().map(|t| t.is_occupied(&Point::origin(3))).collect();
        let est = McEstimate::from_indicators(&hit, 1, 0.0);
        let exact = 1.0 - (-u / g0).exp();
        assert!((est.mean - exact).abs() < 4.0 * est.stderr);
        // every walk starts at the origin
        assert!(samples.iter().all(|t| (t.walks > 0) == t.is_occupied(&Point::origin(3))));
    }

    #[test]
    fn vacancy_law_at_the_origin() {
        let r = vacancy_law(3, 0.5, 20_000, 9).unwrap();
        assert!(r.z_score.abs() < 4.0, "{r:?}");
        assert!(r.gof.p_value > 0.01);
        assert!((r.exact - (1.0 - (-0.5f64 / 1.516386).exp())).abs() < 1e-6);
    }

    #[test]
    fn reentry_mass_is_the_hitting_probability() {
        let w = Window::centered(3, 2);
        let law = ReentryLaw::new(&w).unwrap();
        let eq = equilibrium(&w.spec().to_set()).unwrap();
        for z in [Point::new(&[5, 0, 0]), Point::new(&[7, -7, 3]), Point::new(&[20, 1, 1])] {
            let a: Vec<f64> = law.points.iter().map(|y| law.table.between(&z, y)).collect();
            let mass: f64 = law.factor.solve(&a).iter().sum();
            assert!((mass - eq.hitting_probability(&z)).abs() < 1e-9);
        }
    }

    #[test]
    fn every_window_site_has_the_stationary_vacancy_law() {
        let w = Window::centered(3, 2);
        let s = TraceSampler::new(&w.spec().to_set(), w.clone(), 2.0).unwrap();
        let u = 0.5;
        let exact = 1.0 - (-u / GreenTable::shared(3, 1).unwrap().g0()).exp();
        let traces: Vec<TraceSample> = (0..8000).map(|i| s.sample(u, &mut stream(6, 0, i)).unwrap()).collect();
        for x in [Point::origin(3), Point::new(&[2, 2, 2]), Point::new(&[-2, 0, 1])] {
            let hits: Vec<bool> = traces.iter().map(|t| t.is_occupied(&x)).collect();
            let est = McEstimate::from_indicators(&hits, 6, 0.0);
            assert!((est.mean - exact).abs() < 4.0 * est.stderr, "{x:?}: {} vs {exact}", est.mean);
        }
    }

    #[test]
    fn coupled_traces_are_nested() {
        let k = BoxSpec::centered(3, 1).to_set();
        let s = TraceSampler::new(&k, Window::centered(3, 2), 2.0).unwrap();
        for i in 0..50 {
            let t = s.sample_coupled(&[0.1, 0.5, 2.0], &mut stream(2, 0, i)).unwrap();
            for pair in t.windows(2) {
                assert!(pair[0].walks <= pair[1].walks);
                assert!(pair[0].occupied.iter().zip(&pair[1].occupied).all(|(a, b)| !a || *b));
            }
        }
        let far = TraceSampler::new(&k, Window::centered(3, 2), 8.0).unwrap();
        assert!(far.return_bound() > 0.0 && far.return_bound() < s.return_bound().min(0.5));
    }

    #[test]
    fn small_and_large_levels() {
        let r = vacant_disconnection_curve(3, &[1e-4, 50.0], 1, 2.0, 2.0, 100, 3).unwrap();
        assert!(r[0].estimate.mean < 0.05);
        assert!(r[1].estimate.mean > 0.95);
        assert!(matches!(vacant_disconnection_prob(3, 0.5, 2, 1.2, 2.0, 10, 0), Err(Error::Validation(_))));
    }

    #[test]
    fn longer_walks_disconnect_more() {
        let short = srw_disconnection_prob(3, 1, 2.0, 1.0, 400, 5).unwrap();
        let long = srw_disconnection_prob(3, 1, 2.0, 3.0, 400, 5).unwrap();
        // the same stream drives both walks, so each longer range contains the shorter one
        assert!(long.estimate.hits() >= short.estimate.hits());
        assert!(long.truncation_bias < short.truncation_bias);
    }
}
