//! Weighted harmonic averages over well separated `L`-boxes:
//! `Z_f = Σ_B λ(B) h_B(f(B))` with `λ(B) = ν̄(B)` the normalized equilibrium
//! measure of `C = ∪ B`, `h_B` the harmonic average of the field in `U_B`,
//! and `f(B) ∈ D_B`.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gff::sample::PointSampler;
use crate::lattice::{BoxHierarchy, BoxSpec, Point, PointSet, Window};
use crate::potential::equilibrium::equilibrium;
use crate::potential::green::GreenTable;
use crate::potential::killed::DomainSolver;
use crate::rng::stream;
use crate::stats::{linear_fit, sample_variance, McEstimate};

/// Dense limit for the joint sample of the field on the box boundaries.
pub const POINT_DENSE_LIMIT: usize = 16384;

/// A collection `𝒞` of `L·Z^d` sites at mutual sup-distance at least
/// `L + 2KL`, with the weights `λ(z) = ν̄(B_z)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZFieldConfig {
    pub hierarchy: BoxHierarchy,
    pub sites: Vec<Point>,
    pub lambda: Vec<f64>,
    /// `cap(C)` for `C = ∪_z B_z`.
    pub cap_c: f64,
    /// `cap(B_0)`.
    pub cap_b: f64,
}

impl ZFieldConfig {
    pub fn new(hierarchy: BoxHierarchy, sites: Vec<Point>) -> Result<Self> {
        let mut errs = Vec::new();
        if sites.is_empty() {
            errs.push("the collection of boxes is empty".into());
        }
        for z in &sites {
            if !hierarchy.is_site(z) {
                errs.push(format!("{z:?} is not a site of L·Z^d with L = {}", hierarchy.l()));
            }
        }
        let sep = hierarchy.separation();
        for (i, a) in sites.iter().enumerate() {
            for b in &sites[i + 1..] {
                if a.sup_dist(b) < sep {
                    errs.push(format!(
                        "sites {a:?} and {b:?} are at sup-distance {} < L + 2KL = {sep}",
                        a.sup_dist(b)
                    ));
                }
            }
        }
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        let c: PointSet = sites.iter().flat_map(|z| hierarchy.b(z).to_set()).collect();
        let eq = equilibrium(&c)?;
        let lambda = sites
            .iter()
            .map(|z| hierarchy.b(z).points().map(|x| eq.measure(&x)).sum::<f64>() / eq.cap())
            .collect();
        let cap_b = equilibrium(&hierarchy.b(&Point::origin(hierarchy.d())).to_set())?.cap();
        Ok(ZFieldConfig {
            hierarchy,
            sites,
            lambda,
            cap_c: eq.cap(),
            cap_b,
        })
    }

    /// `count` sites on the first axis at the minimal allowed spacing.
    pub fn on_a_line(hierarchy: BoxHierarchy, count: usize) -> Result<Self> {
        let d = hierarchy.d();
        let sep = hierarchy.separation();
        let sites = (0..count as i64).map(|i| Point::origin(d).with(0, i * sep)).collect();
        Self::new(hierarchy, sites)
    }

    /// `f(z) = z + ⌊L/2⌋(1, …, 1)`, the center of each box.
    pub fn centers(&self) -> Vec<Point> {
        let c = Point::new(&vec![self.hierarchy.l() / 2; self.hierarchy.d()]);
        self.sites.iter().map(|z| z.add(&c)).collect()
    }

    fn check_f(&self, f: &[Point]) -> Result<()> {
        if f.len() != self.sites.len() {
            return Err(Error::InvalidArgument(format!("f has {} values for {} boxes", f.len(), self.sites.len())));
        }
        let bad: Vec<String> = self
            .sites
            .iter()
            .zip(f)
            .filter(|(z, y)| !self.hierarchy.dbox(z).contains(y))
            .map(|(z, y)| format!("f({z:?}) = {y:?} is not in D_z"))
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }

    fn table(&self) -> Result<Arc<GreenTable>> {
        let pts: PointSet = self
            .sites
            .iter()
            .flat_map(|z| {
                let t = self.hierarchy.tilde(z).hull(&self.hierarchy.dbox(z));
                [t.lo().clone(), t.hi().clone()]
            })
            .collect();
        GreenTable::shared(self.hierarchy.d(), crate::lattice::diameter(&pts) as usize + 2)
    }
}

fn exit_law(u: &DomainSolver, x: &Point) -> Vec<(Point, f64)> {
    u.exit_distribution(x)
}

/// `E[h_B(x) h_{B'}(x')]` from the exit laws `μ, μ'` of `U, U'` started at
/// `x, x'`: `Σ μ(y) μ'(y') g(y, y')`, collapsed to a single sum whenever one
/// exit law avoids the other domain.
fn h_covariance(
    table: &GreenTable,
    (mu, x, u): (&[(Point, f64)], &Point, &BoxSpec),
    (mu2, x2, u2): (&[(Point, f64)], &Point, &BoxSpec),
) -> f64 {
    if mu.iter().all(|(y, _)| !u2.contains(y)) {
        mu.iter().map(|(y, p)| p * table.between(y, x2)).sum()
    } else if mu2.iter().all(|(y, _)| !u.contains(y)) {
        mu2.iter().map(|(y, p)| p * table.between(x, y)).sum()
    } else {
        mu.iter()
            .map(|(y, p)| p * mu2.iter().map(|(y2, q)| q * table.between(y, y2)).sum::<f64>())
            .sum()
    }
}

/// Exact `var(Z_f)`.
pub fn zfield_variance(cfg: &ZFieldConfig, f: &[Point]) -> Result<f64> {
    cfg.check_f(f)?;
    let table = cfg.table()?;
    let h = &cfg.hierarchy;
    let us: Vec<BoxSpec> = cfg.sites.iter().map(|z| h.u(z)).collect();
    let mus: Vec<Vec<(Point, f64)>> = us
        .iter()
        .zip(f)
        .map(|(u, x)| exit_law(&DomainSolver::for_box(u), x))
        .collect();
    let mut var = 0.0;
    for i in 0..f.len() {
        for j in 0..f.len() {
            let c = h_covariance(&table, (&mus[i], &f[i], &us[i]), (&mus[j], &f[j], &us[j]));
            var += cfg.lambda[i] * cfg.lambda[j] * c;
        }
    }
    Ok(var)
}

/// Sample variance of `Z_f` over independent exact samples of the field on
/// the sites that `Z_f` depends on.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub exact: f64,
    pub sample_variance: f64,
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
}

impl VarianceEstimate {
    /// `|sample - exact| / stderr`.
    pub fn z_score(&self) -> f64 {
        (self.sample_variance - self.exact).abs() / self.stderr
    }
}

const ZVAR_STREAM: u64 = 0x2F_0A;

pub fn zfield_variance_mc(cfg: &ZFieldConfig, f: &[Point], n_mc: u64, seed: u64) -> Result<VarianceEstimate> {
    if n_mc < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let exact = zfield_variance(cfg, f)?;
    let h = &cfg.hierarchy;
    // Z_f = Σ_B λ(B) Σ_y μ_B(y) φ_y is linear in φ on the union of the supports
    let mut weights: BTreeMap<Point, f64> = BTreeMap::new();
    for (k, z) in cfg.sites.iter().enumerate() {
        for (y, p) in exit_law(&DomainSolver::for_box(&h.u(z)), &f[k]) {
            *weights.entry(y).or_insert(0.0) += cfg.lambda[k] * p;
        }
    }
    let (pts, w): (Vec<Point>, Vec<f64>) = weights.into_iter().unzip();
    let sampler = PointSampler::new(pts, POINT_DENSE_LIMIT)?;
    let v = sampler.pullback(&w);
    let zs: Vec<f64> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, ZVAR_STREAM, i);
            v.iter().map(|c| c * rng.sample::<f64, _>(rand_distr::StandardNormal)).sum()
        })
        .collect();
    let (s, se) = sample_variance(&zs);
    Ok(VarianceEstimate {
        exact,
        sample_variance: s,
        stderr: se,
        n: n_mc,
        seed,
    })
}

/// Joint sampler of `h_B` on `D_B` for all boxes of a configuration.
pub struct HarmonicAverages {
    cfg: ZFieldConfig,
    sampler: PointSampler,
    boxes: Vec<BoxPlan>,
}

struct BoxPlan {
    solver: DomainSolver,
    /// For each unknown of `U`, positions in the joint sample of its
    /// neighbors outside `U`.
    exits: Vec<Vec<usize>>,
    /// For each site of `D`, either an unknown of `U` or a joint sample slot.
    d_sites: Vec<Slot>,
}

#[derive(Clone, Copy)]
enum Slot {
    Inside(usize),
    Outside(usize),
}

impl HarmonicAverages {
    pub fn new(cfg: &ZFieldConfig, limit: usize) -> Result<Self> {
        let h = &cfg.hierarchy;
        // sites of ∂U_B and of D_B \ U_B for every box
        let mut needed = PointSet::new();
        for z in &cfg.sites {
            let u = h.u(z);
            let grown = BoxSpec::cube(z, -h.k() * h.l(), h.l() + h.k() * h.l());
            for p in grown.points() {
                if !u.contains(&p) && p.neighbors().any(|q| u.contains(&q)) {
                    needed.insert(p);
                }
            }
            needed.extend(h.dbox(z).points().filter(|p| !u.contains(p)));
        }
        let pts: Vec<Point> = needed.into_iter().collect();
        let slot: BTreeMap<Point, usize> = pts.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
        let sampler = PointSampler::new(pts, limit)?;
        let boxes = cfg
            .sites
            .iter()
            .map(|z| {
                let u = h.u(z);
                let solver = DomainSolver::for_box(&u);
                let exits = (0..solver.len())
                    .map(|j| {
                        solver
                            .point(j)
                            .neighbors()
                            .filter(|q| !u.contains(q))
                            .map(|q| slot[&q])
                            .collect()
                    })
                    .collect();
                let d_sites = h
                    .dbox(z)
                    .points()
                    .map(|p| match solver.index(&p) {
                        Some(j) => Slot::Inside(j),
                        None => Slot::Outside(slot[&p]),
                    })
                    .collect();
                BoxPlan {
                    solver,
                    exits,
                    d_sites,
                }
            })
            .collect();
        Ok(HarmonicAverages {
            cfg: cfg.clone(),
            sampler,
            boxes,
        })
    }

    /// `h_B` on `D_B` for each box, sites of `D_B` in window order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        let phi = self.sampler.sample(rng);
        let w = 1.0 / (2 * self.cfg.hierarchy.d()) as f64;
        self.boxes
            .iter()
            .map(|b| {
                let rhs: Vec<f64> = b.exits.iter().map(|e| w * e.iter().map(|&k| phi[k]).sum::<f64>()).collect();
                let hu = b.solver.solve(&rhs);
                b.d_sites
                    .iter()
                    .map(|s| match *s {
                        Slot::Inside(j) => hu[j],
                        Slot::Outside(k) => phi[k],
                    })
                    .collect()
            })
            .collect()
    }

    /// Window of `D_B` for box `k`, matching the order of [`Self::sample`].
    pub fn d_window(&self, k: usize) -> Window {
        Window::new(self.cfg.hierarchy.dbox(&self.cfg.sites[k]))
    }
}

/// `inf_f Z_f = Σ_B λ(B) min_{D_B} h_B`: the infimum over the product class
/// splits over boxes.
pub fn factorized_inf(lambda: &[f64], h_on_d: &[Vec<f64>]) -> f64 {
    lambda
        .iter()
        .zip(h_on_d)
        .map(|(l, h)| l * h.iter().copied().fold(f64::INFINITY, f64::min))
        .sum()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZInfReport {
    pub k: i64,
    pub l: i64,
    pub boxes: usize,
    pub cap_c: f64,
    /// Estimate of `E[Z]`, `Z = inf_f Z_f`.
    pub estimate: McEstimate,
    /// `|E[Z]| (|𝒞| / cap(C))^{-1/2} K`, roughly constant in `K` when the
    /// mean decays like `1/K`.
    pub ratio: f64,
    pub ratio_stderr: f64,
}

const ZINF_STREAM: u64 = 0x21_4F;

pub fn zfield_inf_stats(cfg: &ZFieldConfig, n_mc: u64, seed: u64, limit: usize) -> Result<ZInfReport> {
    if n_mc == 0 {
        return Err(Error::InvalidArgument("n_mc must be positive".into()));
    }
    let start = Instant::now();
    let plan = HarmonicAverages::new(cfg, limit)?;
    let zs: Vec<f64> = (0..n_mc)
        .into_par_iter()
        .map(|i| factorized_inf(&cfg.lambda, &plan.sample(&mut stream(seed, ZINF_STREAM, i))))
        .collect();
    let estimate = McEstimate::from_samples(&zs, seed, start.elapsed().as_secs_f64());
    let scale = (cfg.sites.len() as f64 / cfg.cap_c).sqrt();
    let k = cfg.hierarchy.k() as f64;
    Ok(ZInfReport {
        k: cfg.hierarchy.k(),
        l: cfg.hierarchy.l(),
        boxes: cfg.sites.len(),
        cap_c: cfg.cap_c,
        ratio: estimate.mean.abs() / scale * k,
        ratio_stderr: estimate.stderr / scale * k,
        estimate,
    })
}

/// Tail of `sup_D |h_B|` over a grid of levels, with a least-squares fit of
/// `log P` against `a²` over the levels where some exceedance was seen.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HarmonicTail {
    pub l: i64,
    pub k: i64,
    pub levels: Vec<f64>,
    pub estimates: Vec<McEstimate>,
    pub fit_slope: f64,
    pub fit_r2: f64,
    /// Exact `var h_B` at the lower corner of `D`, the site of `D` closest
    /// to `∂U`.
    pub corner_variance: f64,
}

const TAIL_STREAM: u64 = 0x7A_11;

pub fn harmonic_sup_tail(d: usize, l: i64, k: i64, levels: &[f64], n_mc: u64, seed: u64) -> Result<HarmonicTail> {
    let mut errs = Vec::new();
    if levels.iter().any(|&a| !(a >= 0.0)) {
        errs.push("levels must be nonnegative".to_string());
    }
    if n_mc == 0 {
        errs.push("n_mc must be positive".into());
    }
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    let start = Instant::now();
    let h = BoxHierarchy::new(d, l, k)?;
    let cfg = ZFieldConfig::new(h.clone(), vec![Point::origin(d)])?;
    let plan = HarmonicAverages::new(&cfg, POINT_DENSE_LIMIT)?;
    let sups: Vec<f64> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            plan.sample(&mut stream(seed, TAIL_STREAM, i))[0]
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()))
        })
        .collect();
    let t = start.elapsed().as_secs_f64();
    let estimates: Vec<McEstimate> = levels
        .iter()
        .map(|&a| McEstimate::from_indicators(&sups.iter().map(|&s| s >= a).collect::<Vec<_>>(), seed, t))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = levels
        .iter()
        .zip(&estimates)
        .filter(|(_, e)| e.mean > 0.0 && e.mean < 1.0)
        .map(|(a, e)| (a * a, e.mean.ln()))
        .unzip();
    let (fit_slope, fit_r2) = if xs.len() >= 3 {
        let (_, slope, r2) = linear_fit(&xs, &ys);
        (slope, r2)
    } else {
        (f64::NAN, f64::NAN)
    };
    let corner = Point::new(&vec![-3 * l; d]);
    let corner_variance = zfield_variance(&cfg, &[corner])?;
    Ok(HarmonicTail {
        l,
        k,
        levels: levels.to_vec(),
        estimates,
        fit_slope,
        fit_r2,
        corner_variance,
    })
}

/// The capacity bound `λ(B) ≤ cap(B) / cap(C)`.
pub fn lambda_bound(cfg: &ZFieldConfig) -> f64 {
    cfg.cap_b / cfg.cap_c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn product(sizes: &[usize]) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for &n in sizes {
            out = out
                .into_iter()
                .flat_map(|p: Vec<usize>| {
                    (0..n).map(move |i| {
                        let mut q = p.clone();
                        q.push(i);
                        q
                    })
                })
                .collect();
        }
        out
    }

    fn hier(l: i64, k: i64) -> BoxHierarchy {
        BoxHierarchy::new(3, l, k).unwrap()
    }

    #[test]
    fn weights_sum_to_one_and_respect_the_capacity_bound() {
        let cfg = ZFieldConfig::on_a_line(hier(2, 2), 3).unwrap();
        assert!((cfg.lambda.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for l in &cfg.lambda {
            assert!(*l <= lambda_bound(&cfg) + 1e-12);
        }
        // the middle box is shielded by its neighbors
        assert!(cfg.lambda[1] < cfg.lambda[0]);
    }

    #[test]
    fn separation_is_enforced() {
        let h = hier(2, 2);
        let err = ZFieldConfig::new(h, vec![Point::origin(3), Point::new(&[8, 0, 0]), Point::new(&[1, 0, 0])]);
        match err {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_box_variance_matches_killed_green_deficit() {
        // var h_B(y) = g(y, y) - g_U(y, y)
        let h = hier(2, 4);
        let cfg = ZFieldConfig::new(h.clone(), vec![Point::origin(3)]).unwrap();
        let y = Point::new(&[1, 0, 1]);
        let var = zfield_variance(&cfg, std::slice::from_ref(&y)).unwrap();
        let u = DomainSolver::for_box(&h.u(&Point::origin(3)));
        let gu = u.column(&y)[u.index(&y).unwrap()];
        let g0 = GreenTable::shared(3, 1).unwrap().g0();
        assert!((var - (g0 - gu)).abs() < 1e-9, "{var} vs {}", g0 - gu);
    }

    #[test]
    fn outside_u_the_average_is_the_field() {
        // K = 2: D is not inside U and h_B = φ there
        let h = hier(2, 2);
        assert!(!h.d_inside_u());
        let cfg = ZFieldConfig::new(h, vec![Point::origin(3)]).unwrap();
        let y = Point::new(&[-6, 0, 0]);
        let var = zfield_variance(&cfg, &[y]).unwrap();
        assert!((var - GreenTable::shared(3, 1).unwrap().g0()).abs() < 1e-12);
    }

    #[test]
    fn variance_monte_carlo_agrees() {
        let cfg = ZFieldConfig::on_a_line(hier(2, 3), 2).unwrap();
        let est = zfield_variance_mc(&cfg, &cfg.centers(), 20_000, 4).unwrap();
        assert!(est.z_score() < 4.0, "{est:?}");
    }

    #[test]
    fn harmonic_averages_match_direct_decomposition() {
        let h = hier(2, 2);
        let cfg = ZFieldConfig::new(h.clone(), vec![Point::origin(3)]).unwrap();
        let plan = HarmonicAverages::new(&cfg, POINT_DENSE_LIMIT).unwrap();
        // same law: compare variances at one site of D inside U
        let dw = plan.d_window(0);
        let y = Point::new(&[1, 1, 1]);
        let iy = dw.index(&y).unwrap();
        let n = 4000;
        let xs: Vec<f64> = (0..n).map(|i| plan.sample(&mut stream(9, 0, i))[0][iy]).collect();
        let (v, se) = sample_variance(&xs);
        let exact = zfield_variance(&cfg, std::slice::from_ref(&y)).unwrap();
        assert!((v - exact).abs() < 4.0 * se, "{v} ± {se} vs {exact}");
    }

    #[test]
    fn factorized_infimum_equals_brute_force() {
        let mut rng = stream(3, 0, 0);
        let lambda = [0.5, 0.3, 0.2];
        let vals: Vec<Vec<f64>> = (0..3)
            .map(|k| (0..3 + k).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect())
            .collect();
        let brute = product(&[3, 4, 5])
            .iter()
            .map(|f| (0..3).map(|k| lambda[k] * vals[k][f[k]]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        assert!((factorized_inf(&lambda, &vals) - brute).abs() < 1e-15);
        let zero = vec![vec![0.0; 3]; 3];
        assert_eq!(factorized_inf(&lambda, &zero), 0.0);
    }

    #[test]
    fn infimum_has_negative_mean() {
        let cfg = ZFieldConfig::new(hier(2, 3), vec![Point::origin(3)]).unwrap();
        let r = zfield_inf_stats(&cfg, 200, 5, POINT_DENSE_LIMIT).unwrap();
        assert!(r.estimate.mean + 4.0 * r.estimate.stderr < 0.0);
    }

    #[test]
    fn tail_at_zero_is_one_and_decreasing() {
        let t = harmonic_sup_tail(3, 2, 3, &[0.0, 0.5, 1.0, 2.0], 300, 2).unwrap();
        assert_eq!(t.estimates[0].mean, 1.0);
        for w in t.estimates.windows(2) {
            assert!(w[1].mean <= w[0].mean);
        }
        assert!(t.corner_variance > 0.0);
    }
}
