//! Monte Carlo check of the sweeping identity: for `K ⊆ K'`,
//! `P_{e_{K'}}[H_K < ∞, X_{H_K} = y] = e_K(y)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{geometry, invalid, Error, Result};
use crate::lattice::{Point, PointSet};
use crate::linalg::dense::SpdFactor;
use crate::potential::equilibrium::{equilibrium, DENSE_LIMIT};
use crate::potential::green::GreenTable;
use crate::rng::stream;
use crate::walk::run_until;
use rand::Rng;

const PURPOSE: u64 = 0x5157;

/// Estimate of the entrance law at one site of `K`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSite {
    pub site: Point,
    pub estimate: f64,
    pub stderr: f64,
    pub exact: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepingReport {
    pub sites: Vec<SweepSite>,
    /// Estimate of `Σ_y P_{e_{K'}}[X_{H_K} = y]`, which should equal `cap(K)`.
    pub total: f64,
    pub total_stderr: f64,
    pub cap_k: f64,
    pub cap_k_prime: f64,
    /// Largest `|estimate - e_K(y)|`.
    pub max_deviation: f64,
    /// Largest deviation in units of its standard error.
    pub max_z: f64,
    pub n: u64,
    pub seed: u64,
}

fn escape_radius(kp: &PointSet) -> i64 {
    kp.iter().map(|p| p.sup_norm()).max().unwrap_or(0) + 6
}

/// Samples `n_mc` walks started from `ē_{K'}`; each walk runs until it enters
/// `K` or leaves a ball around `K'`. From the exit site `z` the entrance law
/// `P_z[H_K < ∞, X_{H_K} = ·]` is the bounded harmonic function off `K` equal
/// to `δ_y` on `K`, namely `G_K^{-1} (g(z, w))_{w ∈ K}`, and the entrance site
/// (or escape) is drawn from it.
pub fn verify_sweeping(k: &PointSet, kp: &PointSet, n_mc: u64, seed: u64) -> Result<SweepingReport> {
    if n_mc == 0 {
        return invalid("n_mc must be positive");
    }
    if k.is_empty() {
        return invalid("K must be nonempty");
    }
    if !k.is_subset(kp) {
        return geometry("K is not contained in K'");
    }
    let eq_k = equilibrium(k)?;
    let eq_kp = equilibrium(kp)?;
    let starts: Vec<(Point, f64)> = eq_kp.normalized();
    let mut cumulative = Vec::with_capacity(starts.len());
    let mut acc = 0.0;
    for (_, w) in &starts {
        acc += w;
        cumulative.push(acc);
    }
    if k.len() > DENSE_LIMIT {
        return Err(Error::SizeLimit(format!("|K| = {} exceeds {DENSE_LIMIT}", k.len())));
    }
    let kpts: Vec<Point> = k.iter().cloned().collect();
    let table = eq_k.table().clone();
    let gk = SpdFactor::from_fn(kpts.len(), |i, j| table.between(&kpts[i], &kpts[j]))?;
    let law = EntranceLaw {
        points: &kpts,
        factor: &gk,
        table: &table,
    };
    let radius = escape_radius(kp);
    let entrances: Vec<Option<usize>> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, PURPOSE, i);
            let u = rng.random::<f64>() * acc;
            let s = cumulative.partition_point(|&c| c <= u).min(starts.len() - 1);
            law.sample(&starts[s].0, k, radius, &mut rng)
        })
        .collect();
    let mut counts = vec![0u64; kpts.len()];
    let mut hits = 0u64;
    for j in entrances.into_iter().flatten() {
        counts[j] += 1;
        hits += 1;
    }
    let support: Vec<Point> = eq_k.support().iter().map(|(p, _)| p.clone()).collect();
    let n = n_mc as f64;
    let scale = eq_kp.cap();
    let mut sites = Vec::new();
    let (mut max_dev, mut max_z) = (0.0f64, 0.0f64);
    for site in &support {
        let p = counts[k_index(&kpts, site)] as f64 / n;
        let estimate = scale * p;
        // floor the binomial variance at one pseudo-count for empty cells
        let stderr = scale * (p.max(1.0 / n) * (1.0 - p) / n).sqrt();
        let exact = eq_k.measure(site);
        let dev = (estimate - exact).abs();
        max_dev = max_dev.max(dev);
        max_z = max_z.max(dev / stderr);
        sites.push(SweepSite {
            site: site.clone(),
            estimate,
            stderr,
            exact,
        });
    }
    let ph = hits as f64 / n;
    Ok(SweepingReport {
        sites,
        total: scale * ph,
        total_stderr: scale * (ph.max(1.0 / n) * (1.0 - ph) / n).sqrt(),
        cap_k: eq_k.cap(),
        cap_k_prime: scale,
        max_deviation: max_dev,
        max_z,
        n: n_mc,
        seed,
    })
}

fn k_index(kpts: &[Point], p: &Point) -> usize {
    kpts.binary_search(p).expect("site of K")
}

struct EntranceLaw<'a> {
    points: &'a [Point],
    factor: &'a SpdFactor,
    table: &'a GreenTable,
}

impl EntranceLaw<'_> {
    /// Index in `K` of the entrance site of the walk from `x`, if any.
    fn sample<R: Rng + ?Sized>(&self, x: &Point, k: &PointSet, radius: i64, rng: &mut R) -> Option<usize> {
        match run_until(x.clone(), rng, |p| k.contains(p), |p| p.sup_norm() > radius) {
            Ok(hit) => Some(k_index(self.points, &hit)),
            Err(z) => {
                let a: Vec<f64> = self.points.iter().map(|w| self.table.between(&z, w)).collect();
                let u = self.factor.solve(&a);
                let mut t = rng.random::<f64>();
                for (i, v) in u.iter().enumerate() {
                    let v = v.max(0.0);
                    if t < v {
                        return Some(i);
                    }
                    t -= v;
                }
                None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::BoxSpec;

    #[test]
    fn identical_sets_reproduce_the_measure() {
        let k = BoxSpec::centered(3, 1).to_set();
        let r = verify_sweeping(&k, &k, 2000, 1).unwrap();
        assert!((r.total - r.cap_k).abs() < 1e-12);
        assert!(r.max_z < 5.0);
    }

    #[test]
    fn point_inside_unit_ball() {
        let k: PointSet = [Point::origin(3)].into_iter().collect();
        let kp = BoxSpec::centered(3, 1).to_set();
        let r = verify_sweeping(&k, &kp, 20_000, 7).unwrap();
        assert!((r.total - r.cap_k).abs() < 4.0 * r.total_stderr, "{} vs {}", r.total, r.cap_k);
        assert!(r.max_z < 4.0);
    }

    #[test]
    fn rejects_bad_input() {
        let k = BoxSpec::centered(3, 1).to_set();
        let p: PointSet = [Point::origin(3)].into_iter().collect();
        assert!(verify_sweeping(&k, &p, 10, 1).is_err());
        assert!(verify_sweeping(&p, &k, 0, 1).is_err());
    }
}
