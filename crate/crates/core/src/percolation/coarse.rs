//! Coarse graining by `L`-boxes. A box `B` is ψ-good at levels `γ > δ` when
//! `B ∩ {ψ_B ≥ γ}` has a component of diameter at least `⌊L/10⌋`, and for
//! every neighboring box `B'` each such component of `B` and of `B'` are
//! joined by a path whose inner sites lie in `D_B ∩ {ψ_B ≥ δ}`. It is h-good
//! at level `a` when `inf_{D_B} h_B > -a`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gff::decompose::Decomposer;
use crate::gff::sample::{FieldSampler, DEFAULT_DENSE_LIMIT};
use crate::gff::Field;
use crate::lattice::{enumerate_columns, BoxHierarchy, BoxSpec, Point, Window};
use crate::percolation::{label_mask, neighbor_indices, Connectivity};
use crate::rng::stream;
use crate::stats::McEstimate;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodLevels {
    pub gamma: f64,
    pub delta: f64,
    pub a: f64,
    #[serde(default)]
    pub connectivity: Connectivity,
}

impl GoodLevels {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.gamma > self.delta) {
            errs.push(format!("need γ > δ, got γ = {} and δ = {}", self.gamma, self.delta));
        }
        if !(self.a > 0.0) {
            errs.push(format!("need a > 0, got {}", self.a));
        }
        errs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStatus {
    pub z: Point,
    pub psi_good: bool,
    pub h_good: bool,
    /// Components of `B ∩ {ψ_B ≥ γ}` with diameter at least `⌊L/10⌋`.
    pub large_components: usize,
    pub inf_h: f64,
}

/// What classification keeps from the decomposition attached to one box.
struct LocalBox {
    d_window: Window,
    /// `ψ_B ≥ δ` on `D_B`.
    above_delta: Vec<bool>,
    b_window: Window,
    /// `ψ_B ≥ γ` on `B`.
    above_gamma: Vec<bool>,
    inf_h: f64,
}

/// The smallest box containing `B̃_z` and `D_z` for every site.
pub fn required_box(h: &BoxHierarchy, sites: &[Point]) -> Option<BoxSpec> {
    sites
        .iter()
        .map(|z| h.tilde(z).hull(&h.dbox(z)))
        .reduce(|a, b| a.hull(&b))
}

fn local_box(phi: &Field, h: &BoxHierarchy, z: &Point, lv: &GoodLevels) -> Result<LocalBox> {
    let u = h.u(z);
    let dec = Decomposer::for_box(phi.window(), &u)?;
    let hu = dec.harmonic_on_u(phi.values());
    let mut h_at: BTreeMap<usize, f64> = BTreeMap::new();
    for (j, &i) in dec.sites().iter().enumerate() {
        h_at.insert(i, hu[j]);
    }
    let w = phi.window();
    let pair = |p: &Point| -> (f64, f64) {
        let i = w.index(p).expect("D inside the window");
        match h_at.get(&i) {
            Some(&hv) => (hv, phi.values()[i] - hv),
            // off U the average is the field itself and ψ vanishes
            None => (phi.values()[i], 0.0),
        }
    };
    let d_window = Window::new(h.dbox(z));
    let mut above_delta = Vec::with_capacity(d_window.len());
    let mut inf_h = f64::INFINITY;
    for k in 0..d_window.len() {
        let (hv, psi) = pair(&d_window.point(k));
        inf_h = inf_h.min(hv);
        above_delta.push(psi >= lv.delta);
    }
    let b_window = Window::new(h.b(z));
    let above_gamma = (0..b_window.len()).map(|k| pair(&b_window.point(k)).1 >= lv.gamma).collect();
    Ok(LocalBox {
        d_window,
        above_delta,
        b_window,
        above_gamma,
        inf_h,
    })
}

/// Components of `B ∩ {ψ_B ≥ γ}` of diameter at least `⌊L/10⌋`, as point lists.
fn large_components(b: &LocalBox, l: i64, conn: Connectivity) -> Vec<Vec<Point>> {
    let labels = label_mask(&b.b_window, &b.above_gamma, conn);
    let big: BTreeSet<usize> = labels
        .info()
        .into_iter()
        .filter(|c| c.diameter >= l / 10)
        .map(|c| c.label)
        .collect();
    let mut comps: BTreeMap<usize, Vec<Point>> = BTreeMap::new();
    for i in 0..b.b_window.len() {
        if let Some(lab) = labels.label(i) {
            if big.contains(&lab) {
                comps.entry(lab).or_default().push(b.b_window.point(i));
            }
        }
    }
    comps.into_values().collect()
}

fn classify_one(h: &BoxHierarchy, z: &Point, boxes: &BTreeMap<Point, LocalBox>, lv: &GoodLevels) -> BoxStatus {
    let me = &boxes[z];
    let own = large_components(me, h.l(), lv.connectivity);
    let h_good = me.inf_h > -lv.a;
    let status = |psi_good| BoxStatus {
        z: z.clone(),
        psi_good,
        h_good,
        large_components: own.len(),
        inf_h: me.inf_h,
    };
    if own.is_empty() {
        return status(false);
    }
    let dw = &me.d_window;
    let labels = label_mask(dw, &me.above_delta, lv.connectivity);
    // every large component of B lies in one component of D ∩ {ψ_B ≥ δ}
    let own_labels: BTreeSet<usize> = own
        .iter()
        .map(|c| labels.label_of(&c[0]).expect("ψ_B ≥ γ > δ on the component"))
        .collect();
    let mut nb = Vec::new();
    for z2 in h.neighbors(z) {
        for comp in large_components(&boxes[&z2], h.l(), lv.connectivity) {
            // labels of D ∩ {ψ_B ≥ δ} that the component meets or touches
            let mut touched = BTreeSet::new();
            for p in &comp {
                let i = dw.index(p).expect("neighbor box inside D");
                if let Some(l) = labels.label(i) {
                    touched.insert(l);
                }
                neighbor_indices(dw, i, lv.connectivity, &mut nb);
                for &j in &nb {
                    if let Some(l) = labels.label(j) {
                        touched.insert(l);
                    }
                }
            }
            if !own_labels.is_subset(&touched) {
                return status(false);
            }
        }
    }
    status(true)
}

/// Classifies the boxes at `sites`; the field window must contain `B̃` and
/// `D` of every site and of its neighbors.
pub fn classify_boxes(phi: &Field, h: &BoxHierarchy, sites: &[Point], lv: &GoodLevels) -> Result<Vec<BoxStatus>> {
    let errs = lv.validate();
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    if let Some(z) = sites.iter().find(|z| !h.is_site(z)) {
        return Err(Error::InvalidGeometry(format!("{z:?} is not a site of L·Z^d")));
    }
    let mut all: BTreeSet<Point> = sites.iter().cloned().collect();
    for z in sites {
        all.extend(h.neighbors(z));
    }
    let all: Vec<Point> = all.into_iter().collect();
    let need = required_box(h, &all).expect("nonempty");
    if !need.is_subset_of(phi.window().spec()) {
        return Err(Error::InvalidGeometry(format!("field window must contain {need:?}")));
    }
    let locals: Vec<LocalBox> = all
        .par_iter()
        .map(|z| local_box(phi, h, z, lv))
        .collect::<Result<_>>()?;
    let boxes: BTreeMap<Point, LocalBox> = all.into_iter().zip(locals).collect();
    Ok(sites.par_iter().map(|z| classify_one(h, z, &boxes, lv)).collect())
}

/// Whether `E^{≥level} ∩ ⋃ D^i` has a path from `B^0` to `B^n` along a
/// sequence of boxes.
pub fn column_path(phi: &Field, h: &BoxHierarchy, column: &[Point], level: f64, conn: Connectivity) -> Result<bool> {
    let (first, last) = match (column.first(), column.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::InvalidArgument("empty column".into())),
    };
    let w = phi.window();
    let ds: Vec<BoxSpec> = column.iter().map(|z| h.dbox(z)).collect();
    if let Some(d) = ds.iter().find(|d| !d.is_subset_of(w.spec())) {
        return Err(Error::InvalidGeometry(format!("{d:?} is not inside the field window")));
    }
    let open = |i: usize| phi.values()[i] >= level && ds.iter().any(|d| d.contains(&w.point(i)));
    let target = h.b(last);
    let mut seen = vec![false; w.len()];
    let mut queue = VecDeque::new();
    for p in h.b(first).points() {
        let i = w.index(&p).expect("box inside window");
        if open(i) {
            seen[i] = true;
            queue.push_back(i);
        }
    }
    let mut nb = Vec::new();
    while let Some(i) = queue.pop_front() {
        if target.contains(&w.point(i)) {
            return Ok(true);
        }
        neighbor_indices(w, i, conn, &mut nb);
        for &j in &nb {
            if !seen[j] && open(j) {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    Ok(false)
}

/// Result of classifying a cube of boxes in one field and testing every
/// adjacent pair of boxes that are both ψ-good and h-good for a path in
/// `E^{≥δ-a}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridReport {
    pub statuses: Vec<BoxStatus>,
    pub good_pairs: usize,
    pub pairs_with_path: usize,
}

/// Classifies the boxes `L·(i_1, …, i_d)`, `0 ≤ i_k < m`, and checks the
/// path property on adjacent good pairs.
pub fn grid_path_check(phi: &Field, h: &BoxHierarchy, m: usize, lv: &GoodLevels) -> Result<GridReport> {
    let d = h.d();
    let sites: Vec<Point> = BoxSpec::from_corners(Point::origin(d), Point::new(&vec![m as i64; d]))?
        .points()
        .map(|p| p.scale(h.l()))
        .collect();
    let statuses = classify_boxes(phi, h, &sites, lv)?;
    let good: BTreeSet<Point> = statuses
        .iter()
        .filter(|s| s.psi_good && s.h_good)
        .map(|s| s.z.clone())
        .collect();
    let pairs: Vec<[Point; 2]> = good
        .iter()
        .flat_map(|z| {
            (0..d)
                .map(move |a| z.with(a, z[a] + h.l()))
                .filter(|z2| good.contains(z2))
                .map(move |z2| [z.clone(), z2])
        })
        .collect();
    let found = pairs
        .par_iter()
        .map(|p| column_path(phi, h, p, lv.delta - lv.a, lv.connectivity))
        .collect::<Result<Vec<bool>>>()?;
    Ok(GridReport {
        statuses,
        good_pairs: pairs.len(),
        pairs_with_path: found.iter().filter(|&&b| b).count(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CensusReport {
    pub n: i64,
    pub m: f64,
    pub l: i64,
    pub k: i64,
    pub levels: GoodLevels,
    pub columns: usize,
    /// Columns containing a ψ-bad box, per sample.
    pub bad_columns: Vec<usize>,
    pub mean_bad_columns: McEstimate,
    /// Fraction of ψ-bad boxes over all classified boxes and samples.
    pub eta: f64,
    /// `sqrt(log L / log(1/η))`; absent when `η ∈ {0, 1}`.
    pub rho: Option<f64>,
    /// Threshold `ρ (N/L)^{d-1}` for the event `C_N`.
    pub threshold: Option<f64>,
    /// Frequency of `C_N`; absent with `ρ`.
    pub c_n: Option<McEstimate>,
    pub sampler_bias: f64,
    pub note: Option<String>,
}

const CENSUS_STREAM: u64 = 0xCE_55;

/// Counts, per field sample, the columns above the faces of `B_N` that
/// contain a ψ-bad box.
#[allow(clippy::too_many_arguments)]
pub fn bad_column_census(
    d: usize,
    n: i64,
    m: f64,
    h: &BoxHierarchy,
    lv: &GoodLevels,
    n_mc: u64,
    guard_factor: f64,
    seed: u64,
) -> Result<CensusReport> {
    let mut errs = lv.validate();
    if h.l() < 10 {
        errs.push(format!("ψ-classification needs L ≥ 10, got {}", h.l()));
    }
    if h.d() != d {
        errs.push(format!("hierarchy dimension {} differs from d = {d}", h.d()));
    }
    if n_mc == 0 {
        errs.push("n_mc must be positive".into());
    }
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    let start = Instant::now();
    let columns = enumerate_columns(d, n, m, h.l())?;
    if columns.is_empty() {
        return Err(Error::InvalidGeometry(format!("no L-box columns fit above the faces of B_{n}")));
    }
    let sites: Vec<Point> = columns
        .iter()
        .flat_map(|c| c.boxes.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut all = sites.clone();
    for z in &sites {
        all.extend(h.neighbors(z));
    }
    let need = required_box(h, &all).expect("nonempty");
    let sampler = FieldSampler::for_window(Window::new(need), DEFAULT_DENSE_LIMIT, guard_factor)?;
    let mut bad_columns = Vec::with_capacity(n_mc as usize);
    let (mut bad_boxes, mut total_boxes) = (0usize, 0usize);
    for i in 0..n_mc {
        let phi = sampler.sample(&mut stream(seed, CENSUS_STREAM, i));
        let st = classify_boxes(&phi, h, &sites, lv)?;
        let bad: BTreeSet<&Point> = st.iter().filter(|s| !s.psi_good).map(|s| &s.z).collect();
        bad_boxes += bad.len();
        total_boxes += st.len();
        bad_columns.push(columns.iter().filter(|c| c.boxes.iter().any(|z| bad.contains(z))).count());
    }
    let t = start.elapsed().as_secs_f64();
    let counts: Vec<f64> = bad_columns.iter().map(|&c| c as f64).collect();
    let eta = bad_boxes as f64 / total_boxes as f64;
    let (rho, threshold, c_n, note) = if eta > 0.0 && eta < 1.0 {
        let rho = ((h.l() as f64).ln() / (1.0 / eta).ln()).sqrt();
        let thr = rho * (n as f64 / h.l() as f64).powi(d as i32 - 1);
        let hits: Vec<bool> = bad_columns.iter().map(|&c| c as f64 >= thr).collect();
        (Some(rho), Some(thr), Some(McEstimate::from_indicators(&hits, seed, t)), None)
    } else {
        (None, None, None, Some(format!("η̂ = {eta}: ρ is undefined")))
    };
    Ok(CensusReport {
        n,
        m,
        l: h.l(),
        k: h.k(),
        levels: *lv,
        columns: columns.len(),
        mean_bad_columns: McEstimate::from_samples(&counts, seed, t),
        bad_columns,
        eta,
        rho,
        threshold,
        c_n,
        sampler_bias: sampler.bias_bound()?,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn levels(gamma: f64, delta: f64, a: f64) -> GoodLevels {
        GoodLevels {
            gamma,
            delta,
            a,
            connectivity: Connectivity::Nearest,
        }
    }

    fn noise(h: &BoxHierarchy, sites: &[Point], seed: u64, scale: f64) -> Field {
        let mut all = sites.to_vec();
        for z in sites {
            all.extend(h.neighbors(z));
        }
        let w = Window::new(required_box(h, &all).unwrap());
        let mut rng = stream(seed, 0, 0);
        let values = (0..w.len()).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        Field::new(w, values).unwrap()
    }

    #[test]
    fn constant_fields() {
        let h = BoxHierarchy::new(3, 10, 2).unwrap();
        let z = [Point::origin(3)];
        let mut phi = noise(&h, &z, 0, 0.0);
        phi.values_mut().iter_mut().for_each(|v| *v = 0.5);
        // h_B = 0.5 and ψ_B = 0 up to rounding
        let s = classify_boxes(&phi, &h, &z, &levels(-0.1, -1.0, 1.0)).unwrap();
        assert!(s[0].psi_good && s[0].h_good);
        assert_eq!(s[0].large_components, 1);
        let s = classify_boxes(&phi, &h, &z, &levels(0.1, -1.0, f64::INFINITY)).unwrap();
        assert!(!s[0].psi_good && s[0].h_good);
        phi.values_mut().iter_mut().for_each(|v| *v = -2.0);
        assert!(!classify_boxes(&phi, &h, &z, &levels(0.0, -1.0, 1.5)).unwrap()[0].h_good);
    }

    #[test]
    fn invalid_levels_and_small_windows() {
        let h = BoxHierarchy::new(3, 10, 2).unwrap();
        let z = [Point::origin(3)];
        let phi = noise(&h, &z, 0, 1.0);
        assert!(matches!(
            classify_boxes(&phi, &h, &z, &levels(-1.0, 0.0, -1.0)),
            Err(Error::Validation(v)) if v.len() == 2
        ));
        let small = phi.restrict(&BoxSpec::centered(3, 20)).unwrap();
        assert!(classify_boxes(&small, &h, &z, &levels(0.0, -1.0, 1.0)).is_err());
    }

    #[test]
    fn good_pairs_always_have_paths() {
        let h = BoxHierarchy::new(3, 10, 2).unwrap();
        let lv = levels(-0.5, -1.0, 6.0);
        let sites: Vec<Point> = (0..2).map(|i| Point::new(&[10 * i, 0, 0])).collect();
        let mut checked = 0;
        for seed in 0..3 {
            let phi = noise(&h, &sites, seed, 1.0);
            let r = grid_path_check(&phi, &h, 1, &lv).unwrap();
            assert_eq!(r.statuses.len(), 1);
            let st = classify_boxes(&phi, &h, &sites, &lv).unwrap();
            if st.iter().all(|s| s.psi_good && s.h_good) {
                checked += 1;
                assert!(column_path(&phi, &h, &sites, lv.delta - lv.a, lv.connectivity).unwrap());
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn lower_levels_make_fewer_bad_boxes() {
        let h = BoxHierarchy::new(3, 10, 2).unwrap();
        let z = [Point::origin(3)];
        let mut bad = [0, 0];
        for seed in 0..4 {
            let phi = noise(&h, &z, seed, 1.0);
            for (k, (g, dl)) in [(0.5, 0.0), (-1.0, -1.5)].into_iter().enumerate() {
                if !classify_boxes(&phi, &h, &z, &levels(g, dl, 1.0)).unwrap()[0].psi_good {
                    bad[k] += 1;
                }
            }
        }
        assert!(bad[1] <= bad[0]);
    }
}
