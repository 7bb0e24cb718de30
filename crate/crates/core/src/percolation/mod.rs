//! Level sets `E^{≥α} = {φ ≥ α}` of a field: cluster labeling, crossing and
//! disconnection events, contours, the harmonic-average field `Z_f` and the
//! good/bad box classification used for coarse graining.

pub mod coarse;
pub mod contour;
pub mod zfield;

use std::collections::VecDeque;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{geometry, Result};
use crate::gff::sample::FieldSampler;
use crate::gff::Field;
use crate::lattice::{Point, Window};
use crate::rng::stream;
use crate::stats::McEstimate;

pub use contour::{contour_bound_check, disconnection_event, maximal_contour, Contour, ContourBoundReport};

/// `{x : φ_x ≥ α}` on the window of a field.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelMask {
    window: Window,
    alpha: f64,
    mask: Vec<bool>,
}

impl LevelMask {
    pub fn new(phi: &Field, alpha: f64) -> Self {
        LevelMask {
            window: phi.window().clone(),
            alpha,
            mask: phi.values().iter().map(|&v| v >= alpha).collect(),
        }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.window.index(p).is_some_and(|i| self.mask[i])
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Connectivity {
    /// `|x - y|_1 = 1`.
    #[default]
    Nearest,
    /// `|x - y|_∞ = 1`.
    Star,
}

/// Window-index offsets of the neighbors of `i` under `conn`.
pub(crate) fn neighbor_indices(window: &Window, i: usize, conn: Connectivity, out: &mut Vec<usize>) {
    out.clear();
    match conn {
        Connectivity::Nearest => {
            for axis in 0..window.dim() {
                for up in [false, true] {
                    if let Some(j) = window.step(i, axis, up) {
                        out.push(j);
                    }
                }
            }
        }
        Connectivity::Star => {
            let p = window.point(i);
            for q in p.star_neighbors() {
                if let Some(j) = window.index(&q) {
                    out.push(j);
                }
            }
        }
    }
}

/// Connected components of a mask. Each component is labeled by the smallest
/// window index among its sites.
#[derive(Clone, Debug)]
pub struct ClusterLabels {
    window: Window,
    connectivity: Connectivity,
    labels: Vec<Option<usize>>,
}

/// Size and sup-norm diameter of one cluster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterInfo {
    pub label: usize,
    pub size: usize,
    pub diameter: i64,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    let mut root = i;
    while parent[root] != root {
        root = parent[root];
    }
    while parent[i] != root {
        let next = parent[i];
        parent[i] = root;
        i = next;
    }
    root
}

/// Union-find labeling of the sites where `mask` holds.
pub fn label_mask(window: &Window, mask: &[bool], connectivity: Connectivity) -> ClusterLabels {
    assert_eq!(window.len(), mask.len(), "mask length differs from the window");
    let n = mask.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut nb = Vec::new();
    for i in 0..n {
        if !mask[i] {
            continue;
        }
        neighbor_indices(window, i, connectivity, &mut nb);
        for &j in &nb {
            if j < i && mask[j] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                // the smaller index stays the root
                if a < b {
                    parent[b] = a;
                } else if b < a {
                    parent[a] = b;
                }
            }
        }
    }
    let labels = (0..n).map(|i| mask[i].then(|| find(&mut parent, i))).collect();
    ClusterLabels {
        window: window.clone(),
        connectivity,
        labels,
    }
}

/// Clusters of `E^{≥α}` within the window.
pub fn clusters(mask: &LevelMask, connectivity: Connectivity) -> ClusterLabels {
    label_mask(&mask.window, &mask.mask, connectivity)
}

impl ClusterLabels {
    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    pub fn label(&self, i: usize) -> Option<usize> {
        self.labels[i]
    }

    pub fn label_of(&self, p: &Point) -> Option<usize> {
        self.window.index(p).and_then(|i| self.labels[i])
    }

    /// Clusters in increasing label order.
    pub fn info(&self) -> Vec<ClusterInfo> {
        let d = self.window.dim();
        // label -> (size, min and max position per axis)
        let mut acc: std::collections::BTreeMap<usize, (usize, Vec<usize>, Vec<usize>)> = Default::default();
        for (i, l) in self.labels.iter().enumerate() {
            let Some(l) = *l else { continue };
            let e = acc.entry(l).or_insert_with(|| (0, vec![usize::MAX; d], vec![0; d]));
            e.0 += 1;
            for a in 0..d {
                let p = self.window.axis_pos(i, a);
                e.1[a] = e.1[a].min(p);
                e.2[a] = e.2[a].max(p);
            }
        }
        acc.into_iter()
            .map(|(label, (size, lo, hi))| ClusterInfo {
                label,
                size,
                diameter: (0..d).map(|a| (hi[a] - lo[a]) as i64).max().unwrap_or(0),
            })
            .collect()
    }

    pub fn count(&self) -> usize {
        let mut roots: Vec<usize> = self.labels.iter().flatten().copied().collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }
}

/// Breadth-first search in `mask` from `sources`; returns the visited flags.
/// Sources outside the mask are ignored.
pub(crate) fn flood(window: &Window, mask: &[bool], sources: impl IntoIterator<Item = usize>) -> Vec<bool> {
    let mut seen = vec![false; mask.len()];
    let mut queue = VecDeque::new();
    for s in sources {
        if mask[s] && !seen[s] {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(i) = queue.pop_front() {
        for axis in 0..window.dim() {
            for up in [false, true] {
                if let Some(j) = window.step(i, axis, up) {
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    seen
}

/// `{B_L ↔ ∂B_{2L}}` in the given mask, which must cover `B_{2L+1}`.
pub fn crossing_in_mask(window: &Window, mask: &[bool], l: i64) -> Result<bool> {
    let d = window.dim();
    if l < 1 {
        return geometry(format!("L = {l} must be at least 1"));
    }
    let outer = 2 * l + 1;
    if !crate::lattice::BoxSpec::centered(d, outer).is_subset_of(window.spec()) {
        return geometry(format!("window must cover B_{outer}"));
    }
    let sources = (0..window.len()).filter(|&i| window.point(i).sup_norm() <= l);
    let seen = flood(window, mask, sources);
    Ok((0..window.len()).any(|i| seen[i] && window.point(i).sup_norm() == outer))
}

pub fn crossing_event(phi: &Field, alpha: f64, l: i64) -> Result<bool> {
    let m = LevelMask::new(phi, alpha);
    crossing_in_mask(&m.window, &m.mask, l)
}

const CROSSING_STREAM: u64 = 0x0C05;

/// `P[B_L ↔ ∂B_{2L}]` for each level of `alphas`, all levels evaluated on
/// the same samples.
pub fn crossing_curve(
    alphas: &[f64],
    l: i64,
    n_mc: u64,
    sampler: &FieldSampler,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    let start = Instant::now();
    if n_mc == 0 {
        return crate::error::invalid("n_mc must be positive");
    }
    // validate geometry once before sampling
    crossing_in_mask(sampler.window(), &vec![false; sampler.window().len()], l)?;
    let rows: Vec<Vec<bool>> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let phi = sampler.sample(&mut stream(seed, CROSSING_STREAM, i));
            alphas
                .iter()
                .map(|&a| crossing_event(&phi, a, l).expect("geometry checked"))
                .collect()
        })
        .collect();
    let t = start.elapsed().as_secs_f64();
    Ok((0..alphas.len())
        .map(|k| {
            let hits: Vec<bool> = rows.iter().map(|r| r[k]).collect();
            McEstimate::from_indicators(&hits, seed, t)
        })
        .collect())
}

pub fn crossing_prob(alpha: f64, l: i64, n_mc: u64, sampler: &FieldSampler, seed: u64) -> Result<McEstimate> {
    Ok(crossing_curve(&[alpha], l, n_mc, sampler, seed)?.remove(0))
}
