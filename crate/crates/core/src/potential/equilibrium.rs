//! Equilibrium measures and capacities from the Green matrix.
//!
//! For `x ∈ K` the hitting probability `Σ_y g(x,y) e_K(y)` equals one, so
//! `e_K = G_K^{-1} 𝟙`. Since `e_K` lives on the inner boundary `S = ∂_i K`, it
//! suffices to solve `G_S e = 𝟙` on `S`.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{diameter, inner_boundary, BoxSpec, Point, PointSet};
use crate::linalg::cg::conjugate_gradient;
use crate::linalg::dense::SpdFactor;
use crate::potential::green::{max_table_radius, GreenTable};

/// Direct factorization is used up to this many unknowns.
pub const DENSE_LIMIT: usize = 5000;
/// Residual tolerance of iterative solves.
pub const SOLVE_TOLERANCE: f64 = 1e-10;

/// Equilibrium measure and capacity of a finite set.
#[derive(Clone)]
pub struct EquilibriumData {
    d: usize,
    points: Vec<Point>,
    /// `(site, e_K(site))` for the sites of `∂_i K`.
    support: Vec<(Point, f64)>,
    index: HashMap<Point, usize>,
    cap: f64,
    table: Arc<GreenTable>,
}

impl EquilibriumData {
    pub fn d(&self) -> usize {
        self.d
    }

    /// Sites of `K` in sorted order.
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// `e_K(x)`; zero off `∂_i K`.
    pub fn measure(&self, x: &Point) -> f64 {
        self.index.get(x).map(|&i| self.support[i].1).unwrap_or(0.0)
    }

    /// Sites of `∂_i K` with their equilibrium mass.
    pub fn support(&self) -> &[(Point, f64)] {
        &self.support
    }

    /// `ē_K = e_K / cap(K)` on `∂_i K`.
    pub fn normalized(&self) -> Vec<(Point, f64)> {
        self.support.iter().map(|(p, v)| (p.clone(), v / self.cap)).collect()
    }

    pub fn table(&self) -> &Arc<GreenTable> {
        &self.table
    }

    /// `P_x[H_K < ∞] = Σ_y g(x, y) e_K(y)`.
    pub fn hitting_probability(&self, x: &Point) -> f64 {
        self.support.iter().map(|(y, e)| self.table.between(x, y) * e).sum()
    }

    /// The Green matrix `G_K` (row-major), for small sets.
    pub fn green_matrix(&self) -> Vec<f64> {
        green_matrix(&self.table, &self.points)
    }
}

/// Row-major `(g(x_i - x_j))_{ij}`.
pub fn green_matrix(table: &GreenTable, pts: &[Point]) -> Vec<f64> {
    let n = pts.len();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = table.between(&pts[i], &pts[j]);
        }
    }
    m
}

fn table_for(k: &PointSet) -> Result<(usize, Arc<GreenTable>)> {
    let d = k.iter().next().map(|p| p.dim()).ok_or_else(|| Error::InvalidArgument("empty set".into()))?;
    if d < 3 {
        return Err(Error::UnsupportedDimension(d));
    }
    let diam = diameter(k) as usize;
    if diam > max_table_radius(d) {
        return Err(Error::SizeLimit(format!(
            "set diameter {diam} exceeds the largest Green table radius {} for d = {d}",
            max_table_radius(d)
        )));
    }
    Ok((d, GreenTable::shared(d, diam)?))
}

/// Radius `N` when `K` is exactly the centered cube `B_N`.
fn centered_cube_radius(k: &PointSet) -> Option<i64> {
    let first = k.iter().next()?;
    let d = first.dim();
    let n = k.iter().map(|p| p.sup_norm()).max()?;
    if k.len() as u64 == (2 * n as u64 + 1).pow(d as u32) && k.iter().all(|p| p.sup_norm() <= n) {
        Some(n)
    } else {
        None
    }
}

/// Equilibrium measure `e_K` and capacity of a finite nonempty set.
pub fn equilibrium(k: &PointSet) -> Result<EquilibriumData> {
    if k.is_empty() {
        return Err(Error::InvalidArgument("equilibrium of the empty set".into()));
    }
    let (d, table) = table_for(k)?;
    let s: Vec<Point> = inner_boundary(k).into_iter().collect();
    let e = match centered_cube_radius(k) {
        Some(n) if s.len() > 1000 => cube_measure(&table, d, n, &s)?,
        _ => solve_on(&table, &s)?,
    };
    let emax = e.iter().cloned().fold(0.0, f64::max);
    if let Some(v) = e.iter().find(|&&v| v < -1e-9 * emax) {
        return Err(Error::IllConditioned(format!(
            "negative equilibrium mass {v:e}; the Green table is not accurate enough"
        )));
    }
    let e: Vec<f64> = e.into_iter().map(|v| v.max(0.0)).collect();
    let cap = e.iter().sum();
    let support: Vec<(Point, f64)> = s.into_iter().zip(e).collect();
    let index = support.iter().enumerate().map(|(i, (p, _))| (p.clone(), i)).collect();
    let data = EquilibriumData {
        d,
        points: k.iter().cloned().collect(),
        support,
        index,
        cap,
        table,
    };
    // G_K e_K = 𝟙 on K, checked wherever affordable
    if data.points.len() * data.support.len() <= 20_000_000 {
        for x in &data.points {
            let h = data.hitting_probability(x);
            if (h - 1.0).abs() > 1e-7 {
                return Err(Error::IllConditioned(format!(
                    "hitting probability {h} at {x:?} differs from one"
                )));
            }
        }
    }
    Ok(data)
}

fn solve_on(table: &GreenTable, s: &[Point]) -> Result<Vec<f64>> {
    let n = s.len();
    let ones = vec![1.0; n];
    if n <= DENSE_LIMIT {
        let f = SpdFactor::from_fn(n, |i, j| table.between(&s[i], &s[j]))?;
        return Ok(f.solve(&ones));
    }
    let apply = |v: &[f64], out: &mut [f64]| {
        for i in 0..n {
            out[i] = (0..n).map(|j| table.between(&s[i], &s[j]) * v[j]).sum();
        }
    };
    Ok(conjugate_gradient(apply, &ones, None, SOLVE_TOLERANCE, 10 * n)?.x)
}

fn orbit_key(p: &Point) -> Vec<i64> {
    let mut k: Vec<i64> = p.coords().iter().map(|c| c.abs()).collect();
    k.sort_unstable_by(|a, b| b.cmp(a));
    k
}

/// Equilibrium measure of `B_N` reduced to orbits of the cube's symmetry
/// group (coordinate permutations and reflections).
fn cube_measure(table: &GreenTable, d: usize, _n: i64, s: &[Point]) -> Result<Vec<f64>> {
    let mut orbit_of = Vec::with_capacity(s.len());
    let mut keys: HashMap<Vec<i64>, usize> = HashMap::new();
    let mut reps: Vec<Point> = Vec::new();
    let mut sizes: Vec<f64> = Vec::new();
    for p in s {
        let key = orbit_key(p);
        let next = keys.len();
        let o = *keys.entry(key.clone()).or_insert(next);
        if o == reps.len() {
            reps.push(Point::new(&key));
            sizes.push(0.0);
        }
        sizes[o] += 1.0;
        orbit_of.push(o);
    }
    let m = reps.len();
    // symmetric reduced matrix: Σ_{x∈O_a, y∈O_b} g(x-y) = |O_a| Σ_{y∈O_b} g(r_a - y)
    let mut mat = vec![0.0; m * m];
    let mut buf = vec![0i64; d];
    for a in 0..m {
        let row = &mut mat[a * m..(a + 1) * m];
        for (y, &b) in s.iter().zip(&orbit_of) {
            for i in 0..d {
                buf[i] = reps[a][i] - y[i];
            }
            row[b] += table.at(&buf);
        }
        for v in row.iter_mut() {
            *v *= sizes[a];
        }
    }
    let f = SpdFactor::from_fn(m, |i, j| 0.5 * (mat[i * m + j] + mat[j * m + i]))?;
    let eo = f.solve(&sizes);
    Ok(orbit_of.iter().map(|&o| eo[o]).collect())
}

/// `cap(B_N)` for the centered cube.
pub fn cube_capacity(d: usize, n: i64) -> Result<f64> {
    Ok(equilibrium(&BoxSpec::centered(d, n).to_set())?.cap())
}

/// `E(ν) = Σ ν(x) ν(y) g(x, y)` for a probability measure `ν`.
pub fn energy_of_measure(nu: &[(Point, f64)]) -> Result<f64> {
    if nu.is_empty() {
        return Err(Error::InvalidArgument("measure has empty support".into()));
    }
    if let Some((p, v)) = nu.iter().find(|(_, v)| *v < 0.0) {
        return Err(Error::InvalidArgument(format!("negative mass {v} at {p:?}")));
    }
    let total: f64 = nu.iter().map(|(_, v)| v).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("measure has total mass {total}, not 1")));
    }
    let pts: PointSet = nu.iter().map(|(p, _)| p.clone()).collect();
    let (_, table) = table_for(&pts)?;
    let mut e = 0.0;
    for (x, a) in nu {
        for (y, b) in nu {
            e += a * b * table.between(x, y);
        }
    }
    Ok(e)
}

/// Cube capacities and the extrapolated Brownian capacity of `[-1,1]^d`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BrownianCapacity {
    pub d: usize,
    pub ns: Vec<i64>,
    pub caps: Vec<f64>,
    /// `cap(B_N) / N^{d-2}`.
    pub ratios: Vec<f64>,
    /// `d` times the limit of the ratios.
    pub estimate: f64,
    /// `d` times the distance between the extrapolated and the last ratio.
    pub error: f64,
    /// Set when some `N` is too small for the scaling regime.
    pub pre_asymptotic: bool,
}

/// Extrapolates `cap(B_N)/N^{d-2}` linearly in `1/N` from the last two sizes.
pub fn brownian_capacity_cube(d: usize, ns: &[i64]) -> Result<BrownianCapacity> {
    if d < 3 {
        return Err(Error::UnsupportedDimension(d));
    }
    if ns.len() < 2 || ns.windows(2).any(|w| w[0] >= w[1]) || ns[0] < 1 {
        return Err(Error::InvalidArgument(format!(
            "N list {ns:?} must be strictly increasing, positive, with at least two entries"
        )));
    }
    let largest = (max_table_radius(d) / 2) as i64;
    if *ns.last().unwrap() > largest {
        return Err(Error::SizeLimit(format!(
            "N = {} is beyond Green-table accuracy range; the largest supported N for d = {d} is {largest}",
            ns.last().unwrap()
        )));
    }
    let mut caps = Vec::new();
    let mut ratios = Vec::new();
    for &n in ns {
        let c = cube_capacity(d, n)?;
        caps.push(c);
        ratios.push(c / (n as f64).powi(d as i32 - 2));
    }
    let k = ns.len();
    let (n1, n2) = (ns[k - 2] as f64, ns[k - 1] as f64);
    let (r1, r2) = (ratios[k - 2], ratios[k - 1]);
    let limit = (n2 * r2 - n1 * r1) / (n2 - n1);
    Ok(BrownianCapacity {
        d,
        ns: ns.to_vec(),
        caps,
        ratios,
        estimate: d as f64 * limit,
        error: d as f64 * (limit - r2).abs(),
        pre_asymptotic: ns[0] < 4,
    })
}
