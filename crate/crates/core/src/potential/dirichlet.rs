//! Dirichlet form of the walk and the variational route to capacity.
//!
//! `E(f, g) = (1/2d) Σ_{x~y} (f(y) - f(x)) (g(y) - g(x))` summed over unordered
//! nearest-neighbor pairs, so that `E(f, g) = -Σ_x Δf(x) g(x)` with
//! `Δf(x) = (1/2d) Σ_{y~x} f(y) - f(x)`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{geometry, Result};
use crate::lattice::{BoxSpec, Point, PointSet, Window};
use crate::linalg::cg::conjugate_gradient;

/// The Dirichlet form on functions supported in a box window, extended by
/// zero outside; edges leaving the window are counted.
#[derive(Clone, Debug)]
pub struct DirichletForm {
    window: Window,
}

impl DirichletForm {
    pub fn new(window: Window) -> Self {
        DirichletForm { window }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    fn weight(&self) -> f64 {
        1.0 / (2 * self.window.dim()) as f64
    }

    /// `E(f, g)` by direct summation over edges.
    pub fn bilinear(&self, f: &[f64], g: &[f64]) -> f64 {
        let w = &self.window;
        let mut s = 0.0;
        for i in 0..w.len() {
            for axis in 0..w.dim() {
                // each edge counted from its lower end; the boundary edge below
                // the window from the inside
                match w.step(i, axis, true) {
                    Some(j) => s += (f[j] - f[i]) * (g[j] - g[i]),
                    None => s += f[i] * g[i],
                }
                if w.step(i, axis, false).is_none() {
                    s += f[i] * g[i];
                }
            }
        }
        s * self.weight()
    }

    /// `E(f, f)`.
    pub fn energy(&self, f: &[f64]) -> f64 {
        self.bilinear(f, f)
    }

    /// `E(f, g)` from energies alone: `(E(f+g) - E(f-g)) / 4`.
    pub fn polarized(&self, f: &[f64], g: &[f64]) -> f64 {
        let sum: Vec<f64> = f.iter().zip(g).map(|(a, b)| a + b).collect();
        let diff: Vec<f64> = f.iter().zip(g).map(|(a, b)| a - b).collect();
        (self.energy(&sum) - self.energy(&diff)) / 4.0
    }

    /// `Δf` on the window, with `f` zero outside.
    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        let w = &self.window;
        let c = self.weight();
        (0..w.len())
            .map(|i| {
                let mut s = 0.0;
                for axis in 0..w.dim() {
                    for up in [false, true] {
                        if let Some(j) = w.step(i, axis, up) {
                            s += f[j];
                        }
                    }
                }
                c * s - f[i]
            })
            .collect()
    }
}

/// `E(f, f)` for a finitely supported `f`, summing over every edge with an
/// endpoint in the support.
pub fn dirichlet_energy(f: &HashMap<Point, f64>) -> f64 {
    let Some(d) = f.keys().next().map(|p| p.dim()) else {
        return 0.0;
    };
    let val = |p: &Point| f.get(p).copied().unwrap_or(0.0);
    let mut s = 0.0;
    for (x, fx) in f {
        for y in x.neighbors() {
            let fy = val(&y);
            // edges inside the support are met from both ends
            let share = if f.contains_key(&y) { 0.5 } else { 1.0 };
            s += share * (fy - fx) * (fy - fx);
        }
    }
    s / (2 * d) as f64
}

/// Dirichlet-problem capacity estimate at one radius.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DirichletCapacity {
    pub r: i64,
    /// Energy of the harmonic potential killed outside `B_R`; decreases to
    /// `cap(K)` as `R` grows.
    pub value: f64,
    pub iterations: usize,
    pub relative_residual: f64,
    /// Whether the reflection-symmetric reduction was used.
    pub reduced: bool,
}

fn reflection_symmetric(k: &PointSet) -> bool {
    k.iter().all(|p| {
        (0..p.dim()).all(|i| k.contains(&p.with(i, -p[i])))
    })
}

/// `cap(K)` from the variational characterization: the energy of the function
/// equal to one on `K`, zero off `B_R` and harmonic in between.
pub fn capacity_via_dirichlet(k: &PointSet, r: i64) -> Result<DirichletCapacity> {
    solve_potential(k, r, reflection_symmetric(k))
}

fn solve_potential(k: &PointSet, r: i64, reduced: bool) -> Result<DirichletCapacity> {
    let Some(first) = k.iter().next() else {
        return Ok(DirichletCapacity {
            r,
            value: 0.0,
            iterations: 0,
            relative_residual: 0.0,
            reduced: false,
        });
    };
    let d = first.dim();
    if k.iter().any(|p| p.sup_norm() >= r) {
        return geometry(format!("K is not strictly inside B_{r}"));
    }
    // on the reduced domain [0,R]^d a step below 0 reflects to +1, and a site
    // stands for 2^{#nonzero coordinates} sites of B_R
    let lo = if reduced { 0 } else { -r };
    let window = Window::new(BoxSpec::from_corners(Point::new(&vec![lo; d]), Point::new(&vec![r + 1; d]))?);
    let n = window.len();
    let mut fixed = vec![false; n];
    for p in k {
        if let Some(i) = window.index(p) {
            fixed[i] = true;
        }
    }
    let mut weight = vec![1.0; n];
    let mut nbrs: Vec<[u32; 8]> = Vec::with_capacity(n);
    let outside = u32::MAX;
    assert!(d <= 4 && n < u32::MAX as usize);
    for i in 0..n {
        let mut list = [outside; 8];
        for axis in 0..d {
            let pos = window.axis_pos(i, axis);
            let up = window.step(i, axis, true);
            let down = if reduced && pos == 0 {
                up
            } else {
                window.step(i, axis, false)
            };
            if reduced && pos > 0 {
                weight[i] *= 2.0;
            }
            list[2 * axis] = up.map(|j| j as u32).unwrap_or(outside);
            list[2 * axis + 1] = down.map(|j| j as u32).unwrap_or(outside);
        }
        nbrs.push(list);
    }
    let c = 1.0 / (2 * d) as f64;
    let mean_nbr = |v: &[f64], i: usize, ones_on_k: bool| -> f64 {
        let mut s = 0.0;
        for &j in &nbrs[i][..2 * d] {
            if j != outside {
                let j = j as usize;
                s += if fixed[j] { if ones_on_k { 1.0 } else { 0.0 } } else { v[j] };
            }
        }
        c * s
    };
    // unknowns live off K; K entries stay zero
    let zeros = vec![0.0; n];
    let rhs: Vec<f64> = (0..n)
        .map(|i| if fixed[i] { 0.0 } else { weight[i] * mean_nbr(&zeros, i, true) })
        .collect();
    let apply = |v: &[f64], out: &mut [f64]| {
        for i in 0..n {
            out[i] = if fixed[i] { 0.0 } else { weight[i] * (v[i] - mean_nbr(v, i, false)) };
        }
    };
    let sol = conjugate_gradient(apply, &rhs, None, 1e-10, 20 * n.max(100))?;
    let f = sol.x;
    let value: f64 = (0..n)
        .filter(|&i| fixed[i])
        .map(|i| weight[i] * (1.0 - mean_nbr(&f, i, true)))
        .sum();
    Ok(DirichletCapacity {
        r,
        value,
        iterations: sol.iterations,
        relative_residual: sol.relative_residual,
        reduced,
    })
}

/// Removes the leading `1/R` bias: `1/cap ≈ 2/cap_R - 1/cap_{R/2}`.
pub fn capacity_via_dirichlet_extrapolated(k: &PointSet, r: i64) -> Result<f64> {
    let full = capacity_via_dirichlet(k, r)?;
    let half = capacity_via_dirichlet(k, r / 2)?;
    if full.value == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 / (2.0 / full.value - 1.0 / half.value))
}
