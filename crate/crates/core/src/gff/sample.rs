//! Samplers for the free field restricted to a window and for the
//! zero-boundary field on a finite domain.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gff::Field;
use crate::lattice::{bounding_box, BoxSpec, Point, PointSet, Window};
use crate::linalg::dense::SpdFactor;
use crate::linalg::dst::BoxDirichlet;
use crate::potential::green::GreenTable;
use crate::potential::killed::DomainSolver;

/// Largest number of sites factorized densely.
pub const DEFAULT_DENSE_LIMIT: usize = 4096;

fn normals<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn green_factor(pts: &[Point]) -> Result<SpdFactor> {
    let d = pts[0].dim();
    let set: PointSet = pts.iter().cloned().collect();
    let diam = crate::lattice::diameter(&set) as usize;
    let table = GreenTable::shared(d, diam)?;
    SpdFactor::from_fn(pts.len(), |i, j| table.between(&pts[i], &pts[j]))
}

/// Exact free field on a window: `L ξ` with `L Lᵀ = (g(x, y))`.
pub struct FreeSampler {
    window: Window,
    factor: SpdFactor,
}

impl FreeSampler {
    pub fn new(window: Window, limit: usize) -> Result<Self> {
        if window.len() > limit {
            return Err(Error::SizeLimit(format!(
                "window of {} sites exceeds the dense limit {limit}; use the embedded sampler",
                window.len()
            )));
        }
        let pts: Vec<Point> = (0..window.len()).map(|i| window.point(i)).collect();
        let factor = green_factor(&pts)?;
        Ok(FreeSampler { window, factor })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Field {
        let xi = normals(self.window.len(), rng);
        Field::new(self.window.clone(), self.factor.lower_mul(&xi)).expect("finite sample")
    }
}

/// One exact free-field sample on `window` (at most [`DEFAULT_DENSE_LIMIT`] sites).
pub fn sample_free<R: Rng + ?Sized>(window: &Window, rng: &mut R) -> Result<Field> {
    Ok(FreeSampler::new(window.clone(), DEFAULT_DENSE_LIMIT)?.sample(rng))
}

/// Exact free field at an arbitrary finite list of sites, for functionals
/// that only see a sparse set such as the boundary of a domain.
pub struct PointSampler {
    points: Vec<Point>,
    factor: SpdFactor,
}

impl PointSampler {
    pub fn new(points: Vec<Point>, limit: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("no sites to sample".into()));
        }
        if points.len() > limit {
            return Err(Error::SizeLimit(format!(
                "{} sites exceed the dense limit {limit}",
                points.len()
            )));
        }
        let factor = green_factor(&points)?;
        Ok(PointSampler { points, factor })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Values at the sites, in the order given at construction.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.factor.lower_mul(&normals(self.points.len(), rng))
    }

    /// `Lᵀ w`: for a linear functional `w·φ` of the sampled vector, the
    /// functional equals `(Lᵀ w)·ξ` with `ξ` standard normal.
    pub fn pullback(&self, w: &[f64]) -> Vec<f64> {
        self.factor.lower_t_mul(w)
    }
}

/// Exact free field on a box too large for a dense factor: the outer layer is
/// sampled densely, and inside it the field is the harmonic extension of the
/// layer plus an independent zero-boundary field.
pub struct ShellSampler {
    window: Window,
    layer: Vec<usize>,
    factor: SpdFactor,
    interior: Vec<usize>,
    solver: BoxDirichlet,
    /// For each interior site, positions in `layer` of its neighbors outside
    /// the interior.
    exits: Vec<Vec<usize>>,
}

impl ShellSampler {
    pub fn new(window: Window, limit: usize) -> Result<Self> {
        let inner = window
            .spec()
            .shrink(1)
            .map_err(|_| Error::InvalidGeometry("window too thin for the layer sampler".into()))?;
        let inner_w = Window::new(inner.clone());
        let mut layer = Vec::new();
        let mut layer_pos = vec![usize::MAX; window.len()];
        for i in 0..window.len() {
            if !inner.contains(&window.point(i)) {
                layer_pos[i] = layer.len();
                layer.push(i);
            }
        }
        if layer.len() > limit {
            return Err(Error::SizeLimit(format!(
                "outer layer of {} sites exceeds the dense limit {limit}; use the embedded sampler",
                layer.len()
            )));
        }
        let pts: Vec<Point> = layer.iter().map(|&i| window.point(i)).collect();
        let factor = green_factor(&pts)?;
        let mut interior = Vec::with_capacity(inner_w.len());
        let mut exits = Vec::with_capacity(inner_w.len());
        for j in 0..inner_w.len() {
            let p = inner_w.point(j);
            interior.push(window.index(&p).expect("inner site"));
            let outs = p
                .neighbors()
                .filter(|q| !inner.contains(q))
                .map(|q| layer_pos[window.index(&q).expect("layer site")])
                .collect();
            exits.push(outs);
        }
        let solver = BoxDirichlet::new(inner_w.shape());
        Ok(ShellSampler {
            window,
            layer,
            factor,
            interior,
            solver,
            exits,
        })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Field {
        let d = self.window.dim();
        let xi = normals(self.layer.len(), rng);
        let outer = self.factor.lower_mul(&xi);
        let w = 1.0 / (2 * d) as f64;
        let rhs: Vec<f64> = self.exits.iter().map(|e| w * e.iter().map(|&k| outer[k]).sum::<f64>()).collect();
        let h = self.solver.solve(&rhs);
        let psi = self.solver.sample(rng);
        let mut values = vec![0.0; self.window.len()];
        for (k, &i) in self.layer.iter().enumerate() {
            values[i] = outer[k];
        }
        for (j, &i) in self.interior.iter().enumerate() {
            values[i] = h[j] + psi[j];
        }
        Field::new(self.window.clone(), values).expect("finite sample")
    }
}

const EXACT_BIAS_BUDGET: usize = 200_000_000;

/// Zero-boundary field on a box `G ⊇ window` restricted to the window; an
/// approximation of the free field whose covariance deficit is
/// `g(x, y) - g_G(x, y) = E_x[g(X_{T_G}, y)]`.
pub struct EmbeddedSampler {
    window: Window,
    guard: Window,
    solver: BoxDirichlet,
    map: Vec<usize>,
}

impl EmbeddedSampler {
    /// The guard box is the sup-ball around the window's center with
    /// `guard_factor` times the window's radius.
    pub fn new(window: Window, guard_factor: f64) -> Result<Self> {
        if !(guard_factor >= 2.0) {
            return Err(Error::InvalidArgument(format!("guard factor {guard_factor} must be at least 2")));
        }
        let spec = window.spec();
        let d = spec.dim();
        let center: Vec<i64> = (0..d).map(|i| (spec.lo()[i] + spec.hi()[i] - 1).div_euclid(2)).collect();
        let center = Point::new(&center);
        let r = (0..d)
            .map(|i| (spec.lo()[i] - center[i]).abs().max(spec.hi()[i] - 1 - center[i]))
            .max()
            .unwrap_or(0);
        let gr = ((guard_factor * r as f64).ceil() as i64).max(r + 1);
        let guard = Window::new(BoxSpec::ball(&center, gr));
        let map = (0..window.len())
            .map(|i| guard.index(&window.point(i)).expect("window inside guard"))
            .collect();
        let solver = BoxDirichlet::new(guard.shape());
        Ok(EmbeddedSampler {
            window,
            guard,
            solver,
            map,
        })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn guard(&self) -> &BoxSpec {
        self.guard.spec()
    }

    /// The guard-box sample itself.
    pub fn sample_guard<R: Rng + ?Sized>(&self, rng: &mut R) -> Field {
        Field::new(self.guard.clone(), self.solver.sample(rng)).expect("finite sample")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Field {
        let full = self.solver.sample(rng);
        let values = self.map.iter().map(|&i| full[i]).collect();
        Field::new(self.window.clone(), values).expect("finite sample")
    }

    /// `sup_{x,y ∈ window} (g(x, y) - g_G(x, y))`. The deficit is the
    /// covariance of the harmonic part, so its supremum sits on the diagonal.
    /// Evaluated exactly by spectral sums when that costs at most
    /// `EXACT_BIAS_BUDGET` mode evaluations, otherwise bounded by
    /// `E_x[g(X_{T_G}, x)] ≤ max_{|z|_∞ > gr - r} g(z)`.
    pub fn bias_bound(&self) -> Result<f64> {
        let d = self.window.dim();
        if self.map.len().saturating_mul(self.guard.len()) > EXACT_BIAS_BUDGET {
            let spec = self.window.spec();
            let c = self.guard.spec();
            // sup-distance from the window to the outside of the guard
            let gap = (0..d)
                .map(|i| (spec.lo()[i] - c.lo()[i]).min(c.hi()[i] - spec.hi()[i]) + 1)
                .min()
                .unwrap_or(1);
            let table = GreenTable::shared(d, (gap.max(1) as usize).min(crate::potential::green::default_table_radius(d)))?;
            return Ok(table.max_beyond(gap.max(1)));
        }
        let g0 = GreenTable::shared(d, 1)?.g0();
        let mut worst = 0.0f64;
        let mut pos = vec![0usize; d];
        for &i in &self.map {
            for (a, p) in pos.iter_mut().enumerate() {
                *p = self.guard.axis_pos(i, a);
            }
            worst = worst.max(g0 - self.solver.green_diagonal(&pos));
        }
        Ok(worst)
    }
}

/// One embedded sample; see [`EmbeddedSampler`].
pub fn sample_embedded<R: Rng + ?Sized>(window: &Window, guard_factor: f64, rng: &mut R) -> Result<Field> {
    Ok(EmbeddedSampler::new(window.clone(), guard_factor)?.sample(rng))
}

/// Centered field with covariance `g_U`, vanishing off `U`, on the bounding
/// box of `U`.
pub struct ZeroBoundarySampler {
    window: Window,
    solver: DomainSolver,
    map: Vec<usize>,
}

impl ZeroBoundarySampler {
    pub fn new(u: &PointSet) -> Result<Self> {
        let bb = bounding_box(u).ok_or_else(|| Error::InvalidArgument("empty domain".into()))?;
        let window = Window::new(bb);
        let solver = DomainSolver::for_set(u)?;
        let map = (0..solver.len())
            .map(|j| window.index(&solver.point(j)).expect("site of U"))
            .collect();
        Ok(ZeroBoundarySampler { window, solver, map })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Field {
        let s = self.solver.sample(rng);
        let mut values = vec![0.0; self.window.len()];
        for (j, &i) in self.map.iter().enumerate() {
            values[i] = s[j];
        }
        Field::new(self.window.clone(), values).expect("finite sample")
    }
}

pub fn sample_zero_boundary<R: Rng + ?Sized>(u: &PointSet, rng: &mut R) -> Result<Field> {
    Ok(ZeroBoundarySampler::new(u)?.sample(rng))
}

/// A free-field sampler for a window: exact when possible, embedded otherwise.
pub enum FieldSampler {
    Dense(FreeSampler),
    Shell(ShellSampler),
    Embedded(EmbeddedSampler),
}

impl FieldSampler {
    /// Dense up to `limit` sites, then the layer construction while the outer
    /// layer fits; otherwise the embedded sampler with `guard_factor`.
    pub fn for_window(window: Window, limit: usize, guard_factor: f64) -> Result<Self> {
        if window.len() <= limit {
            return Ok(FieldSampler::Dense(FreeSampler::new(window, limit)?));
        }
        match ShellSampler::new(window.clone(), limit) {
            Ok(s) => Ok(FieldSampler::Shell(s)),
            Err(Error::SizeLimit(_)) => Ok(FieldSampler::Embedded(EmbeddedSampler::new(window, guard_factor)?)),
            Err(e) => Err(e),
        }
    }

    pub fn window(&self) -> &Window {
        match self {
            FieldSampler::Dense(s) => s.window(),
            FieldSampler::Shell(s) => s.window(),
            FieldSampler::Embedded(s) => s.window(),
        }
    }

    pub fn is_exact(&self) -> bool {
        !matches!(self, FieldSampler::Embedded(_))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Field {
        match self {
            FieldSampler::Dense(s) => s.sample(rng),
            FieldSampler::Shell(s) => s.sample(rng),
            FieldSampler::Embedded(s) => s.sample(rng),
        }
    }

    /// Covariance deficit bound; zero for the exact samplers.
    pub fn bias_bound(&self) -> Result<f64> {
        match self {
            FieldSampler::Embedded(s) => s.bias_bound(),
            _ => Ok(0.0),
        }
    }
}
