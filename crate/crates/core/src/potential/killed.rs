//! Killed Green functions, exit distributions and harmonic extensions on a
//! finite domain `U`, solved exactly (sine transform on boxes, sparse
//! Cholesky otherwise).

use rand::Rng;

use crate::error::Result;
use crate::lattice::{bounding_box, BoxSpec, Point, PointSet, Window};
use crate::linalg::dst::BoxDirichlet;
use crate::linalg::sparse::KilledLaplacian;

enum Backend {
    Box { window: Window, solver: BoxDirichlet },
    General(KilledLaplacian),
}

/// The killed operator `I - P_U` on a finite domain, ready for solves.
pub struct DomainSolver {
    backend: Backend,
    d: usize,
}

impl DomainSolver {
    pub fn for_box(b: &BoxSpec) -> Self {
        let window = Window::new(b.clone());
        let solver = BoxDirichlet::new(window.shape());
        DomainSolver {
            d: b.dim(),
            backend: Backend::Box { window, solver },
        }
    }

    /// Uses the box backend whenever `U` fills its bounding box.
    pub fn for_set(u: &PointSet) -> Result<Self> {
        if let Some(bb) = bounding_box(u) {
            if bb.len() == u.len() {
                return Ok(Self::for_box(&bb));
            }
        }
        let k = KilledLaplacian::new(u)?;
        let d = k.points().first().map(|p| p.dim()).unwrap_or(3);
        Ok(DomainSolver {
            d,
            backend: Backend::General(k),
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        match &self.backend {
            Backend::Box { window, .. } => window.len(),
            Backend::General(k) => k.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, p: &Point) -> Option<usize> {
        match &self.backend {
            Backend::Box { window, .. } => window.index(p),
            Backend::General(k) => k.index_of(p),
        }
    }

    pub fn point(&self, i: usize) -> Point {
        match &self.backend {
            Backend::Box { window, .. } => window.point(i),
            Backend::General(k) => k.points()[i].clone(),
        }
    }

    /// The box window, when the domain is a box.
    pub fn window(&self) -> Option<&Window> {
        match &self.backend {
            Backend::Box { window, .. } => Some(window),
            Backend::General(_) => None,
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match &self.backend {
            Backend::Box { solver, .. } => solver.solve(rhs),
            Backend::General(k) => k.solve(rhs),
        }
    }

    /// Centered Gaussian vector with covariance `g_U`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.backend {
            Backend::Box { solver, .. } => solver.sample(rng),
            Backend::General(k) => k.sample(rng),
        }
    }

    /// `g_U(·, y)` over the domain; zero vector when `y ∉ U`.
    pub fn column(&self, y: &Point) -> Vec<f64> {
        let mut e = vec![0.0; self.len()];
        match self.index(y) {
            Some(i) => e[i] = 1.0,
            None => return e,
        }
        self.solve(&e)
    }

    /// Sites of `U` with a neighbor outside, each with its outside neighbors.
    pub fn exits(&self) -> Vec<(usize, Vec<Point>)> {
        let mut out = Vec::new();
        for i in 0..self.len() {
            let p = self.point(i);
            let outside: Vec<Point> = p.neighbors().filter(|q| self.index(q).is_none()).collect();
            if !outside.is_empty() {
                out.push((i, outside));
            }
        }
        out
    }

    /// `P_x[X_{T_U} = z]` for `z ∈ ∂U`, in the order returned by [`Self::exits`]
    /// flattened; `x ∉ U` exits at once.
    pub fn exit_distribution(&self, x: &Point) -> Vec<(Point, f64)> {
        if self.index(x).is_none() {
            return vec![(x.clone(), 1.0)];
        }
        let col = self.column(x);
        let w = 1.0 / (2 * self.d) as f64;
        let mut acc: std::collections::BTreeMap<Point, f64> = Default::default();
        for (i, outs) in self.exits() {
            for z in outs {
                *acc.entry(z).or_insert(0.0) += w * col[i];
            }
        }
        acc.into_iter().collect()
    }

    /// The harmonic function on `U` equal to `boundary` on `∂U`.
    pub fn harmonic_extension(&self, boundary: impl Fn(&Point) -> f64) -> Vec<f64> {
        let w = 1.0 / (2 * self.d) as f64;
        let mut rhs = vec![0.0; self.len()];
        for (i, outs) in self.exits() {
            rhs[i] = w * outs.iter().map(&boundary).sum::<f64>();
        }
        self.solve(&rhs)
    }
}

/// `g_U(x, y)`.
pub fn killed_green(u: &PointSet, x: &Point, y: &Point) -> Result<f64> {
    if !u.contains(x) || !u.contains(y) {
        return Ok(0.0);
    }
    let s = DomainSolver::for_set(u)?;
    let col = s.column(y);
    Ok(col[s.index(x).expect("x in U")])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::green::GreenTable;

    #[test]
    fn singleton_and_outside_values() {
        let u: PointSet = [Point::origin(3)].into_iter().collect();
        assert!((killed_green(&u, &Point::origin(3), &Point::origin(3)).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(killed_green(&u, &Point::new(&[1, 0, 0]), &Point::origin(3)).unwrap(), 0.0);
    }

    #[test]
    fn killed_green_is_symmetric_on_irregular_set() {
        let mut u = BoxSpec::centered(3, 2).to_set();
        u.remove(&Point::new(&[1, 1, 1]));
        u.insert(Point::new(&[3, 0, 0]));
        let x = Point::new(&[-1, 0, 2]);
        let y = Point::new(&[3, 0, 0]);
        let a = killed_green(&u, &x, &y).unwrap();
        let b = killed_green(&u, &y, &x).unwrap();
        assert!((a - b).abs() < 1e-13);
        assert!(a > 0.0);
    }

    #[test]
    fn last_exit_decomposition_of_free_green() {
        // g(x,y) = g_U(x,y) + E_x[g(X_{T_U}, y)]
        let t = GreenTable::shared(3, 16).unwrap();
        let b = BoxSpec::centered(3, 3);
        let s = DomainSolver::for_box(&b);
        let x = Point::new(&[1, -2, 0]);
        let col = s.column(&x);
        let exit = s.exit_distribution(&x);
        let total: f64 = exit.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for y in [Point::new(&[0, 0, 0]), Point::new(&[3, 3, -3]), Point::new(&[1, -2, 0])] {
            let gu = col[s.index(&y).unwrap()];
            let corr: f64 = exit.iter().map(|(z, p)| p * t.between(z, &y)).sum();
            assert!((t.between(&x, &y) - gu - corr).abs() < 1e-10);
        }
    }

    #[test]
    fn harmonic_extension_reproduces_harmonic_data() {
        // linear functions are harmonic
        let b = BoxSpec::from_corners(Point::new(&[0, 0, 0]), Point::new(&[4, 3, 5])).unwrap();
        let f = |p: &Point| 2.0 * p[0] as f64 - p[2] as f64 + 0.5;
        for s in [DomainSolver::for_box(&b), DomainSolver::for_set(&{
            let mut set = b.to_set();
            set.remove(&Point::new(&[0, 0, 0]));
            set
        })
        .unwrap()]
        {
            let h = s.harmonic_extension(f);
            for i in 0..s.len() {
                assert!((h[i] - f(&s.point(i))).abs() < 1e-11);
            }
        }
    }
}
