//! `φ = h^U + ψ^U`: the harmonic average of the field in `U` and the local
//! field, which vanishes off `U`.

use crate::error::{Error, Result};
use crate::gff::Field;
use crate::lattice::{boundary, BoxSpec, Point, PointSet, Window};
use crate::potential::killed::DomainSolver;

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub u: PointSet,
    pub h: Field,
    pub psi: Field,
}

impl Decomposition {
    /// `max_{x ∈ U} |h(x) - mean of h over the neighbors of x|`.
    pub fn harmonicity_residual(&self) -> f64 {
        let w = self.h.window();
        let d = w.dim();
        self.u
            .iter()
            .map(|x| {
                let mean = x.neighbors().map(|y| self.h.get(&y).expect("closure in window")).sum::<f64>()
                    / (2 * d) as f64;
                (self.h.get(x).unwrap() - mean).abs()
            })
            .fold(0.0, f64::max)
    }
}

enum Domain {
    Set(PointSet),
    Box(BoxSpec),
}

/// Reusable decomposition for a fixed window and domain.
pub struct Decomposer {
    window: Window,
    u: Domain,
    solver: DomainSolver,
    /// Window index of each unknown of the solver.
    sites: Vec<usize>,
    /// For each unknown, window indices of its neighbors outside `U`.
    exits: Vec<Vec<usize>>,
}

impl Decomposer {
    pub fn new(window: &Window, u: &PointSet) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::InvalidGeometry("empty domain U".into()));
        }
        let closure = boundary(u);
        let missing: Vec<_> = u.iter().chain(closure.iter()).filter(|p| !window.contains(p)).take(3).collect();
        if !missing.is_empty() {
            return Err(Error::InvalidGeometry(format!(
                "U and its boundary must lie in the field window; missing {missing:?}"
            )));
        }
        let solver = DomainSolver::for_set(u)?;
        Ok(Self::build(window, Domain::Set(u.clone()), solver, |q| u.contains(q)))
    }

    /// Same as [`Self::new`] for a box domain, without materializing the
    /// site set.
    pub fn for_box(window: &Window, u: &BoxSpec) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::InvalidGeometry("empty domain U".into()));
        }
        let grown = BoxSpec::from_corners(u.lo().sub(&unit_diag(u.dim())), u.hi().add(&unit_diag(u.dim())))?;
        if !grown.is_subset_of(window.spec()) {
            return Err(Error::InvalidGeometry(format!(
                "U = {u:?} and its boundary must lie in the field window"
            )));
        }
        let solver = DomainSolver::for_box(u);
        Ok(Self::build(window, Domain::Box(u.clone()), solver, |q| u.contains(q)))
    }

    fn build(window: &Window, u: Domain, solver: DomainSolver, inside: impl Fn(&Point) -> bool) -> Self {
        let mut sites = Vec::with_capacity(solver.len());
        let mut exits = Vec::with_capacity(solver.len());
        for j in 0..solver.len() {
            let p = solver.point(j);
            sites.push(window.index(&p).expect("site of U"));
            exits.push(
                p.neighbors()
                    .filter(|q| !inside(q))
                    .map(|q| window.index(&q).expect("boundary site"))
                    .collect(),
            );
        }
        Decomposer {
            window: window.clone(),
            u,
            solver,
            sites,
            exits,
        }
    }

    /// `h^U` at the sites of `U`, in the solver's order.
    pub fn harmonic_on_u(&self, phi: &[f64]) -> Vec<f64> {
        let w = 1.0 / (2 * self.window.dim()) as f64;
        let rhs: Vec<f64> = self.exits.iter().map(|e| w * e.iter().map(|&k| phi[k]).sum::<f64>()).collect();
        self.solver.solve(&rhs)
    }

    /// Window indices of the sites of `U`, matching [`Self::harmonic_on_u`].
    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn apply(&self, phi: &Field) -> Result<Decomposition> {
        if phi.window() != &self.window {
            return Err(Error::InvalidGeometry("field window differs from the decomposer's".into()));
        }
        let hu = self.harmonic_on_u(phi.values());
        let mut h = phi.values().to_vec();
        let mut psi = vec![0.0; h.len()];
        for (j, &i) in self.sites.iter().enumerate() {
            h[i] = hu[j];
            psi[i] = phi.values()[i] - hu[j];
        }
        let u = match &self.u {
            Domain::Set(u) => u.clone(),
            Domain::Box(b) => b.to_set(),
        };
        Ok(Decomposition {
            u,
            h: Field::new(self.window.clone(), h)?,
            psi: Field::new(self.window.clone(), psi)?,
        })
    }
}

fn unit_diag(d: usize) -> Point {
    Point::new(&vec![1; d])
}

/// Splits `φ` into its harmonic average in `U` and the local field.
pub fn decompose(phi: &Field, u: &PointSet) -> Result<Decomposition> {
    Decomposer::new(phi.window(), u)?.apply(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gff::sample::sample_free;
    use crate::rng::stream;

    #[test]
    fn decomposition_is_exact_and_harmonic() {
        let phi = sample_free(&Window::centered(3, 4), &mut stream(1, 0, 0)).unwrap();
        let mut u = BoxSpec::centered(3, 2).to_set();
        u.insert(Point::new(&[3, 0, 0]));
        let dec = decompose(&phi, &u).unwrap();
        for i in 0..phi.window().len() {
            let p = phi.window().point(i);
            let (h, s, f) = (dec.h.values()[i], dec.psi.values()[i], phi.values()[i]);
            assert!((h + s - f).abs() < 1e-12);
            if !u.contains(&p) {
                assert_eq!(h, f);
                assert_eq!(s, 0.0);
            }
        }
        assert!(dec.harmonicity_residual() < 1e-10);
    }

    #[test]
    fn box_domain_matches_point_set_domain() {
        let phi = sample_free(&Window::centered(3, 4), &mut stream(2, 0, 0)).unwrap();
        let b = BoxSpec::from_corners(Point::new(&[-3, -2, -3]), Point::new(&[3, 2, 1])).unwrap();
        let a = Decomposer::for_box(phi.window(), &b).unwrap().apply(&phi).unwrap();
        let s = decompose(&phi, &b.to_set()).unwrap();
        for (x, y) in a.h.values().iter().zip(s.h.values()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(Decomposer::for_box(phi.window(), &BoxSpec::centered(3, 4)).is_err());
    }

    #[test]
    fn missing_boundary_is_a_geometry_error() {
        let phi = Field::zeros(Window::centered(3, 2));
        let u = BoxSpec::centered(3, 2).to_set();
        assert!(matches!(decompose(&phi, &u), Err(Error::InvalidGeometry(_))));
    }
}
