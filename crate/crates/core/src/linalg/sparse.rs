//! Sparse factorization of the killed random-walk Laplacian `I - P_U` on an
//! arbitrary finite set `U`.

use std::collections::HashMap;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lattice::{Point, PointSet};

/// `I - P_U` restricted to `U`, factored once for repeated solves and samples.
pub struct KilledLaplacian {
    points: Vec<Point>,
    index: HashMap<Point, usize>,
    /// In-set neighbor lists.
    adjacency: Vec<Vec<usize>>,
    /// Number of neighbors outside `U`, per site.
    exits: Vec<usize>,
    d: usize,
    llt: Llt<usize, f64>,
}

impl KilledLaplacian {
    pub fn new(u: &PointSet) -> Result<Self> {
        super::init_sequential();
        let points: Vec<Point> = u.iter().cloned().collect();
        let n = points.len();
        let d = points.first().map(|p| p.dim()).unwrap_or(3);
        let index: HashMap<Point, usize> = points.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
        let mut adjacency = vec![Vec::new(); n];
        let mut exits = vec![0usize; n];
        let w = 1.0 / (2 * d) as f64;
        let mut triplets = Vec::with_capacity(n * (d + 1));
        for (i, p) in points.iter().enumerate() {
            triplets.push(Triplet::new(i, i, 1.0));
            for q in p.neighbors() {
                match index.get(&q) {
                    Some(&j) => {
                        adjacency[i].push(j);
                        if j < i {
                            // lower triangle only
                            triplets.push(Triplet::new(i, j, -w));
                        }
                    }
                    None => exits[i] += 1,
                }
            }
        }
        if n == 0 {
            return Err(Error::InvalidArgument("killed Laplacian on an empty set".into()));
        }
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::IllConditioned(format!("sparse assembly failed: {e:?}")))?;
        let llt = mat
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::IllConditioned(format!("sparse Cholesky failed: {e:?}")))?;
        Ok(KilledLaplacian {
            points,
            index,
            adjacency,
            exits,
            d,
            llt,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn index_of(&self, p: &Point) -> Option<usize> {
        self.index.get(p).copied()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut rhs = Mat::from_fn(n, 1, |i, _| b[i]);
        self.llt.solve_in_place(rhs.as_mut());
        (0..n).map(|i| rhs[(i, 0)]).collect()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let w = 1.0 / (2 * self.d) as f64;
        (0..self.len())
            .map(|i| u[i] - w * self.adjacency[i].iter().map(|&j| u[j]).sum::<f64>())
            .collect()
    }

    /// Centered Gaussian vector with covariance `g_U`. The precision matrix is
    /// a sum of rank-one edge terms, so `ζ = Σ_e sqrt(w_e) η_e v_e` has
    /// covariance `I - P_U` and `(I - P_U)^{-1} ζ` has covariance `g_U`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.len();
        let w = 1.0 / (2 * self.d) as f64;
        let sw = w.sqrt();
        let mut zeta = vec![0.0; n];
        for i in 0..n {
            for &j in &self.adjacency[i] {
                if j > i {
                    let eta: f64 = rng.sample(StandardNormal);
                    zeta[i] += sw * eta;
                    zeta[j] -= sw * eta;
                }
            }
            if self.exits[i] > 0 {
                let eta: f64 = rng.sample(StandardNormal);
                zeta[i] += (self.exits[i] as f64 * w).sqrt() * eta;
            }
        }
        self.solve(&zeta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::BoxSpec;
    use crate::linalg::dst::BoxDirichlet;

    #[test]
    fn agrees_with_box_solver() {
        let b = BoxSpec::from_corners(Point::new(&[0, 0, 0]), Point::new(&[3, 4, 2])).unwrap();
        let set = b.to_set();
        let k = KilledLaplacian::new(&set).unwrap();
        let rhs: Vec<f64> = (0..k.len()).map(|i| (i % 5) as f64).collect();
        let u = k.solve(&rhs);
        let v = BoxDirichlet::new(&[3, 4, 2]).solve(&rhs);
        // both index in lexicographic order
        for i in 0..u.len() {
            assert!((u[i] - v[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn singleton_has_unit_green() {
        let set: PointSet = [Point::origin(3)].into_iter().collect();
        let k = KilledLaplacian::new(&set).unwrap();
        assert!((k.solve(&[1.0])[0] - 1.0).abs() < 1e-15);
    }
}
