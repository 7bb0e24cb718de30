//! Dense symmetric positive-definite factorizations.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{cholesky_in_place, cholesky_in_place_scratch};
use faer::linalg::triangular_solve::{
    solve_lower_triangular_in_place, solve_upper_triangular_in_place,
};
use faer::{Mat, MatRef, Par};

use crate::error::{Error, Result};

/// Cholesky factor `A = L Lᵀ` of a dense SPD matrix.
pub struct SpdFactor {
    l: Mat<f64>,
}

impl SpdFactor {
    /// Factors the matrix with entries `entry(i, j)`; only `i >= j` is read.
    pub fn from_fn(n: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Self> {
        super::init_sequential();
        let mut l = Mat::<f64>::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                l[(i, j)] = entry(i, j);
            }
        }
        Self::factor_in_place(l)
    }

    fn factor_in_place(mut l: Mat<f64>) -> Result<Self> {
        let n = l.nrows();
        let mut mem = MemBuffer::new(cholesky_in_place_scratch::<f64>(n, Par::Seq, Default::default()));
        let stack = MemStack::new(&mut mem);
        cholesky_in_place(l.as_mut(), Default::default(), Par::Seq, stack, Default::default()).map_err(
            |e| Error::IllConditioned(format!("Cholesky factorization failed: {e:?}")),
        )?;
        for j in 1..n {
            for i in 0..j {
                l[(i, j)] = 0.0;
            }
        }
        Ok(SpdFactor { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> MatRef<'_, f64> {
        self.l.as_ref()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut rhs = Mat::from_fn(n, 1, |i, _| b[i]);
        solve_lower_triangular_in_place(self.l.as_ref(), rhs.as_mut(), Par::Seq);
        solve_upper_triangular_in_place(self.l.transpose(), rhs.as_mut(), Par::Seq);
        (0..n).map(|i| rhs[(i, 0)]).collect()
    }

    /// `L ξ`, which has covariance `A` when `ξ` is standard normal.
    pub fn lower_mul(&self, xi: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for j in 0..n {
            let x = xi[j];
            if x == 0.0 {
                continue;
            }
            let col = self.l.col(j);
            for i in j..n {
                out[i] += col[i] * x;
            }
        }
        out
    }

    /// `Lᵀ w`; then `(Lᵀ w)·ξ` has the law of `w·(L ξ)`.
    pub fn lower_t_mul(&self, w: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|j| {
                let col = self.l.col(j);
                (j..n).map(|i| col[i] * w[i]).sum()
            })
            .collect()
    }

    /// `log det A`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }
}

/// Smallest eigenvalue of a dense symmetric matrix.
pub fn min_eigenvalue(n: usize, entry: impl Fn(usize, usize) -> f64) -> f64 {
    super::init_sequential();
    let m = Mat::from_fn(n, n, entry);
    let ev = m
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .expect("symmetric eigenvalue solver converged");
    ev[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_solves_and_reconstructs() {
        let n = 5;
        let a = |i: usize, j: usize| if i == j { 4.0 } else { 1.0 / (1.0 + (i + j) as f64) };
        let f = SpdFactor::from_fn(n, a).unwrap();
        let b: Vec<f64> = (0..n).map(|i| i as f64 - 1.5).collect();
        let x = f.solve(&b);
        for i in 0..n {
            let ax: f64 = (0..n).map(|j| a(i.max(j), i.min(j)) * x[j]).sum();
            assert!((ax - b[i]).abs() < 1e-12);
        }
        // L Lᵀ e_k reproduces column k
        for k in 0..n {
            let lt = f.lower_t_mul(&(0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect::<Vec<_>>());
            let col = f.lower_mul(&lt);
            for i in 0..n {
                assert!((col[i] - a(i.max(k), i.min(k))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        assert!(SpdFactor::from_fn(2, |i, j| if i == j { 1.0 } else { 2.0 }).is_err());
        assert!(min_eigenvalue(2, |i, j| if i == j { 1.0 } else { 2.0 }) < 0.0);
    }
}
