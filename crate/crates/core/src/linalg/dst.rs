//! Orthonormal type-I discrete sine transform and the exact Dirichlet
//! Laplacian on a box that it diagonalizes.
//!
//! On a box with side lengths `n_i`, the killed operator `I - P_U` has the
//! separable eigenvectors `Π_i sqrt(2/(n_i+1)) sin(π k_i (x_i+1)/(n_i+1))` with
//! eigenvalues `1 - (1/d) Σ_i cos(π k_i/(n_i+1))`, `k_i = 1..n_i`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

struct Dst1 {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl Dst1 {
    fn new(n: usize, planner: &mut FftPlanner<f64>) -> Self {
        Dst1 {
            n,
            fft: planner.plan_fft_forward(2 * (n + 1)),
            scale: (2.0 / (n + 1) as f64).sqrt(),
        }
    }

    /// Transforms two lines at once by packing them into the real and
    /// imaginary parts of one odd complex sequence.
    fn pair(&self, a: &mut [f64], b: &mut [f64], buf: &mut [Complex<f64>], scratch: &mut [Complex<f64>]) {
        let n = self.n;
        let m = 2 * (n + 1);
        buf[0] = Complex::new(0.0, 0.0);
        buf[n + 1] = Complex::new(0.0, 0.0);
        for j in 0..n {
            let v = Complex::new(a[j], b[j]);
            buf[j + 1] = v;
            buf[m - j - 1] = -v;
        }
        self.fft.process_with_scratch(buf, scratch);
        let s = 0.5 * self.scale;
        for k in 0..n {
            let z = buf[k + 1];
            a[k] = -z.im * s;
            b[k] = z.re * s;
        }
    }
}

/// Exact solver and sampler for the killed random-walk Laplacian on a box.
pub struct BoxDirichlet {
    shape: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
    dst: Vec<Dst1>,
    cosines: Vec<Vec<f64>>,
}

impl BoxDirichlet {
    pub fn new(shape: &[usize]) -> Self {
        assert!(shape.iter().all(|&n| n >= 1), "box sides must be positive");
        let d = shape.len();
        let mut strides = vec![1usize; d];
        for i in (0..d.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * shape[i + 1];
        }
        let mut planner = FftPlanner::new();
        let dst = shape.iter().map(|&n| Dst1::new(n, &mut planner)).collect();
        let cosines = shape
            .iter()
            .map(|&n| {
                (1..=n)
                    .map(|k| (std::f64::consts::PI * k as f64 / (n + 1) as f64).cos())
                    .collect()
            })
            .collect();
        BoxDirichlet {
            shape: shape.to_vec(),
            strides,
            len: shape.iter().product(),
            dst,
            cosines,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Orthonormal DST-I along every axis; the transform is its own inverse.
    pub fn transform(&self, data: &mut [f64]) {
        assert_eq!(data.len(), self.len);
        for axis in 0..self.shape.len() {
            let n = self.shape[axis];
            let stride = self.strides[axis];
            let plan = &self.dst[axis];
            let m = 2 * (n + 1);
            let mut buf = vec![Complex::new(0.0, 0.0); m];
            let mut scratch = vec![Complex::new(0.0, 0.0); plan.fft.get_inplace_scratch_len()];
            let mut la = vec![0.0; n];
            let mut lb = vec![0.0; n];
            let outer = self.len / (n * stride);
            let starts: Vec<usize> = (0..outer)
                .flat_map(|o| (0..stride).map(move |i| o * n * stride + i))
                .collect();
            for pair in starts.chunks(2) {
                let s0 = pair[0];
                for j in 0..n {
                    la[j] = data[s0 + j * stride];
                }
                if let Some(&s1) = pair.get(1) {
                    for j in 0..n {
                        lb[j] = data[s1 + j * stride];
                    }
                } else {
                    lb.iter_mut().for_each(|v| *v = 0.0);
                }
                plan.pair(&mut la, &mut lb, &mut buf, &mut scratch);
                for j in 0..n {
                    data[s0 + j * stride] = la[j];
                }
                if let Some(&s1) = pair.get(1) {
                    for j in 0..n {
                        data[s1 + j * stride] = lb[j];
                    }
                }
            }
        }
    }

    /// Calls `f(index, eigenvalue)` for every mode in storage order.
    fn for_each_eigenvalue(&self, mut f: impl FnMut(usize, f64)) {
        let d = self.shape.len();
        let inv_d = 1.0 / d as f64;
        let mut k = vec![0usize; d];
        for idx in 0..self.len {
            let s: f64 = (0..d).map(|i| self.cosines[i][k[i]]).sum();
            f(idx, 1.0 - inv_d * s);
            for i in (0..d).rev() {
                k[i] += 1;
                if k[i] < self.shape[i] {
                    break;
                }
                k[i] = 0;
            }
        }
    }

    /// Solves `(I - P_U) u = rhs` with zero values off the box.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut u = rhs.to_vec();
        self.transform(&mut u);
        self.for_each_eigenvalue(|i, lam| u[i] /= lam);
        self.transform(&mut u);
        u
    }

    /// Applies `(I - P_U)` directly on the grid.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let d = self.shape.len();
        let w = 1.0 / (2 * d) as f64;
        let mut out = u.to_vec();
        for idx in 0..self.len {
            let mut acc = 0.0;
            for axis in 0..d {
                let q = (idx / self.strides[axis]) % self.shape[axis];
                if q > 0 {
                    acc += u[idx - self.strides[axis]];
                }
                if q + 1 < self.shape[axis] {
                    acc += u[idx + self.strides[axis]];
                }
            }
            out[idx] -= w * acc;
        }
        out
    }

    /// A centered Gaussian vector with covariance `(I - P_U)^{-1} = g_U`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut u: Vec<f64> = (0..self.len).map(|_| rng.sample(StandardNormal)).collect();
        self.for_each_eigenvalue(|i, lam| u[i] /= lam.sqrt());
        self.transform(&mut u);
        u
    }

    /// `g_U(x, x)` by the spectral sum, `x` given by its offsets from the lower corner.
    pub fn green_diagonal(&self, pos: &[usize]) -> f64 {
        let d = self.shape.len();
        let modes: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                let n = self.shape[i];
                (1..=n)
                    .map(|k| {
                        let s = (std::f64::consts::PI * (k * (pos[i] + 1)) as f64 / (n + 1) as f64).sin();
                        2.0 / (n + 1) as f64 * s * s
                    })
                    .collect()
            })
            .collect();
        let mut total = 0.0;
        let mut k = vec![0usize; d];
        self.for_each_eigenvalue(|_, lam| {
            let w: f64 = (0..d).map(|i| modes[i][k[i]]).product();
            total += w / lam;
            for i in (0..d).rev() {
                k[i] += 1;
                if k[i] < self.shape[i] {
                    break;
                }
                k[i] = 0;
            }
        });
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn naive_dst(v: &[f64]) -> Vec<f64> {
        let n = v.len();
        let s = (2.0 / (n + 1) as f64).sqrt();
        (0..n)
            .map(|k| {
                s * (0..n)
                    .map(|j| v[j] * (std::f64::consts::PI * ((j + 1) * (k + 1)) as f64 / (n + 1) as f64).sin())
                    .sum::<f64>()
            })
            .collect()
    }

    #[test]
    fn one_dimensional_transform_matches_definition() {
        for n in [1usize, 2, 5, 8, 13] {
            let b = BoxDirichlet::new(&[n]);
            let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin() + 0.1 * i as f64).collect();
            let mut w = v.clone();
            b.transform(&mut w);
            let expect = naive_dst(&v);
            for i in 0..n {
                assert!((w[i] - expect[i]).abs() < 1e-12);
            }
            b.transform(&mut w);
            for i in 0..n {
                assert!((w[i] - v[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn solve_inverts_the_killed_laplacian() {
        let b = BoxDirichlet::new(&[4, 5, 3]);
        let rhs: Vec<f64> = (0..b.len()).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let u = b.solve(&rhs);
        let back = b.apply(&u);
        for i in 0..b.len() {
            assert!((back[i] - rhs[i]).abs() < 1e-11);
        }
    }

    #[test]
    fn single_site_green_is_one() {
        let b = BoxDirichlet::new(&[1, 1, 1]);
        assert!((b.green_diagonal(&[0, 0, 0]) - 1.0).abs() < 1e-14);
        let u = b.solve(&[1.0]);
        assert!((u[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn green_diagonal_matches_solve() {
        let b = BoxDirichlet::new(&[5, 4, 6]);
        let pos = [2usize, 1, 3];
        let idx = pos[0] * 24 + pos[1] * 6 + pos[2];
        let mut e = vec![0.0; b.len()];
        e[idx] = 1.0;
        let col = b.solve(&e);
        assert!((col[idx] - b.green_diagonal(&pos)).abs() < 1e-12);
    }

    #[test]
    fn sample_is_reproducible() {
        let b = BoxDirichlet::new(&[3, 3, 3]);
        let x = b.sample(&mut rand_chacha::ChaCha8Rng::seed_from_u64(1));
        let y = b.sample(&mut rand_chacha::ChaCha8Rng::seed_from_u64(1));
        assert_eq!(x, y);
    }
}
