//! Conjugate gradients for symmetric positive-definite operators.

use crate::error::{Error, Result};

/// Outcome of a conjugate-gradient solve.
#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final residual norm relative to `|b|`.
    pub relative_residual: f64,
}

/// Solves `A x = b` where `apply(v, out)` writes `A v` into `out`.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x0: Option<Vec<f64>>,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = b.len();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = x0.unwrap_or_else(|| vec![0.0; n]);
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut ap = vec![0.0; n];
    apply(&x, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    for it in 0..max_iter {
        let res = rr.sqrt() / bnorm;
        if res <= tol {
            return Ok(CgOutcome {
                x,
                iterations: it,
                relative_residual: res,
            });
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::IllConditioned(format!(
                "operator not positive definite (pᵀAp = {pap:e})"
            )));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    let res = rr.sqrt() / bnorm;
    if res <= tol * 10.0 {
        return Ok(CgOutcome {
            x,
            iterations: max_iter,
            relative_residual: res,
        });
    }
    Err(Error::IllConditioned(format!(
        "conjugate gradients stalled at relative residual {res:e} after {max_iter} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal_system() {
        let n = 50;
        let apply = |v: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { v[i - 1] } else { 0.0 };
                let r = if i + 1 < n { v[i + 1] } else { 0.0 };
                out[i] = 2.0 * v[i] - 0.9 * (l + r);
            }
        };
        let b: Vec<f64> = (0..n).map(|i| (i % 3) as f64).collect();
        let out = conjugate_gradient(apply, &b, None, 1e-12, 1000).unwrap();
        let mut ax = vec![0.0; n];
        apply(&out.x, &mut ax);
        for i in 0..n {
            assert!((ax[i] - b[i]).abs() < 1e-9);
        }
    }
}
