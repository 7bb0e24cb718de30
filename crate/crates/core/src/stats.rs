//! Monte Carlo summaries and the few classical confidence bounds the
//! experiments need.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ChiSquared, ContinuousCDF, Discrete, Normal, Poisson};

/// Mean, standard error, sample count and seed of a Monte Carlo quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation divided by `sqrt(n)`.
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
    pub wall_time_s: f64,
}

impl McEstimate {
    pub fn from_samples(xs: &[f64], seed: u64, wall_time_s: f64) -> Self {
        let n = xs.len();
        assert!(n >= 1, "McEstimate needs at least one sample");
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        McEstimate {
            mean,
            stderr: (var / n as f64).sqrt(),
            n: n as u64,
            seed,
            wall_time_s,
        }
    }

    pub fn from_indicators(hits: &[bool], seed: u64, wall_time_s: f64) -> Self {
        let xs: Vec<f64> = hits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Self::from_samples(&xs, seed, wall_time_s)
    }

    pub fn hits(&self) -> u64 {
        (self.mean * self.n as f64).round() as u64
    }
}

/// Unbiased sample variance together with its standard error under a normal
/// model, `s^2 * sqrt(2 / (n - 1))`.
pub fn sample_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    // the fourth-moment form stays valid for non-normal data
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let se = ((m4 - var * var * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt();
    (var, se)
}

/// Pearson correlation of two equally long samples.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// One-sided Clopper-Pearson upper confidence bound for a binomial proportion.
pub fn clopper_pearson_upper(hits: u64, n: u64, confidence: f64) -> f64 {
    if hits >= n {
        return 1.0;
    }
    let beta = Beta::new(hits as f64 + 1.0, (n - hits) as f64).expect("valid beta parameters");
    beta.inverse_cdf(confidence)
}

/// Wilson score upper bound with `z` standard deviations.
pub fn wilson_upper(hits: u64, n: u64, z: f64) -> f64 {
    let n_f = n as f64;
    let p = hits as f64 / n_f;
    let z2 = z * z;
    let centre = p + z2 / (2.0 * n_f);
    let spread = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    ((centre + spread) / (1.0 + z2 / n_f)).min(1.0)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

/// Result of a chi-square goodness-of-fit test.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GofResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Chi-square goodness-of-fit of integer counts against Poisson(`mean`).
/// Cells are merged from the right until every expected count is at least 5;
/// the last cell collects the upper tail.
pub fn poisson_gof(counts: &[u64], mean: f64) -> GofResult {
    let n = counts.len() as f64;
    let pois = Poisson::new(mean).expect("positive Poisson mean");
    let max = counts.iter().copied().max().unwrap_or(0) as usize;
    let mut observed = vec![0f64; max + 2];
    for &c in counts {
        observed[c as usize] += 1.0;
    }
    let mut expected: Vec<f64> = (0..=max).map(|k| n * pois.pmf(k as u64)).collect();
    let tail = (n - expected.iter().sum::<f64>()).max(0.0);
    expected.push(tail);
    // merge cells right-to-left into bins with expected count >= 5
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for k in (0..expected.len()).rev() {
        o_acc += observed[k];
        e_acc += expected[k];
        if e_acc >= 5.0 {
            bins.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += o_acc;
                last.1 += e_acc;
            }
            None => bins.push((o_acc, e_acc)),
        }
    }
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = bins.len().saturating_sub(1).max(1);
    let p_value = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(statistic);
    GofResult {
        statistic,
        dof,
        p_value,
    }
}

/// Least-squares line `y = a + b x`; returns `(a, b, r_squared)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (a, b, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_of_constant_sample() {
        let e = McEstimate::from_samples(&[2.0; 10], 1, 0.0);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.stderr, 0.0);
        assert_eq!(e.n, 10);
    }

    #[test]
    fn clopper_pearson_zero_hits_matches_closed_form() {
        // with zero hits the bound is 1 - (1 - c)^(1/n)
        let u = clopper_pearson_upper(0, 100, 0.99);
        assert!((u - (1.0 - 0.01f64.powf(0.01))).abs() < 1e-10);
        assert_eq!(clopper_pearson_upper(5, 5, 0.99), 1.0);
    }

    #[test]
    fn wilson_bound_brackets_the_proportion() {
        let u = wilson_upper(30, 100, 2.0);
        assert!(u > 0.3 && u < 0.45);
        assert!(wilson_upper(0, 100, 4.0) > 0.0);
    }

    #[test]
    fn poisson_gof_accepts_exact_frequencies() {
        let mean = 1.3;
        let pois = Poisson::new(mean).unwrap();
        let mut counts = Vec::new();
        for k in 0..12u64 {
            let m = (10000.0 * pois.pmf(k)).round() as usize;
            counts.extend(std::iter::repeat(k).take(m));
        }
        assert!(poisson_gof(&counts, mean).p_value > 0.5);
        assert!(poisson_gof(&counts, 2.0 * mean).p_value < 1e-6);
    }

    #[test]
    fn linear_fit_recovers_a_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let (a, b, r2) = linear_fit(&xs, &ys);
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
