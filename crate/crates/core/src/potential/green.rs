//! The free Green function `g(x) = Σ_n P_0[X_n = x]` of simple random walk.
//!
//! Writing the Fourier integral through the heat kernel of the continuous-time
//! walk gives the one-dimensional representation
//!
//! ```text
//! g(x) = d ∫_0^∞ Π_i e^{-s} I_{|x_i|}(s) ds,
//! ```
//!
//! with `I_n` the modified Bessel functions. The integrand is evaluated with
//! Miller's backward recurrence, integrated by composite Gauss-Legendre rules
//! on dyadic panels up to `S`, and the tail `[S, ∞)` is integrated term by term
//! from the large-argument expansion of `e^{-s} I_n(s)`, whose leading term is
//! the `c_0 |x|^{2-d}` decay.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Point;

/// Number of entries a table may hold.
const MAX_TABLE_ENTRIES: f64 = 16.0e6;
/// Terms kept in the large-argument expansion.
const TAIL_TERMS: usize = 8;
/// Nominal relative accuracy of tabulated values.
pub const TABLE_TOLERANCE: f64 = 1e-12;

/// `c_0 = (d/2) Γ(d/2 - 1) π^{-d/2}`, the constant in `g(x) ~ c_0 |x|^{2-d}`.
pub fn c0(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    h * statrs::function::gamma::gamma(h - 1.0) * std::f64::consts::PI.powf(-h)
}

/// Largest table radius allowed in dimension `d`.
pub fn max_table_radius(d: usize) -> usize {
    (MAX_TABLE_ENTRIES.powf(1.0 / d as f64).floor() as usize).saturating_sub(1)
}

/// Radius tabulated by [`free_green`] when no larger table was requested.
pub fn default_table_radius(d: usize) -> usize {
    64.min(max_table_radius(d))
}

/// A Green value and whether it came from the far-field asymptotic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenValue {
    pub value: f64,
    pub far_field: bool,
}

/// Tabulated `g(x)` for `|x|_∞ ≤ radius`, with the far-field formula beyond.
pub struct GreenTable {
    d: usize,
    radius: usize,
    values: Vec<f64>,
    c0: f64,
}

fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Newton iteration on Legendre polynomials
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        loop {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            let pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                let weight = 2.0 / ((1.0 - z * z) * pp * pp);
                x[i] = -z;
                x[n - 1 - i] = z;
                w[i] = weight;
                w[n - 1 - i] = weight;
                break;
            }
        }
    }
    (x, w)
}

/// `e^{-s} I_k(s)` for `k = 0..=kmax` by Miller's backward recurrence,
/// normalized with `e^{-s}(I_0 + 2 Σ_{k≥1} I_k) = 1`.
pub(crate) fn scaled_bessel(s: f64, kmax: usize) -> Vec<f64> {
    let m = kmax + 20 + (9.0 * s.sqrt()).ceil() as usize + (s.min(50.0) as usize);
    let mut v = vec![0.0f64; m + 2];
    v[m + 1] = 0.0;
    v[m] = 1e-300;
    let mut k = m;
    while k > 0 {
        // I_{k-1} = I_{k+1} + (2k/s) I_k
        v[k - 1] = v[k + 1] + (2.0 * k as f64 / s) * v[k];
        if v[k - 1] > 1e250 {
            for t in v.iter_mut().skip(k - 1) {
                *t *= 1e-250;
            }
        }
        k -= 1;
    }
    let norm = v[0] + 2.0 * v[1..=m].iter().sum::<f64>();
    v.truncate(kmax + 1);
    v.iter_mut().for_each(|t| *t /= norm);
    v
}

/// Coefficients of `Σ_j c_j s^{-j}` with `e^{-s} I_n(s) ≈ (2πs)^{-1/2} Σ_j c_j s^{-j}`.
fn hankel_coefficients(n: usize) -> [f64; TAIL_TERMS] {
    let mu = 4.0 * (n * n) as f64;
    let mut c = [0.0; TAIL_TERMS];
    c[0] = 1.0;
    for j in 1..TAIL_TERMS {
        let odd = (2 * j - 1) as f64;
        c[j] = -c[j - 1] * (mu - odd * odd) / (j as f64 * 8.0);
    }
    c
}

fn sorted_tuples(d: usize, radius: usize) -> Vec<Vec<usize>> {
    // nonincreasing tuples a_1 >= ... >= a_d in [0, radius]
    let mut out = Vec::new();
    let mut cur = vec![0usize; d];
    fn rec(pos: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos == cur.len() {
            out.push(cur.clone());
            return;
        }
        for a in 0..=max {
            cur[pos] = a;
            rec(pos + 1, a, cur, out);
        }
    }
    rec(0, radius, &mut cur, &mut out);
    out
}

/// Evaluates `g` at the given nonincreasing tuples of absolute coordinates.
fn evaluate_tuples(d: usize, tuples: &[Vec<usize>]) -> Vec<f64> {
    let amax = tuples.iter().map(|t| t[0]).max().unwrap_or(0);
    let cutoff = (25.0 * (amax * amax) as f64).max(2000.0);
    let (gx, gw) = gauss_legendre(24);
    let mut panels = vec![(0.0, 0.5), (0.5, 1.0)];
    let mut a = 1.0;
    while a < cutoff {
        panels.push((a, 2.0 * a));
        a *= 2.0;
    }
    let cutoff = a;
    let mut acc = vec![0.0f64; tuples.len()];
    for &(lo, hi) in &panels {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (x, w) in gx.iter().zip(&gw) {
            let s = mid + half * x;
            let f = scaled_bessel(s, amax);
            let wt = w * half;
            for (t, slot) in tuples.iter().zip(acc.iter_mut()) {
                let mut p = 1.0;
                for &k in t {
                    p *= f[k];
                }
                *slot += wt * p;
            }
        }
    }
    // tail: d (2π)^{-d/2} Σ_m C_m ∫_S^∞ s^{-d/2-m} ds
    let coeffs: Vec<[f64; TAIL_TERMS]> = (0..=amax).map(hankel_coefficients).collect();
    let pref = (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0);
    for (t, slot) in tuples.iter().zip(acc.iter_mut()) {
        let mut poly = [0.0f64; TAIL_TERMS];
        poly[0] = 1.0;
        for &k in t {
            let c = &coeffs[k];
            let mut next = [0.0f64; TAIL_TERMS];
            for i in 0..TAIL_TERMS {
                for j in 0..TAIL_TERMS - i {
                    next[i + j] += poly[i] * c[j];
                }
            }
            poly = next;
        }
        let mut tail = 0.0;
        for (m, cm) in poly.iter().enumerate() {
            let expo = d as f64 / 2.0 + m as f64 - 1.0;
            tail += cm * cutoff.powf(-expo) / expo;
        }
        *slot += pref * tail;
    }
    acc.iter().map(|v| d as f64 * v).collect()
}

impl GreenTable {
    /// Computes the table for `|x|_∞ ≤ radius`.
    pub fn compute(d: usize, radius: usize) -> Result<Self> {
        if d < 3 {
            return Err(Error::UnsupportedDimension(d));
        }
        if radius > max_table_radius(d) {
            return Err(Error::SizeLimit(format!(
                "Green table radius {radius} exceeds the maximum {} for d = {d}",
                max_table_radius(d)
            )));
        }
        let tuples = sorted_tuples(d, radius);
        let vals = evaluate_tuples(d, &tuples);
        let mut table = GreenTable {
            d,
            radius,
            values: vec![f64::NAN; (radius + 1).pow(d as u32)],
            c0: c0(d),
        };
        for (t, v) in tuples.iter().zip(vals) {
            table.scatter(t, v);
        }
        Ok(table)
    }

    fn flat(&self, abs: &[usize]) -> usize {
        abs.iter().fold(0, |acc, &a| acc * (self.radius + 1) + a)
    }

    fn scatter(&mut self, sorted: &[usize], v: f64) {
        // every permutation of the tuple
        let mut perm = sorted.to_vec();
        perm.sort_unstable();
        loop {
            let i = self.flat(&perm);
            self.values[i] = v;
            if !next_permutation(&mut perm) {
                break;
            }
        }
    }

    /// Shared table of at least the given radius (computed once per process,
    /// grown on demand).
    pub fn shared(d: usize, min_radius: usize) -> Result<Arc<GreenTable>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GreenTable>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("green cache poisoned");
        if let Some(t) = guard.get(&d) {
            if t.radius >= min_radius {
                return Ok(t.clone());
            }
        }
        let want = min_radius.max(default_table_radius(d));
        // round up so that small increments do not trigger many rebuilds
        let want = (want.div_ceil(16) * 16).min(max_table_radius(d)).max(min_radius);
        let t = Arc::new(GreenTable::compute(d, want)?);
        guard.insert(d, t.clone());
        Ok(t)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn g0(&self) -> f64 {
        self.values[0]
    }

    /// `g(x)` for a displacement given as coordinates.
    pub fn at(&self, x: &[i64]) -> f64 {
        self.eval_coords(x).value
    }

    pub fn eval_coords(&self, x: &[i64]) -> GreenValue {
        debug_assert_eq!(x.len(), self.d);
        let r = self.radius as i64;
        if x.iter().all(|c| c.abs() <= r) {
            let i = x.iter().fold(0usize, |acc, &c| acc * (self.radius + 1) + c.unsigned_abs() as usize);
            GreenValue {
                value: self.values[i],
                far_field: false,
            }
        } else {
            let norm = x.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
            GreenValue {
                value: self.c0 * norm.powf(2.0 - self.d as f64),
                far_field: true,
            }
        }
    }

    /// `max g(z)` over `|z|_∞ ≥ r`. The maximum sits on the face `z_1 = r`,
    /// and by symmetry the other coordinates range over `0..=r`.
    pub fn max_beyond(&self, r: i64) -> f64 {
        let d = self.d;
        let mut best = 0.0f64;
        let mut z = vec![0i64; d];
        z[0] = r;
        let count = (r + 1).pow(d as u32 - 1);
        for code in 0..count {
            let mut c = code;
            for a in 1..d {
                z[a] = c % (r + 1);
                c /= r + 1;
            }
            best = best.max(self.at(&z));
        }
        best
    }

    pub fn eval(&self, x: &Point) -> GreenValue {
        self.eval_coords(x.coords())
    }

    /// `g(x - y)`.
    pub fn between(&self, x: &Point, y: &Point) -> f64 {
        let mut buf = [0i64; 8];
        let d = self.d;
        if d <= 8 {
            for i in 0..d {
                buf[i] = x[i] - y[i];
            }
            self.at(&buf[..d])
        } else {
            self.at(x.sub(y).coords())
        }
    }

    /// Writes the documented plain-text cache format: a header with `d`,
    /// `radius` and `tolerance`, then one line per nonincreasing tuple of
    /// absolute coordinates followed by its value.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "# gffdisc green table v1")?;
        writeln!(w, "d {}", self.d)?;
        writeln!(w, "radius {}", self.radius)?;
        writeln!(w, "tolerance {:e}", TABLE_TOLERANCE)?;
        for t in sorted_tuples(self.d, self.radius) {
            let i = self.flat(&t);
            for a in &t {
                write!(w, "{a} ")?;
            }
            writeln!(w, "{:.17e}", self.values[i])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r = BufReader::new(std::fs::File::open(path)?);
        let mut d = None;
        let mut radius = None;
        let mut table: Option<GreenTable> = None;
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let head = parts.next().unwrap();
            match head {
                "d" => d = parts.next().and_then(|v| v.parse::<usize>().ok()),
                "radius" => radius = parts.next().and_then(|v| v.parse::<usize>().ok()),
                "tolerance" => {}
                _ => {
                    let (dd, rr) = match (d, radius) {
                        (Some(a), Some(b)) => (a, b),
                        _ => return Err(Error::Format("green table header incomplete".into())),
                    };
                    let t = table.get_or_insert_with(|| GreenTable {
                        d: dd,
                        radius: rr,
                        values: vec![f64::NAN; (rr + 1).pow(dd as u32)],
                        c0: c0(dd),
                    });
                    let nums: Vec<&str> = line.split_whitespace().collect();
                    if nums.len() != dd + 1 {
                        return Err(Error::Format(format!("bad green table line: {line}")));
                    }
                    let mut tuple = Vec::with_capacity(dd);
                    for s in &nums[..dd] {
                        let a: usize = s.parse().map_err(|_| Error::Format(format!("bad coordinate {s}")))?;
                        if a > rr {
                            return Err(Error::Format(format!("coordinate {a} beyond radius {rr}")));
                        }
                        tuple.push(a);
                    }
                    let v: f64 = nums[dd].parse().map_err(|_| Error::Format(format!("bad value {}", nums[dd])))?;
                    t.scatter(&tuple, v);
                }
            }
        }
        let t = table.ok_or_else(|| Error::Format("green table has no entries".into()))?;
        if t.values.iter().any(|v| v.is_nan()) {
            return Err(Error::Format("green table is missing entries".into()));
        }
        Ok(t)
    }
}

fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// `g(x, 0)`, from the shared table or the far-field formula beyond it.
pub fn free_green(x: &Point, d: usize) -> Result<GreenValue> {
    if d < 3 {
        return Err(Error::UnsupportedDimension(d));
    }
    if x.dim() != d {
        return Err(Error::InvalidArgument(format!("point {x:?} is not in dimension {d}")));
    }
    let t = GreenTable::shared(d, default_table_radius(d))?;
    Ok(t.eval(x))
}
