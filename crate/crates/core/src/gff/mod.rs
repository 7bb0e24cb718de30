//! The discrete Gaussian free field: fields on box windows, exact samplers,
//! the harmonic/local decomposition, Cameron–Martin shifts and rate functions.

pub mod decompose;
pub mod rates;
pub mod sample;
pub mod tilt;

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::lattice::{BoxSpec, Point, Window};

/// A real function on a box window.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    window: Window,
    values: Vec<f64>,
}

impl Field {
    pub fn new(window: Window, values: Vec<f64>) -> Result<Self> {
        if window.is_empty() {
            return Err(Error::InvalidArgument("empty window".into()));
        }
        if values.len() != window.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for a window of {} sites",
                values.len(),
                window.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value at {:?}", window.point(i))));
        }
        Ok(Field { window, values })
    }

    pub fn zeros(window: Window) -> Self {
        let n = window.len();
        Field {
            window,
            values: vec![0.0; n],
        }
    }

    /// `f(x)` evaluated at every site of the window.
    pub fn from_fn(window: Window, f: impl Fn(&Point) -> f64) -> Self {
        let values = (0..window.len()).map(|i| f(&window.point(i))).collect();
        Field { window, values }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, p: &Point) -> Option<f64> {
        self.window.index(p).map(|i| self.values[i])
    }

    /// Restriction to a sub-box.
    pub fn restrict(&self, b: &BoxSpec) -> Result<Field> {
        if !b.is_subset_of(self.window.spec()) {
            return Err(Error::InvalidGeometry(format!("{b:?} is not inside the field window")));
        }
        let w = Window::new(b.clone());
        let values = (0..w.len())
            .map(|i| self.values[self.window.index(&w.point(i)).expect("sub-box site")])
            .collect();
        Ok(Field { window: w, values })
    }

    /// Pointwise `self + other` on a common window.
    pub fn add(&self, other: &Field) -> Result<Field> {
        if self.window != other.window {
            return Err(Error::InvalidGeometry("fields live on different windows".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Field {
            window: self.window.clone(),
            values,
        })
    }

    /// Writes the snapshot format: a `# gffdisc field v1` line, `d`, the lower
    /// and upper corners, the seed, then one value per line in row-major order
    /// (last coordinate fastest).
    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        let spec = self.window.spec();
        writeln!(w, "# gffdisc field v1")?;
        writeln!(w, "d {}", spec.dim())?;
        writeln!(w, "lo {}", join(spec.lo().coords()))?;
        writeln!(w, "hi {}", join(spec.hi().coords()))?;
        writeln!(w, "seed {seed}")?;
        for v in &self.values {
            writeln!(w, "{v:e}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a snapshot, returning the field and its seed.
    pub fn load(path: &Path) -> Result<(Field, u64)> {
        let r = BufReader::new(std::fs::File::open(path)?);
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Format("truncated field snapshot".into()))?
                .map_err(Error::from)
        };
        if next()?.trim() != "# gffdisc field v1" {
            return Err(Error::Format("not a gffdisc field snapshot".into()));
        }
        let d: usize = keyed(&next()?, "d")?
            .parse()
            .map_err(|_| Error::Format("bad dimension".into()))?;
        let lo = coords(&keyed(&next()?, "lo")?, d)?;
        let hi = coords(&keyed(&next()?, "hi")?, d)?;
        let seed: u64 = keyed(&next()?, "seed")?
            .parse()
            .map_err(|_| Error::Format("bad seed".into()))?;
        let window = Window::new(BoxSpec::from_corners(Point::new(&lo), Point::new(&hi))?);
        let mut values = Vec::with_capacity(window.len());
        for _ in 0..window.len() {
            let s = next()?;
            values.push(s.trim().parse().map_err(|_| Error::Format(format!("bad value {s:?}")))?);
        }
        Ok((Field::new(window, values)?, seed))
    }
}

fn join(c: &[i64]) -> String {
    c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn keyed(line: &str, key: &str) -> Result<String> {
    line.strip_prefix(key)
        .map(|s| s.trim().to_string())
        .ok_or_else(|| Error::Format(format!("expected `{key}` line, found {line:?}")))
}

fn coords(s: &str, d: usize) -> Result<Vec<i64>> {
    let c: Vec<i64> = s
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Format(format!("bad coordinate {t:?}"))))
        .collect::<Result<_>>()?;
    if c.len() != d {
        return Err(Error::Format(format!("expected {d} coordinates, found {}", c.len())));
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip() {
        let w = Window::new(BoxSpec::from_corners(Point::new(&[-1, 0, 2]), Point::new(&[1, 3, 4])).unwrap());
        let f = Field::from_fn(w, |p| p[0] as f64 * 0.1 - p[2] as f64 / 3.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.txt");
        f.save(&path, 42).unwrap();
        let (g, seed) = Field::load(&path).unwrap();
        assert_eq!(seed, 42);
        assert_eq!(f, g);
    }

    #[test]
    fn rejects_mismatched_or_nonfinite_values() {
        let w = Window::centered(3, 1);
        assert!(Field::new(w.clone(), vec![0.0; 26]).is_err());
        let mut v = vec![0.0; 27];
        v[3] = f64::NAN;
        assert!(Field::new(w, v).is_err());
    }

    #[test]
    fn restriction_keeps_values() {
        let f = Field::from_fn(Window::centered(3, 2), |p| p[1] as f64);
        let g = f.restrict(&BoxSpec::centered(3, 1)).unwrap();
        assert_eq!(g.get(&Point::new(&[0, 1, -1])), Some(1.0));
        assert!(f.restrict(&BoxSpec::centered(3, 3)).is_err());
    }
}
