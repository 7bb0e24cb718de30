//! Geometry of Z^d: points, boxes, windows, boundaries, the coarse lattice
//! L·Z^d with its box hierarchy, and columns of L-boxes above the faces of B_N.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{geometry, invalid, Result};

/// A site of Z^d.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point(SmallVec<[i64; 4]>);

impl Point {
    pub fn new(coords: &[i64]) -> Self {
        Point(SmallVec::from_slice(coords))
    }

    pub fn origin(d: usize) -> Self {
        Point(SmallVec::from_elem(0, d))
    }

    /// `sign * e_axis`.
    pub fn unit(d: usize, axis: usize, sign: i64) -> Self {
        let mut p = Self::origin(d);
        p.0[axis] = sign;
        p
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn sup_norm(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt()
    }

    pub fn add(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(other.0.iter()).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Point) -> Point {
        Point(self.0.iter().zip(other.0.iter()).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, c: i64) -> Point {
        Point(self.0.iter().map(|a| a * c).collect())
    }

    pub fn with(&self, axis: usize, value: i64) -> Point {
        let mut p = self.clone();
        p.0[axis] = value;
        p
    }

    pub fn sup_dist(&self, other: &Point) -> i64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .max()
            .unwrap_or(0)
    }

    /// The 2d nearest neighbors, ordered by axis then sign (-, +).
    pub fn neighbors(&self) -> impl Iterator<Item = Point> + '_ {
        let d = self.dim();
        (0..2 * d).map(move |k| {
            let mut p = self.clone();
            p.0[k / 2] += if k % 2 == 0 { -1 } else { 1 };
            p
        })
    }

    /// The 3^d - 1 sites at sup-distance one.
    pub fn star_neighbors(&self) -> Vec<Point> {
        let d = self.dim();
        let mut out = Vec::with_capacity(3usize.pow(d as u32) - 1);
        for code in 0..3usize.pow(d as u32) {
            let mut c = code;
            let mut p = self.clone();
            let mut zero = true;
            for i in 0..d {
                let off = (c % 3) as i64 - 1;
                c /= 3;
                p.0[i] += off;
                zero &= off == 0;
            }
            if !zero {
                out.push(p);
            }
        }
        out
    }
}

impl Index<usize> for Point {
    type Output = i64;
    fn index(&self, i: usize) -> &i64 {
        &self.0[i]
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

pub type PointSet = BTreeSet<Point>;

/// Half-open product box `[lo_1, hi_1) x ... x [lo_d, hi_d)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxSpec {
    lo: Point,
    hi: Point,
}

impl BoxSpec {
    pub fn from_corners(lo: Point, hi: Point) -> Result<Self> {
        if lo.dim() != hi.dim() || lo.dim() == 0 {
            return invalid("box corners must have the same positive dimension");
        }
        if lo.coords().iter().zip(hi.coords()).any(|(a, b)| a >= b) {
            return invalid(format!("empty box: lower {lo:?} not below upper {hi:?}"));
        }
        Ok(BoxSpec { lo, hi })
    }

    /// Closed sup-norm ball `B(center, r)`.
    pub fn ball(center: &Point, r: i64) -> Self {
        assert!(r >= 0, "negative radius");
        let lo = Point(center.0.iter().map(|c| c - r).collect());
        let hi = Point(center.0.iter().map(|c| c + r + 1).collect());
        BoxSpec { lo, hi }
    }

    /// `B_r` centered at the origin.
    pub fn centered(d: usize, r: i64) -> Self {
        Self::ball(&Point::origin(d), r)
    }

    /// `[a, b)^d` translated by `z`.
    pub fn cube(z: &Point, a: i64, b: i64) -> Self {
        let lo = Point(z.0.iter().map(|c| c + a).collect());
        let hi = Point(z.0.iter().map(|c| c + b).collect());
        BoxSpec { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    pub fn lo(&self) -> &Point {
        &self.lo
    }

    pub fn hi(&self) -> &Point {
        &self.hi
    }

    pub fn shape(&self) -> Vec<usize> {
        self.lo
            .coords()
            .iter()
            .zip(self.hi.coords())
            .map(|(a, b)| (b - a) as usize)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.dim() == self.dim()
            && (0..self.dim()).all(|i| p[i] >= self.lo[i] && p[i] < self.hi[i])
    }

    pub fn is_subset_of(&self, other: &BoxSpec) -> bool {
        (0..self.dim()).all(|i| self.lo[i] >= other.lo[i] && self.hi[i] <= other.hi[i])
    }

    pub fn intersects(&self, other: &BoxSpec) -> bool {
        (0..self.dim()).all(|i| self.lo[i].max(other.lo[i]) < self.hi[i].min(other.hi[i]))
    }

    pub fn translate(&self, z: &Point) -> BoxSpec {
        BoxSpec {
            lo: self.lo.add(z),
            hi: self.hi.add(z),
        }
    }

    /// Shrinks (or grows, for negative `k`) every face by `k`.
    pub fn shrink(&self, k: i64) -> Result<BoxSpec> {
        let lo = Point(self.lo.0.iter().map(|c| c + k).collect());
        let hi = Point(self.hi.0.iter().map(|c| c - k).collect());
        BoxSpec::from_corners(lo, hi)
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &BoxSpec) -> BoxSpec {
        let lo = Point((0..self.dim()).map(|i| self.lo[i].min(other.lo[i])).collect());
        let hi = Point((0..self.dim()).map(|i| self.hi[i].max(other.hi[i])).collect());
        BoxSpec { lo, hi }
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        let w = Window::new(self.clone());
        (0..w.len()).map(move |i| w.point(i))
    }

    pub fn to_set(&self) -> PointSet {
        self.points().collect()
    }

    /// Radius of the smallest centered sup-ball containing the box.
    pub fn sup_radius(&self) -> i64 {
        (0..self.dim())
            .map(|i| self.lo[i].abs().max((self.hi[i] - 1).abs()))
            .max()
            .unwrap_or(0)
    }
}

/// A box with a fixed row-major site indexing (last axis fastest).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Window {
    spec: BoxSpec,
    shape: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl Window {
    pub fn new(spec: BoxSpec) -> Self {
        let shape = spec.shape();
        let d = shape.len();
        let mut strides = vec![1usize; d];
        for i in (0..d.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * shape[i + 1];
        }
        let len = shape.iter().product();
        Window {
            spec,
            shape,
            strides,
            len,
        }
    }

    pub fn centered(d: usize, r: i64) -> Self {
        Self::new(BoxSpec::centered(d, r))
    }

    pub fn spec(&self) -> &BoxSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.spec.contains(p)
    }

    pub fn index(&self, p: &Point) -> Option<usize> {
        if !self.spec.contains(p) {
            return None;
        }
        Some(self.index_unchecked(p.coords()))
    }

    pub(crate) fn index_unchecked(&self, c: &[i64]) -> usize {
        let lo = self.spec.lo.coords();
        c.iter()
            .zip(lo)
            .zip(&self.strides)
            .map(|((x, l), s)| (x - l) as usize * s)
            .sum()
    }

    pub fn point(&self, idx: usize) -> Point {
        let mut c = SmallVec::from_elem(0, self.dim());
        self.fill_coords(idx, &mut c);
        Point(c)
    }

    pub(crate) fn fill_coords(&self, mut idx: usize, out: &mut [i64]) {
        for i in 0..self.dim() {
            let q = idx / self.strides[i];
            idx -= q * self.strides[i];
            out[i] = self.spec.lo[i] + q as i64;
        }
    }

    /// Index of the neighbor `idx ± e_axis`, if it stays inside the window.
    pub fn step(&self, idx: usize, axis: usize, up: bool) -> Option<usize> {
        let q = (idx / self.strides[axis]) % self.shape[axis];
        if up {
            (q + 1 < self.shape[axis]).then(|| idx + self.strides[axis])
        } else {
            (q > 0).then(|| idx - self.strides[axis])
        }
    }

    /// Position of the site along `axis`, counted from the lower face.
    pub fn axis_pos(&self, idx: usize, axis: usize) -> usize {
        (idx / self.strides[axis]) % self.shape[axis]
    }
}

/// Outer boundary `∂K`: sites outside K with a nearest neighbor in K.
pub fn boundary(k: &PointSet) -> PointSet {
    let mut out = PointSet::new();
    for x in k {
        for y in x.neighbors() {
            if !k.contains(&y) {
                out.insert(y);
            }
        }
    }
    out
}

/// Inner boundary `∂_i K`: sites of K with a nearest neighbor outside K.
pub fn inner_boundary(k: &PointSet) -> PointSet {
    k.iter()
        .filter(|x| x.neighbors().any(|y| !k.contains(&y)))
        .cloned()
        .collect()
}

/// Sup-norm diameter; zero for empty or singleton sets.
pub fn diameter(k: &PointSet) -> i64 {
    let Some(first) = k.iter().next() else { return 0 };
    let d = first.dim();
    (0..d)
        .map(|i| {
            let lo = k.iter().map(|p| p[i]).min().unwrap();
            let hi = k.iter().map(|p| p[i]).max().unwrap();
            hi - lo
        })
        .max()
        .unwrap_or(0)
}

/// Bounding box of a nonempty point set.
pub fn bounding_box(k: &PointSet) -> Option<BoxSpec> {
    let first = k.iter().next()?;
    let d = first.dim();
    let lo = Point((0..d).map(|i| k.iter().map(|p| p[i]).min().unwrap()).collect());
    let hi = Point((0..d).map(|i| k.iter().map(|p| p[i]).max().unwrap() + 1).collect());
    Some(BoxSpec { lo, hi })
}

/// `[x]` for `x = m * n`, the integer part used for radii such as `[MN]`.
pub fn floor_mul(m: f64, n: i64) -> i64 {
    (m * n as f64 + 1e-9).floor() as i64
}

/// The boxes `B_z ⊆ D_z ⊆ U_z ⊆ B̃_z` attached to sites `z` of `L·Z^d`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxHierarchy {
    d: usize,
    l: i64,
    k: i64,
}

impl BoxHierarchy {
    pub fn new(d: usize, l: i64, k: i64) -> Result<Self> {
        let mut bad = Vec::new();
        if d < 3 {
            bad.push(format!("d = {d} must be at least 3"));
        }
        if l < 1 {
            bad.push(format!("L = {l} must be at least 1"));
        }
        if k < 2 {
            bad.push(format!("K = {k} must be at least 2"));
        }
        if !bad.is_empty() {
            return geometry(bad.join("; "));
        }
        Ok(BoxHierarchy { d, l, k })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn l(&self) -> i64 {
        self.l
    }

    pub fn k(&self) -> i64 {
        self.k
    }

    /// True only in the regime `K >= 100` where the asymptotic estimates apply.
    pub fn asymptotic_regime(&self) -> bool {
        self.k >= 100
    }

    /// Whether `D_z ⊆ U_z` (needs `K >= 4` up to rounding).
    pub fn d_inside_u(&self) -> bool {
        self.dbox(&Point::origin(self.d)).is_subset_of(&self.u(&Point::origin(self.d)))
    }

    pub fn is_site(&self, z: &Point) -> bool {
        z.dim() == self.d && z.coords().iter().all(|c| c.rem_euclid(self.l) == 0)
    }

    pub fn b(&self, z: &Point) -> BoxSpec {
        BoxSpec::cube(z, 0, self.l)
    }

    pub fn dbox(&self, z: &Point) -> BoxSpec {
        BoxSpec::cube(z, -3 * self.l, 4 * self.l)
    }

    pub fn u(&self, z: &Point) -> BoxSpec {
        BoxSpec::cube(z, -self.k * self.l + 1, self.l + self.k * self.l - 1)
    }

    pub fn tilde(&self, z: &Point) -> BoxSpec {
        BoxSpec::cube(z, -self.k * self.l, self.l + self.k * self.l)
    }

    /// Minimal mutual sup-distance `L + 2KL` for decoupled boxes.
    pub fn separation(&self) -> i64 {
        self.l + 2 * self.k * self.l
    }

    /// The `2d` neighboring sites `z ± L e_i`.
    pub fn neighbors(&self, z: &Point) -> Vec<Point> {
        (0..2 * self.d)
            .map(|k| {
                let s = if k % 2 == 0 { -self.l } else { self.l };
                z.with(k / 2, z[k / 2] + s)
            })
            .collect()
    }
}

/// A column of L-boxes above the face `{x·e = N}` of `B_N`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub axis: usize,
    pub sign: i64,
    /// Footprint corner projected onto the face plane `x·e = N`.
    pub base: Point,
    /// Lower corners of the boxes, ordered by increasing `x·e`.
    pub boxes: Vec<Point>,
}

impl ColumnSpec {
    pub fn direction(&self) -> Point {
        Point::unit(self.base.dim(), self.axis, self.sign)
    }
}

fn multiples_in(l: i64, lo: i64, hi: i64) -> Vec<i64> {
    // multiples of l in [lo, hi]
    if lo > hi {
        return Vec::new();
    }
    let first = lo.div_euclid(l) * l + if lo.rem_euclid(l) == 0 { 0 } else { l };
    (0..).map(|k| first + k * l).take_while(|&v| v <= hi).collect()
}

/// All columns of L-boxes `B_z = z + [0,L)^d` with `z ∈ L·Z^d` lying in
/// `{x·e > N} ∩ B_{[(M+1)N]}` whose projection lies in the face `F_{e,N}`.
/// Faces are listed axis by axis, negative direction first; within a face,
/// footprints are in lexicographic order.
pub fn enumerate_columns(d: usize, n: i64, m: f64, l: i64) -> Result<Vec<ColumnSpec>> {
    if l < 1 {
        return geometry(format!("L = {l} must be at least 1"));
    }
    if n < 1 {
        return geometry(format!("N = {n} must be at least 1"));
    }
    if floor_mul(m, n) < n + 1 {
        return geometry(format!("[MN] = {} is below N + 1 = {}", floor_mul(m, n), n + 1));
    }
    let outer = floor_mul(m + 1.0, n);
    let transverse = multiples_in(l, -n, n - l + 1);
    let mut cols = Vec::new();
    for axis in 0..d {
        for sign in [-1i64, 1] {
            let mut along = if sign > 0 {
                multiples_in(l, n + 1, outer - l + 1)
            } else {
                multiples_in(l, -outer, -n - 1 - l + 1)
            };
            if sign < 0 {
                along.reverse();
            }
            if along.is_empty() {
                continue;
            }
            let t = transverse.len();
            let count = t.pow((d - 1) as u32);
            for code in 0..count {
                let mut base = Point::origin(d);
                let mut c = code;
                for j in (0..d).rev() {
                    if j != axis {
                        base.0[j] = transverse[c % t];
                        c /= t;
                    }
                }
                base.0[axis] = sign * n;
                let boxes = along.iter().map(|&a| base.with(axis, a)).collect();
                cols.push(ColumnSpec {
                    axis,
                    sign,
                    base,
                    boxes,
                });
            }
        }
    }
    Ok(cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball_set(d: usize, r: i64) -> PointSet {
        BoxSpec::centered(d, r).to_set()
    }

    #[test]
    fn boundary_of_origin_is_six_neighbors() {
        let k: PointSet = [Point::origin(3)].into_iter().collect();
        let b = boundary(&k);
        assert_eq!(b.len(), 6);
        assert!(b.iter().all(|p| p.norm() == 1.0));
        assert!(boundary(&PointSet::new()).is_empty());
    }

    #[test]
    fn boundary_of_unit_ball_by_enumeration() {
        // brute force over the sup-ball of radius 2
        let k = ball_set(3, 1);
        let expected = BoxSpec::centered(3, 2)
            .points()
            .filter(|y| !k.contains(y))
            .filter(|y| k.iter().any(|x| x.sub(y).coords().iter().map(|c| c.abs()).sum::<i64>() == 1))
            .count();
        assert_eq!(boundary(&k).len(), expected);
        assert_eq!(expected, 54);
        assert_eq!(inner_boundary(&k).len(), 26);
    }

    #[test]
    fn window_indexing_is_a_bijection() {
        let w = Window::new(BoxSpec::from_corners(Point::new(&[-2, 0, 3]), Point::new(&[1, 4, 5])).unwrap());
        assert_eq!(w.len(), 3 * 4 * 2);
        for i in 0..w.len() {
            assert_eq!(w.index(&w.point(i)), Some(i));
        }
        assert_eq!(w.index(&Point::new(&[1, 0, 3])), None);
    }

    #[test]
    fn window_step_matches_point_arithmetic() {
        let w = Window::centered(3, 2);
        for i in 0..w.len() {
            let p = w.point(i);
            for axis in 0..3 {
                for up in [false, true] {
                    let q = p.with(axis, p[axis] + if up { 1 } else { -1 });
                    assert_eq!(w.step(i, axis, up), w.index(&q));
                }
            }
        }
    }

    #[test]
    fn hierarchy_corners() {
        let h = BoxHierarchy::new(3, 4, 3).unwrap();
        let z = Point::origin(3);
        assert_eq!(h.b(&z).lo(), &Point::new(&[0, 0, 0]));
        assert_eq!(h.dbox(&z).lo(), &Point::new(&[-12, -12, -12]));
        assert_eq!(h.u(&z).lo(), &Point::new(&[-11, -11, -11]));
        assert_eq!(h.u(&z).hi(), &Point::new(&[15, 15, 15]));
        assert_eq!(h.tilde(&z).hi(), &Point::new(&[16, 16, 16]));
        assert!(!h.d_inside_u());
        assert!(BoxHierarchy::new(3, 4, 4).unwrap().d_inside_u());
        assert!(!h.asymptotic_regime());
        assert!(BoxHierarchy::new(3, 4, 1).is_err());
    }

    #[test]
    fn columns_respect_face_and_outer_box() {
        let cols = enumerate_columns(3, 8, 2.0, 4).unwrap();
        assert!(!cols.is_empty());
        let outer = BoxSpec::centered(3, 24);
        for c in &cols {
            let e = c.direction();
            for z in &c.boxes {
                let b = BoxSpec::cube(z, 0, 4);
                assert!(b.is_subset_of(&outer));
                for p in b.points() {
                    let dot: i64 = (0..3).map(|i| p[i] * e[i]).sum();
                    assert!(dot > 8);
                    for j in 0..3 {
                        if j != c.axis {
                            assert!(p[j].abs() <= 8);
                        }
                    }
                }
            }
            let dots: Vec<i64> = c.boxes.iter().map(|z| z[c.axis] * c.sign).collect();
            assert!(dots.windows(2).all(|w| w[0] < w[1]));
        }
        // footprints at -8,-4,0,4: 16 per face; corners 12,16,20 upward and
        // -12,-16,-20,-24 downward since boxes are half-open
        assert_eq!(cols.len(), 6 * 16);
        assert!(cols.iter().all(|c| c.boxes.len() == if c.sign > 0 { 3 } else { 4 }));
    }

    #[test]
    fn columns_reject_thin_shell_and_handle_wide_boxes() {
        assert!(enumerate_columns(3, 4, 1.1, 2).is_err());
        assert!(enumerate_columns(3, 3, 2.0, 10).unwrap().is_empty());
    }
}
