//! Simple random walk steps.

use rand::Rng;

use crate::lattice::Point;

/// Moves `x` one uniform nearest-neighbor step in place.
pub fn step<R: Rng + ?Sized>(x: &mut Point, rng: &mut R) {
    let d = x.dim();
    let k = rng.random_range(0..2 * d);
    let mut c = x.coords().to_vec();
    c[k / 2] += if k % 2 == 0 { 1 } else { -1 };
    *x = Point::new(&c);
}

/// Runs the walk from `x` until `stop` holds, returning `Ok(site)`, or
/// `Err(site)` at the first site where `escape` holds.
pub fn run_until<R: Rng + ?Sized>(
    mut x: Point,
    rng: &mut R,
    stop: impl Fn(&Point) -> bool,
    escape: impl Fn(&Point) -> bool,
) -> std::result::Result<Point, Point> {
    loop {
        if stop(&x) {
            return Ok(x);
        }
        if escape(&x) {
            return Err(x);
        }
        step(&mut x, rng);
    }
}
