//! Linear algebra used by the potential-theory and sampling code: dense SPD
//! factorizations, a sparse killed-Laplacian solver, fast sine-transform
//! solvers on boxes, and conjugate gradients.

pub mod cg;
pub mod dense;
pub mod dst;
pub mod sparse;

use std::sync::Once;

static SEQ: Once = Once::new();

/// Dense kernels run sequentially: parallelism lives in the Monte Carlo loops,
/// and a fixed evaluation order keeps results independent of the worker count.
pub(crate) fn init_sequential() {
    SEQ.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}
