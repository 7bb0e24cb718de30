//! Potential theory of simple random walk on `Z^d`, `d ≥ 3`.

pub mod dirichlet;
pub mod equilibrium;
pub mod green;
pub mod killed;
pub mod sweeping;
