//! Trajectory planners: SCP for coupled platforms, polynomials for holonomic ones.

pub mod poly;
pub mod scp;
