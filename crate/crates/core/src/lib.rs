//! Sparsity-adapted moment-SOS relaxations for polynomial optimization.
//!
//! The pipeline is: describe a [`pop::Pop`], build a relaxation with one of
//! the builders in [`relaxation`], solve it with [`sdp::solve`], then try to
//! recover minimizers with [`extraction`]. The [`jsr`] and [`sonc`] modules
//! reuse the same machinery for spectral-radius bounds and circuit
//! certificates.

pub mod basis;
pub mod extraction;
pub mod graph;
pub mod jsr;
pub mod lp;
pub mod poly;
pub mod pop;
pub mod relaxation;
pub mod sdp;
pub mod sonc;

pub use poly::{Exponent, Polynomial};
pub use pop::Pop;
