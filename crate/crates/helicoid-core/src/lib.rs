//! Discrete time-frequency machinery on the d-torus: exact exponent algebra,
//! dyadic tiles and rank-k collections, wave packets, the discretized model
//! operator, size/energy decompositions, multilinear maximal functions and
//! sparse forms.
//!
//! Data-parallel loops go through [`exec`]; with the `parallel` feature
//! (default) they run on rayon, otherwise sequentially.

pub mod decomp;
pub mod dyadic;
pub mod exec;
pub mod exponents;
pub mod gridfn;
pub mod maximal;
pub mod model;
pub mod sparse;
pub mod testfns;
pub mod wavepackets;

pub use num_complex::Complex64;
