//! Quantum-field model of a single localized particle: the field is the
//! particle's wave function on an occupied mode plus vacuum fluctuations in
//! every other mode, and the matter count in a subvolume has all vacuum
//! moments equal to the ordinary probability `m`.
//!
//! - [`model`]: lattice, mode bases, subvolumes, overlap matrices
//! - [`algebra`]: symbolic normal ordering and reduction to polynomials in `m`
//! - [`oracle`]: brute-force Fock-space matrices
//! - [`moments`]: experiment driver comparing the two
//! - [`measurement`]: filtering onto an observable's eigenfunctions
//! - [`stochastic`]: Monte Carlo with classical random vacuum amplitudes

pub mod algebra;
pub mod measurement;
pub mod model;
pub mod moments;
pub mod oracle;
pub mod stochastic;
