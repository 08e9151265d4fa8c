//! Numerical laboratory for the multi-particle Anderson tight-binding model
//! with a weak short-range interaction.
//!
//! The crate builds finite-volume restrictions of
//! `H = -Delta + sum_j V(x_j) + h U(x)` on multi-particle cubes in `Z^{nd}`,
//! diagonalizes them, and exposes the objects a scale-by-scale localization
//! analysis works with: Green functions, resonance and non-singularity
//! verdicts, separability of cube pairs, interactivity splits, and Monte
//! Carlo probes for the probabilistic bounds that drive the induction.
//!
//! All floating-point work is generic over [`Scalar`] (`f32` or `f64`);
//! concrete aliases for the common `f64` instantiations live at the crate
//! root.

pub mod band;
pub mod error;
pub mod experiments;
pub mod lattice;
pub mod model;
pub mod msa;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default cap on dense matrix dimension accepted by the eigensolver.
pub const DEFAULT_DIM_CAP: usize = 6000;

/// Spectral gaps at or below this are treated as exact resonance: the cube
/// is both singular and resonant by convention.
pub const DEGENERATE_GAP: f64 = 1e-12;

pub type Hamiltonian64 = model::AssembledHamiltonian<f64>;
pub type Hamiltonian32 = model::AssembledHamiltonian<f32>;
pub type Interval64 = model::Interval<f64>;
pub type Spectral64 = spectral::SpectralData<f64>;
pub type Spectral32 = spectral::SpectralData<f32>;
pub type MsaParams64 = msa::MsaParams<f64>;
pub type MsaParams32 = msa::MsaParams<f32>;
