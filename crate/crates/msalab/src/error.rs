//! Crate-wide error type.
//!
//! Operations that reject their inputs do so with a variant that names the
//! violated contract; messages carry the offending values so CLI diagnostics
//! can point at the exact field or cube.

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Configurations or matrices with incompatible shapes.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A parameter outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Interactivity classification requested where it is undefined.
    #[error("interactivity classification undefined: {0}")]
    Classification(String),

    /// Energy too close to the spectrum for a stable resolvent.
    #[error("energy resonant with spectrum (gap {eta:.3e})")]
    Resonant { eta: f64 },

    /// Tensor decomposition requested for a cube that does not factor.
    #[error("decomposition unavailable: {0}")]
    Decomposition(String),

    /// Disorder realization does not cover the requested sites.
    #[error("realization does not cover cube: {0}")]
    Coverage(String),

    /// Problem size beyond the configured resource cap.
    #[error("resource cap exceeded: {0}")]
    Resource(String),

    /// Site or region outside the cube it was addressed in.
    #[error("region outside cube: {0}")]
    Region(String),
}

pub type Result<T> = std::result::Result<T, Error>;
