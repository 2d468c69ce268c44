//! Core math for mesh-bound Gaussian splat avatars.
//!
//! Everything in this crate is deterministic, allocation-only (`no_std` +
//! `alloc`) and free of IO. The companion `meshsplat` crate layers file
//! formats, synthetic scenes, the fitting harness and the CLI on top.
//!
//! Module map:
//!
//! * [`math`] — small fixed-size vectors, matrices and quaternions.
//! * [`gaussian`] — Gaussian primitives, offset activation and composition.
//! * [`mesh`] — triangle meshes, local triangle frames and the binding
//!   deformation that carries Gaussians along with an animated mesh.
//! * [`atlas`] — UV-space rasterization and density-aware sampling of
//!   texture coordinates for bound Gaussians.
//! * [`render`] — CPU reference splatter with per-Gaussian screen statistics
//!   and analytic gradients for mean/color/opacity.
//! * [`errmap`] — fused photometric error maps, summed-area tables and
//!   per-Gaussian error attribution.
//! * [`ssim`] — windowed structural similarity maps and their adjoint.
//! * [`density`] — clone/split/prune selection and application.
//! * [`cluster`] — frame-feature construction, PCA, k-means and the
//!   cluster-then-shuffle training schedule.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod atlas;
pub mod cluster;
pub mod density;
pub mod errmap;
mod fp;
pub mod gaussian;
pub mod grid;
pub mod math;
pub mod mesh;
pub mod render;
pub mod ssim;

use thiserror::Error;

/// Errors reported by validation and state checks across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input that must be finite contained NaN or infinity.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    /// A quaternion with (near-)zero norm cannot be normalized or composed.
    #[error("zero-norm quaternion")]
    ZeroNormQuaternion,
    /// A triangle with (near-)zero area has no well-defined local frame.
    #[error("degenerate triangle {face}")]
    DegenerateTriangle { face: usize },
    /// A Gaussian scale axis is too small for the covariance to be inverted.
    #[error("singular covariance (scale axis below 1e-12)")]
    SingularCovariance,
    /// An index referenced something outside the container it points into.
    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    /// Two inputs that must agree in shape did not.
    #[error("dimension mismatch in {0}")]
    DimensionMismatch(&'static str),
    /// A value failed a documented range or consistency check.
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    /// An operation needed state that the caller did not retain.
    #[error("missing state: {0}")]
    MissingState(&'static str),
    /// Too few samples/frames for the requested operation.
    #[error("{what}: need at least {needed}, got {got}")]
    TooFew {
        what: &'static str,
        needed: usize,
        got: usize,
    },
}

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
