//! Gaussian primitives and the per-Gaussian offset pipeline.
//!
//! A raw 13-channel offset vector decodes into bounded deltas:
//!
//! ```text
//! channels  0..3   position delta   0.1 * tanh(x)        in (-0.1, 0.1)
//! channels  3..6   scale factor     exp(x)               in (0, inf)
//! channels  6..9   rotation delta   axis-angle pi*tanh(x) -> unit quaternion
//! channel   9      opacity delta    0.5 * tanh(x)        in (-0.5, 0.5)
//! channels 10..13  color delta      0.7 * tanh(x)        in (-0.7, 0.7)
//! ```
//!
//! Composition applies the deltas on top of mesh-deformed ("coarse")
//! parameters: position adds, color adds then clamps to [0, 1], opacity adds
//! then clamps to [0, 1], scale multiplies component-wise, and rotation
//! composes by quaternion product.

use crate::fp;
use crate::math::{Quat, Vec3};
use crate::{Error, Result};

/// Number of raw offset channels per Gaussian.
pub const OFFSET_CHANNELS: usize = 13;

/// Bound on the decoded position delta.
pub const POS_DELTA_BOUND: f64 = 0.1;
/// Bound on the decoded opacity delta.
pub const OPACITY_DELTA_BOUND: f64 = 0.5;
/// Bound on the decoded color delta.
pub const COLOR_DELTA_BOUND: f64 = 0.7;

/// A Gaussian bound to a mesh triangle, stored in that triangle's local
/// frame. `scale` is per-axis and strictly positive, `rot` a unit
/// quaternion, `opacity` and each `color` channel in [0, 1], and `uv` a
/// texture coordinate inside the bound face's UV triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive {
    pub mu: Vec3,
    pub scale: Vec3,
    pub rot: Quat,
    pub opacity: f64,
    pub color: [f64; 3],
    pub face: usize,
    pub uv: [f64; 2],
}

impl GaussianPrimitive {
    /// Check the documented field invariants.
    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.scale.is_finite() && self.rot.is_finite()) {
            return Err(Error::NonFinite("gaussian"));
        }
        if self.scale.x <= 0.0 || self.scale.y <= 0.0 || self.scale.z <= 0.0 {
            return Err(Error::InvalidArgument("gaussian scale must be positive"));
        }
        if fp::abs(self.rot.norm() - 1.0) > 1e-6 {
            return Err(Error::InvalidArgument("gaussian rotation must be unit"));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::InvalidArgument("gaussian opacity outside [0,1]"));
        }
        if self.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidArgument("gaussian color outside [0,1]"));
        }
        if self.uv.iter().any(|u| !(0.0..=1.0).contains(u)) {
            return Err(Error::InvalidArgument("gaussian uv outside [0,1]^2"));
        }
        Ok(())
    }
}

/// Decoded per-Gaussian offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetBundle {
    pub d_mu: Vec3,
    pub d_scale: Vec3,
    pub d_rot: Quat,
    pub d_alpha: f64,
    pub d_color: [f64; 3],
}

impl OffsetBundle {
    /// Offsets that leave parameters unchanged under [`compose_parameters`].
    pub const IDENTITY: OffsetBundle = OffsetBundle {
        d_mu: Vec3::ZERO,
        d_scale: Vec3 {
            x: 1.0,
            y: 1.0,
            z: 1.0,
        },
        d_rot: Quat::IDENTITY,
        d_alpha: 0.0,
        d_color: [0.0; 3],
    };
}

/// World-space parameters of a Gaussian after deformation and offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformedParams {
    pub mu: Vec3,
    pub scale: Vec3,
    pub rot: Quat,
    pub opacity: f64,
    pub color: [f64; 3],
}

/// Decode a raw 13-channel offset vector into bounded deltas.
///
/// Errors on non-finite input. The scale channels pass through `exp`, so
/// extremely large raw values overflow; inputs are expected to come from a
/// bounded regressor.
pub fn activate_offsets(raw: &[f64]) -> Result<OffsetBundle> {
    if raw.len() != OFFSET_CHANNELS {
        return Err(Error::DimensionMismatch("activate_offsets raw vector"));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("activate_offsets raw vector"));
    }
    let d_mu = Vec3::new(
        POS_DELTA_BOUND * fp::tanh(raw[0]),
        POS_DELTA_BOUND * fp::tanh(raw[1]),
        POS_DELTA_BOUND * fp::tanh(raw[2]),
    );
    let d_scale = Vec3::new(fp::exp(raw[3]), fp::exp(raw[4]), fp::exp(raw[5]));
    let axis_angle = Vec3::new(
        core::f64::consts::PI * fp::tanh(raw[6]),
        core::f64::consts::PI * fp::tanh(raw[7]),
        core::f64::consts::PI * fp::tanh(raw[8]),
    );
    let d_rot = Quat::from_axis_angle(axis_angle);
    let d_alpha = OPACITY_DELTA_BOUND * fp::tanh(raw[9]);
    let d_color = [
        COLOR_DELTA_BOUND * fp::tanh(raw[10]),
        COLOR_DELTA_BOUND * fp::tanh(raw[11]),
        COLOR_DELTA_BOUND * fp::tanh(raw[12]),
    ];
    Ok(OffsetBundle {
        d_mu,
        d_scale,
        d_rot,
        d_alpha,
        d_color,
    })
}

/// Quaternion (Hamilton) product `a * b`, renormalized to counter float
/// drift. Inputs are expected to be unit quaternions; a (near-)zero norm is
/// rejected.
pub fn hamilton_product(a: Quat, b: Quat) -> Result<Quat> {
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::NonFinite("hamilton_product"));
    }
    if a.norm() < 1e-12 || b.norm() < 1e-12 {
        return Err(Error::ZeroNormQuaternion);
    }
    let q = Quat::new(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    );
    q.normalized().ok_or(Error::ZeroNormQuaternion)
}

/// Apply decoded offsets on top of coarse (mesh-deformed) parameters.
pub fn compose_parameters(coarse: &DeformedParams, off: &OffsetBundle) -> Result<DeformedParams> {
    let rot = hamilton_product(coarse.rot, off.d_rot)?;
    Ok(DeformedParams {
        mu: coarse.mu + off.d_mu,
        scale: coarse.scale.hadamard(off.d_scale),
        rot,
        opacity: (coarse.opacity + off.d_alpha).clamp(0.0, 1.0),
        color: [
            (coarse.color[0] + off.d_color[0]).clamp(0.0, 1.0),
            (coarse.color[1] + off.d_color[1]).clamp(0.0, 1.0),
            (coarse.color[2] + off.d_color[2]).clamp(0.0, 1.0),
        ],
    })
}

/// Unnormalized Gaussian density `exp(-0.5 (x-mu)^T Sigma^-1 (x-mu))` with
/// `Sigma = R S S^T R^T`. Evaluated in the local frame so no explicit matrix
/// inverse is needed. Errors when any scale axis is at or below 1e-12.
pub fn gaussian_density(params: &DeformedParams, x: Vec3) -> Result<f64> {
    let s = params.scale;
    if !(s.x > 1e-12 && s.y > 1e-12 && s.z > 1e-12) {
        return Err(Error::SingularCovariance);
    }
    // y = R^T (x - mu); quadratic form = sum (y_i / s_i)^2.
    let y = params.rot.conjugate().rotate(x - params.mu);
    let q = (y.x / s.x) * (y.x / s.x) + (y.y / s.y) * (y.y / s.y) + (y.z / s.z) * (y.z / s.z);
    Ok(fp::exp(-0.5 * q))
}
