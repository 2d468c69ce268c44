//! Triangle meshes, per-triangle local frames and the binding deformation.
//!
//! Every triangle induces an orthonormal frame plus isotropic scale:
//!
//! * rotation columns: the normalized first edge `e = normalize(v1 - v0)`,
//!   the unit face normal `n`, and `e x n` (this ordering keeps the
//!   determinant +1);
//! * translation: the barycenter;
//! * scale `k = (|v1 - v0| + h) / 2`, the mean of the first edge length and
//!   the triangle height over that edge.
//!
//! A Gaussian stored in triangle-local coordinates deforms into world space
//! as `mu~ = k R mu + t`, `s~ = k s`, `rot~ = quat(R) * rot`, with opacity
//! and color carried over unchanged. Frames are equivariant under rigid
//! motion of the vertices, so Gaussians ride along with an animated mesh.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::fp;
use crate::gaussian::{hamilton_product, DeformedParams, GaussianPrimitive};
use crate::math::{Mat3, Quat, Vec3};
use crate::{Error, Result};

/// Shared-topology triangle mesh with a UV chart per face corner.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    /// Vertex index triples, counter-clockwise when viewed from outside.
    pub faces: Vec<[usize; 3]>,
    pub uv_vertices: Vec<[f64; 2]>,
    /// Per-face UV indices, parallel to `faces`.
    pub uv_faces: Vec<[usize; 3]>,
}

impl TriMesh {
    /// Check index ranges, parallel face arrays and non-repeated corners.
    pub fn validate(&self) -> Result<()> {
        if self.faces.len() != self.uv_faces.len() {
            return Err(Error::DimensionMismatch("faces vs uv_faces"));
        }
        for f in &self.faces {
            for &i in f {
                if i >= self.vertices.len() {
                    return Err(Error::IndexOutOfRange {
                        what: "face vertex",
                        index: i,
                        len: self.vertices.len(),
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidArgument("face repeats a vertex"));
            }
        }
        for f in &self.uv_faces {
            for &i in f {
                if i >= self.uv_vertices.len() {
                    return Err(Error::IndexOutOfRange {
                        what: "face uv vertex",
                        index: i,
                        len: self.uv_vertices.len(),
                    });
                }
            }
        }
        if self
            .vertices
            .iter()
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("mesh vertices"));
        }
        Ok(())
    }

    /// Corner positions of face `f`.
    pub fn face_vertices(&self, f: usize) -> Result<[Vec3; 3]> {
        let face = self.faces.get(f).ok_or(Error::IndexOutOfRange {
            what: "face",
            index: f,
            len: self.faces.len(),
        })?;
        Ok([
            self.vertices[face[0]],
            self.vertices[face[1]],
            self.vertices[face[2]],
        ])
    }

    /// UV corner coordinates of face `f`.
    pub fn face_uvs(&self, f: usize) -> Result<[[f64; 2]; 3]> {
        let face = self.uv_faces.get(f).ok_or(Error::IndexOutOfRange {
            what: "uv face",
            index: f,
            len: self.uv_faces.len(),
        })?;
        Ok([
            self.uv_vertices[face[0]],
            self.uv_vertices[face[1]],
            self.uv_vertices[face[2]],
        ])
    }

    /// Half-extent of the vertex bounding box diagonal; a convenient scene
    /// scale for thresholds expressed relative to scene size.
    pub fn extent(&self) -> f64 {
        if self.vertices.is_empty() {
            return 0.0;
        }
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices {
            lo = Vec3::new(lo.x.min(v.x), lo.y.min(v.y), lo.z.min(v.z));
            hi = Vec3::new(hi.x.max(v.x), hi.y.max(v.y), hi.z.max(v.z));
        }
        0.5 * (hi - lo).norm()
    }
}

/// One animation frame: conditioning vectors plus deformed vertices for a
/// shared mesh topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDescriptor {
    pub frame_id: usize,
    pub expression: Vec<f64>,
    pub pose: Vec<f64>,
    pub translation: [f64; 3],
    pub vertex_positions: Vec<[f64; 3]>,
}

impl FrameDescriptor {
    pub fn vertices(&self) -> Vec<Vec3> {
        self.vertex_positions
            .iter()
            .map(|&p| Vec3::from_array(p))
            .collect()
    }
}

/// Local frame of a triangle: rotation columns, barycenter and isotropic
/// scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleFrame {
    pub r: Mat3,
    pub t: Vec3,
    pub k: f64,
}

impl TriangleFrame {
    pub const IDENTITY: TriangleFrame = TriangleFrame {
        r: Mat3::IDENTITY,
        t: Vec3::ZERO,
        k: 1.0,
    };

    /// Map a local point into the frame's target space.
    #[inline]
    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.r * p * self.k + self.t
    }

    /// Frame undoing this one under [`apply`].
    pub fn inverse(&self) -> TriangleFrame {
        let rt = self.r.transpose();
        TriangleFrame {
            r: rt,
            t: rt * self.t * (-1.0 / self.k),
            k: 1.0 / self.k,
        }
    }
}

/// Local frame of the triangle `(v0, v1, v2)`; see the module docs for the
/// construction. Errors when the triangle area is at or below 1e-12.
pub fn triangle_frame(v0: Vec3, v1: Vec3, v2: Vec3) -> Result<TriangleFrame> {
    let e = v1 - v0;
    let cross = e.cross(v2 - v0);
    let double_area = cross.norm();
    if double_area * 0.5 <= 1e-12 {
        return Err(Error::DegenerateTriangle { face: usize::MAX });
    }
    let e_len = e.norm();
    let c0 = e * (1.0 / e_len);
    let c1 = cross * (1.0 / double_area);
    let c2 = c0.cross(c1);
    let t = (v0 + v1 + v2) * (1.0 / 3.0);
    // Height of v2 over the edge (v0, v1): twice the area over the base.
    let h = double_area / e_len;
    Ok(TriangleFrame {
        r: Mat3::from_columns(c0, c1, c2),
        t,
        k: 0.5 * (e_len + h),
    })
}

/// Per-face frames for a whole mesh with vertices overridden (e.g. a
/// tracked animation frame on the canonical topology).
pub fn mesh_frames(mesh: &TriMesh, vertices: &[Vec3]) -> Result<Vec<TriangleFrame>> {
    if vertices.len() != mesh.vertices.len() {
        return Err(Error::DimensionMismatch("mesh_frames vertices"));
    }
    mesh.faces
        .iter()
        .enumerate()
        .map(|(fi, f)| {
            triangle_frame(vertices[f[0]], vertices[f[1]], vertices[f[2]])
                .map_err(|_| Error::DegenerateTriangle { face: fi })
        })
        .collect()
}

/// Frame taking canonical-triangle local coordinates to the tracked
/// triangle's world placement, as a delta between two frames:
/// `r = r_t r_c^T`, `k = k_t / k_c`, `t = t_t - k r t_c`. With
/// `tracked == canonical` this is the identity under [`lbs_deform`].
pub fn relative_frame(canonical: &TriangleFrame, tracked: &TriangleFrame) -> TriangleFrame {
    let r = tracked.r * canonical.r.transpose();
    let k = tracked.k / canonical.k;
    let t = tracked.t - r * canonical.t * k;
    TriangleFrame { r, t, k }
}

/// Deform a bound Gaussian by a triangle frame:
/// `mu~ = k R mu + t`, `s~ = k s`, `rot~ = quat(R) * rot`; opacity and
/// color are carried over unchanged.
pub fn lbs_deform(g: &GaussianPrimitive, f: &TriangleFrame) -> Result<DeformedParams> {
    if f.k <= 0.0 || !f.k.is_finite() || !f.r.is_finite() || !f.t.is_finite() {
        return Err(Error::InvalidArgument("triangle frame"));
    }
    let rot = hamilton_product(Quat::from_matrix(&f.r), g.rot)?;
    Ok(DeformedParams {
        mu: f.apply(g.mu),
        scale: g.scale * f.k,
        rot,
        opacity: g.opacity,
        color: g.color,
    })
}

/// Squared-hinge penalties keeping a Gaussian close to its bound triangle:
/// the position term fires per axis once `|mu|` exceeds `eps_mu`, the scale
/// term once a scale axis exceeds `eps_scale` (both in local units, where
/// the triangle has size ~1). Returns `(position_loss, scale_loss)`.
pub fn binding_regularizers(
    g: &GaussianPrimitive,
    eps_mu: f64,
    eps_scale: f64,
) -> (f64, f64) {
    let hinge = |v: f64, eps: f64| {
        let e = (v - eps).max(0.0);
        e * e
    };
    let pos = hinge(fp::abs(g.mu.x), eps_mu)
        + hinge(fp::abs(g.mu.y), eps_mu)
        + hinge(fp::abs(g.mu.z), eps_mu);
    let scale = hinge(g.scale.x, eps_scale)
        + hinge(g.scale.y, eps_scale)
        + hinge(g.scale.z, eps_scale);
    (pos, scale)
}

/// Default threshold for the position binding penalty (local units).
pub const BINDING_EPS_MU: f64 = 1.0;
/// Default threshold for the scale binding penalty (local units).
pub const BINDING_EPS_SCALE: f64 = 0.6;
