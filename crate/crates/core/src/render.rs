//! CPU reference splatter: perspective projection of 3-D Gaussians to
//! screen-space ellipses, depth-sorted alpha compositing over a background,
//! per-Gaussian screen statistics, and analytic gradients.
//!
//! Forward, per pixel with fragments sorted front to back:
//!
//! ```text
//! alpha'_i = min(0.99, opacity_i * exp(-0.5 d^T conic_i d))     (skip < 1/255)
//! color(p) = sum_i c_i alpha'_i T_i + background * T_N,   T_i = prod_{j<i} (1 - alpha'_j)
//! ```
//!
//! The 2-D covariance comes from the standard perspective linearization
//! `J W Sigma W^T J^T` plus an isotropic 0.3-pixel dilation. The backward
//! pass differentiates `sum_p grad_image(p) . color(p)` with respect to
//! each Gaussian's screen mean, color and opacity (covariance gradients are
//! out of scope), and feeds the screen-gradient norm accumulator used by
//! split selection.

use alloc::vec;
use alloc::vec::Vec;

use crate::fp;
use crate::gaussian::DeformedParams;
use crate::grid::Image;
use crate::math::{Mat3, Sym2, Vec3};
use crate::{Error, Result};

/// Fragments with projected opacity below this are skipped entirely.
pub const ALPHA_SKIP: f64 = 1.0 / 255.0;
/// Projected opacity ceiling.
pub const ALPHA_CEIL: f64 = 0.99;
/// Isotropic screen-space covariance dilation (pixels^2).
pub const COV_DILATION: f64 = 0.3;
/// Near-plane depth; Gaussians at or before it are culled.
pub const NEAR_PLANE: f64 = 0.01;
/// Screen-space footprint cutoff in standard deviations. At 3.5 sigma the
/// Gaussian weight is below the skip threshold for any opacity <= 1, so the
/// bounding box never truncates a fragment that would survive the skip test.
const RADIUS_SIGMAS: f64 = 3.5;

/// Pinhole camera: `x_cam = rotation * x_world + translation`, intrinsics
/// in pixels, principal point in continuous pixel coordinates (pixel `(i, j)`
/// has center `(i + 0.5, j + 0.5)`).
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub background: [f64; 3],
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("camera raster size must be positive"));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidArgument("camera focal lengths must be positive"));
        }
        if !(self.rotation.is_finite()
            && self.translation.is_finite()
            && self.cx.is_finite()
            && self.cy.is_finite())
        {
            return Err(Error::NonFinite("camera"));
        }
        Ok(())
    }

    #[inline]
    pub fn world_to_cam(&self, p: Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }
}

/// A Gaussian after projection: screen mean, 2-D covariance and its
/// inverse, camera-space position and a conservative pixel radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected {
    pub mean2d: [f64; 2],
    pub cov2d: Sym2,
    pub conic: Sym2,
    pub depth: f64,
    pub cam_pos: Vec3,
    pub radius: i64,
}

/// Per-Gaussian screen statistics from one render (plus the gradient
/// accumulator filled in by the backward pass).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GaussianScreenStats {
    /// Projected screen center (continuous pixels); zero when culled.
    pub center: [f64; 2],
    /// Number of pixels where this Gaussian produced a non-skipped fragment.
    pub covered: u32,
    /// Accumulated blend weight over those pixels.
    pub acc_alpha: f64,
    /// Accumulated norm of the screen-mean gradient (backward pass).
    pub pos_grad_accum: f64,
    /// Number of backward passes that accumulated into `pos_grad_accum`.
    pub accum_count: u32,
}

/// One surviving fragment: which Gaussian, at what projected opacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fragment {
    pub gauss: u32,
    pub alpha: f64,
}

/// Result of a forward render.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub image: Image,
    pub stats: Vec<GaussianScreenStats>,
    pub projected: Vec<Option<Projected>>,
    /// Depth-sorted per-pixel fragment lists, retained on request so the
    /// backward pass can replay compositing.
    pub fragments: Option<Vec<Vec<Fragment>>>,
}

/// Gradients for one Gaussian from [`render_backward`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GaussGrad {
    pub mean2d: [f64; 2],
    pub color: [f64; 3],
    pub opacity: f64,
}

/// Project one Gaussian; `None` when culled by the near plane.
pub fn project_gaussian(params: &DeformedParams, cam: &Camera) -> Result<Option<Projected>> {
    if !(params.mu.is_finite() && params.scale.is_finite() && params.rot.is_finite()) {
        return Err(Error::NonFinite("gaussian parameters"));
    }
    let t = cam.world_to_cam(params.mu);
    if t.z <= NEAR_PLANE {
        return Ok(None);
    }
    let inv_z = 1.0 / t.z;
    let mean2d = [cam.fx * t.x * inv_z + cam.cx, cam.fy * t.y * inv_z + cam.cy];

    // M = J * W maps world displacements to screen; V = M * R_g * S gives
    // cov2d = V V^T for Sigma = R_g S^2 R_g^T.
    let j = [
        [cam.fx * inv_z, 0.0, -cam.fx * t.x * inv_z * inv_z],
        [0.0, cam.fy * inv_z, -cam.fy * t.y * inv_z * inv_z],
    ];
    let w = &cam.rotation;
    let mut m = [[0.0f64; 3]; 2];
    for (row, jr) in m.iter_mut().zip(&j) {
        for (col, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).map(|k| jr[k] * w.m[k][col]).sum();
        }
    }
    let rg = params.rot.to_matrix();
    let s = params.scale;
    let mut v = [[0.0f64; 3]; 2];
    for (row, mr) in v.iter_mut().zip(&m) {
        for (col, cell) in row.iter_mut().enumerate() {
            let sc = [s.x, s.y, s.z][col];
            *cell = (0..3).map(|k| mr[k] * rg.m[k][col]).sum::<f64>() * sc;
        }
    }
    let cov2d = Sym2 {
        a: v[0].iter().map(|x| x * x).sum::<f64>() + COV_DILATION,
        b: v[0].iter().zip(&v[1]).map(|(x, y)| x * y).sum::<f64>(),
        c: v[1].iter().map(|x| x * x).sum::<f64>() + COV_DILATION,
    };
    let conic = cov2d.inverse().ok_or(Error::SingularCovariance)?;
    let radius = fp::ceil(RADIUS_SIGMAS * fp::sqrt(cov2d.max_eigenvalue())) as i64 + 1;
    Ok(Some(Projected {
        mean2d,
        cov2d,
        conic,
        depth: t.z,
        cam_pos: t,
        radius,
    }))
}

/// Composite already-projected Gaussians. Split out from [`render`] so the
/// screen-space gradients can be checked by perturbing `mean2d` directly.
pub fn composite(
    projected: &[Option<Projected>],
    params: &[DeformedParams],
    cam: &Camera,
    retain_fragments: bool,
) -> Result<RenderOutput> {
    cam.validate()?;
    if projected.len() != params.len() {
        return Err(Error::DimensionMismatch("projected vs params"));
    }
    let (w, h) = (cam.width, cam.height);
    let mut pixel_frags: Vec<Vec<Fragment>> = vec![Vec::new(); w * h];
    let mut stats = vec![GaussianScreenStats::default(); params.len()];

    for (gi, (proj, p)) in projected.iter().zip(params).enumerate() {
        let Some(proj) = proj else { continue };
        stats[gi].center = proj.mean2d;
        let x0 = ((proj.mean2d[0] - proj.radius as f64) as i64).max(0);
        let x1 = ((proj.mean2d[0] + proj.radius as f64) as i64).min(w as i64 - 1);
        let y0 = ((proj.mean2d[1] - proj.radius as f64) as i64).max(0);
        let y1 = ((proj.mean2d[1] + proj.radius as f64) as i64).min(h as i64 - 1);
        for py in y0..=y1 {
            for px in x0..=x1 {
                let dx = px as f64 + 0.5 - proj.mean2d[0];
                let dy = py as f64 + 0.5 - proj.mean2d[1];
                let power = -0.5 * proj.conic.quad(dx, dy);
                if power > 0.0 {
                    continue;
                }
                let alpha = (p.opacity * fp::exp(power)).min(ALPHA_CEIL);
                if alpha < ALPHA_SKIP {
                    continue;
                }
                stats[gi].covered += 1;
                pixel_frags[py as usize * w + px as usize].push(Fragment {
                    gauss: gi as u32,
                    alpha,
                });
            }
        }
    }

    // Depth sort per pixel; the stable sort keeps the lower input index
    // first on exact depth ties.
    for frags in pixel_frags.iter_mut() {
        frags.sort_by(|a, b| {
            let da = projected[a.gauss as usize].unwrap().depth;
            let db = projected[b.gauss as usize].unwrap().depth;
            da.partial_cmp(&db).unwrap()
        });
    }

    let mut image = Image::zeros(w, h);
    for (pi, frags) in pixel_frags.iter().enumerate() {
        let mut t = 1.0;
        let mut rgb = [0.0f64; 3];
        for f in frags {
            let weight = f.alpha * t;
            let c = &params[f.gauss as usize].color;
            rgb[0] += weight * c[0];
            rgb[1] += weight * c[1];
            rgb[2] += weight * c[2];
            stats[f.gauss as usize].acc_alpha += weight;
            t *= 1.0 - f.alpha;
        }
        for (c, &v) in rgb.iter().enumerate() {
            image.data[pi * 3 + c] = v + t * cam.background[c];
        }
    }

    Ok(RenderOutput {
        image,
        stats,
        projected: projected.to_vec(),
        fragments: retain_fragments.then_some(pixel_frags),
    })
}

/// Render a set of world-space Gaussians through a camera.
pub fn render(
    params: &[DeformedParams],
    cam: &Camera,
    retain_fragments: bool,
) -> Result<RenderOutput> {
    cam.validate()?;
    let projected: Vec<Option<Projected>> = params
        .iter()
        .map(|p| project_gaussian(p, cam))
        .collect::<Result<_>>()?;
    composite(&projected, params, cam, retain_fragments)
}

/// Analytic gradients of `sum_p grad_image(p) . image(p)` with respect to
/// each Gaussian's screen mean, color and opacity. Requires the render to
/// have retained fragments. Also accumulates the screen-gradient norm into
/// `stats[i].pos_grad_accum` (and bumps `accum_count`) for every Gaussian
/// that covered at least one pixel.
pub fn render_backward(
    output: &mut RenderOutput,
    params: &[DeformedParams],
    cam: &Camera,
    grad_image: &Image,
) -> Result<Vec<GaussGrad>> {
    let frags = output
        .fragments
        .as_ref()
        .ok_or(Error::MissingState("render fragments were not retained"))?;
    output.image.same_shape(grad_image, "render_backward grad image")?;
    if params.len() != output.stats.len() {
        return Err(Error::DimensionMismatch("render_backward params"));
    }
    let w = cam.width;
    let mut grads = vec![GaussGrad::default(); params.len()];

    for (pi, pixel) in frags.iter().enumerate() {
        if pixel.is_empty() {
            continue;
        }
        let g: [f64; 3] = [
            grad_image.data[pi * 3],
            grad_image.data[pi * 3 + 1],
            grad_image.data[pi * 3 + 2],
        ];
        let px = (pi % w) as f64 + 0.5;
        let py = (pi / w) as f64 + 0.5;

        // Forward replay: weights and final transmittance.
        let mut t = 1.0;
        let mut weights = Vec::with_capacity(pixel.len());
        for f in pixel {
            weights.push(f.alpha * t);
            t *= 1.0 - f.alpha;
        }
        let g_dot_bg = g[0] * cam.background[0] + g[1] * cam.background[1] + g[2] * cam.background[2];
        // suffix = sum over later fragments of (g . c_k) w_k, plus the
        // background term; both are attenuated by 1 - alpha_i when i moves.
        let mut suffix = g_dot_bg * t;
        for k in (0..pixel.len()).rev() {
            let f = &pixel[k];
            let c = &params[f.gauss as usize].color;
            let g_dot_c = g[0] * c[0] + g[1] * c[1] + g[2] * c[2];
            // Transmittance in front of fragment k.
            let t_k = weights[k] / f.alpha;
            let d_alpha = g_dot_c * t_k - suffix / (1.0 - f.alpha);
            let gg = &mut grads[f.gauss as usize];
            gg.color[0] += weights[k] * g[0];
            gg.color[1] += weights[k] * g[1];
            gg.color[2] += weights[k] * g[2];
            // The opacity ceiling is a plateau: clamped fragments pass no
            // gradient to opacity or position.
            if f.alpha < ALPHA_CEIL {
                let p = &params[f.gauss as usize];
                let proj = output.projected[f.gauss as usize].as_ref().unwrap();
                let gauss_weight = f.alpha / p.opacity;
                gg.opacity += d_alpha * gauss_weight;
                let dx = px - proj.mean2d[0];
                let dy = py - proj.mean2d[1];
                let ax = proj.conic.a * dx + proj.conic.b * dy;
                let ay = proj.conic.b * dx + proj.conic.c * dy;
                gg.mean2d[0] += d_alpha * f.alpha * ax;
                gg.mean2d[1] += d_alpha * f.alpha * ay;
            }
            suffix += g_dot_c * weights[k];
        }
    }

    for (gi, gg) in grads.iter().enumerate() {
        if output.stats[gi].covered > 0 {
            let norm = fp::sqrt(gg.mean2d[0] * gg.mean2d[0] + gg.mean2d[1] * gg.mean2d[1]);
            output.stats[gi].pos_grad_accum += norm;
            output.stats[gi].accum_count += 1;
        }
    }
    Ok(grads)
}

/// Pull a screen-mean gradient back to the Gaussian's world position
/// through the projection: `d mean2d / d mu_world = J W`, so
/// `d L / d mu_world = W^T J^T g`.
pub fn world_position_grad(cam: &Camera, cam_pos: Vec3, mean2d_grad: [f64; 2]) -> Vec3 {
    let inv_z = 1.0 / cam_pos.z;
    let jt_g = Vec3::new(
        cam.fx * inv_z * mean2d_grad[0],
        cam.fy * inv_z * mean2d_grad[1],
        -cam.fx * cam_pos.x * inv_z * inv_z * mean2d_grad[0]
            - cam.fy * cam_pos.y * inv_z * inv_z * mean2d_grad[1],
    );
    cam.rotation.transpose() * jt_g
}
