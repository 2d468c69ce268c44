//! Seeded synthetic scenes at desk scale: a single-frame toy scene for
//! convergence checks and a two-part occlusion scene for schedule
//! experiments.
//!
//! Both scenes share the same construction: Gaussians bound to mesh
//! triangles in triangle-local coordinates, targets rendered from the
//! ground-truth set through the same deformation and splatting path the
//! trainer uses, and UV-space region masks for accounting.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use meshsplat_core::density::standard_normal;
use meshsplat_core::gaussian::GaussianPrimitive;
use meshsplat_core::grid::{Image, Mask};
use meshsplat_core::math::{Mat3, Quat, Vec3};
use meshsplat_core::mesh::{mesh_frames, FrameDescriptor, TriMesh};
use meshsplat_core::render::{render, Camera};

use crate::config::SceneSpec;
use crate::io;

/// Resolution of generated UV-space region masks.
pub const MASK_RESOLUTION: usize = 256;
/// Depth of the camera in front of the background plane.
const CAMERA_DEPTH: f64 = 2.2;
/// Half-extent of the interior region on the background quad.
pub const INTERIOR_HALF: f64 = 0.45;
/// Half-extent of the occluder flap.
const FLAP_HALF: f64 = 0.55;
/// Flap plane offset towards the camera.
const FLAP_LIFT: f64 = 0.25;
/// Sideways flap travel at pose 1 (fully open).
const FLAP_TRAVEL: f64 = 1.7;

/// Everything the trainer needs about one synthetic (or loaded) scene.
#[derive(Debug, Clone)]
pub struct Scene {
    /// Canonical mesh (topology shared by all frames).
    pub mesh: TriMesh,
    pub frames: Vec<FrameDescriptor>,
    pub targets: Vec<Image>,
    pub camera: Camera,
    /// Ground-truth Gaussians the targets were rendered from (empty for
    /// file-loaded scenes).
    pub gt: Vec<GaussianPrimitive>,
    /// Initialization the fit starts from.
    pub init: Vec<GaussianPrimitive>,
    /// Named UV-space region masks.
    pub region_masks: BTreeMap<String, Mask>,
    /// Per frame: does the frame show the interior region? (Always true
    /// for scenes without an occluder.)
    pub visible_frames: Vec<bool>,
}

/// Generate or load the scene described by `spec`.
pub fn generate(spec: &SceneSpec, seed: u64) -> Result<Scene> {
    match spec {
        SceneSpec::Toy {
            gt_count,
            keep_fraction,
            jitter,
            image_size,
        } => generate_toy_scene(seed, *gt_count, *keep_fraction, *jitter, *image_size),
        SceneSpec::Occlusion {
            frames,
            occluded_fraction,
            image_size,
        } => generate_occlusion_scene(seed, *frames, *occluded_fraction, *image_size),
        SceneSpec::Files {
            mesh,
            frames,
            camera,
            targets,
            gaussians,
        } => load_scene(mesh, frames, camera, targets, gaussians),
    }
}

/// Camera centered on the background plane, covering slightly more than
/// the unit quad.
fn front_camera(image_size: usize) -> Camera {
    let half = image_size as f64 / 2.0;
    Camera {
        rotation: Mat3::IDENTITY,
        translation: Vec3::new(0.0, 0.0, CAMERA_DEPTH),
        fx: image_size as f64,
        fy: image_size as f64,
        cx: half,
        cy: half,
        width: image_size,
        height: image_size,
        background: [1.0, 1.0, 1.0],
    }
}

/// Unit quad `[-1, 1]^2` at z = 0, UV chart `[0, 1]^2`.
pub fn quad_mesh() -> TriMesh {
    TriMesh {
        vertices: vec![
            Vec3::new(-1.0, -1.0, 0.0),
            Vec3::new(1.0, -1.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(-1.0, 1.0, 0.0),
        ],
        faces: vec![[0, 1, 2], [0, 2, 3]],
        uv_vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        uv_faces: vec![[0, 1, 2], [0, 2, 3]],
    }
}

/// Bind a world-space surface point on a quad to its triangle: face id
/// and triangle-local coordinates. `faces` are the quad's two face ids in
/// mesh order and `(x, y)` the point in the quad's own [-1, 1]^2 frame.
fn bind_to_quad(
    mesh: &TriMesh,
    faces: [usize; 2],
    x: f64,
    y: f64,
    world: Vec3,
) -> Result<(usize, Vec3)> {
    // The shared diagonal runs corner 0 -> corner 2, i.e. y = x.
    let face = if y <= x { faces[0] } else { faces[1] };
    let [v0, v1, v2] = mesh
        .face_vertices(face)
        .map_err(|e| anyhow::anyhow!("scene face: {e}"))?;
    let frame = meshsplat_core::mesh::triangle_frame(v0, v1, v2)
        .map_err(|e| anyhow::anyhow!("degenerate scene face: {e}"))?;
    Ok((face, frame.inverse().apply(world)))
}

/// In-plane Gaussian bound to a quad face. The triangle frame's second
/// column is the face normal, so the local y scale is the out-of-plane
/// thickness.
#[allow(clippy::too_many_arguments)]
fn surface_gaussian(
    mesh: &TriMesh,
    faces: [usize; 2],
    x: f64,
    y: f64,
    world: Vec3,
    in_plane: f64,
    thickness: f64,
    spin: f64,
    opacity: f64,
    color: [f64; 3],
    uv: [f64; 2],
) -> Result<GaussianPrimitive> {
    let (face, local) = bind_to_quad(mesh, faces, x, y, world)?;
    Ok(GaussianPrimitive {
        mu: local,
        scale: Vec3::new(in_plane, thickness, in_plane),
        rot: Quat::from_axis_angle(Vec3::new(0.0, spin, 0.0)),
        opacity,
        color,
        face,
        uv,
    })
}

/// Mark the axis-aligned UV rectangle `[u0, u1] x [v0, v1]` in a fresh
/// mask (texel centers).
fn rect_mask(u0: f64, u1: f64, v0: f64, v1: f64) -> Mask {
    let mut mask = Mask::zeros(MASK_RESOLUTION, MASK_RESOLUTION);
    let r = MASK_RESOLUTION as f64;
    for y in 0..MASK_RESOLUTION {
        for x in 0..MASK_RESOLUTION {
            let u = (x as f64 + 0.5) / r;
            let v = (y as f64 + 0.5) / r;
            if u >= u0 && u <= u1 && v >= v0 && v <= v1 {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

/// Single-frame scene: `gt_count` Gaussians scattered on a unit quad,
/// initialization thinned to `keep_fraction` with jittered survivors.
pub fn generate_toy_scene(
    seed: u64,
    gt_count: usize,
    keep_fraction: f64,
    jitter: f64,
    image_size: usize,
) -> Result<Scene> {
    let mesh = quad_mesh();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut gt = Vec::with_capacity(gt_count);
    for _ in 0..gt_count {
        let x = rng.random_range(-0.92..0.92);
        let y = rng.random_range(-0.92..0.92);
        let g = surface_gaussian(
            &mesh,
            [0, 1],
            x,
            y,
            Vec3::new(x, y, 0.0),
            rng.random_range(0.05..0.13),
            0.01,
            rng.random_range(0.0..core::f64::consts::PI),
            rng.random_range(0.55..0.98),
            [
                rng.random_range(0.05..0.95),
                rng.random_range(0.05..0.95),
                rng.random_range(0.05..0.95),
            ],
            [(x + 1.0) / 2.0, (y + 1.0) / 2.0],
        )?;
        gt.push(g);
    }

    // Thin deterministically: shuffled index list, first `keep` survive.
    let keep = ((gt_count as f64) * keep_fraction).round() as usize;
    let mut order: Vec<usize> = (0..gt_count).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);
    let mut init = Vec::with_capacity(keep);
    for &i in order.iter().take(keep) {
        let mut g = gt[i].clone();
        g.mu += Vec3::new(
            jitter * standard_normal(&mut rng),
            0.0,
            jitter * standard_normal(&mut rng),
        );
        for c in g.color.iter_mut() {
            *c = (*c + 0.05 * standard_normal(&mut rng)).clamp(0.0, 1.0);
        }
        init.push(g);
    }

    let frames = vec![FrameDescriptor {
        frame_id: 0,
        expression: Vec::new(),
        pose: Vec::new(),
        translation: [0.0; 3],
        vertex_positions: mesh.vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
    }];
    let camera = front_camera(image_size);
    let targets = render_targets(&mesh, &gt, &frames, &camera)?;
    let mut region_masks = BTreeMap::new();
    region_masks.insert("all".to_string(), rect_mask(0.0, 1.0, 0.0, 1.0));

    Ok(Scene {
        mesh,
        frames,
        targets,
        camera,
        gt,
        init,
        region_masks,
        visible_frames: vec![true],
    })
}

/// Background texture outside the interior: smooth low-frequency color.
fn background_color(x: f64, y: f64) -> [f64; 3] {
    [
        0.35 + 0.25 * (2.3 * x + 0.4).sin(),
        0.45 + 0.20 * (1.7 * y).cos(),
        0.55 + 0.20 * (1.1 * (x + y)).sin(),
    ]
}

/// Interior texture: a hard checkerboard that needs many primitives.
fn interior_color(x: f64, y: f64) -> [f64; 3] {
    let cell = 0.15;
    let cx = ((x + INTERIOR_HALF) / cell).floor() as i64;
    let cy = ((y + INTERIOR_HALF) / cell).floor() as i64;
    if (cx + cy) % 2 == 0 {
        [0.92, 0.78, 0.15]
    } else {
        [0.08, 0.20, 0.75]
    }
}

/// Mean of the two checker colors; the degraded initialization paints the
/// whole interior with it.
pub fn interior_mean_color() -> [f64; 3] {
    [0.50, 0.49, 0.45]
}

fn flap_color(x: f64, y: f64) -> [f64; 3] {
    [0.32 + 0.06 * x, 0.30, 0.35 - 0.06 * y]
}

pub fn in_interior(x: f64, y: f64) -> bool {
    x.abs() <= INTERIOR_HALF && y.abs() <= INTERIOR_HALF
}

/// Occlusion scene: textured background quad with a checkerboard interior
/// region, plus an occluder flap in front that hides the interior in
/// `occluded_fraction` of frames (flap pose 0 = closed, 1 = slid aside).
/// Ground truth covers everything densely; the initialization replaces
/// the interior's Gaussians with a few large mean-colored ones, so the
/// interior is the one badly-fit region and only visible in open frames.
pub fn generate_occlusion_scene(
    seed: u64,
    frames: usize,
    occluded_fraction: f64,
    image_size: usize,
) -> Result<Scene> {
    if frames < 20 {
        bail!("occlusion scene needs at least 20 frames, got {frames}");
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    // Background quad (faces 0, 1) + flap quad (faces 2, 3) in its closed
    // position; the flap chart occupies the top half of UV space.
    let mut mesh = quad_mesh();
    mesh.uv_vertices = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 0.5], [0.0, 0.5]];
    let base = mesh.vertices.len();
    for (dx, dy) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
        mesh.vertices
            .push(Vec3::new(FLAP_HALF * dx, FLAP_HALF * dy, -FLAP_LIFT));
    }
    mesh.faces.push([base, base + 1, base + 2]);
    mesh.faces.push([base, base + 2, base + 3]);
    let uv_base = mesh.uv_vertices.len();
    mesh.uv_vertices
        .extend([[0.0, 0.5], [1.0, 0.5], [1.0, 1.0], [0.0, 1.0]]);
    mesh.uv_faces.push([uv_base, uv_base + 1, uv_base + 2]);
    mesh.uv_faces.push([uv_base, uv_base + 2, uv_base + 3]);
    mesh.validate()
        .map_err(|e| anyhow::anyhow!("occlusion mesh: {e}"))?;

    // Ground truth: dense background grid with interior checkerboard...
    let mut gt = Vec::new();
    let grid = 24;
    for iy in 0..grid {
        for ix in 0..grid {
            let x = -0.98 + 1.96 * ix as f64 / (grid - 1) as f64;
            let y = -0.98 + 1.96 * iy as f64 / (grid - 1) as f64;
            let color = if in_interior(x, y) {
                interior_color(x, y)
            } else {
                background_color(x, y)
            };
            gt.push(surface_gaussian(
                &mesh,
                [0, 1],
                x,
                y,
                Vec3::new(x, y, 0.0),
                0.055,
                0.01,
                0.0,
                0.97,
                color,
                [(x + 1.0) / 2.0, (y + 1.0) / 4.0],
            )?);
        }
    }
    // ...plus a flap grid bound to the flap faces.
    let flap_grid = 12;
    for iy in 0..flap_grid {
        for ix in 0..flap_grid {
            let fx = -0.96 + 1.92 * ix as f64 / (flap_grid - 1) as f64;
            let fy = -0.96 + 1.92 * iy as f64 / (flap_grid - 1) as f64;
            let (x, y) = (FLAP_HALF * fx, FLAP_HALF * fy);
            gt.push(surface_gaussian(
                &mesh,
                [2, 3],
                fx,
                fy,
                Vec3::new(x, y, -FLAP_LIFT),
                0.055,
                0.01,
                0.0,
                0.97,
                flap_color(x, y),
                [(fx + 1.0) / 2.0, 0.5 + (fy + 1.0) / 4.0],
            )?);
        }
    }

    // Initialization: the interior checkerboard collapses to one big
    // mean-colored Gaussian (listed first so depth ties resolve in its
    // favor), followed by ground truth everywhere except the interior.
    let mut init = Vec::with_capacity(gt.len());
    init.push(surface_gaussian(
        &mesh,
        [0, 1],
        0.0,
        0.0,
        Vec3::new(0.0, 0.0, 0.0),
        0.16,
        0.01,
        0.0,
        0.9,
        interior_mean_color(),
        [0.5, 0.25],
    )?);
    init.extend(
        gt.iter()
            .filter(|g| {
                // Interior background Gaussians are identified by their UV
                // (background chart: v < 0.5).
                let (u, v) = (g.uv[0], g.uv[1]);
                let (x, y) = (2.0 * u - 1.0, 4.0 * v - 1.0);
                !(v < 0.5 && in_interior(x, y))
            })
            .cloned(),
    );

    // Frame plan: exactly round(fraction * frames) closed-flap frames,
    // shuffled. Open frames share one tight conditioning blob so they
    // cluster together; closed frames scatter widely.
    let n_occluded = (occluded_fraction * frames as f64).round() as usize;
    let mut occluded: Vec<bool> = (0..frames).map(|t| t < n_occluded).collect();
    use rand::seq::SliceRandom;
    occluded.shuffle(&mut rng);

    let mut frame_descs = Vec::with_capacity(frames);
    for (t, &occ) in occluded.iter().enumerate() {
        let theta = if occ { 0.0 } else { 1.0 };
        let expression = if occ {
            vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]
        } else {
            vec![
                1.5 + 0.02 * standard_normal(&mut rng),
                -0.8 + 0.02 * standard_normal(&mut rng),
            ]
        };
        let mut verts: Vec<[f64; 3]> = mesh.vertices.iter().map(|v| [v.x, v.y, v.z]).collect();
        for v in verts.iter_mut().skip(base) {
            v[0] += FLAP_TRAVEL * theta;
        }
        frame_descs.push(FrameDescriptor {
            frame_id: t,
            expression,
            pose: vec![theta],
            translation: [0.0; 3],
            vertex_positions: verts,
        });
    }

    let camera = front_camera(image_size);
    let targets = render_targets(&mesh, &gt, &frame_descs, &camera)?;

    let mut region_masks = BTreeMap::new();
    // Background chart maps (x, y) to ((x+1)/2, (y+1)/4).
    let u0 = (1.0 - INTERIOR_HALF) / 2.0;
    let u1 = (1.0 + INTERIOR_HALF) / 2.0;
    let v0 = (1.0 - INTERIOR_HALF) / 4.0;
    let v1 = (1.0 + INTERIOR_HALF) / 4.0;
    region_masks.insert("interior".to_string(), rect_mask(u0, u1, v0, v1));
    region_masks.insert("flap".to_string(), rect_mask(0.0, 1.0, 0.5, 1.0));
    region_masks.insert("background".to_string(), rect_mask(0.0, 1.0, 0.0, 0.5));

    let visible_frames = occluded.iter().map(|&o| !o).collect();
    Ok(Scene {
        mesh,
        frames: frame_descs,
        targets,
        camera,
        gt,
        init,
        region_masks,
        visible_frames,
    })
}

/// Render one target per frame by deforming the bound set through each
/// frame's triangle frames.
pub fn render_targets(
    mesh: &TriMesh,
    gaussians: &[GaussianPrimitive],
    frames: &[FrameDescriptor],
    camera: &Camera,
) -> Result<Vec<Image>> {
    let mut targets = Vec::with_capacity(frames.len());
    for frame in frames {
        let tri_frames = mesh_frames(mesh, &frame.vertices())
            .map_err(|e| anyhow::anyhow!("frame {}: {e}", frame.frame_id))?;
        let deformed: Vec<_> = gaussians
            .iter()
            .map(|g| meshsplat_core::mesh::lbs_deform(g, &tri_frames[g.face]))
            .collect::<meshsplat_core::Result<_>>()
            .map_err(|e| anyhow::anyhow!("frame {}: {e}", frame.frame_id))?;
        let out = render(&deformed, camera, false)
            .map_err(|e| anyhow::anyhow!("frame {}: {e}", frame.frame_id))?;
        targets.push(out.image);
    }
    Ok(targets)
}

/// Load a scene from files (no ground-truth set; targets from PNGs named
/// `frame_{t}.png`).
fn load_scene(
    mesh_path: &Path,
    frames_path: &Path,
    camera_path: &Path,
    targets_dir: &Path,
    gaussians_path: &Path,
) -> Result<Scene> {
    let mesh = io::read_obj(mesh_path)?;
    let frames = io::read_frames(frames_path)?;
    let camera = io::read_camera(camera_path)?;
    let init = io::read_gaussians(gaussians_path)?;
    let mut targets = Vec::with_capacity(frames.len());
    for (t, frame) in frames.iter().enumerate() {
        if frame.vertex_positions.len() != mesh.vertices.len() {
            bail!("frame {t}: vertex count differs from mesh");
        }
        let path = targets_dir.join(format!("frame_{t}.png"));
        targets.push(
            io::load_png(&path).with_context(|| format!("target for frame {t}"))?,
        );
    }
    let n = frames.len();
    Ok(Scene {
        mesh,
        frames,
        targets,
        camera,
        gt: Vec::new(),
        init,
        region_masks: BTreeMap::new(),
        visible_frames: vec![true; n],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_scene_shapes_and_determinism() {
        let a = generate_toy_scene(5, 80, 0.6, 0.02, 32).unwrap();
        assert_eq!(a.gt.len(), 80);
        assert_eq!(a.init.len(), 48);
        assert_eq!(a.targets.len(), 1);
        assert_eq!(a.targets[0].width, 32);
        for g in a.gt.iter().chain(&a.init) {
            g.validate().unwrap();
        }
        let b = generate_toy_scene(5, 80, 0.6, 0.02, 32).unwrap();
        assert_eq!(a.gt, b.gt);
        assert_eq!(a.targets[0].data, b.targets[0].data);
        let c = generate_toy_scene(6, 80, 0.6, 0.02, 32).unwrap();
        assert_ne!(a.gt, c.gt);
    }

    #[test]
    fn toy_target_is_not_blank() {
        let s = generate_toy_scene(1, 60, 0.5, 0.02, 32).unwrap();
        let mean: f64 =
            s.targets[0].data.iter().sum::<f64>() / s.targets[0].data.len() as f64;
        assert!(mean < 0.98, "target should not be all background");
    }

    #[test]
    fn occlusion_frame_counts_match_fraction() {
        let s = generate_occlusion_scene(3, 20, 0.7, 32).unwrap();
        assert_eq!(s.frames.len(), 20);
        let visible = s.visible_frames.iter().filter(|&&v| v).count();
        assert_eq!(visible, 6);
        // Pose block carries the flap angle; visibility must agree.
        for (f, &vis) in s.frames.iter().zip(&s.visible_frames) {
            assert_eq!(f.pose[0] > 0.5, vis);
        }
    }

    #[test]
    fn occlusion_extremes() {
        let none = generate_occlusion_scene(3, 20, 0.0, 32).unwrap();
        assert!(none.visible_frames.iter().all(|&v| v));
        let all = generate_occlusion_scene(3, 20, 1.0, 32).unwrap();
        assert!(all.visible_frames.iter().all(|&v| !v));
    }

    /// Interior pixels must differ strongly between occluded and visible
    /// targets (the flap hides the checkerboard).
    #[test]
    fn occlusion_targets_differ_in_interior() {
        let s = generate_occlusion_scene(7, 20, 0.7, 64).unwrap();
        let vis = s.visible_frames.iter().position(|&v| v).unwrap();
        let occ = s.visible_frames.iter().position(|&v| !v).unwrap();
        // Interior screen footprint: |x| <= 0.45 at depth 2.2 with f = 64.
        let cam = &s.camera;
        let lo = (cam.cx - cam.fx * INTERIOR_HALF / CAMERA_DEPTH).ceil() as usize;
        let hi = (cam.cx + cam.fx * INTERIOR_HALF / CAMERA_DEPTH).floor() as usize;
        let mut diff = 0.0;
        let mut count = 0.0;
        for y in lo..hi {
            for x in lo..hi {
                let a = s.targets[vis].pixel(x, y);
                let b = s.targets[occ].pixel(x, y);
                for c in 0..3 {
                    diff += (a[c] - b[c]).abs();
                }
                count += 3.0;
            }
        }
        assert!(diff / count > 0.1, "mean abs diff {}", diff / count);
    }

    /// The degraded initialization fits visible-frame targets much worse
    /// inside the interior than outside it.
    #[test]
    fn occlusion_init_error_is_interior_dominated() {
        let s = generate_occlusion_scene(11, 20, 0.7, 64).unwrap();
        let vis = s.visible_frames.iter().position(|&v| v).unwrap();
        let rendered = render_targets(&s.mesh, &s.init, &s.frames, &s.camera).unwrap();
        let err = meshsplat_core::errmap::l1_map(&rendered[vis], &s.targets[vis]).unwrap();
        let cam = &s.camera;
        let lo = (cam.cx - cam.fx * INTERIOR_HALF / CAMERA_DEPTH).ceil() as usize;
        let hi = (cam.cx + cam.fx * INTERIOR_HALF / CAMERA_DEPTH).floor() as usize;
        let (mut inside, mut outside) = (0.0, 0.0);
        let (mut n_in, mut n_out) = (0.0, 0.0);
        for y in 0..err.height {
            for x in 0..err.width {
                if (lo..hi).contains(&x) && (lo..hi).contains(&y) {
                    inside += err.at(x, y);
                    n_in += 1.0;
                } else {
                    outside += err.at(x, y);
                    n_out += 1.0;
                }
            }
        }
        let (inside, outside) = (inside / n_in, outside / n_out);
        assert!(
            inside > 5.0 * outside.max(1e-6),
            "inside {inside}, outside {outside}"
        );
    }

    #[test]
    fn region_masks_partition_uv() {
        let s = generate_occlusion_scene(1, 20, 0.7, 32).unwrap();
        let interior = &s.region_masks["interior"];
        let bg = &s.region_masks["background"];
        let flap = &s.region_masks["flap"];
        assert_eq!(
            bg.count_set() + flap.count_set(),
            MASK_RESOLUTION * MASK_RESOLUTION
        );
        // Interior sits inside the background chart.
        assert!(interior.count_set() > 0);
        for y in 0..MASK_RESOLUTION {
            for x in 0..MASK_RESOLUTION {
                if interior.get(x, y) {
                    assert!(bg.get(x, y));
                }
            }
        }
    }
}
