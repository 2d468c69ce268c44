//! UV-space rasterization and density-aware texture-coordinate sampling.
//!
//! The atlas rasterizes the mesh's UV chart onto an `R x R` grid: each
//! pixel whose center falls inside exactly one UV triangle is tagged with
//! that face and its barycentric coordinates (ties on shared edges go to
//! the lower face id). The per-face pixel pools that result are a discrete
//! measure of how much texture area each face owns; sampling texture
//! coordinates for bound Gaussians walks those pools at even spacing, so
//! faces with more UV area spread their Gaussians further apart. Faces
//! with no pixels at all fall back to an analytic uniform draw over the
//! triangle.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::fp;
use crate::grid::{ChannelMap, Mask};
use crate::mesh::TriMesh;
use crate::{Error, Result};

/// Default atlas resolution.
pub const DEFAULT_ATLAS_RESOLUTION: usize = 256;

/// One rasterized UV pixel owned by a face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolPixel {
    pub x: u32,
    pub y: u32,
    /// Barycentric coordinates of the pixel center in the owning face's UV
    /// triangle.
    pub bary: [f64; 3],
}

/// Rasterized UV chart of a mesh.
#[derive(Debug, Clone)]
pub struct UVAtlas {
    pub resolution: usize,
    /// Face id per pixel, row-major; -1 marks pixels outside every triangle.
    pub face_map: Vec<i64>,
    /// Barycentric coordinates per pixel (zeroes for invalid pixels).
    pub bary_map: Vec<[f64; 3]>,
    /// Valid pixels per face in row-major order; the pools partition the
    /// valid pixels.
    pub pixel_pools: Vec<Vec<PoolPixel>>,
    /// Named binary region masks at atlas resolution.
    pub region_masks: BTreeMap<String, Mask>,
    /// Number of pixel centers strictly inside more than one UV triangle
    /// (chart overlap; the lower face id won those pixels).
    pub overlap_pixels: usize,
}

impl UVAtlas {
    /// Number of pixels assigned to any face.
    pub fn valid_pixels(&self) -> usize {
        self.face_map.iter().filter(|f| **f >= 0).count()
    }
}

#[inline]
fn cross2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
fn sub2(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// Barycentric coordinates of point `p` in UV triangle `(a, b, c)`;
/// `None` when the triangle is degenerate in UV space.
pub fn uv_barycentric(p: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Option<[f64; 3]> {
    let denom = cross2(sub2(b, a), sub2(c, a));
    if fp::abs(denom) < 1e-14 {
        return None;
    }
    let b1 = cross2(sub2(p, a), sub2(c, a)) / denom;
    let b2 = cross2(sub2(b, a), sub2(p, a)) / denom;
    Some([1.0 - b1 - b2, b1, b2])
}

/// Rasterize the mesh's UV chart onto an `resolution^2` pixel grid with
/// pixel centers at `((i + 0.5) / R, (j + 0.5) / R)`.
pub fn rasterize_uv(mesh: &TriMesh, resolution: usize) -> Result<UVAtlas> {
    mesh.validate()?;
    if resolution == 0 {
        return Err(Error::InvalidArgument("atlas resolution must be positive"));
    }
    let r = resolution;
    let mut face_map = vec![-1i64; r * r];
    let mut bary_map = vec![[0.0; 3]; r * r];
    let mut overlap_pixels = 0usize;

    for fi in 0..mesh.faces.len() {
        let [a, b, c] = mesh.face_uvs(fi)?;
        // Degenerate UV triangles own no pixels.
        if fp::abs(cross2(sub2(b, a), sub2(c, a))) < 1e-14 {
            continue;
        }
        let min_u = a[0].min(b[0]).min(c[0]);
        let max_u = a[0].max(b[0]).max(c[0]);
        let min_v = a[1].min(b[1]).min(c[1]);
        let max_v = a[1].max(b[1]).max(c[1]);
        let x0 = ((min_u * r as f64) - 1.0).max(0.0) as usize;
        let x1 = (((max_u * r as f64) + 1.0) as usize).min(r.saturating_sub(1));
        let y0 = ((min_v * r as f64) - 1.0).max(0.0) as usize;
        let y1 = (((max_v * r as f64) + 1.0) as usize).min(r.saturating_sub(1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = [
                    (x as f64 + 0.5) / r as f64,
                    (y as f64 + 0.5) / r as f64,
                ];
                let Some(bary) = uv_barycentric(p, a, b, c) else {
                    continue;
                };
                // Inside with a hair of tolerance so shared edges count for
                // both neighbors; ties resolve to the lower face id below.
                if bary.iter().all(|&w| w >= -1e-12) {
                    let idx = y * r + x;
                    if face_map[idx] < 0 {
                        face_map[idx] = fi as i64;
                        bary_map[idx] = bary;
                    } else if bary.iter().all(|&w| w > 1e-9) {
                        // Strictly interior to a second face: genuine chart
                        // overlap, not an edge tie. Lower id keeps the pixel.
                        overlap_pixels += 1;
                    }
                }
            }
        }
    }

    let mut pixel_pools = vec![Vec::new(); mesh.faces.len()];
    for y in 0..r {
        for x in 0..r {
            let idx = y * r + x;
            if face_map[idx] >= 0 {
                pixel_pools[face_map[idx] as usize].push(PoolPixel {
                    x: x as u32,
                    y: y as u32,
                    bary: bary_map[idx],
                });
            }
        }
    }

    Ok(UVAtlas {
        resolution,
        face_map,
        bary_map,
        pixel_pools,
        region_masks: BTreeMap::new(),
        overlap_pixels,
    })
}

/// Pool indices visited when drawing `count` evenly spaced entries from a
/// pool of `pool_len >= count` pixels: `floor(i * pool_len / count)`.
pub(crate) fn even_pool_indices(pool_len: usize, count: usize) -> impl Iterator<Item = usize> {
    (0..count).map(move |i| i * pool_len / count)
}

/// Uniform barycentric sample of a triangle from two unit draws.
pub(crate) fn analytic_barycentric(u: f64, v: f64) -> [f64; 3] {
    let su = fp::sqrt(u);
    [1.0 - su, su * (1.0 - v), su * v]
}

/// Assign a texture coordinate to every bound Gaussian.
///
/// `bindings[i]` is the face Gaussian `i` is bound to. Per face, Gaussians
/// take evenly spaced pixels from the face's pool; a pool smaller than the
/// cohort is reused once and then resampled with replacement; an empty pool
/// falls back to analytic uniform draws. Deterministic for a fixed seed.
pub fn sample_uv(
    bindings: &[usize],
    atlas: &UVAtlas,
    mesh: &TriMesh,
    rng_seed: u64,
) -> Result<Vec<[f64; 2]>> {
    if atlas.pixel_pools.len() != mesh.faces.len() {
        return Err(Error::DimensionMismatch("atlas vs mesh face count"));
    }
    let mut per_face: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (gi, &f) in bindings.iter().enumerate() {
        if f >= mesh.faces.len() {
            return Err(Error::IndexOutOfRange {
                what: "binding face",
                index: f,
                len: mesh.faces.len(),
            });
        }
        per_face.entry(f).or_default().push(gi);
    }

    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let mut out = vec![[0.0; 2]; bindings.len()];
    for (&face, members) in &per_face {
        let uvs = mesh.face_uvs(face)?;
        let pool = &atlas.pixel_pools[face];
        let count = members.len();
        let mut barys: Vec<[f64; 3]> = Vec::with_capacity(count);
        if pool.len() >= count {
            barys.extend(even_pool_indices(pool.len(), count).map(|i| pool[i].bary));
        } else if !pool.is_empty() {
            barys.extend(pool.iter().map(|p| p.bary));
            for _ in pool.len()..count {
                let i = rng.random_range(0..pool.len());
                barys.push(pool[i].bary);
            }
        } else {
            for _ in 0..count {
                let u: f64 = rng.random();
                let v: f64 = rng.random();
                barys.push(analytic_barycentric(u, v));
            }
        }
        for (&gi, b) in members.iter().zip(&barys) {
            out[gi] = [
                b[0] * uvs[0][0] + b[1] * uvs[1][0] + b[2] * uvs[2][0],
                b[0] * uvs[0][1] + b[1] * uvs[1][1] + b[2] * uvs[2][1],
            ];
        }
    }
    Ok(out)
}

/// Bilinear sample of a planar multi-channel map at `uv` in [0, 1]^2, with
/// texel centers at `((i + 0.5) / W, (j + 0.5) / H)` and border clamp.
pub fn sample_offset_map(map: &ChannelMap, uv: [f64; 2]) -> Result<Vec<f64>> {
    if !uv[0].is_finite() || !uv[1].is_finite() {
        return Err(Error::NonFinite("sample_offset_map uv"));
    }
    if uv.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::InvalidArgument("uv outside [0,1]^2"));
    }
    let (w, h) = (map.width, map.height);
    if w == 0 || h == 0 {
        return Err(Error::InvalidArgument("empty offset map"));
    }
    let fx = uv[0] * w as f64 - 0.5;
    let fy = uv[1] * h as f64 - 0.5;
    let x0f = fp::floor(fx);
    let y0f = fp::floor(fy);
    let tx = fx - x0f;
    let ty = fy - y0f;
    let clamp_i = |v: f64, hi: usize| -> usize {
        if v < 0.0 {
            0
        } else if v as usize >= hi {
            hi - 1
        } else {
            v as usize
        }
    };
    let x0 = clamp_i(x0f, w);
    let x1 = clamp_i(x0f + 1.0, w);
    let y0 = clamp_i(y0f, h);
    let y1 = clamp_i(y0f + 1.0, h);
    let mut out = Vec::with_capacity(map.channels);
    for c in 0..map.channels {
        let v00 = map.at(c, x0, y0);
        let v10 = map.at(c, x1, y0);
        let v01 = map.at(c, x0, y1);
        let v11 = map.at(c, x1, y1);
        let top = v00 + (v10 - v00) * tx;
        let bot = v01 + (v11 - v01) * tx;
        out.push(top + (bot - top) * ty);
    }
    Ok(out)
}

/// Sinusoidal positional encoding of each input channel:
/// `[sin(2^k pi p), cos(2^k pi p)]` for `k = 0 .. bands-1`, concatenated
/// per channel, giving `2 * bands` output channels per input channel.
pub fn fourier_encode(values: &[f64], bands: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len() * 2 * bands);
    for &p in values {
        let mut freq = core::f64::consts::PI;
        for _ in 0..bands {
            out.push(fp::sin(freq * p));
            out.push(fp::cos(freq * p));
            freq *= 2.0;
        }
    }
    out
}

/// Default number of frequency bands for [`fourier_encode`].
pub const DEFAULT_FOURIER_BANDS: usize = 4;

/// [`fourier_encode`] applied texel-wise to a planar map.
pub fn fourier_encode_map(map: &ChannelMap, bands: usize) -> ChannelMap {
    let mut out = ChannelMap::zeros(map.width, map.height, map.channels * 2 * bands);
    for y in 0..map.height {
        for x in 0..map.width {
            for c in 0..map.channels {
                let enc = fourier_encode(&[map.at(c, x, y)], bands);
                for (k, &v) in enc.iter().enumerate() {
                    out.set(c * 2 * bands + k, x, y, v);
                }
            }
        }
    }
    out
}

/// Count how many texture coordinates land on set texels of a binary mask
/// (uv mapped by the mask's own resolution, clamped at the border).
pub fn region_count(uvs: &[[f64; 2]], mask: &Mask) -> Result<usize> {
    if mask.width == 0 || mask.height == 0 {
        return Err(Error::InvalidArgument("empty region mask"));
    }
    let mut n = 0;
    for uv in uvs {
        if !uv[0].is_finite() || !uv[1].is_finite() {
            return Err(Error::NonFinite("region_count uv"));
        }
        let x = ((uv[0] * mask.width as f64) as i64).clamp(0, mask.width as i64 - 1) as usize;
        let y = ((uv[1] * mask.height as f64) as i64).clamp(0, mask.height as i64 - 1) as usize;
        if mask.get(x, y) {
            n += 1;
        }
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;

    /// Unit-square UV chart split along the `u + v = 1` diagonal.
    fn square_mesh() -> TriMesh {
        TriMesh {
            vertices: vec![
                Vec3::ZERO,
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
            ],
            faces: vec![[0, 1, 2], [1, 3, 2]],
            uv_vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
            uv_faces: vec![[0, 1, 2], [1, 3, 2]],
        }
    }

    #[test]
    fn full_square_rasterizes_every_pixel() {
        let mesh = square_mesh();
        let atlas = rasterize_uv(&mesh, 4).unwrap();
        assert_eq!(atlas.valid_pixels(), 16);
        assert_eq!(atlas.overlap_pixels, 0);
        // Each assigned face really contains its pixel center.
        for y in 0..4 {
            for x in 0..4 {
                let f = atlas.face_map[y * 4 + x];
                assert!(f >= 0);
                let p = [(x as f64 + 0.5) / 4.0, (y as f64 + 0.5) / 4.0];
                let uvs = mesh.face_uvs(f as usize).unwrap();
                let b = uv_barycentric(p, uvs[0], uvs[1], uvs[2]).unwrap();
                assert!(b.iter().all(|&w| w >= -1e-12));
            }
        }
        // Pools partition the valid pixels.
        let total: usize = atlas.pixel_pools.iter().map(|p| p.len()).sum();
        assert_eq!(total, 16);
    }

    #[test]
    fn shared_edge_ties_go_to_lower_face() {
        let atlas = rasterize_uv(&square_mesh(), 4).unwrap();
        // Centers with i + j = 3 sit exactly on the u + v = 1 diagonal.
        for (x, y) in [(0, 3), (1, 2), (2, 1), (3, 0)] {
            assert_eq!(atlas.face_map[y * 4 + x], 0, "pixel ({x},{y})");
        }
    }

    #[test]
    fn barycentric_reconstructs_pixel_centers() {
        let mesh = square_mesh();
        let atlas = rasterize_uv(&mesh, 16).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let idx = y * 16 + x;
                let f = atlas.face_map[idx];
                if f < 0 {
                    continue;
                }
                let uvs = mesh.face_uvs(f as usize).unwrap();
                let b = atlas.bary_map[idx];
                let u = b[0] * uvs[0][0] + b[1] * uvs[1][0] + b[2] * uvs[2][0];
                let v = b[0] * uvs[0][1] + b[1] * uvs[1][1] + b[2] * uvs[2][1];
                let want = [(x as f64 + 0.5) / 16.0, (y as f64 + 0.5) / 16.0];
                assert!((u - want[0]).abs() < 1e-6 && (v - want[1]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn degenerate_uv_face_gets_empty_pool() {
        let mut mesh = square_mesh();
        // Collapse face 1's UV corners onto a segment.
        mesh.uv_vertices[3] = [0.5, 0.5];
        mesh.uv_vertices[1] = [0.0, 0.0];
        // Face 1 uv triangle: (0,0), (0.5,0.5), (0,1)? keep it collinear:
        mesh.uv_vertices[2] = [1.0, 1.0];
        let atlas = rasterize_uv(&mesh, 8).unwrap();
        assert!(atlas.pixel_pools[1].is_empty());
    }

    #[test]
    fn valid_count_monotone_in_resolution() {
        let mesh = square_mesh();
        let mut prev = 0;
        for r in [8, 16, 32] {
            let atlas = rasterize_uv(&mesh, r).unwrap();
            assert!(atlas.valid_pixels() >= prev);
            prev = atlas.valid_pixels();
        }
    }

    #[test]
    fn even_spacing_indices() {
        let idx: Vec<usize> = even_pool_indices(100, 4).collect();
        assert_eq!(idx, vec![0, 25, 50, 75]);
        let idx: Vec<usize> = even_pool_indices(5, 5).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn sample_uv_even_and_distinct_when_pool_suffices() {
        let mesh = square_mesh();
        let atlas = rasterize_uv(&mesh, 16).unwrap();
        let bindings = vec![0usize; 4];
        let uvs = sample_uv(&bindings, &atlas, &mesh, 9).unwrap();
        let pool = &atlas.pixel_pools[0];
        assert!(pool.len() >= 4);
        let face_uvs = mesh.face_uvs(0).unwrap();
        for (i, uv) in uvs.iter().enumerate() {
            let b = pool[i * pool.len() / 4].bary;
            let want = [
                b[0] * face_uvs[0][0] + b[1] * face_uvs[1][0] + b[2] * face_uvs[2][0],
                b[0] * face_uvs[0][1] + b[1] * face_uvs[1][1] + b[2] * face_uvs[2][1],
            ];
            assert!((uv[0] - want[0]).abs() < 1e-12 && (uv[1] - want[1]).abs() < 1e-12);
        }
        // All four samples are distinct pixels.
        for i in 0..4 {
            for j in i + 1..4 {
                assert!(uvs[i] != uvs[j]);
            }
        }
    }

    #[test]
    fn sample_uv_deterministic_and_inside_faces() {
        let mesh = square_mesh();
        let atlas = rasterize_uv(&mesh, 8).unwrap();
        let bindings: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let a = sample_uv(&bindings, &atlas, &mesh, 123).unwrap();
        let b = sample_uv(&bindings, &atlas, &mesh, 123).unwrap();
        assert_eq!(a, b);
        for (gi, uv) in a.iter().enumerate() {
            let uvs = mesh.face_uvs(bindings[gi]).unwrap();
            let bary = uv_barycentric(*uv, uvs[0], uvs[1], uvs[2]).unwrap();
            assert!(bary.iter().all(|&w| w >= -1e-6), "gaussian {gi}");
            let s: f64 = bary.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn sample_uv_analytic_fallback_stays_inside() {
        let mut mesh = square_mesh();
        // Shrink face 1's UV triangle to sub-pixel size so its pool is empty.
        mesh.uv_vertices[1] = [0.9, 0.9];
        mesh.uv_vertices[3] = [0.91, 0.9];
        mesh.uv_vertices[2] = [0.9, 0.91];
        mesh.uv_faces[1] = [1, 3, 2];
        mesh.uv_faces[0] = [1, 3, 2];
        let atlas = rasterize_uv(&mesh, 8).unwrap();
        assert!(atlas.pixel_pools[1].is_empty());
        let bindings = vec![1usize; 16];
        let uvs = sample_uv(&bindings, &atlas, &mesh, 5).unwrap();
        let face_uvs = mesh.face_uvs(1).unwrap();
        for uv in &uvs {
            let b = uv_barycentric(*uv, face_uvs[0], face_uvs[1], face_uvs[2]).unwrap();
            assert!(b.iter().all(|&w| w >= -1e-6));
        }
    }

    #[test]
    fn analytic_sample_hits_corners_at_extremes() {
        assert_eq!(analytic_barycentric(0.0, 0.7), [1.0, 0.0, 0.0]);
        let b = analytic_barycentric(1.0, 1.0);
        assert!((b[2] - 1.0).abs() < 1e-12 && b[0].abs() < 1e-12 && b[1].abs() < 1e-12);
    }

    #[test]
    fn sample_uv_rejects_unbound_face() {
        let mesh = square_mesh();
        let atlas = rasterize_uv(&mesh, 8).unwrap();
        let err = sample_uv(&[7], &atlas, &mesh, 0).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { .. }));
    }

    #[test]
    fn offset_map_sampling() {
        let map = ChannelMap::from_data(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        // Texel centers are exact.
        assert_eq!(sample_offset_map(&map, [0.25, 0.25]).unwrap()[0], 1.0);
        assert_eq!(sample_offset_map(&map, [0.75, 0.25]).unwrap()[0], 2.0);
        // Dead center averages all four texels.
        assert!((sample_offset_map(&map, [0.5, 0.5]).unwrap()[0] - 2.5).abs() < 1e-12);
        // Border clamp: corners replicate the nearest texel.
        assert_eq!(sample_offset_map(&map, [0.0, 0.0]).unwrap()[0], 1.0);
        assert_eq!(sample_offset_map(&map, [1.0, 1.0]).unwrap()[0], 4.0);
        // Constant maps sample constant everywhere.
        let cmap = ChannelMap::from_data(3, 3, 2, vec![7.0; 18]).unwrap();
        for uv in [[0.1, 0.9], [0.5, 0.5], [0.99, 0.01]] {
            let v = sample_offset_map(&cmap, uv).unwrap();
            assert_eq!(v, vec![7.0, 7.0]);
        }
        // Out-of-range uv is a validation error.
        assert!(sample_offset_map(&map, [1.2, 0.5]).is_err());
    }

    #[test]
    fn fourier_encoding_values() {
        let e = fourier_encode(&[0.0], 4);
        assert_eq!(e.len(), 8);
        for k in 0..4 {
            assert_eq!(e[2 * k], 0.0);
            assert_eq!(e[2 * k + 1], 1.0);
        }
        let e = fourier_encode(&[1.0], 2);
        assert!(e[0].abs() < 1e-12 && (e[1] + 1.0).abs() < 1e-12);
        // 13 channels * 2 * 4 bands = 104.
        let e = fourier_encode(&[0.5; 13], DEFAULT_FOURIER_BANDS);
        assert_eq!(e.len(), 104);
    }

    #[test]
    fn region_counting() {
        let mut mask = Mask::zeros(10, 10);
        let uvs: Vec<[f64; 2]> = (0..10).map(|i| [i as f64 / 10.0 + 0.05, 0.5]).collect();
        assert_eq!(region_count(&uvs, &mask).unwrap(), 0);
        for d in mask.data.iter_mut() {
            *d = 1;
        }
        assert_eq!(region_count(&uvs, &mask).unwrap(), 10);
        // Half-plane mask u < 0.4 -> 4 of the 10 samples.
        let mut mask = Mask::zeros(10, 10);
        for y in 0..10 {
            for x in 0..4 {
                mask.set(x, y, true);
            }
        }
        assert_eq!(region_count(&uvs, &mask).unwrap(), 4);
    }
}
