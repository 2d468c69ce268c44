//! File formats: OBJ meshes, PNG images, raw little-endian float maps with
//! JSON headers, and JSON records for cameras and Gaussian sets.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use meshsplat_core::gaussian::GaussianPrimitive;
use meshsplat_core::grid::{ChannelMap, Image};
use meshsplat_core::math::{Mat3, Quat, Vec3};
use meshsplat_core::mesh::{FrameDescriptor, TriMesh};
use meshsplat_core::render::Camera;

/// Read a triangle mesh from Wavefront OBJ. Supports `v`, `vt` and
/// triangular `f` statements with `v/vt` corner references; everything else
/// is ignored.
pub fn read_obj(path: &Path) -> Result<TriMesh> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading mesh {}", path.display()))?;
    let mut mesh = TriMesh {
        vertices: Vec::new(),
        faces: Vec::new(),
        uv_vertices: Vec::new(),
        uv_faces: Vec::new(),
    };
    for (ln, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(head) = parts.next() else { continue };
        let ctx = || format!("{}:{}", path.display(), ln + 1);
        match head {
            "v" => {
                let mut take = || -> Result<f64> {
                    parts
                        .next()
                        .with_context(|| format!("{}: short vertex", ctx()))?
                        .parse::<f64>()
                        .with_context(|| format!("{}: bad vertex number", ctx()))
                };
                let (x, y, z) = (take()?, take()?, take()?);
                mesh.vertices.push(Vec3::new(x, y, z));
            }
            "vt" => {
                let mut take = || -> Result<f64> {
                    parts
                        .next()
                        .with_context(|| format!("{}: short uv", ctx()))?
                        .parse::<f64>()
                        .with_context(|| format!("{}: bad uv number", ctx()))
                };
                let (u, v) = (take()?, take()?);
                mesh.uv_vertices.push([u, v]);
            }
            "f" => {
                let corners: Vec<&str> = parts.collect();
                if corners.len() != 3 {
                    bail!("{}: only triangular faces are supported", ctx());
                }
                let mut vi = [0usize; 3];
                let mut ti = [0usize; 3];
                for (k, c) in corners.iter().enumerate() {
                    let mut idx = c.split('/');
                    let v: usize = idx
                        .next()
                        .with_context(|| format!("{}: empty corner", ctx()))?
                        .parse()
                        .with_context(|| format!("{}: bad vertex index", ctx()))?;
                    let t: usize = idx
                        .next()
                        .filter(|s| !s.is_empty())
                        .with_context(|| format!("{}: corner is missing a uv index", ctx()))?
                        .parse()
                        .with_context(|| format!("{}: bad uv index", ctx()))?;
                    // OBJ indices are one-based.
                    vi[k] = v.checked_sub(1).with_context(|| format!("{}: zero index", ctx()))?;
                    ti[k] = t.checked_sub(1).with_context(|| format!("{}: zero index", ctx()))?;
                }
                mesh.faces.push(vi);
                mesh.uv_faces.push(ti);
            }
            _ => {}
        }
    }
    mesh.validate()
        .with_context(|| format!("validating mesh {}", path.display()))?;
    Ok(mesh)
}

/// Write a triangle mesh as Wavefront OBJ with `v/vt` corner references.
pub fn write_obj(mesh: &TriMesh, path: &Path) -> Result<()> {
    let mut out = String::new();
    for v in &mesh.vertices {
        out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for t in &mesh.uv_vertices {
        out.push_str(&format!("vt {} {}\n", t[0], t[1]));
    }
    for (f, t) in mesh.faces.iter().zip(&mesh.uv_faces) {
        out.push_str(&format!(
            "f {}/{} {}/{} {}/{}\n",
            f[0] + 1,
            t[0] + 1,
            f[1] + 1,
            t[1] + 1,
            f[2] + 1,
            t[2] + 1
        ));
    }
    fs::write(path, out).with_context(|| format!("writing mesh {}", path.display()))
}

/// Save a floating-point RGB image as an 8-bit PNG (values clamped to
/// [0, 1] and rounded).
pub fn save_png(img: &Image, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = img
        .data
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, bytes)
        .context("building PNG buffer")?;
    buf.save(path)
        .with_context(|| format!("writing image {}", path.display()))
}

/// Load an 8-bit PNG as a floating-point RGB image in [0, 1].
pub fn load_png(path: &Path) -> Result<Image> {
    let img = image::open(path)
        .with_context(|| format!("reading image {}", path.display()))?
        .into_rgb8();
    let (w, h) = img.dimensions();
    Ok(Image {
        width: w as usize,
        height: h as usize,
        data: img.into_raw().into_iter().map(|b| b as f64 / 255.0).collect(),
    })
}

/// Header for a raw float map stored as planar little-endian `f32`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawMapHeader {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Data file path, relative to the header's directory.
    pub data: String,
}

/// Write a multi-channel map as `<stem>.json` + raw planar f32 data.
pub fn write_raw_map(map: &ChannelMap, header_path: &Path) -> Result<()> {
    let stem = header_path
        .file_stem()
        .and_then(|s| s.to_str())
        .context("raw map header path needs a file name")?;
    let data_name = format!("{stem}.f32");
    let header = RawMapHeader {
        width: map.width,
        height: map.height,
        channels: map.channels,
        data: data_name.clone(),
    };
    let mut bytes = Vec::with_capacity(map.data.len() * 4);
    for &v in &map.data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(header_path, serde_json::to_string_pretty(&header)?)
        .with_context(|| format!("writing map header {}", header_path.display()))?;
    let data_path = header_path.with_file_name(data_name);
    fs::write(&data_path, bytes)
        .with_context(|| format!("writing map data {}", data_path.display()))
}

/// Read a multi-channel map written by [`write_raw_map`].
pub fn read_raw_map(header_path: &Path) -> Result<ChannelMap> {
    let header: RawMapHeader = serde_json::from_str(
        &fs::read_to_string(header_path)
            .with_context(|| format!("reading map header {}", header_path.display()))?,
    )
    .with_context(|| format!("parsing map header {}", header_path.display()))?;
    let data_path = header_path.with_file_name(&header.data);
    let bytes = fs::read(&data_path)
        .with_context(|| format!("reading map data {}", data_path.display()))?;
    let want = header.width * header.height * header.channels * 4;
    if bytes.len() != want {
        bail!(
            "map data {}: expected {want} bytes, found {}",
            data_path.display(),
            bytes.len()
        );
    }
    let data: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(ChannelMap::from_data(
        header.width,
        header.height,
        header.channels,
        data,
    )?)
}

/// JSON-facing camera description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    #[serde(default = "white")]
    pub background: [f64; 3],
}

fn white() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}

impl From<&Camera> for CameraRecord {
    fn from(c: &Camera) -> Self {
        CameraRecord {
            rotation: c.rotation.m,
            translation: [c.translation.x, c.translation.y, c.translation.z],
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            background: c.background,
        }
    }
}

impl CameraRecord {
    pub fn to_camera(&self) -> Result<Camera> {
        let cam = Camera {
            rotation: Mat3 { m: self.rotation },
            translation: Vec3::from_array(self.translation),
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
            background: self.background,
        };
        cam.validate().context("invalid camera")?;
        Ok(cam)
    }
}

pub fn read_camera(path: &Path) -> Result<Camera> {
    let rec: CameraRecord = read_json(path)?;
    rec.to_camera()
}

pub fn write_camera(cam: &Camera, path: &Path) -> Result<()> {
    write_json(&CameraRecord::from(cam), path)
}

/// JSON-facing Gaussian primitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianRecord {
    pub mu: [f64; 3],
    pub scale: [f64; 3],
    /// Unit quaternion as `[w, x, y, z]`.
    pub rot: [f64; 4],
    pub opacity: f64,
    pub color: [f64; 3],
    pub face: usize,
    pub uv: [f64; 2],
}

impl From<&GaussianPrimitive> for GaussianRecord {
    fn from(g: &GaussianPrimitive) -> Self {
        GaussianRecord {
            mu: [g.mu.x, g.mu.y, g.mu.z],
            scale: [g.scale.x, g.scale.y, g.scale.z],
            rot: [g.rot.w, g.rot.x, g.rot.y, g.rot.z],
            opacity: g.opacity,
            color: g.color,
            face: g.face,
            uv: g.uv,
        }
    }
}

impl GaussianRecord {
    pub fn to_primitive(&self) -> Result<GaussianPrimitive> {
        let g = GaussianPrimitive {
            mu: Vec3::from_array(self.mu),
            scale: Vec3::from_array(self.scale),
            rot: Quat::new(self.rot[0], self.rot[1], self.rot[2], self.rot[3]),
            opacity: self.opacity,
            color: self.color,
            face: self.face,
            uv: self.uv,
        };
        g.validate().context("invalid gaussian record")?;
        Ok(g)
    }
}

pub fn read_gaussians(path: &Path) -> Result<Vec<GaussianPrimitive>> {
    let recs: Vec<GaussianRecord> = read_json(path)?;
    recs.iter().map(|r| r.to_primitive()).collect()
}

pub fn write_gaussians(gaussians: &[GaussianPrimitive], path: &Path) -> Result<()> {
    let recs: Vec<GaussianRecord> = gaussians.iter().map(GaussianRecord::from).collect();
    write_json(&recs, path)
}

pub fn read_frames(path: &Path) -> Result<Vec<FrameDescriptor>> {
    read_json(path)
}

pub fn write_frames(frames: &[FrameDescriptor], path: &Path) -> Result<()> {
    write_json(&frames.to_vec(), path)
}

/// Read any JSON-serializable value with path context on errors.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Write any JSON-serializable value, pretty-printed.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))
}
