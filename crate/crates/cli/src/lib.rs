//! Standard-library companion to `meshsplat-core`: file formats, synthetic
//! scene generation, the end-to-end training harness, and the command-line
//! interface.
//!
//! The split keeps the numerical kernels (`meshsplat-core`) free of any
//! filesystem or OS dependency; everything here is plumbing around them:
//!
//! * [`io`] — OBJ meshes, PNG images, raw float maps, JSON records.
//! * [`scene`] — seeded synthetic scenes (toy single-frame, occlusion).
//! * [`config`] — experiment configuration loaded from JSON.
//! * [`fit`] — the clustered training loop with density control.
//! * [`report`] — run reports, loss/PSNR curves, region statistics.
//! * [`cli`] — argument parsing and subcommand dispatch.

pub mod cli;
pub mod config;
pub mod fit;
pub mod io;
pub mod report;
pub mod scene;
