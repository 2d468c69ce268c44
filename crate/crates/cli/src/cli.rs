//! Command-line interface: cluster, sample-uv, render, fit, stats.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use meshsplat_core::atlas::{rasterize_uv, sample_uv};

use crate::config::{load_config, ExperimentConfig};
use crate::fit::{cluster_frames, fit};
use crate::io;
use crate::report::{build_report, format_stats, write_outputs, ExperimentReport};
use crate::scene::{generate, render_targets, Scene, MASK_RESOLUTION};

/// A problem with the invocation or configuration (maps to exit code 2),
/// as opposed to a runtime failure (exit code 1).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Load and validate a config, tagging failures as configuration errors.
fn load(path: &Path) -> Result<ExperimentConfig> {
    load_config(path).map_err(|e| anyhow::Error::new(ConfigError(format!("{e:#}"))))
}

#[derive(Parser, Debug)]
#[command(
    name = "meshsplat",
    version,
    about = "Mesh-bound Gaussian splatting at desk scale: synthetic scenes, \
             clustered training schedules, and density-controlled fitting"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Group the scene's frames by conditioning and report the chosen K.
    Cluster {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Write the cluster plan as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rasterize the UV atlas and draw one in-chart sample per Gaussian.
    SampleUv {
        #[arg(long)]
        config: PathBuf,
        /// Write the samples as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render one frame from the scene's initial Gaussians.
    Render {
        #[arg(long)]
        config: PathBuf,
        /// Frame index to render.
        #[arg(long, default_value_t = 0)]
        frame: usize,
        /// Output PNG path.
        #[arg(long)]
        out: PathBuf,
        /// Render the ground-truth set instead of the initialization.
        #[arg(long, default_value_t = false)]
        ground_truth: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a training experiment and write report, curves and outputs.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the summary table of a saved experiment report.
    Stats {
        /// Path to a report.json produced by `fit`.
        report: PathBuf,
    },
}

/// Parse `args` (pass `std::env::args()`) and run; usage errors print and
/// exit directly with clap's conventions.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match cli.command {
        Command::Cluster { config, out, seed } => cmd_cluster(&config, out.as_deref(), seed),
        Command::SampleUv { config, out, seed } => cmd_sample_uv(&config, out.as_deref(), seed),
        Command::Render {
            config,
            frame,
            out,
            ground_truth,
            seed,
        } => cmd_render(&config, frame, &out, ground_truth, seed),
        Command::Fit { config, out, seed } => cmd_fit(&config, &out, seed),
        Command::Stats { report } => cmd_stats(&report),
    }
}

fn loaded(config: &Path, seed: Option<u64>) -> Result<(ExperimentConfig, Scene)> {
    let mut cfg = load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let scene = generate(&cfg.scene, cfg.seed)?;
    Ok((cfg, scene))
}

fn cmd_cluster(config: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let (cfg, scene) = loaded(config, seed)?;
    let plan = cluster_frames(&scene, &cfg)?;
    println!(
        "chose K = {} (silhouette {:.4}) over {} frames",
        plan.chosen_k,
        plan.silhouette,
        plan.assignments.len()
    );
    for score in &plan.scores {
        println!("  K = {:>2}  silhouette {:.4}", score.k, score.silhouette);
    }
    if let Some(path) = out {
        io::write_json(&plan, path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// JSON payload of `sample-uv`.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct UvSamples {
    pub resolution: usize,
    pub overlap_pixels: usize,
    pub samples: Vec<UvSample>,
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct UvSample {
    pub gaussian: usize,
    pub face: usize,
    pub uv: [f64; 2],
}

fn cmd_sample_uv(config: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let (cfg, scene) = loaded(config, seed)?;
    let atlas = rasterize_uv(&scene.mesh, MASK_RESOLUTION)
        .map_err(|e| anyhow::anyhow!("uv atlas: {e}"))?;
    let bindings: Vec<usize> = scene.init.iter().map(|g| g.face).collect();
    let uvs = sample_uv(&bindings, &atlas, &scene.mesh, cfg.seed)
        .map_err(|e| anyhow::anyhow!("uv sampling: {e}"))?;
    let occupied = atlas.pixel_pools.iter().filter(|p| !p.is_empty()).count();
    println!(
        "atlas {res}x{res}: {occupied}/{faces} faces own pixels, {overlap} overlapping",
        res = atlas.resolution,
        occupied = occupied,
        faces = scene.mesh.faces.len(),
        overlap = atlas.overlap_pixels
    );
    println!("sampled {} uv points", uvs.len());
    if let Some(path) = out {
        let payload = UvSamples {
            resolution: atlas.resolution,
            overlap_pixels: atlas.overlap_pixels,
            samples: uvs
                .iter()
                .enumerate()
                .map(|(i, &uv)| UvSample {
                    gaussian: i,
                    face: bindings[i],
                    uv,
                })
                .collect(),
        };
        io::write_json(&payload, path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_render(
    config: &Path,
    frame: usize,
    out: &Path,
    ground_truth: bool,
    seed: Option<u64>,
) -> Result<()> {
    let (_cfg, scene) = loaded(config, seed)?;
    if frame >= scene.frames.len() {
        bail!(
            "frame {frame} out of range: scene has {} frames",
            scene.frames.len()
        );
    }
    // An empty set is fine: the splatter fills the background.
    let set = if ground_truth { &scene.gt } else { &scene.init };
    let images = render_targets(
        &scene.mesh,
        set,
        &scene.frames[frame..=frame],
        &scene.camera,
    )?;
    io::save_png(&images[0], out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_fit(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let (cfg, scene) = loaded(config, seed)?;
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let outcome = fit(&scene, &cfg, None, Some(out))?;
    let report = build_report(&cfg, &outcome);
    write_outputs(out, &report, &outcome)?;

    // Final render of frame 0 for quick inspection.
    let images = render_targets(
        &scene.mesh,
        &outcome.gaussians,
        &scene.frames[0..=0],
        &scene.camera,
    )?;
    io::save_png(&images[0], &out.join("final.png"))?;

    print!("{}", format_stats(&report));
    println!("wrote {}", out.join("report.json").display());
    Ok(())
}

fn cmd_stats(report: &Path) -> Result<()> {
    if !report.exists() {
        return Err(anyhow::Error::new(ConfigError(format!(
            "report not found: {}",
            report.display()
        ))));
    }
    let report: ExperimentReport = io::read_json(report)?;
    print!("{}", format_stats(&report));
    Ok(())
}
