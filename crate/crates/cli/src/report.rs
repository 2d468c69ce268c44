//! Experiment reports: a JSON summary of one fit, a CSV loss curve, and a
//! plain-text stats table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use meshsplat_core::cluster::ClusterPlan;

use crate::config::ExperimentConfig;
use crate::fit::{DensifyEvent, FitOutcome, PsnrSample};
use crate::io;

/// Everything worth keeping from one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub iterations: u64,
    pub final_psnr: f64,
    pub final_loss: f64,
    pub gaussian_count: usize,
    /// Live Gaussians per named UV region at the end of the run.
    pub region_counts: BTreeMap<String, usize>,
    pub densify_events: Vec<DensifyEvent>,
    pub psnr_curve: Vec<PsnrSample>,
    pub cluster: Option<ClusterPlan>,
    pub wall_seconds: f64,
}

pub fn build_report(cfg: &ExperimentConfig, outcome: &FitOutcome) -> ExperimentReport {
    ExperimentReport {
        config: cfg.clone(),
        iterations: outcome.iterations,
        final_psnr: outcome.final_psnr,
        final_loss: outcome.final_loss,
        gaussian_count: outcome.gaussians.len(),
        region_counts: outcome.region_counts.clone(),
        densify_events: outcome.densify_events.clone(),
        psnr_curve: outcome.psnr_curve.clone(),
        cluster: outcome.cluster_plan.clone(),
        wall_seconds: outcome.wall_seconds,
    }
}

/// Write `report.json`, `curves.csv` and `gaussians.json` into `dir`.
pub fn write_outputs(
    dir: &Path,
    report: &ExperimentReport,
    outcome: &FitOutcome,
) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    io::write_json(report, &dir.join("report.json"))?;
    write_curves_csv(&dir.join("curves.csv"), outcome)?;
    io::write_gaussians(&outcome.gaussians, &dir.join("gaussians.json"))?;
    Ok(())
}

/// Per-iteration loss (and the evaluation PSNR where one was taken).
pub fn write_curves_csv(path: &Path, outcome: &FitOutcome) -> Result<()> {
    let psnr_at: BTreeMap<u64, f64> = outcome
        .psnr_curve
        .iter()
        .map(|s| (s.iteration, s.psnr))
        .collect();
    let mut out = String::from("iteration,frame,loss,psnr\n");
    for s in &outcome.loss_curve {
        match psnr_at.get(&s.iteration) {
            Some(p) => writeln!(out, "{},{},{},{}", s.iteration, s.frame, s.loss, p)?,
            None => writeln!(out, "{},{},{},", s.iteration, s.frame, s.loss)?,
        }
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Human-readable summary of a report.
pub fn format_stats(report: &ExperimentReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "iterations      {}", report.iterations);
    let _ = writeln!(out, "final loss      {:.6}", report.final_loss);
    let _ = writeln!(out, "final psnr      {:.2} dB", report.final_psnr);
    let _ = writeln!(out, "gaussians       {}", report.gaussian_count);
    let _ = writeln!(out, "densify events  {}", report.densify_events.len());
    let (mut cloned, mut split, mut pruned) = (0usize, 0usize, 0usize);
    for e in &report.densify_events {
        cloned += e.report.cloned;
        split += e.report.split;
        pruned += e.report.pruned;
    }
    let _ = writeln!(out, "  cloned {cloned}, split {split}, pruned {pruned}");
    if let Some(plan) = &report.cluster {
        let _ = writeln!(
            out,
            "clusters        K = {} (silhouette {:.3})",
            plan.chosen_k, plan.silhouette
        );
    }
    if !report.region_counts.is_empty() {
        let _ = writeln!(out, "region counts");
        for (name, n) in &report.region_counts {
            let _ = writeln!(out, "  {name:<14}{n}");
        }
    }
    let _ = writeln!(out, "wall time       {:.1} s", report.wall_seconds);
    out
}
