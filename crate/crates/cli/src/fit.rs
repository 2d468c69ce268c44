//! Training harness: deform the bound set into each frame, splat, take
//! the photometric loss, backpropagate to position / color / opacity,
//! step, and run density control on the configured cadence.
//!
//! Error-tracking windows reset at every phase boundary of the schedule
//! and again after every densification event, so the window feeding a
//! density decision only contains iterations from the current phase.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use meshsplat_core::atlas::region_count;
use meshsplat_core::cluster::{
    build_features, make_schedule, pca_reduce, select_k, ClusterPlan, TrainingSchedule,
    VARIANCE_KEEP,
};
use meshsplat_core::density::{
    apply_densification, clone_set, prune_set, split_set, DensifyReport,
};
use meshsplat_core::errmap::{
    build_sat, fused_error_map, gaussian_avg_error, rgb_loss_grad, ErrorTracker,
    PairScoreHook,
};
use meshsplat_core::gaussian::GaussianPrimitive;
use meshsplat_core::mesh::{lbs_deform, mesh_frames, TriangleFrame};
use meshsplat_core::render::{render, render_backward, world_position_grad};

use crate::config::{ExperimentConfig, ScheduleMode};
use crate::io;
use crate::scene::Scene;

/// One densification event during a fit.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DensifyEvent {
    pub iteration: u64,
    pub epoch: usize,
    pub report: DensifyReport,
}

/// One point of the training-loss curve.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct LossSample {
    pub iteration: u64,
    pub frame: usize,
    pub loss: f64,
}

/// One point of the dataset-quality curve.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct PsnrSample {
    pub iteration: u64,
    pub psnr: f64,
}

/// Result of one training run.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub gaussians: Vec<GaussianPrimitive>,
    pub iterations: u64,
    pub final_psnr: f64,
    pub final_loss: f64,
    pub loss_curve: Vec<LossSample>,
    pub psnr_curve: Vec<PsnrSample>,
    pub densify_events: Vec<DensifyEvent>,
    /// Live Gaussians per named UV region at the end of the run.
    pub region_counts: BTreeMap<String, usize>,
    pub cluster_plan: Option<ClusterPlan>,
    pub wall_seconds: f64,
}

/// One planned training iteration.
struct Step {
    frame: usize,
    /// Reset the error/gradient windows before this iteration (phase
    /// boundary).
    reset_before: bool,
    /// Density control may fire on this iteration's cadence.
    adc: bool,
    epoch: usize,
    /// Evaluate the full dataset after this iteration.
    eval_after: bool,
}

/// Expand a clustered/shuffled schedule into a flat iteration plan.
fn plan_from_schedule(schedule: &TrainingSchedule) -> Vec<Step> {
    let mut steps = Vec::new();
    for (e, epoch) in schedule.epochs.iter().enumerate() {
        for phase in &epoch.phases {
            for (j, &frame) in phase.frames.iter().enumerate() {
                steps.push(Step {
                    frame,
                    reset_before: j == 0,
                    adc: epoch.adc_enabled,
                    epoch: e,
                    eval_after: false,
                });
            }
        }
        if let Some(last) = steps.last_mut() {
            last.eval_after = true;
        }
    }
    steps
}

/// Round-robin plan for schedule-free fitting: `iterations` steps, density
/// control active for the first `densify_until` fraction.
fn plan_flat(n_frames: usize, iterations: usize, densify_until: f64) -> Vec<Step> {
    let cutoff = (densify_until * iterations as f64).floor() as u64;
    let eval_stride = 200u64;
    (0..iterations as u64)
        .map(|i| Step {
            frame: (i % n_frames.max(1) as u64) as usize,
            reset_before: i == 0,
            adc: i < cutoff,
            epoch: 0,
            eval_after: (i + 1) % eval_stride == 0 || i + 1 == iterations as u64,
        })
        .collect()
}

/// Group the scene's frames by conditioning, honoring the configured K
/// range.
pub fn cluster_frames(scene: &Scene, cfg: &ExperimentConfig) -> Result<ClusterPlan> {
    let features =
        build_features(&scene.frames).map_err(|e| anyhow::anyhow!("frame features: {e}"))?;
    let reduced = pca_reduce(&features, VARIANCE_KEEP)
        .map_err(|e| anyhow::anyhow!("feature reduction: {e}"))?;
    select_k(&reduced, cfg.schedule.k_min, cfg.schedule.k_max, cfg.seed)
        .map_err(|e| anyhow::anyhow!("cluster selection: {e}"))
}

/// Mean per-frame reconstruction quality in dB over the whole dataset.
fn dataset_psnr(
    prims: &[GaussianPrimitive],
    scene: &Scene,
    frames_cache: &[Vec<TriangleFrame>],
) -> Result<f64> {
    let mut acc = 0.0;
    for (f, target) in scene.targets.iter().enumerate() {
        let params = deform_all(prims, &frames_cache[f])?;
        let out = render(&params, &scene.camera, false)
            .map_err(|e| anyhow::anyhow!("eval render frame {f}: {e}"))?;
        let mse = out
            .image
            .mse(target)
            .map_err(|e| anyhow::anyhow!("eval mse frame {f}: {e}"))?;
        acc += 10.0 * (1.0 / mse.max(1e-12)).log10();
    }
    Ok(acc / scene.targets.len().max(1) as f64)
}

fn deform_all(
    prims: &[GaussianPrimitive],
    frames: &[TriangleFrame],
) -> Result<Vec<meshsplat_core::gaussian::DeformedParams>> {
    prims
        .iter()
        .map(|g| {
            frames
                .get(g.face)
                .ok_or_else(|| anyhow::anyhow!("gaussian bound to missing face {}", g.face))
                .and_then(|f| lbs_deform(g, f).map_err(|e| anyhow::anyhow!("deform: {e}")))
        })
        .collect()
}

/// Run one training experiment on `scene` per `cfg`. `hook` is an optional
/// image-pair score folded into the recorded loss late in training;
/// `snapshot_dir` receives per-evaluation renders of frame 0 when the
/// config asks for snapshots.
pub fn fit(
    scene: &Scene,
    cfg: &ExperimentConfig,
    hook: Option<PairScoreHook>,
    snapshot_dir: Option<&Path>,
) -> Result<FitOutcome> {
    let started = Instant::now();
    cfg.validate()?;
    if scene.frames.len() != scene.targets.len() {
        bail!(
            "scene has {} frames but {} targets",
            scene.frames.len(),
            scene.targets.len()
        );
    }
    if scene.init.is_empty() {
        bail!("scene has no initial gaussians");
    }

    // Per-frame triangle frames, computed once.
    let mut frames_cache = Vec::with_capacity(scene.frames.len());
    for frame in &scene.frames {
        frames_cache.push(
            mesh_frames(&scene.mesh, &frame.vertices())
                .map_err(|e| anyhow::anyhow!("frame {}: {e}", frame.frame_id))?,
        );
    }

    // Build the iteration plan.
    let mut cluster_plan = None;
    let (steps, total_epochs) = match cfg.schedule.mode {
        ScheduleMode::Flat => (
            plan_flat(
                scene.frames.len(),
                cfg.schedule.iterations,
                cfg.schedule.densify_until,
            ),
            1,
        ),
        ScheduleMode::Clustered => {
            let plan = cluster_frames(scene, cfg)?;
            let schedule = make_schedule(
                &plan.assignments,
                plan.chosen_k,
                cfg.schedule.epochs,
                cfg.schedule.adc_off_tail,
                cfg.seed,
            )
            .map_err(|e| anyhow::anyhow!("schedule: {e}"))?;
            cluster_plan = Some(plan);
            (plan_from_schedule(&schedule), cfg.schedule.epochs)
        }
        ScheduleMode::Shuffled => {
            let assignments = vec![0usize; scene.frames.len()];
            let schedule = make_schedule(
                &assignments,
                1,
                cfg.schedule.epochs,
                cfg.schedule.adc_off_tail,
                cfg.seed,
            )
            .map_err(|e| anyhow::anyhow!("schedule: {e}"))?;
            (plan_from_schedule(&schedule), cfg.schedule.epochs)
        }
    };
    if steps.is_empty() {
        bail!("empty training plan");
    }

    let extent = scene.mesh.extent();
    if extent <= 0.0 {
        bail!("mesh extent is zero");
    }
    let mix = cfg.error_mix();
    let hook_weight = cfg.perceptual_weight();
    // The pluggable score term switches on for the second half of training.
    let gamma_from = total_epochs / 2 + 1;

    let mut prims = scene.init.clone();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ 0x5eed_ada5);
    let mut tracker = ErrorTracker::new(prims.len());
    let mut pos_accum = vec![0.0f64; prims.len()];
    let mut pos_count = vec![0u32; prims.len()];

    let mut loss_curve = Vec::with_capacity(steps.len());
    let mut psnr_curve = Vec::new();
    let mut densify_events = Vec::new();

    for (idx, step) in steps.iter().enumerate() {
        let iter = idx as u64 + 1;
        if step.reset_before {
            tracker.reset(prims.len());
            pos_accum.clear();
            pos_accum.resize(prims.len(), 0.0);
            pos_count.clear();
            pos_count.resize(prims.len(), 0);
        }

        let tri_frames = &frames_cache[step.frame];
        let params = deform_all(&prims, tri_frames)?;
        let mut out = render(&params, &scene.camera, true)
            .map_err(|e| anyhow::anyhow!("render iter {iter}: {e}"))?;
        let target = &scene.targets[step.frame];

        let (loss, grad_image) = rgb_loss_grad(&out.image, target, mix)
            .map_err(|e| anyhow::anyhow!("loss iter {iter}: {e}"))?;
        if !loss.is_finite() {
            bail!(
                "non-finite loss at iteration {iter} (frame {}, {} gaussians); aborting",
                step.frame,
                prims.len()
            );
        }
        let mut recorded = loss;
        if let Some(h) = hook {
            if step.epoch + 1 >= gamma_from {
                recorded += hook_weight * h(&out.image, target);
            }
        }
        loss_curve.push(LossSample {
            iteration: iter,
            frame: step.frame,
            loss: recorded,
        });

        let grads = render_backward(&mut out, &params, &scene.camera, &grad_image)
            .map_err(|e| anyhow::anyhow!("backward iter {iter}: {e}"))?;

        // Attribute windowed image error to Gaussians (only needed while
        // density control is live).
        if step.adc {
            let field = build_sat(
                fused_error_map(&out.image, target, mix)
                    .map_err(|e| anyhow::anyhow!("error map iter {iter}: {e}"))?,
            );
            let values: Vec<f64> = out
                .stats
                .iter()
                .map(|s| gaussian_avg_error(s, &field))
                .collect();
            tracker
                .update(&values)
                .map_err(|e| anyhow::anyhow!("tracker iter {iter}: {e}"))?;
            for (i, s) in out.stats.iter().enumerate() {
                pos_accum[i] += s.pos_grad_accum;
                pos_count[i] += s.accum_count;
            }
        }

        // Gradient step on position (triangle-local), color and opacity.
        let opt = &cfg.optimizer;
        let mu_decay = opt
            .lr_mu_final_scale
            .powf(idx as f64 / (steps.len().max(1)) as f64);
        for (i, g) in prims.iter_mut().enumerate() {
            if let Some(proj) = &out.projected[i] {
                let g_world =
                    world_position_grad(&scene.camera, proj.cam_pos, grads[i].mean2d);
                let frame = &tri_frames[g.face];
                let g_local = frame.r.transpose() * g_world * frame.k;
                g.mu = g.mu - g_local * (opt.lr_mu * extent * mu_decay);
            }
            for c in 0..3 {
                g.color[c] = (g.color[c] - opt.lr_color * grads[i].color[c]).clamp(0.0, 1.0);
            }
            g.opacity =
                (g.opacity - opt.lr_opacity * grads[i].opacity).clamp(opt.opacity_floor, 1.0);
        }

        // Density control on cadence.
        if step.adc
            && iter.is_multiple_of(cfg.adc.densify_interval as u64)
            && tracker.updates() > 0
        {
            let avg = tracker.means();
            let peak = tracker.peaks().to_vec();
            let pos_grad_avg: Vec<f64> = pos_accum
                .iter()
                .zip(&pos_count)
                .map(|(&a, &c)| if c > 0 { a / c as f64 } else { 0.0 })
                .collect();
            let max_scale: Vec<f64> = prims
                .iter()
                .map(|g| g.scale.x.max(g.scale.y).max(g.scale.z))
                .collect();
            let clones = clone_set(&avg, &peak, &cfg.adc)
                .map_err(|e| anyhow::anyhow!("clone_set iter {iter}: {e}"))?;
            let splits = split_set(&pos_grad_avg, &max_scale, extent, &cfg.adc)
                .map_err(|e| anyhow::anyhow!("split_set iter {iter}: {e}"))?;
            let prunes = prune_set(&opacities(&prims), &cfg.adc);
            let report = apply_densification(
                &mut prims,
                &clones,
                &splits,
                &prunes,
                &avg,
                &peak,
                &pos_grad_avg,
                &cfg.adc,
                &mut rng,
            )
            .map_err(|e| anyhow::anyhow!("densify iter {iter}: {e}"))?;
            densify_events.push(DensifyEvent {
                iteration: iter,
                epoch: step.epoch,
                report,
            });
            tracker.reset(prims.len());
            pos_accum.clear();
            pos_accum.resize(prims.len(), 0.0);
            pos_count.clear();
            pos_count.resize(prims.len(), 0);
        }

        if step.eval_after {
            let psnr = dataset_psnr(&prims, scene, &frames_cache)?;
            psnr_curve.push(PsnrSample {
                iteration: iter,
                psnr,
            });
            if cfg.snapshots {
                if let Some(dir) = snapshot_dir {
                    let params = deform_all(&prims, &frames_cache[0])?;
                    let shot = render(&params, &scene.camera, false)
                        .map_err(|e| anyhow::anyhow!("snapshot render: {e}"))?;
                    let path = dir.join(format!("epoch_{}_iter_{}.png", step.epoch, iter));
                    io::save_png(&shot.image, &path)
                        .with_context(|| format!("snapshot at iteration {iter}"))?;
                }
            }
        }
    }

    let final_psnr = match psnr_curve.last() {
        Some(s) if s.iteration == steps.len() as u64 => s.psnr,
        _ => dataset_psnr(&prims, scene, &frames_cache)?,
    };
    let final_loss = loss_curve.last().map(|s| s.loss).unwrap_or(f64::NAN);

    let mut region_counts = BTreeMap::new();
    let uvs: Vec<[f64; 2]> = prims.iter().map(|g| g.uv).collect();
    for (name, mask) in &scene.region_masks {
        let n = region_count(&uvs, mask)
            .map_err(|e| anyhow::anyhow!("region {name}: {e}"))?;
        region_counts.insert(name.clone(), n);
    }

    Ok(FitOutcome {
        gaussians: prims,
        iterations: steps.len() as u64,
        final_psnr,
        final_loss,
        loss_curve,
        psnr_curve,
        densify_events,
        region_counts,
        cluster_plan,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

fn opacities(prims: &[GaussianPrimitive]) -> Vec<f64> {
    prims.iter().map(|g| g.opacity).collect()
}
