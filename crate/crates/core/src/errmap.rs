//! Photometric error maps, summed-area tables and the attribution of image
//! error back to individual Gaussians.
//!
//! The fused per-pixel error blends absolute difference with structural
//! dissimilarity, `E = (1 - w) |L1| + w dssim` with mixing weight
//! `w = 0.2`. A summed-area table over `E` turns any axis-aligned window
//! sum into four lookups, which makes per-Gaussian error attribution cheap:
//! a Gaussian covering `C` pixels with accumulated blend weight `A` around
//! screen center `(x, y)` scores
//!
//! ```text
//! avg = (A / C) * window_sum(square of half-extent floor(sqrt(C)/2) at round(x), round(y))
//! ```
//!
//! Running means and peaks of that score feed the densification rules.

use alloc::vec;
use alloc::vec::Vec;

use crate::fp;
use crate::gaussian::OffsetBundle;
use crate::grid::{Grid, Image};
use crate::render::GaussianScreenStats;
use crate::ssim::{dssim_backward, dssim_map};
use crate::{Error, Result};

/// Mixing weight between absolute difference and structural dissimilarity.
pub const ERROR_MIX: f64 = 0.2;
/// Weight of the pluggable perceptual term in [`rgb_loss`].
pub const PERCEPTUAL_WEIGHT: f64 = 0.05;
/// Weight of the scale term in [`offset_reg`].
pub const OFFSET_SCALE_WEIGHT: f64 = 0.01;
/// Weight of the color term in [`offset_reg`].
pub const OFFSET_COLOR_WEIGHT: f64 = 0.001;

/// Per-pixel mean absolute channel difference.
pub fn l1_map(rendered: &Image, target: &Image) -> Result<Grid> {
    rendered.same_shape(target, "l1_map")?;
    let mut out = Grid::zeros(rendered.width, rendered.height);
    for (i, v) in out.data.iter_mut().enumerate() {
        let mut acc = 0.0;
        for c in 0..3 {
            acc += fp::abs(rendered.data[i * 3 + c] - target.data[i * 3 + c]);
        }
        *v = acc / 3.0;
    }
    Ok(out)
}

/// Fused per-pixel error map `E = (1 - mix) |L1| + mix * dssim`.
pub fn fused_error_map(rendered: &Image, target: &Image, mix: f64) -> Result<Grid> {
    if !(0.0..=1.0).contains(&mix) {
        return Err(Error::InvalidArgument("error mix weight outside [0,1]"));
    }
    let l1 = l1_map(rendered, target)?;
    let ds = dssim_map(rendered, target)?;
    let mut out = l1;
    for (v, d) in out.data.iter_mut().zip(&ds.data) {
        *v = (1.0 - mix) * *v + mix * *d;
    }
    Ok(out)
}

/// An error map together with its summed-area table.
#[derive(Debug, Clone)]
pub struct ErrorField {
    pub error: Grid,
    /// `(width + 1) * (height + 1)` inclusive prefix sums with a zero
    /// first row and column.
    pub sat: Vec<f64>,
}

/// Build the summed-area table
/// `I(x+1, y+1) = E(x, y) + I(x, y+1) + I(x+1, y) - I(x, y)`.
pub fn build_sat(error: Grid) -> ErrorField {
    let (w, h) = (error.width, error.height);
    let stride = w + 1;
    let mut sat = vec![0.0; (w + 1) * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            sat[(y + 1) * stride + (x + 1)] = error.at(x, y) + sat[y * stride + (x + 1)]
                + sat[(y + 1) * stride + x]
                - sat[y * stride + x];
        }
    }
    ErrorField { error, sat }
}

impl ErrorField {
    /// Sum of the error over the inclusive pixel rectangle
    /// `[x1, x2] x [y1, y2]`, clipped to the image; empty after clipping
    /// gives 0.
    pub fn window_sum(&self, x1: i64, x2: i64, y1: i64, y2: i64) -> f64 {
        let w = self.error.width as i64;
        let h = self.error.height as i64;
        let x1 = x1.max(0);
        let y1 = y1.max(0);
        let x2 = x2.min(w - 1);
        let y2 = y2.min(h - 1);
        if x1 > x2 || y1 > y2 {
            return 0.0;
        }
        let stride = (w + 1) as usize;
        let (x1, x2, y1, y2) = (x1 as usize, x2 as usize, y1 as usize, y2 as usize);
        self.sat[(y2 + 1) * stride + (x2 + 1)] - self.sat[y1 * stride + (x2 + 1)]
            - self.sat[(y2 + 1) * stride + x1]
            + self.sat[y1 * stride + x1]
    }
}

/// Attribute windowed image error to one Gaussian from its screen
/// statistics: zero when it covered no pixels, otherwise
/// `(A / C) * window_sum` over the square window of half-extent
/// `floor(sqrt(C) / 2)` centered at the rounded screen center.
pub fn gaussian_avg_error(stats: &GaussianScreenStats, field: &ErrorField) -> f64 {
    if stats.covered == 0 {
        return 0.0;
    }
    let c = stats.covered as f64;
    let r = fp::floor(fp::sqrt(c) / 2.0) as i64;
    let cx = fp::round(stats.center[0]) as i64;
    let cy = fp::round(stats.center[1]) as i64;
    let sum = field.window_sum(cx - r, cx + r, cy - r, cy + r);
    stats.acc_alpha / c * sum
}

/// Running per-Gaussian mean and peak of the attributed error.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTracker {
    sum: Vec<f64>,
    peak: Vec<f64>,
    updates: u64,
}

impl ErrorTracker {
    pub fn new(n: usize) -> Self {
        ErrorTracker {
            sum: vec![0.0; n],
            peak: vec![0.0; n],
            updates: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sum.is_empty()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Fold one iteration's attributed errors into the running state.
    pub fn update(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.sum.len() {
            return Err(Error::DimensionMismatch("tracker update length"));
        }
        for (i, &v) in values.iter().enumerate() {
            self.sum[i] += v;
            if v > self.peak[i] {
                self.peak[i] = v;
            }
        }
        self.updates += 1;
        Ok(())
    }

    /// Mean attributed error per Gaussian (zero before any update).
    pub fn means(&self) -> Vec<f64> {
        if self.updates == 0 {
            return vec![0.0; self.sum.len()];
        }
        let inv = 1.0 / self.updates as f64;
        self.sum.iter().map(|s| s * inv).collect()
    }

    /// Peak attributed error per Gaussian since the last reset.
    pub fn peaks(&self) -> &[f64] {
        &self.peak
    }

    /// Clear all state and resize to `n` Gaussians.
    pub fn reset(&mut self, n: usize) {
        self.sum.clear();
        self.sum.resize(n, 0.0);
        self.peak.clear();
        self.peak.resize(n, 0.0);
        self.updates = 0;
    }
}

/// Pluggable image-pair score (e.g. a perceptual metric) for [`rgb_loss`].
pub type PairScoreHook<'a> = &'a dyn Fn(&Image, &Image) -> f64;

/// Photometric training loss
/// `(1 - mix) L1 + mix dssim + gamma * weight * hook`, where the hook is a
/// pluggable image-pair score gated by `gamma` in {0, 1}; it is not
/// invoked when the gate is closed.
pub fn rgb_loss(
    rendered: &Image,
    target: &Image,
    mix: f64,
    hook_weight: f64,
    gamma: f64,
    hook: Option<PairScoreHook>,
) -> Result<f64> {
    rendered.same_shape(target, "rgb_loss")?;
    let l1 = l1_map(rendered, target)?;
    let n = (rendered.width * rendered.height) as f64;
    let l1_mean: f64 = l1.data.iter().sum::<f64>() / n;
    let ds = dssim_map(rendered, target)?;
    let ds_mean: f64 = ds.data.iter().sum::<f64>() / n;
    let mut loss = (1.0 - mix) * l1_mean + mix * ds_mean;
    if gamma != 0.0 {
        if let Some(hook) = hook {
            loss += gamma * hook_weight * hook(rendered, target);
        }
    }
    Ok(loss)
}

/// Photometric loss (without the hook term) and its exact gradient with
/// respect to the rendered image.
pub fn rgb_loss_grad(rendered: &Image, target: &Image, mix: f64) -> Result<(f64, Image)> {
    rendered.same_shape(target, "rgb_loss_grad")?;
    let n = (rendered.width * rendered.height) as f64;
    let l1 = l1_map(rendered, target)?;
    let l1_mean: f64 = l1.data.iter().sum::<f64>() / n;
    let ds = dssim_map(rendered, target)?;
    let ds_mean: f64 = ds.data.iter().sum::<f64>() / n;
    let loss = (1.0 - mix) * l1_mean + mix * ds_mean;

    // d loss / d rendered: the L1 part contributes sign / (3n) per channel,
    // the dssim part backpropagates a constant mix/n cotangent per pixel.
    let mut cot = Grid::zeros(rendered.width, rendered.height);
    for v in cot.data.iter_mut() {
        *v = mix / n;
    }
    let mut grad = dssim_backward(rendered, target, &cot)?;
    let k = (1.0 - mix) / (3.0 * n);
    for (g, (r, t)) in grad
        .data
        .iter_mut()
        .zip(rendered.data.iter().zip(&target.data))
    {
        let d = r - t;
        if d > 0.0 {
            *g += k;
        } else if d < 0.0 {
            *g -= k;
        }
    }
    Ok((loss, grad))
}

/// Regularizer tying decoded offsets to their identity values:
/// `scale_w * sum |d_scale - 1| + color_w * sum |d_color|`.
pub fn offset_reg(bundle: &OffsetBundle, scale_w: f64, color_w: f64) -> f64 {
    let s = fp::abs(bundle.d_scale.x - 1.0)
        + fp::abs(bundle.d_scale.y - 1.0)
        + fp::abs(bundle.d_scale.z - 1.0);
    let c = fp::abs(bundle.d_color[0]) + fp::abs(bundle.d_color[1]) + fp::abs(bundle.d_color[2]);
    scale_w * s + color_w * c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_image(rng: &mut ChaCha12Rng, w: usize, h: usize) -> Image {
        let mut img = Image::zeros(w, h);
        for v in img.data.iter_mut() {
            *v = rng.random_range(0.0..1.0);
        }
        img
    }

    #[test]
    fn identical_images_have_zero_error_exactly() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let img = random_image(&mut rng, 16, 16);
        let e = fused_error_map(&img, &img, ERROR_MIX).unwrap();
        for v in e.data {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn constant_offset_l1_component() {
        let target = Image::filled(16, 16, [0.2, 0.4, 0.6]);
        let mut rendered = target.clone();
        for i in 0..rendered.data.len() / 3 {
            rendered.data[i * 3] += 0.5;
        }
        let l1 = l1_map(&rendered, &target).unwrap();
        for v in l1.data {
            assert!((v - 0.5 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fused_error_in_unit_interval() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let a = random_image(&mut rng, 20, 12);
        let b = random_image(&mut rng, 20, 12);
        let e = fused_error_map(&a, &b, ERROR_MIX).unwrap();
        for v in e.data {
            assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn sat_small_cases() {
        let mut g = Grid::zeros(2, 2);
        for v in g.data.iter_mut() {
            *v = 1.0;
        }
        let f = build_sat(g);
        assert_eq!(*f.sat.last().unwrap(), 4.0);
        assert_eq!(f.window_sum(0, 1, 0, 1), 4.0);
        assert_eq!(f.window_sum(1, 1, 1, 1), 1.0);

        let z = build_sat(Grid::zeros(5, 3));
        assert!(z.sat.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sat_total_matches_direct_sum() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let mut g = Grid::zeros(64, 64);
        for v in g.data.iter_mut() {
            *v = rng.random_range(0.0..1.0);
        }
        let direct: f64 = g.data.iter().sum();
        let f = build_sat(g);
        let total = *f.sat.last().unwrap();
        assert!((total - direct).abs() <= 1e-9 * direct);
    }

    #[test]
    fn window_sums_match_brute_force() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let mut g = Grid::zeros(64, 48);
        for v in g.data.iter_mut() {
            *v = rng.random_range(0.0..1.0);
        }
        let copy = g.clone();
        let f = build_sat(g);
        for _ in 0..500 {
            let x1 = rng.random_range(-5i64..64);
            let x2 = rng.random_range(-5i64..70);
            let y1 = rng.random_range(-5i64..48);
            let y2 = rng.random_range(-5i64..54);
            let mut brute = 0.0;
            for y in y1.max(0)..=y2.min(47) {
                for x in x1.max(0)..=x2.min(63) {
                    brute += copy.at(x as usize, y as usize);
                }
            }
            let got = f.window_sum(x1, x2, y1, y2);
            assert!(
                (got - brute).abs() <= 1e-9 * brute.abs().max(1.0),
                "window ({x1},{x2},{y1},{y2}): got {got}, brute {brute}"
            );
        }
        // Fully outside the image.
        assert_eq!(f.window_sum(100, 120, 0, 10), 0.0);
    }

    #[test]
    fn attribution_cases() {
        let mut g = Grid::zeros(32, 32);
        for v in g.data.iter_mut() {
            *v = 0.25;
        }
        let field = build_sat(g);
        // No coverage scores zero.
        let stats = GaussianScreenStats {
            center: [5.0, 5.0],
            covered: 0,
            acc_alpha: 0.0,
            pos_grad_accum: 0.0,
            accum_count: 0,
        };
        assert_eq!(gaussian_avg_error(&stats, &field), 0.0);
        // Uniform error e, C = 9 -> window half-extent 1, nine pixels:
        // (A / 9) * 9e = A * e.
        let stats = GaussianScreenStats {
            center: [16.0, 16.0],
            covered: 9,
            acc_alpha: 2.5,
            pos_grad_accum: 0.0,
            accum_count: 0,
        };
        assert!((gaussian_avg_error(&stats, &field) - 2.5 * 0.25).abs() < 1e-12);
        // C = 1 -> half-extent 0 -> exactly the center pixel.
        let stats = GaussianScreenStats {
            center: [7.3, 9.6],
            covered: 1,
            acc_alpha: 0.5,
            pos_grad_accum: 0.0,
            accum_count: 0,
        };
        assert!((gaussian_avg_error(&stats, &field) - 0.5 * 0.25).abs() < 1e-12);
    }

    #[test]
    fn attribution_monotone_in_blend_weight() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let mut g = Grid::zeros(32, 32);
        for v in g.data.iter_mut() {
            *v = rng.random_range(0.0..1.0);
        }
        let field = build_sat(g);
        let base = GaussianScreenStats {
            center: [12.0, 20.0],
            covered: 25,
            acc_alpha: 1.0,
            pos_grad_accum: 0.0,
            accum_count: 0,
        };
        let lo = gaussian_avg_error(&base, &field);
        let hi = gaussian_avg_error(
            &GaussianScreenStats {
                acc_alpha: 2.0,
                ..base
            },
            &field,
        );
        assert!(hi >= lo);
    }

    #[test]
    fn tracker_mean_peak_reset() {
        let mut t = ErrorTracker::new(1);
        t.update(&[0.4]).unwrap();
        assert_eq!(t.means(), vec![0.4]);
        assert_eq!(t.peaks(), &[0.4]);

        let mut t = ErrorTracker::new(1);
        for v in [0.1, 0.5, 0.2] {
            t.update(&[v]).unwrap();
        }
        assert!((t.means()[0] - 0.8 / 3.0).abs() < 1e-12);
        assert_eq!(t.peaks(), &[0.5]);

        t.reset(3);
        assert_eq!(t.len(), 3);
        assert_eq!(t.means(), vec![0.0; 3]);
        assert_eq!(t.peaks(), &[0.0; 3]);
        assert_eq!(t.updates(), 0);

        assert!(t.update(&[0.0; 2]).is_err());
    }

    #[test]
    fn rgb_loss_cases() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let img = random_image(&mut rng, 16, 16);
        let loss = rgb_loss(&img, &img, ERROR_MIX, PERCEPTUAL_WEIGHT, 0.0, None).unwrap();
        assert_eq!(loss, 0.0);

        // Pure L1 (mix 0) on a constant offset of 0.3 in every channel.
        let target = Image::filled(16, 16, [0.3, 0.3, 0.3]);
        let rendered = Image::filled(16, 16, [0.6, 0.6, 0.6]);
        let loss = rgb_loss(&rendered, &target, 0.0, PERCEPTUAL_WEIGHT, 0.0, None).unwrap();
        assert!((loss - 0.3).abs() < 1e-12);

        // A closed gate must not invoke the hook.
        let invoked = core::cell::Cell::new(false);
        let hook = |_: &Image, _: &Image| -> f64 {
            invoked.set(true);
            1.0
        };
        let with_gate_closed =
            rgb_loss(&rendered, &target, 0.0, PERCEPTUAL_WEIGHT, 0.0, Some(&hook)).unwrap();
        assert!(!invoked.get());
        let with_gate_open =
            rgb_loss(&rendered, &target, 0.0, PERCEPTUAL_WEIGHT, 1.0, Some(&hook)).unwrap();
        assert!(invoked.get());
        assert!((with_gate_open - with_gate_closed - PERCEPTUAL_WEIGHT).abs() < 1e-12);
    }

    #[test]
    fn rgb_loss_grad_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let x = random_image(&mut rng, 10, 8);
        let y = random_image(&mut rng, 10, 8);
        let (_, grad) = rgb_loss_grad(&x, &y, ERROR_MIX).unwrap();
        let h = 1e-5;
        for i in (0..x.data.len()).step_by(23) {
            let mut xp = x.clone();
            xp.data[i] += h;
            let mut xm = x.clone();
            xm.data[i] -= h;
            let lp = rgb_loss(&xp, &y, ERROR_MIX, 0.0, 0.0, None).unwrap();
            let lm = rgb_loss(&xm, &y, ERROR_MIX, 0.0, 0.0, None).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let an = grad.data[i];
            assert!(
                (fd - an).abs() <= 1e-5 * fd.abs().max(an.abs()).max(1e-4),
                "component {i}: fd {fd}, analytic {an}"
            );
        }
    }

    #[test]
    fn offset_reg_cases() {
        assert_eq!(
            offset_reg(
                &OffsetBundle::IDENTITY,
                OFFSET_SCALE_WEIGHT,
                OFFSET_COLOR_WEIGHT
            ),
            0.0
        );
        let b = OffsetBundle {
            d_scale: Vec3::new(2.0, 1.0, 1.0),
            ..OffsetBundle::IDENTITY
        };
        assert!(
            (offset_reg(&b, OFFSET_SCALE_WEIGHT, OFFSET_COLOR_WEIGHT) - 0.01).abs() < 1e-12
        );
        let b = OffsetBundle {
            d_color: [0.7, 0.0, 0.0],
            ..OffsetBundle::IDENTITY
        };
        assert!(
            (offset_reg(&b, OFFSET_SCALE_WEIGHT, OFFSET_COLOR_WEIGHT) - 0.0007).abs() < 1e-15
        );
    }
}
