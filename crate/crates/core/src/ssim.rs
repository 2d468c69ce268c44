//! Windowed structural similarity maps over RGB images, plus the exact
//! adjoint needed to backpropagate a structural-dissimilarity loss.
//!
//! Per channel, with an 11x11 Gaussian window (sigma 1.5, reflect-padded):
//!
//! ```text
//! ssim = (2 mx my + C1)(2 sxy + C2) / ((mx^2 + my^2 + C1)(sx^2 + sy^2 + C2))
//! ```
//!
//! where `mx, my` are windowed means, `sx^2, sy^2, sxy` windowed
//! (co)variances, `C1 = 0.01^2`, `C2 = 0.03^2` for unit dynamic range.
//! Channels are averaged into one scalar map. The dissimilarity map is
//! `(1 - ssim) / 2`, in [0, 1].

use alloc::vec::Vec;

use crate::fp;
use crate::grid::{Grid, Image};
use crate::Result;

/// Window radius: 11x11 taps.
pub const WINDOW_RADIUS: usize = 5;
/// Gaussian window standard deviation.
pub const WINDOW_SIGMA: f64 = 1.5;
/// Stabilizer `(K1 L)^2` with `K1 = 0.01`, `L = 1`.
pub const C1: f64 = 0.01 * 0.01;
/// Stabilizer `(K2 L)^2` with `K2 = 0.03`, `L = 1`.
pub const C2: f64 = 0.03 * 0.03;

/// Normalized 1-D Gaussian taps of length `2 * radius + 1`.
pub fn gaussian_taps(radius: usize, sigma: f64) -> Vec<f64> {
    let mut taps = Vec::with_capacity(2 * radius + 1);
    let inv = 1.0 / (2.0 * sigma * sigma);
    for i in 0..=2 * radius {
        let d = i as f64 - radius as f64;
        taps.push(fp::exp(-d * d * inv));
    }
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Reflect an index into `[0, n)`, mirroring edge-inclusively
/// (`-1 -> 0`, `n -> n - 1`).
#[inline]
fn reflect(mut i: i64, n: i64) -> usize {
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

fn blur_rows(src: &Grid, taps: &[f64], out: &mut Grid) {
    let r = (taps.len() / 2) as i64;
    let w = src.width as i64;
    for y in 0..src.height {
        for x in 0..src.width as i64 {
            let mut acc = 0.0;
            for (ti, &t) in taps.iter().enumerate() {
                acc += t * src.data[y * src.width + reflect(x + ti as i64 - r, w)];
            }
            out.data[y * src.width + x as usize] = acc;
        }
    }
}

fn blur_cols(src: &Grid, taps: &[f64], out: &mut Grid) {
    let r = (taps.len() / 2) as i64;
    let h = src.height as i64;
    for y in 0..src.height as i64 {
        for x in 0..src.width {
            let mut acc = 0.0;
            for (ti, &t) in taps.iter().enumerate() {
                acc += t * src.data[reflect(y + ti as i64 - r, h) * src.width + x];
            }
            out.data[y as usize * src.width + x] = acc;
        }
    }
}

/// Separable Gaussian blur with reflect padding.
pub fn blur(src: &Grid, taps: &[f64]) -> Grid {
    let mut tmp = Grid::zeros(src.width, src.height);
    let mut out = Grid::zeros(src.width, src.height);
    blur_rows(src, taps, &mut tmp);
    blur_cols(&tmp, taps, &mut out);
    out
}

fn blur_rows_adjoint(g: &Grid, taps: &[f64], out: &mut Grid) {
    let r = (taps.len() / 2) as i64;
    let w = g.width as i64;
    for v in out.data.iter_mut() {
        *v = 0.0;
    }
    for y in 0..g.height {
        for x in 0..g.width as i64 {
            let gv = g.data[y * g.width + x as usize];
            for (ti, &t) in taps.iter().enumerate() {
                out.data[y * g.width + reflect(x + ti as i64 - r, w)] += t * gv;
            }
        }
    }
}

fn blur_cols_adjoint(g: &Grid, taps: &[f64], out: &mut Grid) {
    let r = (taps.len() / 2) as i64;
    let h = g.height as i64;
    for v in out.data.iter_mut() {
        *v = 0.0;
    }
    for y in 0..g.height as i64 {
        for x in 0..g.width {
            let gv = g.data[y as usize * g.width + x];
            for (ti, &t) in taps.iter().enumerate() {
                out.data[reflect(y + ti as i64 - r, h) * g.width + x] += t * gv;
            }
        }
    }
}

/// Adjoint of [`blur`] (scatter with the same reflect map; blur is only
/// self-adjoint away from the borders).
pub fn blur_adjoint(g: &Grid, taps: &[f64]) -> Grid {
    let mut tmp = Grid::zeros(g.width, g.height);
    let mut out = Grid::zeros(g.width, g.height);
    blur_cols_adjoint(g, taps, &mut tmp);
    blur_rows_adjoint(&tmp, taps, &mut out);
    out
}

fn channel(img: &Image, c: usize) -> Grid {
    let mut g = Grid::zeros(img.width, img.height);
    for (i, v) in g.data.iter_mut().enumerate() {
        *v = img.data[i * 3 + c];
    }
    g
}

struct ChannelStats {
    mx: Grid,
    my: Grid,
    sx2: Grid,
    sy2: Grid,
    sxy: Grid,
}

fn channel_stats(x: &Grid, y: &Grid, taps: &[f64]) -> ChannelStats {
    let mx = blur(x, taps);
    let my = blur(y, taps);
    let mut xx = Grid::zeros(x.width, x.height);
    let mut yy = Grid::zeros(x.width, x.height);
    let mut xy = Grid::zeros(x.width, x.height);
    for i in 0..x.data.len() {
        xx.data[i] = x.data[i] * x.data[i];
        yy.data[i] = y.data[i] * y.data[i];
        xy.data[i] = x.data[i] * y.data[i];
    }
    let mut sx2 = blur(&xx, taps);
    let mut sy2 = blur(&yy, taps);
    let mut sxy = blur(&xy, taps);
    for i in 0..x.data.len() {
        sx2.data[i] -= mx.data[i] * mx.data[i];
        sy2.data[i] -= my.data[i] * my.data[i];
        sxy.data[i] -= mx.data[i] * my.data[i];
    }
    ChannelStats {
        mx,
        my,
        sx2,
        sy2,
        sxy,
    }
}

/// Per-pixel SSIM map averaged over the three channels.
pub fn ssim_map(x: &Image, y: &Image) -> Result<Grid> {
    x.same_shape(y, "ssim_map")?;
    let taps = gaussian_taps(WINDOW_RADIUS, WINDOW_SIGMA);
    let mut out = Grid::zeros(x.width, x.height);
    for c in 0..3 {
        let xc = channel(x, c);
        let yc = channel(y, c);
        let st = channel_stats(&xc, &yc, &taps);
        for i in 0..out.data.len() {
            let a1 = 2.0 * st.mx.data[i] * st.my.data[i] + C1;
            let a2 = 2.0 * st.sxy.data[i] + C2;
            let b1 = st.mx.data[i] * st.mx.data[i] + st.my.data[i] * st.my.data[i] + C1;
            let b2 = st.sx2.data[i] + st.sy2.data[i] + C2;
            out.data[i] += (a1 * a2) / (b1 * b2) / 3.0;
        }
    }
    Ok(out)
}

/// Per-pixel structural dissimilarity `(1 - ssim) / 2`, in [0, 1].
pub fn dssim_map(x: &Image, y: &Image) -> Result<Grid> {
    let mut m = ssim_map(x, y)?;
    for v in m.data.iter_mut() {
        *v = (1.0 - *v) * 0.5;
    }
    Ok(m)
}

/// Gradient of `sum_p cotangent(p) * dssim_map(x, y)(p)` with respect to
/// `x`, exact including the reflect-padded borders.
pub fn dssim_backward(x: &Image, y: &Image, cotangent: &Grid) -> Result<Image> {
    x.same_shape(y, "dssim_backward")?;
    if cotangent.width != x.width || cotangent.height != x.height {
        return Err(crate::Error::DimensionMismatch("dssim_backward cotangent"));
    }
    let taps = gaussian_taps(WINDOW_RADIUS, WINDOW_SIGMA);
    let n = x.width * x.height;
    let mut grad = Image::zeros(x.width, x.height);
    for c in 0..3 {
        let xc = channel(x, c);
        let yc = channel(y, c);
        let st = channel_stats(&xc, &yc, &taps);
        // Cotangent onto this channel's ssim values:
        // d dssim / d ssim_c = -1/2 * 1/3 (channel averaging).
        let mut f_mu = Grid::zeros(x.width, x.height);
        let mut f_sx2 = Grid::zeros(x.width, x.height);
        let mut f_sxy = Grid::zeros(x.width, x.height);
        for i in 0..n {
            let t = cotangent.data[i] * (-0.5 / 3.0);
            let mx = st.mx.data[i];
            let my = st.my.data[i];
            let a1 = 2.0 * mx * my + C1;
            let a2 = 2.0 * st.sxy.data[i] + C2;
            let b1 = mx * mx + my * my + C1;
            let b2 = st.sx2.data[i] + st.sy2.data[i] + C2;
            let s = (a1 * a2) / (b1 * b2);
            // Partials of s with respect to the windowed statistics.
            let ds_dmx = 2.0 * a2 / (b1 * b2) * (my - mx * a1 / b1);
            let ds_dsx2 = -s / b2;
            let ds_dsxy = 2.0 * a1 / (b1 * b2);
            f_mu.data[i] = t * ds_dmx;
            f_sx2.data[i] = t * ds_dsx2;
            f_sxy.data[i] = t * ds_dsxy;
        }
        // Chain through mx = G*x, sx2 = G*(x^2) - mx^2, sxy = G*(xy) - mx my:
        // grad = G^T(f_mu - 2 mx f_sx2 - my f_sxy) + 2x G^T(f_sx2) + y G^T(f_sxy)
        let mut direct = Grid::zeros(x.width, x.height);
        for i in 0..n {
            direct.data[i] = f_mu.data[i]
                - 2.0 * st.mx.data[i] * f_sx2.data[i]
                - st.my.data[i] * f_sxy.data[i];
        }
        let gt_direct = blur_adjoint(&direct, &taps);
        let gt_sx2 = blur_adjoint(&f_sx2, &taps);
        let gt_sxy = blur_adjoint(&f_sxy, &taps);
        for i in 0..n {
            grad.data[i * 3 + c] = gt_direct.data[i]
                + 2.0 * xc.data[i] * gt_sx2.data[i]
                + yc.data[i] * gt_sxy.data[i];
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
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
    fn taps_normalized_and_symmetric() {
        let taps = gaussian_taps(WINDOW_RADIUS, WINDOW_SIGMA);
        assert_eq!(taps.len(), 11);
        let sum: f64 = taps.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for i in 0..5 {
            assert_eq!(taps[i], taps[10 - i]);
        }
    }

    #[test]
    fn identical_images_have_unit_ssim_exactly() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let img = random_image(&mut rng, 16, 12);
        let m = ssim_map(&img, &img).unwrap();
        for v in m.data {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn dssim_in_unit_interval() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let a = random_image(&mut rng, 20, 14);
        let b = random_image(&mut rng, 20, 14);
        let m = dssim_map(&a, &b).unwrap();
        for v in m.data {
            assert!((-1e-12..=1.0 + 1e-12).contains(&v));
        }
    }

    /// Brute-force windowed oracle: evaluate the SSIM definition at single
    /// pixels with explicit 11x11 double loops and reflect indexing.
    #[test]
    fn matches_direct_window_evaluation()  {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let x = random_image(&mut rng, 24, 18);
        let y = random_image(&mut rng, 24, 18);
        let m = ssim_map(&x, &y).unwrap();
        let taps = gaussian_taps(WINDOW_RADIUS, WINDOW_SIGMA);
        for &(px, py) in &[(0usize, 0usize), (11, 8), (23, 17), (3, 16)] {
            let mut want = 0.0;
            for c in 0..3 {
                let (mut mx, mut my, mut exx, mut eyy, mut exy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in -5i64..=5 {
                    for dx in -5i64..=5 {
                        let w = taps[(dx + 5) as usize] * taps[(dy + 5) as usize];
                        let sx = reflect(px as i64 + dx, x.width as i64);
                        let sy = reflect(py as i64 + dy, x.height as i64);
                        let xv = x.pixel(sx, sy)[c];
                        let yv = y.pixel(sx, sy)[c];
                        mx += w * xv;
                        my += w * yv;
                        exx += w * xv * xv;
                        eyy += w * yv * yv;
                        exy += w * xv * yv;
                    }
                }
                let (sx2, sy2, sxy) = (exx - mx * mx, eyy - my * my, exy - mx * my);
                want += (2.0 * mx * my + C1) * (2.0 * sxy + C2)
                    / ((mx * mx + my * my + C1) * (sx2 + sy2 + C2))
                    / 3.0;
            }
            assert!(
                (m.at(px, py) - want).abs() < 1e-12,
                "pixel ({px},{py}): got {}, want {want}",
                m.at(px, py)
            );
        }
    }

    #[test]
    fn blur_adjoint_is_true_adjoint() {
        // <B a, b> == <a, B^T b> for random a, b, including borders.
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let taps = gaussian_taps(WINDOW_RADIUS, WINDOW_SIGMA);
        let mut a = Grid::zeros(9, 7);
        let mut b = Grid::zeros(9, 7);
        for v in a.data.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        for v in b.data.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let ba = blur(&a, &taps);
        let btb = blur_adjoint(&b, &taps);
        let lhs: f64 = ba.data.iter().zip(&b.data).map(|(p, q)| p * q).sum();
        let rhs: f64 = a.data.iter().zip(&btb.data).map(|(p, q)| p * q).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn dssim_backward_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let x = random_image(&mut rng, 8, 6);
        let y = random_image(&mut rng, 8, 6);
        let mut cot = Grid::zeros(8, 6);
        for v in cot.data.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let loss = |img: &Image| -> f64 {
            let m = dssim_map(img, &y).unwrap();
            m.data.iter().zip(&cot.data).map(|(a, b)| a * b).sum()
        };
        let grad = dssim_backward(&x, &y, &cot).unwrap();
        let h = 1e-5;
        for i in (0..x.data.len()).step_by(17) {
            let mut xp = x.clone();
            xp.data[i] += h;
            let mut xm = x.clone();
            xm.data[i] -= h;
            let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
            let an = grad.data[i];
            assert!(
                (fd - an).abs() <= 1e-6 * fd.abs().max(an.abs()).max(1e-3),
                "component {i}: fd {fd}, analytic {an}"
            );
        }
    }
}
