//! Self-supervision objective terms: appearance, disparity smoothness and
//! left-right consistency, plus the horizontal bilinear warp they rely on.
//!
//! Everything here scores existing image/disparity pairs; there is no
//! training. Images are expected in [0, 1], disparities in normalized units.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{DisparityMap, Grid};

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
pub const DEFAULT_SSIM_ALPHA: f64 = 0.85;

/// Term weights of the total objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha_ap: f64,
    pub alpha_ds: f64,
    pub alpha_lr: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha_ap: 1.0,
            alpha_ds: 0.5,
            alpha_lr: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_ap < 0.0 || self.alpha_ds < 0.0 || self.alpha_lr < 0.0 {
            return Err(Error::InvalidConfig("loss weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Individual terms plus their weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub c_ap: f64,
    pub c_ds: f64,
    pub c_lr: f64,
    pub c_total: f64,
}

impl LossReport {
    pub fn new(c_ap: f64, c_ds: f64, c_lr: f64, weights: &LossWeights) -> Self {
        Self {
            c_ap,
            c_ds,
            c_lr,
            c_total: total_loss(c_ap, c_ds, c_lr, weights),
        }
    }

    /// Per-scale reports aggregate by plain summation.
    pub fn sum(reports: &[LossReport]) -> LossReport {
        let mut out = LossReport {
            c_ap: 0.0,
            c_ds: 0.0,
            c_lr: 0.0,
            c_total: 0.0,
        };
        for r in reports {
            out.c_ap += r.c_ap;
            out.c_ds += r.c_ds;
            out.c_lr += r.c_lr;
            out.c_total += r.c_total;
        }
        out
    }
}

/// Which view a horizontal warp reconstructs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarpDirection {
    /// Reconstruct the left view: sample the source at x - d*W.
    SampleLeft,
    /// Reconstruct the right view: sample the source at x + d*W.
    SampleRight,
}

#[inline]
fn sample_row(row: &[f64], channels: usize, width: usize, x: f64, c: usize) -> f64 {
    let sx = x.clamp(0.0, (width - 1) as f64);
    let x0 = sx.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let f = sx - x0 as f64;
    let a = row[x0 * channels + c];
    let b = row[x1 * channels + c];
    a + f * (b - a)
}

/// Warps `src` horizontally by the disparity field, with bilinear sampling
/// and clamp-to-border coordinates.
pub fn warp_horizontal(
    src: &Grid,
    d: &DisparityMap,
    direction: WarpDirection,
) -> Result<Grid> {
    let (h, w, ch) = src.shape();
    if h != d.height() || w != d.width() {
        return Err(Error::ShapeMismatch(format!(
            "warp: image {}x{} vs disparity {}x{}",
            h,
            w,
            d.height(),
            d.width()
        )));
    }
    let sign = match direction {
        WarpDirection::SampleLeft => -1.0,
        WarpDirection::SampleRight => 1.0,
    };
    let scale = w as f64;
    let row_len = w * ch;
    let mut data = vec![0.0; h * row_len];
    data.par_chunks_mut(row_len).enumerate().for_each(|(y, dst)| {
        let src_row = &src.data()[y * row_len..][..row_len];
        for x in 0..w {
            let sx = x as f64 + sign * d.at(y, x) * scale;
            for c in 0..ch {
                dst[x * ch + c] = sample_row(src_row, ch, w, sx, c);
            }
        }
    });
    Grid::from_data(h, w, ch, data)
}

/// 3x3 box filter with replicate padding, per channel.
fn box3(g: &Grid) -> Grid {
    let (h, w, ch) = g.shape();
    let row_len = w * ch;
    // horizontal pass
    let mut hpass = vec![0.0; h * row_len];
    hpass.par_chunks_mut(row_len).enumerate().for_each(|(y, dst)| {
        let src = &g.data()[y * row_len..][..row_len];
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            for c in 0..ch {
                dst[x * ch + c] = src[xm * ch + c] + src[x * ch + c] + src[xp * ch + c];
            }
        }
    });
    // vertical pass + normalization
    let mut out = vec![0.0; h * row_len];
    out.par_chunks_mut(row_len).enumerate().for_each(|(y, dst)| {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        let (r0, r1, r2) = (
            &hpass[ym * row_len..][..row_len],
            &hpass[y * row_len..][..row_len],
            &hpass[yp * row_len..][..row_len],
        );
        for i in 0..row_len {
            dst[i] = (r0[i] + r1[i] + r2[i]) / 9.0;
        }
    });
    Grid::from_data(h, w, ch, out).expect("finite box filter")
}

/// Per-pixel SSIM with 3x3 box statistics, clamped to [-1, 1].
pub fn ssim_map(a: &Grid, b: &Grid) -> Result<Grid> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch("ssim".into()));
    }
    for v in a.data().iter().chain(b.data()) {
        if !(0.0..=1.0).contains(v) {
            return Err(Error::OutOfRange(format!("ssim expects [0,1], got {}", v)));
        }
    }
    let mu_a = box3(a);
    let mu_b = box3(b);
    let aa = box3(&a.zip_map(a, |x, y| x * y)?);
    let bb = box3(&b.zip_map(b, |x, y| x * y)?);
    let ab = box3(&a.zip_map(b, |x, y| x * y)?);
    let n = a.data().len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let (ma, mb) = (mu_a.data()[i], mu_b.data()[i]);
        let var_a = aa.data()[i] - ma * ma;
        let var_b = bb.data()[i] - mb * mb;
        let cov = ab.data()[i] - ma * mb;
        let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
        let den = (ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2);
        out[i] = (num / den).clamp(-1.0, 1.0);
    }
    let (h, w, ch) = a.shape();
    Grid::from_data(h, w, ch, out)
}

/// Appearance term: mean of alpha*(1-SSIM)/2 + (1-alpha)*|I - I_hat|.
pub fn appearance_loss(image: &Grid, reconstructed: &Grid, alpha: f64) -> Result<f64> {
    let ssim = ssim_map(image, reconstructed)?;
    let n = image.data().len() as f64;
    let mut acc = 0.0;
    for i in 0..image.data().len() {
        let dssim = (1.0 - ssim.data()[i]) / 2.0;
        let l1 = (image.data()[i] - reconstructed.data()[i]).abs();
        acc += alpha * dssim + (1.0 - alpha) * l1;
    }
    Ok(acc / n)
}

/// Edge-aware smoothness term: forward differences of the disparity,
/// down-weighted where the image has strong gradients. The last column and
/// last row are excluded from the respective directional terms.
pub fn smoothness_loss(d: &DisparityMap, image: &Grid) -> Result<f64> {
    let (h, w, ch) = image.shape();
    if h != d.height() || w != d.width() {
        return Err(Error::ShapeMismatch(format!(
            "smoothness: disparity {}x{} vs image {}x{}",
            d.height(),
            d.width(),
            h,
            w
        )));
    }
    let mut acc_x = 0.0;
    if w > 1 {
        for y in 0..h {
            for x in 0..w - 1 {
                let dd = (d.at(y, x + 1) - d.at(y, x)).abs();
                let mut gi = 0.0;
                for c in 0..ch {
                    gi += (image.at(y, x + 1, c) - image.at(y, x, c)).abs();
                }
                acc_x += dd * (-(gi / ch as f64)).exp();
            }
        }
        acc_x /= (h * (w - 1)) as f64;
    }
    let mut acc_y = 0.0;
    if h > 1 {
        for y in 0..h - 1 {
            for x in 0..w {
                let dd = (d.at(y + 1, x) - d.at(y, x)).abs();
                let mut gi = 0.0;
                for c in 0..ch {
                    gi += (image.at(y + 1, x, c) - image.at(y, x, c)).abs();
                }
                acc_y += dd * (-(gi / ch as f64)).exp();
            }
        }
        acc_y /= ((h - 1) * w) as f64;
    }
    Ok(acc_x + acc_y)
}

/// Left-right consistency term: mean |d_l(x) - d_r(x - d_l(x)*W)|.
pub fn lr_consistency_loss(d_l: &DisparityMap, d_r: &DisparityMap) -> Result<f64> {
    if !d_l.same_shape(d_r) {
        return Err(Error::ShapeMismatch("lr consistency".into()));
    }
    let (h, w) = (d_l.height(), d_l.width());
    let scale = w as f64;
    let mut acc = 0.0;
    for y in 0..h {
        let row_r = &d_r.data()[y * w..][..w];
        for x in 0..w {
            let dl = d_l.at(y, x);
            let sampled = sample_row(row_r, 1, w, x as f64 - dl * scale, 0);
            acc += (dl - sampled).abs();
        }
    }
    Ok(acc / (h * w) as f64)
}

/// Weighted sum of the three terms.
pub fn total_loss(c_ap: f64, c_ds: f64, c_lr: f64, weights: &LossWeights) -> f64 {
    weights.alpha_ap * c_ap + weights.alpha_ds * c_ds + weights.alpha_lr * c_lr
}

/// Scores a stereo pair at a single scale: the left view is reconstructed
/// from the right image through `d_l`, smoothness is taken on `d_l` against
/// the left image, and consistency compares `d_l` with `d_r`.
pub fn stereo_loss_report(
    image_l: &Grid,
    image_r: &Grid,
    d_l: &DisparityMap,
    d_r: &DisparityMap,
    weights: &LossWeights,
) -> Result<LossReport> {
    weights.validate()?;
    if !image_l.same_shape(image_r) {
        return Err(Error::ShapeMismatch("stereo pair".into()));
    }
    let reconstructed_l = warp_horizontal(image_r, d_l, WarpDirection::SampleLeft)?;
    let c_ap = appearance_loss(image_l, &reconstructed_l, DEFAULT_SSIM_ALPHA)?;
    let c_ds = smoothness_loss(d_l, image_l)?;
    let c_lr = lr_consistency_loss(d_l, d_r)?;
    Ok(LossReport::new(c_ap, c_ds, c_lr, weights))
}

/// Successive bilinear halvings of a grid, full resolution first.
pub fn image_pyramid(g: &Grid, levels: usize) -> Result<Vec<Grid>> {
    if levels == 0 {
        return Err(Error::InvalidConfig("pyramid needs >= 1 level".into()));
    }
    let mut out = vec![g.clone()];
    for _ in 1..levels {
        let prev = out.last().unwrap();
        let (h, w) = (prev.height().div_ceil(2).max(1), prev.width().div_ceil(2).max(1));
        out.push(prev.resize_bilinear(h, w)?);
    }
    Ok(out)
}
