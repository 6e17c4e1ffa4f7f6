//! Depth evaluation: disparity-to-depth conversion, crops, distance caps and
//! the standard error/accuracy metric set.

use crate::error::{Error, Result};
use crate::grid::{DisparityMap, Grid, Mask};

/// Row/column fractions of the evaluation crop that excludes regions without
/// reliable ground truth.
pub const CROP_TOP: f64 = 0.40810811;
pub const CROP_BOTTOM: f64 = 0.99189189;
pub const CROP_LEFT: f64 = 0.03594771;
pub const CROP_RIGHT: f64 = 0.96405229;

/// Disparity outlier thresholds: a pixel is an outlier when its error
/// exceeds both 3 px and 5% of the ground truth.
pub const D1_ABS_PX: f64 = 3.0;
pub const D1_REL: f64 = 0.05;

/// Rectified stereo camera description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub focal_px: f64,
    pub baseline_m: f64,
    pub width_px: f64,
}

impl CameraModel {
    /// The KITTI default rig.
    pub fn kitti() -> Self {
        Self {
            focal_px: 721.5377,
            baseline_m: 0.54,
            width_px: 1242.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.focal_px <= 0.0 || self.baseline_m <= 0.0 || self.width_px <= 0.0 {
            return Err(Error::InvalidConfig(
                "camera parameters must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Depth in meters for a disparity in pixel units.
    #[inline]
    pub fn depth_from_disparity_px(&self, disparity_px: f64) -> f64 {
        self.focal_px * self.baseline_m / disparity_px
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CropKind {
    None,
    Garg,
}

/// Evaluation window: depth caps and crop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub min_depth_m: f64,
    pub max_depth_m: f64,
    pub crop: CropKind,
    /// Scale predictions so their median depth matches the ground truth
    /// before scoring. Off by default.
    pub median_scale: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            min_depth_m: 1e-3,
            max_depth_m: 80.0,
            crop: CropKind::Garg,
            median_scale: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_depth_m > 0.0) || self.min_depth_m >= self.max_depth_m {
            return Err(Error::InvalidConfig(
                "depth caps must satisfy 0 < min < max".into(),
            ));
        }
        Ok(())
    }
}

/// The seven reported metrics. `d1_all_pct` is only available when both
/// inputs carry a pixel-unit disparity scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse_m: f64,
    pub rmse_log: f64,
    pub d1_all_pct: Option<f64>,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

impl MetricReport {
    /// Unweighted per-file average. `d1_all_pct` averages only when present
    /// in every report.
    pub fn average(reports: &[MetricReport]) -> Option<MetricReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let d1 = if reports.iter().all(|r| r.d1_all_pct.is_some()) {
            Some(reports.iter().map(|r| r.d1_all_pct.unwrap()).sum::<f64>() / n)
        } else {
            None
        };
        Some(MetricReport {
            abs_rel: reports.iter().map(|r| r.abs_rel).sum::<f64>() / n,
            sq_rel: reports.iter().map(|r| r.sq_rel).sum::<f64>() / n,
            rmse_m: reports.iter().map(|r| r.rmse_m).sum::<f64>() / n,
            rmse_log: reports.iter().map(|r| r.rmse_log).sum::<f64>() / n,
            d1_all_pct: d1,
            delta1: reports.iter().map(|r| r.delta1).sum::<f64>() / n,
            delta2: reports.iter().map(|r| r.delta2).sum::<f64>() / n,
            delta3: reports.iter().map(|r| r.delta3).sum::<f64>() / n,
        })
    }

    /// Fixed 4-decimal serialization in the order
    /// ARD SRD RMSE RMSE(log) D1-all d1 d2 d3.
    pub fn to_fixed_line(&self) -> String {
        format!(
            "{:.4} {:.4} {:.4} {:.4} {} {:.4} {:.4} {:.4}",
            self.abs_rel,
            self.sq_rel,
            self.rmse_m,
            self.rmse_log,
            self.d1_all_pct
                .map_or_else(|| "-".to_string(), |v| format!("{:.4}", v)),
            self.delta1,
            self.delta2,
            self.delta3
        )
    }

    /// Full-precision serialization for regression fixtures.
    pub fn to_raw_line(&self) -> String {
        format!(
            "{:?} {:?} {:?} {:?} {} {:?} {:?} {:?}",
            self.abs_rel,
            self.sq_rel,
            self.rmse_m,
            self.rmse_log,
            self.d1_all_pct
                .map_or_else(|| "-".to_string(), |v| format!("{:?}", v)),
            self.delta1,
            self.delta2,
            self.delta3
        )
    }
}

/// Converts normalized disparity to clamped depth in meters. Zero disparity
/// maps to infinite depth and clamps to the far cap.
pub fn disparity_to_depth(d: &DisparityMap, cam: &CameraModel, cfg: &EvalConfig) -> Result<Grid> {
    cam.validate()?;
    cfg.validate()?;
    let fb = cam.focal_px * cam.baseline_m;
    let width = cam.width_px;
    let (lo, hi) = (cfg.min_depth_m, cfg.max_depth_m);
    Ok(d.grid().map(move |v| (fb / (v * width)).clamp(lo, hi)))
}

/// Evaluation crop mask; rows [0.40810811*H, 0.99189189*H) and columns
/// [0.03594771*W, 0.96405229*W), bounds floored.
pub fn garg_crop_mask(height: usize, width: usize) -> Mask {
    let y0 = (CROP_TOP * height as f64).floor() as usize;
    let y1 = (CROP_BOTTOM * height as f64).floor() as usize;
    let x0 = (CROP_LEFT * width as f64).floor() as usize;
    let x1 = (CROP_RIGHT * width as f64).floor() as usize;
    Mask::from_fn(height, width, |y, x| y >= y0 && y < y1 && x >= x0 && x < x1)
}

pub fn crop_mask(kind: CropKind, height: usize, width: usize) -> Mask {
    match kind {
        CropKind::None => Mask::all_true(height, width),
        CropKind::Garg => garg_crop_mask(height, width),
    }
}

/// Depth error and accuracy terms over the valid set.
pub fn depth_metrics(pred: &Grid, gt: &Grid, valid: &Mask) -> Result<MetricReport> {
    if !pred.same_shape(gt) || pred.height() != valid.height() || pred.width() != valid.width() {
        return Err(Error::ShapeMismatch("depth metrics".into()));
    }
    if pred.channels() != 1 {
        return Err(Error::ShapeMismatch("depth metrics expects 1 channel".into()));
    }
    let mut n = 0usize;
    let mut abs_rel = 0.0;
    let mut sq_rel = 0.0;
    let mut sq_err = 0.0;
    let mut sq_log = 0.0;
    let mut hits = [0usize; 3];
    let thresholds = [1.25, 1.25 * 1.25, 1.25 * 1.25 * 1.25];
    for y in 0..pred.height() {
        for x in 0..pred.width() {
            if !valid.at(y, x) {
                continue;
            }
            let p = pred.at(y, x, 0);
            let g = gt.at(y, x, 0);
            if g <= 0.0 {
                return Err(Error::OutOfRange(format!(
                    "ground-truth depth {} at ({}, {}) inside the valid set",
                    g, y, x
                )));
            }
            n += 1;
            let err = p - g;
            abs_rel += err.abs() / g;
            sq_rel += err * err / g;
            sq_err += err * err;
            let dlog = p.ln() - g.ln();
            sq_log += dlog * dlog;
            let ratio = (p / g).max(g / p);
            for (k, t) in thresholds.iter().enumerate() {
                if ratio < *t {
                    hits[k] += 1;
                }
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyValidSet);
    }
    let nf = n as f64;
    Ok(MetricReport {
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        rmse_m: (sq_err / nf).sqrt(),
        rmse_log: (sq_log / nf).sqrt(),
        d1_all_pct: None,
        delta1: hits[0] as f64 / nf,
        delta2: hits[1] as f64 / nf,
        delta3: hits[2] as f64 / nf,
    })
}

/// Disparity outlier rate in percent, over pixel-unit disparities.
pub fn d1_all(pred_disp_px: &Grid, gt_disp_px: &Grid, valid: &Mask) -> Result<f64> {
    if !pred_disp_px.same_shape(gt_disp_px)
        || pred_disp_px.height() != valid.height()
        || pred_disp_px.width() != valid.width()
    {
        return Err(Error::ShapeMismatch("d1".into()));
    }
    let mut n = 0usize;
    let mut outliers = 0usize;
    for y in 0..pred_disp_px.height() {
        for x in 0..pred_disp_px.width() {
            if !valid.at(y, x) {
                continue;
            }
            n += 1;
            let err = (pred_disp_px.at(y, x, 0) - gt_disp_px.at(y, x, 0)).abs();
            if err > D1_ABS_PX && err > D1_REL * gt_disp_px.at(y, x, 0) {
                outliers += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyValidSet);
    }
    Ok(100.0 * outliers as f64 / n as f64)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Full single-pair evaluation over pixel-unit disparities.
///
/// The valid set is: ground-truth disparity > 0, inside the crop, and
/// ground-truth depth strictly within the caps. Ground truth is filtered,
/// never clamped; predicted depth is clamped to the caps before scoring.
pub fn evaluate_pair(
    pred_disp_px: &Grid,
    gt_disp_px: &Grid,
    cam: &CameraModel,
    cfg: &EvalConfig,
) -> Result<MetricReport> {
    cam.validate()?;
    cfg.validate()?;
    if !pred_disp_px.same_shape(gt_disp_px) {
        return Err(Error::ShapeMismatch(format!(
            "evaluate: pred {:?} vs gt {:?}",
            pred_disp_px.shape(),
            gt_disp_px.shape()
        )));
    }
    let (h, w, _) = gt_disp_px.shape();
    let crop = crop_mask(cfg.crop, h, w);
    let valid = Mask::from_fn(h, w, |y, x| {
        if !crop.at(y, x) {
            return false;
        }
        let g = gt_disp_px.at(y, x, 0);
        if g <= 0.0 {
            return false;
        }
        let depth = cam.depth_from_disparity_px(g);
        depth > cfg.min_depth_m && depth < cfg.max_depth_m
    });
    if valid.count() == 0 {
        return Err(Error::EmptyValidSet);
    }

    let gt_depth = gt_disp_px.map(|g| {
        if g > 0.0 {
            cam.depth_from_disparity_px(g)
        } else {
            0.0
        }
    });
    // invalid gt pixels hold 0 depth but never enter the valid set
    let gt_depth = Grid::from_data(
        h,
        w,
        1,
        gt_depth
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| if valid.data()[i] { *v } else { 1.0 })
            .collect(),
    )?;

    let mut pred_depth_raw = Vec::with_capacity(h * w);
    for i in 0..h * w {
        let p = pred_disp_px.data()[i];
        let depth = if p > 0.0 {
            cam.depth_from_disparity_px(p)
        } else {
            f64::MAX
        };
        pred_depth_raw.push(depth);
    }

    let scale = if cfg.median_scale {
        let mut gt_vals: Vec<f64> = (0..h * w)
            .filter(|i| valid.data()[*i])
            .map(|i| gt_depth.data()[i])
            .collect();
        let mut pred_vals: Vec<f64> = (0..h * w)
            .filter(|i| valid.data()[*i])
            .map(|i| pred_depth_raw[i])
            .collect();
        median(&mut gt_vals) / median(&mut pred_vals)
    } else {
        1.0
    };

    let pred_depth = Grid::from_data(
        h,
        w,
        1,
        pred_depth_raw
            .iter()
            .map(|v| (v * scale).clamp(cfg.min_depth_m, cfg.max_depth_m))
            .collect(),
    )?;

    let mut report = depth_metrics(&pred_depth, &gt_depth, &valid)?;
    let pred_px_scaled = pred_disp_px.map(|v| v / scale);
    report.d1_all_pct = Some(d1_all(&pred_px_scaled, gt_disp_px, &valid)?);
    Ok(report)
}
