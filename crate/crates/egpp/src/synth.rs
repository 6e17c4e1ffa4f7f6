//! Synthetic dis-occlusion oracle: scenes with known ground truth and known
//! fading geometry, so the post-processing variants can be ranked without a
//! trained network.
//!
//! Ground truth is a vertical-gradient background plane with axis-aligned
//! constant-disparity rectangles on top. The degraded pair mimics what a
//! self-supervised network produces: `d_l` replaces the sharp left flank of
//! every occluder with a linear ramp (and fades the left image border),
//! `d_flip2` mirrors both effects to the right.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::DisparityMap;
use crate::pp::{conventional_pp, edge_guided_pp, PPConfig, CONVENTIONAL_BOUNDARY_RANGE};

/// Scene geometry and degradation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    pub height: usize,
    pub width: usize,
    pub n_occluders: usize,
    /// Background plane disparity at the top and bottom rows.
    pub background_range: (f64, f64),
    /// Occluder disparities are drawn uniformly from this range.
    pub occluder_range: (f64, f64),
    /// Width L of the fading ramp next to each occluder edge, in pixels.
    pub fade_width_px: usize,
    /// Width of the faded band at the image border, in pixels.
    pub border_fade_px: usize,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            height: 64,
            width: 128,
            n_occluders: 3,
            background_range: (0.02, 0.06),
            occluder_range: (0.12, 0.28),
            fade_width_px: 8,
            border_fade_px: 6,
            seed: 0,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidDimension(format!(
                "{}x{}",
                self.height, self.width
            )));
        }
        let (b0, b1) = self.background_range;
        let (o0, o1) = self.occluder_range;
        if !(b0 >= 0.0 && b1 >= b0 && o1 >= o0) {
            return Err(Error::InvalidGeometry("disparity ranges".into()));
        }
        if self.n_occluders > 0 && o0 <= b1 {
            return Err(Error::InvalidGeometry(
                "occluder disparity must exceed the background everywhere".into(),
            ));
        }
        Ok(())
    }
}

/// A generated scene: sharp ground truth, the degraded pair, and the
/// per-row occluder edge columns.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub gt: DisparityMap,
    pub d_l: DisparityMap,
    pub d_flip2: DisparityMap,
    /// For each row, the columns x where gt(y, x) != gt(y, x-1).
    pub edge_columns: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FadeSide {
    Left,
    Right,
}

/// Detects disparity transitions: column x is listed when the value differs
/// from column x-1.
pub fn edge_columns(gt: &DisparityMap) -> Vec<Vec<usize>> {
    let (h, w) = (gt.height(), gt.width());
    (0..h)
        .map(|y| {
            (1..w)
                .filter(|&x| gt.at(y, x) != gt.at(y, x - 1))
                .collect()
        })
        .collect()
}

/// Generates the ground truth and its degraded pair, deterministically in
/// the seed.
pub fn generate_scene(params: &SceneParams) -> Result<SyntheticScene> {
    params.validate()?;
    let (h, w) = (params.height, params.width);
    let (b0, b1) = params.background_range;

    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        let t = if h > 1 { y as f64 / (h - 1) as f64 } else { 0.0 };
        let v = b0 + (b1 - b0) * t;
        data.extend(std::iter::repeat_n(v, w));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    if params.n_occluders > 0 {
        let margin = params.fade_width_px + 2;
        let slot_w = w / params.n_occluders;
        if slot_w < 2 * margin + 4 {
            return Err(Error::InvalidGeometry(format!(
                "width {} cannot host {} occluders with fade margin {}",
                w, params.n_occluders, margin
            )));
        }
        let max_rect_w = (slot_w - 2 * margin).min(20);
        let min_rect_h = (h / 4).max(2).min(h.saturating_sub(2).max(1));
        let max_rect_h = (h / 2).max(min_rect_h);

        // One rectangle per horizontal slot keeps fade bands separated.
        let mut rects = Vec::with_capacity(params.n_occluders);
        for slot in 0..params.n_occluders {
            let slot_start = slot * slot_w;
            let rw = rng.random_range(4..=max_rect_w);
            let x0 = rng.random_range(slot_start + margin..=slot_start + slot_w - margin - rw);
            let rh = rng.random_range(min_rect_h..=max_rect_h);
            let y0 = rng.random_range(1..=h - 1 - rh);
            let disparity = rng.random_range(params.occluder_range.0..=params.occluder_range.1);
            rects.push((x0, y0, rw, rh, disparity));
        }
        // nearer occluders paint over farther ones
        rects.sort_by(|a, b| a.4.partial_cmp(&b.4).unwrap());
        for (x0, y0, rw, rh, disparity) in rects {
            for y in y0..y0 + rh {
                for x in x0..x0 + rw {
                    data[y * w + x] = disparity;
                }
            }
        }
    }

    let gt = DisparityMap::from_data(h, w, data)?;
    let d_l = apply_occlusion_fading(
        &gt,
        FadeSide::Left,
        params.fade_width_px,
        params.border_fade_px,
    );
    let d_flip2 = apply_occlusion_fading(
        &gt,
        FadeSide::Right,
        params.fade_width_px,
        params.border_fade_px,
    );
    let edge_columns = edge_columns(&gt);
    Ok(SyntheticScene {
        gt,
        d_l,
        d_flip2,
        edge_columns,
    })
}

/// Degrades sharp ground truth with dis-occlusion fading.
///
/// For `FadeSide::Left`, each rising edge at column e gets the L columns to
/// its left replaced by a linear ramp between gt(e-L-1) and gt(e), and the
/// first `border_px` columns are scaled by a linear 0..1 factor. The right
/// side mirrors both effects at falling edges and the right border.
pub fn apply_occlusion_fading(
    gt: &DisparityMap,
    side: FadeSide,
    fade_px: usize,
    border_px: usize,
) -> DisparityMap {
    let (h, w) = (gt.height(), gt.width());
    let l = fade_px as i64;
    let mut data = gt.data().to_vec();
    for y in 0..h {
        let row = y * w;
        match side {
            FadeSide::Left => {
                if l > 0 {
                    for e in 1..w {
                        if gt.at(y, e) > gt.at(y, e - 1) {
                            let anchor_col = e as i64 - l - 1;
                            let anchor = gt.at(y, anchor_col.max(0) as usize);
                            let target = gt.at(y, e);
                            let start = (e as i64 - l).max(0) as usize;
                            for x in start..e {
                                let f = (x as i64 - anchor_col) as f64 / (l + 1) as f64;
                                data[row + x] = anchor + (target - anchor) * f;
                            }
                        }
                    }
                }
                if border_px > 0 {
                    for x in 0..border_px.min(w) {
                        data[row + x] *= x as f64 / border_px as f64;
                    }
                }
            }
            FadeSide::Right => {
                if l > 0 {
                    for e in (1..w).rev() {
                        if gt.at(y, e) < gt.at(y, e - 1) {
                            let r = e - 1; // last occluder column
                            let anchor_col = r as i64 + l + 1;
                            let anchor = gt.at(y, (anchor_col as usize).min(w - 1));
                            let target = gt.at(y, r);
                            let end = (r as i64 + l).min(w as i64 - 1) as usize;
                            for x in (r + 1)..=end {
                                // same form as the left side, with the ramp
                                // fraction measured from the anchor column,
                                // so flipped scenes fade bit-identically
                                let f = (anchor_col - x as i64) as f64 / (l + 1) as f64;
                                data[row + x] = anchor + (target - anchor) * f;
                            }
                        }
                    }
                }
                if border_px > 0 {
                    for x in w.saturating_sub(border_px)..w {
                        data[row + x] *= (w - 1 - x) as f64 / border_px as f64;
                    }
                }
            }
        }
    }
    DisparityMap::from_data(h, w, data).expect("fading preserves non-negativity")
}

fn band_membership(width: usize, edges: &[usize], band_px: usize) -> Vec<bool> {
    let mut member = vec![false; width];
    for &e in edges {
        let lo = e.saturating_sub(band_px);
        let hi = (e + band_px).min(width - 1);
        for m in &mut member[lo..=hi] {
            *m = true;
        }
    }
    member
}

/// Mean exceedance of the row-wise local ground-truth envelope, over pixels
/// within `band_px` of any edge. Zero means the output never leaves the
/// envelope near edges.
pub fn halo_metric(
    out: &DisparityMap,
    gt: &DisparityMap,
    edges: &[Vec<usize>],
    band_px: usize,
) -> Result<f64> {
    if band_px < 1 {
        return Err(Error::InvalidConfig("band width must be >= 1".into()));
    }
    if !out.same_shape(gt) || edges.len() != gt.height() {
        return Err(Error::ShapeMismatch("halo metric".into()));
    }
    let (h, w) = (gt.height(), gt.width());
    let mut acc = 0.0;
    let mut count = 0usize;
    for y in 0..h {
        if edges[y].is_empty() {
            continue;
        }
        let member = band_membership(w, &edges[y], band_px);
        for x in 0..w {
            if !member[x] {
                continue;
            }
            let lo = x.saturating_sub(band_px);
            let hi = (x + band_px).min(w - 1);
            let mut local_min = f64::INFINITY;
            let mut local_max = f64::NEG_INFINITY;
            for u in lo..=hi {
                local_min = local_min.min(gt.at(y, u));
                local_max = local_max.max(gt.at(y, u));
            }
            let v = out.at(y, x);
            acc += (v - local_max).max(0.0) + (local_min - v).max(0.0);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyBand);
    }
    Ok(acc / count as f64)
}

/// RMSE restricted to pixels within `band_px` of any edge.
pub fn band_rmse(
    out: &DisparityMap,
    gt: &DisparityMap,
    edges: &[Vec<usize>],
    band_px: usize,
) -> Result<f64> {
    if band_px < 1 {
        return Err(Error::InvalidConfig("band width must be >= 1".into()));
    }
    if !out.same_shape(gt) || edges.len() != gt.height() {
        return Err(Error::ShapeMismatch("band rmse".into()));
    }
    let (h, w) = (gt.height(), gt.width());
    let mut acc = 0.0;
    let mut count = 0usize;
    for y in 0..h {
        if edges[y].is_empty() {
            continue;
        }
        let member = band_membership(w, &edges[y], band_px);
        for x in 0..w {
            if member[x] {
                let e = out.at(y, x) - gt.at(y, x);
                acc += e * e;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyBand);
    }
    Ok((acc / count as f64).sqrt())
}

/// RMSE over the whole grid.
pub fn global_rmse(out: &DisparityMap, gt: &DisparityMap) -> f64 {
    let n = gt.data().len() as f64;
    let acc: f64 = out
        .data()
        .iter()
        .zip(gt.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    (acc / n).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Raw,
    Conventional,
    EdgeGuided,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Raw, Method::Conventional, Method::EdgeGuided];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Raw => "raw",
            Method::Conventional => "pp",
            Method::EdgeGuided => "egpp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteRow {
    pub seed: u64,
    pub method: Method,
    pub rmse: f64,
    pub band_rmse: f64,
    pub halo: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteAggregate {
    pub method: Method,
    pub mean_rmse: f64,
    pub mean_band_rmse: f64,
    pub mean_halo: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
    pub aggregates: Vec<SuiteAggregate>,
}

impl SuiteReport {
    pub fn aggregate(&self, method: Method) -> &SuiteAggregate {
        self.aggregates
            .iter()
            .find(|a| a.method == method)
            .expect("every method is aggregated")
    }

    /// Tab-separated serialization: one row per (scene, method) plus one
    /// aggregate row per method. Full precision keeps the shortest
    /// round-trip decimal form of each value.
    pub fn to_tsv(&self, full_precision: bool) -> String {
        let fmt = |v: f64| {
            if full_precision {
                format!("{:?}", v)
            } else {
                format!("{:.4}", v)
            }
        };
        let mut out = String::from("seed\tmethod\trmse\tband_rmse\thalo\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.seed,
                r.method.as_str(),
                fmt(r.rmse),
                fmt(r.band_rmse),
                fmt(r.halo)
            ));
        }
        for a in &self.aggregates {
            out.push_str(&format!(
                "mean\t{}\t{}\t{}\t{}\n",
                a.method.as_str(),
                fmt(a.mean_rmse),
                fmt(a.mean_band_rmse),
                fmt(a.mean_halo)
            ));
        }
        out
    }
}

/// Runs the three methods over `n_seeds` scenes (seeds `params.seed + i`)
/// and reports global RMSE, band RMSE and the halo metric against ground
/// truth. The halo band is 2N, tied to the detector's reach.
pub fn run_suite(params: &SceneParams, cfg: &PPConfig, n_seeds: u64) -> Result<SuiteReport> {
    params.validate()?;
    cfg.validate()?;
    if n_seeds == 0 {
        return Err(Error::InvalidConfig("need at least one seed".into()));
    }
    let band_px = 2 * cfg.detection_radius;
    let conventional_cfg = PPConfig {
        boundary_range: CONVENTIONAL_BOUNDARY_RANGE,
        ..*cfg
    };

    let per_scene: Result<Vec<[SuiteRow; 3]>> = (0..n_seeds)
        .into_par_iter()
        .map(|i| {
            let scene_params = SceneParams {
                seed: params.seed + i,
                ..*params
            };
            let scene = generate_scene(&scene_params)?;
            let outputs = [
                (Method::Raw, scene.d_l.clone()),
                (
                    Method::Conventional,
                    conventional_pp(&scene.d_l, &scene.d_flip2, &conventional_cfg)?,
                ),
                (
                    Method::EdgeGuided,
                    edge_guided_pp(&scene.d_l, &scene.d_flip2, cfg)?,
                ),
            ];
            let mut rows = [SuiteRow {
                seed: scene_params.seed,
                method: Method::Raw,
                rmse: 0.0,
                band_rmse: 0.0,
                halo: 0.0,
            }; 3];
            for (k, (method, out)) in outputs.iter().enumerate() {
                rows[k] = SuiteRow {
                    seed: scene_params.seed,
                    method: *method,
                    rmse: global_rmse(out, &scene.gt),
                    band_rmse: band_rmse(out, &scene.gt, &scene.edge_columns, band_px)?,
                    halo: halo_metric(out, &scene.gt, &scene.edge_columns, band_px)?,
                };
            }
            Ok(rows)
        })
        .collect();
    let per_scene = per_scene?;

    let rows: Vec<SuiteRow> = per_scene.iter().flatten().copied().collect();
    let aggregates = Method::ALL
        .iter()
        .map(|m| {
            let method_rows: Vec<&SuiteRow> = rows.iter().filter(|r| r.method == *m).collect();
            let n = method_rows.len() as f64;
            SuiteAggregate {
                method: *m,
                mean_rmse: method_rows.iter().map(|r| r.rmse).sum::<f64>() / n,
                mean_band_rmse: method_rows.iter().map(|r| r.band_rmse).sum::<f64>() / n,
                mean_halo: method_rows.iter().map(|r| r.halo).sum::<f64>() / n,
            }
        })
        .collect();
    Ok(SuiteReport { rows, aggregates })
}
