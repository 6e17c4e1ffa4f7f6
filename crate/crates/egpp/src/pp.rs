//! Disparity post-processing: the conventional flip-average scheme and the
//! edge-guided weighted blend that supersedes it.
//!
//! Both variants take an aligned pair: `d_l`, predicted from the input image,
//! and `d_flip2`, the prediction from the horizontally flipped image flipped
//! back into alignment. `d_l` fades in dis-occluded bands on the left side of
//! occluders (and the left border); `d_flip2` fades on the right. The
//! edge-guided blend weighs each map by a regional-edge confidence so the
//! reliable side wins, instead of averaging both errors into a halo.
//!
//! Disparities are expected in normalized units (fraction of image width);
//! the sigmoid gain/offset defaults are calibrated for that range.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{clamp_index, DisparityMap, Grid, Kernel};

/// Boundary range of the conventional post-processing scheme.
pub const CONVENTIONAL_BOUNDARY_RANGE: f64 = 0.05;

/// Parameters of the post-processing stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PPConfig {
    /// Detection radius N of the wide gradient filter, in pixels.
    pub detection_radius: usize,
    /// Sigmoid gain a.
    pub gain: f64,
    /// Sigmoid offset b.
    pub offset: f64,
    /// Reserved boundary range as a fraction of image width.
    pub boundary_range: f64,
    /// Slope of the boundary ramp, in normalized-width units.
    pub ramp_slope: f64,
    /// Floor below which confidence sums fall back to equal weights.
    pub eps: f64,
}

impl Default for PPConfig {
    fn default() -> Self {
        Self {
            detection_radius: 10,
            gain: 32.0,
            offset: 0.5,
            boundary_range: 0.02,
            ramp_slope: 20.0,
            eps: 1e-12,
        }
    }
}

impl PPConfig {
    /// Defaults of the conventional flip-average scheme (wider boundary
    /// reserve, everything else shared).
    pub fn conventional() -> Self {
        Self {
            boundary_range: CONVENTIONAL_BOUNDARY_RANGE,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.detection_radius < 1 {
            return Err(Error::InvalidConfig("detection radius must be >= 1".into()));
        }
        if !(self.gain > 0.0) {
            return Err(Error::InvalidConfig("gain must be > 0".into()));
        }
        if !(0.0..0.5).contains(&self.boundary_range) {
            return Err(Error::InvalidConfig(
                "boundary range must be in [0, 0.5)".into(),
            ));
        }
        if !(self.ramp_slope > 0.0) {
            return Err(Error::InvalidConfig("ramp slope must be > 0".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidConfig("eps must be > 0".into()));
        }
        Ok(())
    }
}

/// Which edge flank a detector responds to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeDirection {
    /// Falling flank, high disparity to the left of the drop.
    RightEdge,
    /// Rising flank, high disparity to the right of the rise.
    LeftEdge,
}

/// Post-processing variants exposed by the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpMode {
    /// Pass `d_l` through untouched.
    None,
    /// Conventional flip-average blend.
    Conventional,
    /// Edge-guided weighted blend.
    EdgeGuided,
}

/// Single-channel grid of per-pixel edge confidences in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap(Grid);

impl ConfidenceMap {
    pub fn grid(&self) -> &Grid {
        &self.0
    }

    pub fn into_grid(self) -> Grid {
        self.0
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.0.at(y, x, 0)
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }
}

/// Normalized blend weights: `w` for `d_l`, `w_pp` for `d_flip2`.
/// They sum to 1 at every pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPair {
    pub w: Grid,
    pub w_pp: Grid,
}

/// Builds the wide horizontal gradient filter: 3 rows by 2N columns, the
/// left N columns +1/(6N) and the right N columns -1/(6N), so a unit step
/// centered under the kernel responds with exactly 0.5.
pub fn build_gradient_filter(radius: usize) -> Result<Kernel> {
    if radius < 1 {
        return Err(Error::InvalidConfig("detection radius must be >= 1".into()));
    }
    let cols = 2 * radius;
    let w = 1.0 / (3.0 * cols as f64);
    let mut weights = Vec::with_capacity(3 * cols);
    for _row in 0..3 {
        for c in 0..cols {
            weights.push(if c < radius { w } else { -w });
        }
    }
    Kernel::new(3, cols, weights)
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Sums three vertically adjacent samples per pixel with replicate padding.
fn vertical_box3(d: &DisparityMap) -> Vec<f64> {
    let (h, w) = (d.height(), d.width());
    let src = d.data();
    let mut out = vec![0.0; h * w];
    out.par_chunks_mut(w).enumerate().for_each(|(y, dst)| {
        let y0 = clamp_index(y as isize - 1, h);
        let y1 = y;
        let y2 = clamp_index(y as isize + 1, h);
        let (r0, r1, r2) = (&src[y0 * w..][..w], &src[y1 * w..][..w], &src[y2 * w..][..w]);
        for x in 0..w {
            dst[x] = r0[x] + r1[x] + r2[x];
        }
    });
    out
}

/// Raw response of the wide gradient filter.
///
/// The right-edge response at column x is the mean over the 3-row window of
/// the N columns left of x minus the N columns starting at x, matching
/// `correlate2d(d, build_gradient_filter(N))`. The left-edge response is the
/// exact mirror, computed as flip -> right-edge -> flip so the detector
/// duality `left(d) == flip(right(flip(d)))` holds bitwise.
pub fn gradient_response(d: &DisparityMap, radius: usize, direction: EdgeDirection) -> Result<Grid> {
    if radius < 1 {
        return Err(Error::InvalidConfig("detection radius must be >= 1".into()));
    }
    match direction {
        EdgeDirection::RightEdge => Ok(right_edge_response(d, radius)),
        EdgeDirection::LeftEdge => {
            Ok(right_edge_response(&d.flip_horizontal(), radius).flip_horizontal())
        }
    }
}

fn right_edge_response(d: &DisparityMap, radius: usize) -> Grid {
    let (h, w) = (d.height(), d.width());
    let v = vertical_box3(d);
    let n = radius;
    let norm = 1.0 / (6.0 * radius as f64);
    let mut out = vec![0.0; h * w];
    out.par_chunks_mut(w).enumerate().for_each(|(y, dst)| {
        let row = &v[y * w..][..w];
        // prefix sums over the replicate-padded row: prefix[k] sums the
        // padded samples at offsets -N .. k-N-1
        let mut prefix = Vec::with_capacity(w + 2 * n + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for k in 0..w + 2 * n {
            acc += row[clamp_index(k as isize - n as isize, w)];
            prefix.push(acc);
        }
        for x in 0..w {
            let left = prefix[x + n] - prefix[x];
            let right = prefix[x + 2 * n] - prefix[x + n];
            dst[x] = (left - right) * norm;
        }
    });
    Grid::from_data(h, w, 1, out).expect("finite response")
}

/// Regional-edge confidence: sigmoid((d (x) f_gx - b) * a), with the
/// horizontally mirrored filter for the left-edge direction.
pub fn edge_confidence(
    d: &DisparityMap,
    cfg: &PPConfig,
    direction: EdgeDirection,
) -> Result<ConfidenceMap> {
    cfg.validate()?;
    let resp = gradient_response(d, cfg.detection_radius, direction)?;
    let (gain, offset) = (cfg.gain, cfg.offset);
    Ok(ConfidenceMap(resp.map(|r| sigmoid((r - offset) * gain))))
}

/// Normalizes a confidence pair into blend weights. Pixels where the sum
/// falls below `eps` get the 0.5/0.5 fallback.
pub fn normalize_weights(e: &ConfidenceMap, e_pp: &ConfidenceMap, eps: f64) -> Result<WeightPair> {
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig("eps must be > 0".into()));
    }
    for (i, v) in e.data().iter().chain(e_pp.data()).enumerate() {
        if !(0.0..=1.0).contains(v) {
            return Err(Error::OutOfRange(format!(
                "confidence {} at element {}",
                v, i
            )));
        }
    }
    let w = e.grid().zip_map(e_pp.grid(), move |a, b| {
        let s = a + b;
        if s < eps {
            0.5
        } else {
            a / s
        }
    })?;
    let w_pp = e.grid().zip_map(e_pp.grid(), move |a, b| {
        let s = a + b;
        if s < eps {
            0.5
        } else {
            b / s
        }
    })?;
    Ok(WeightPair { w, w_pp })
}

/// Edge-guided weighted sum of the two predictions.
///
/// `w` comes from the right-edge confidence of `d_l`, `w_pp` from the
/// left-edge confidence of `d_flip2`. The result is clamped to the pointwise
/// envelope of the two inputs, and equals the input exactly when they agree.
pub fn edge_guided_combine(
    d_l: &DisparityMap,
    d_flip2: &DisparityMap,
    cfg: &PPConfig,
) -> Result<DisparityMap> {
    if !d_l.same_shape(d_flip2) {
        return Err(Error::ShapeMismatch(format!(
            "combine: {}x{} vs {}x{}",
            d_l.height(),
            d_l.width(),
            d_flip2.height(),
            d_flip2.width()
        )));
    }
    cfg.validate()?;
    let e = edge_confidence(d_l, cfg, EdgeDirection::RightEdge)?;
    let e_pp = edge_confidence(d_flip2, cfg, EdgeDirection::LeftEdge)?;
    let weights = normalize_weights(&e, &e_pp, cfg.eps)?;
    let combined = blend(d_l.grid(), d_flip2.grid(), &weights.w)?;
    DisparityMap::from_grid(combined)
}

/// w*a + (1-w)*b in the lerp form b + w*(a-b), clamped to [min(a,b), max(a,b)]
/// so the blend is exactly `a` when the inputs agree.
fn blend(a: &Grid, b: &Grid, w: &Grid) -> Result<Grid> {
    let lerp = b.zip_map(a, |bv, av| av - bv)?.zip_map(w, |diff, wv| diff * wv)?;
    let raw = b.zip_map(&lerp, |bv, l| bv + l)?;
    raw.zip_map(&a.zip_map(b, f64::min)?, f64::max)?
        .zip_map(&a.zip_map(b, f64::max)?, f64::min)
}

fn boundary_mask_rows(
    width: usize,
    boundary_range: f64,
    ramp_slope: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if width == 0 {
        return Err(Error::InvalidDimension("zero-width mask".into()));
    }
    if !(0.0..0.5).contains(&boundary_range) {
        return Err(Error::InvalidConfig(
            "boundary range must be in [0, 0.5)".into(),
        ));
    }
    if !(ramp_slope > 0.0) {
        return Err(Error::InvalidConfig("ramp slope must be > 0".into()));
    }
    if boundary_range + 1.0 / ramp_slope > 0.5 {
        return Err(Error::InvalidConfig(format!(
            "boundary masks would overlap: rng {} + 1/slope {} exceeds 0.5",
            boundary_range,
            1.0 / ramp_slope
        )));
    }
    let denom = if width > 1 { (width - 1) as f64 } else { 1.0 };
    let mut left_row = Vec::with_capacity(width);
    for x in 0..width {
        let j = x as f64 / denom;
        left_row.push((1.0 - ramp_slope * (j - boundary_range)).clamp(0.0, 1.0));
    }
    let mut right_row = left_row.clone();
    right_row.reverse();
    Ok((left_row, right_row))
}

/// Boundary reserve masks.
///
/// With j = x/(W-1), the left mask is clamp(1 - slope*(j - rng), 0, 1): 1 for
/// j <= rng, falling linearly to 0 at j = rng + 1/slope. The right mask is
/// its horizontal mirror. Errors when the two ramps would overlap.
pub fn boundary_masks(
    height: usize,
    width: usize,
    boundary_range: f64,
    ramp_slope: f64,
) -> Result<(Grid, Grid)> {
    if height == 0 {
        return Err(Error::InvalidDimension("zero-height mask".into()));
    }
    let (left_row, right_row) = boundary_mask_rows(width, boundary_range, ramp_slope)?;
    let replicate = |row: &[f64]| {
        let mut data = Vec::with_capacity(height * width);
        for _ in 0..height {
            data.extend_from_slice(row);
        }
        Grid::from_data(height, width, 1, data)
    };
    Ok((replicate(&left_row)?, replicate(&right_row)?))
}

/// Boundary-preserving synthesis: the left reserve takes `d_flip2` (clean on
/// the left), the right reserve takes `d_l` (clean on the right), and the
/// interior takes `center`.
pub fn synthesize(
    d_l: &DisparityMap,
    d_flip2: &DisparityMap,
    center: &DisparityMap,
    masks: &(Grid, Grid),
) -> Result<DisparityMap> {
    let g = d_l.grid();
    if !d_l.same_shape(d_flip2) || !d_l.same_shape(center) {
        return Err(Error::ShapeMismatch("synthesize: disparity maps".into()));
    }
    let (m_left, m_right) = masks;
    if !g.same_shape(m_left) || !g.same_shape(m_right) {
        return Err(Error::ShapeMismatch("synthesize: masks".into()));
    }
    let (h, w) = (d_l.height(), d_l.width());
    let (dl, dpp, c) = (d_l.data(), d_flip2.data(), center.data());
    let (ml, mr) = (m_left.data(), m_right.data());
    let mut out = vec![0.0; h * w];
    out.par_chunks_mut(w).enumerate().for_each(|(y, dst)| {
        let o = y * w;
        for x in 0..w {
            let i = o + x;
            // center + m_left*(d_flip2 - center) + m_right*(d_l - center):
            // exactly `center` where both masks vanish.
            dst[x] = c[i] + ml[i] * (dpp[i] - c[i]) + mr[i] * (dl[i] - c[i]);
        }
    });
    DisparityMap::from_grid(Grid::from_data(h, w, 1, out)?)
}

/// Single-pass synthesis kernel shared by both variants. `center` computes
/// the interior value from (index, d_l, d_flip2, lo, hi); the per-pixel
/// arithmetic mirrors the composed operations exactly, so the fused path is
/// bit-identical to chaining them.
fn fused_pp(
    d_l: &DisparityMap,
    d_flip2: &DisparityMap,
    cfg: &PPConfig,
    center: impl Fn(usize, f64, f64, f64, f64) -> f64 + Sync,
) -> Result<DisparityMap> {
    let (h, w) = (d_l.height(), d_l.width());
    let (ml_row, mr_row) = boundary_mask_rows(w, cfg.boundary_range, cfg.ramp_slope)?;
    let (dl, dpp) = (d_l.data(), d_flip2.data());
    let mut out = vec![0.0; h * w];
    out.par_chunks_mut(w).enumerate().for_each(|(y, dst)| {
        let o = y * w;
        for x in 0..w {
            let i = o + x;
            let (a, b) = (dl[i], dpp[i]);
            let lo = f64::min(a, b);
            let hi = f64::max(a, b);
            let c = center(i, a, b, lo, hi);
            let v = c + ml_row[x] * (b - c) + mr_row[x] * (a - c);
            dst[x] = f64::min(f64::max(v, lo), hi);
        }
    });
    DisparityMap::from_grid(Grid::from_data(h, w, 1, out)?)
}

/// Conventional post-processing: average blend plus boundary reserves.
/// Only `boundary_range` and `ramp_slope` of the config are used.
pub fn conventional_pp(
    d_l: &DisparityMap,
    d_flip2: &DisparityMap,
    cfg: &PPConfig,
) -> Result<DisparityMap> {
    if !d_l.same_shape(d_flip2) {
        return Err(Error::ShapeMismatch("conventional_pp".into()));
    }
    cfg.validate()?;
    fused_pp(d_l, d_flip2, cfg, |_, a, b, _, _| (a + b) / 2.0)
}

/// Edge-guided post-processing: edge-weighted blend plus boundary reserves.
pub fn edge_guided_pp(
    d_l: &DisparityMap,
    d_flip2: &DisparityMap,
    cfg: &PPConfig,
) -> Result<DisparityMap> {
    if !d_l.same_shape(d_flip2) {
        return Err(Error::ShapeMismatch("edge_guided_pp".into()));
    }
    cfg.validate()?;
    let resp_r = gradient_response(d_l, cfg.detection_radius, EdgeDirection::RightEdge)?;
    let resp_l = gradient_response(d_flip2, cfg.detection_radius, EdgeDirection::LeftEdge)?;
    let (gain, offset, eps) = (cfg.gain, cfg.offset, cfg.eps);
    let (rr, rl) = (resp_r.data(), resp_l.data());
    fused_pp(d_l, d_flip2, cfg, move |i, a, b, lo, hi| {
        let e = sigmoid((rr[i] - offset) * gain);
        let e_pp = sigmoid((rl[i] - offset) * gain);
        let s = e + e_pp;
        let wgt = if s < eps { 0.5 } else { e / s };
        f64::min(f64::max(b + (a - b) * wgt, lo), hi)
    })
}

/// Full pipeline from a raw network output pair: `d_from_flipped` is the
/// prediction on the flipped image (d'_l) and is flipped back into alignment
/// here before the selected blend runs.
pub fn post_process(
    d_l: &DisparityMap,
    d_from_flipped: &DisparityMap,
    mode: PpMode,
    cfg: &PPConfig,
) -> Result<DisparityMap> {
    if !d_l.same_shape(d_from_flipped) {
        return Err(Error::ShapeMismatch("post_process".into()));
    }
    let d_flip2 = d_from_flipped.flip_horizontal();
    match mode {
        PpMode::None => Ok(d_l.clone()),
        PpMode::Conventional => conventional_pp(d_l, &d_flip2, cfg),
        PpMode::EdgeGuided => edge_guided_pp(d_l, &d_flip2, cfg),
    }
}
