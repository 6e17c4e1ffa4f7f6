//! Row-major 2-D float grids plus the flip / correlation / resize primitives
//! every other module builds on.
//!
//! All operations are pure: inputs are borrowed immutably and a fresh grid is
//! returned. Values are kept finite; constructors reject NaN and infinities.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Dense H x W x C grid of finite samples, row-major with interleaved
/// channels: `index = (y * width + x) * channels + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        check_dims(height, width, channels)?;
        if !value.is_finite() {
            return Err(Error::NonFinite(0));
        }
        Ok(Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        })
    }

    /// Builds a grid from row-major data, validating length and finiteness.
    pub fn from_data(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width, channels)?;
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "data length {} does not match {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(height, width, channels)?;
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::from_data(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.shape() == other.shape()
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Elementwise map. The closure must return finite values.
    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Grid {
        let mut data = vec![0.0; self.data.len()];
        let row = self.width * self.channels;
        data.par_chunks_mut(row)
            .zip(self.data.par_chunks(row))
            .for_each(|(dst, src)| {
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = f(*s);
                }
            });
        Grid {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data,
        }
    }

    /// Elementwise combination of two grids of identical shape.
    pub fn zip_map(&self, other: &Grid, f: impl Fn(f64, f64) -> f64 + Sync) -> Result<Grid> {
        if !self.same_shape(other) {
            return Err(shape_error("zip_map", self, other));
        }
        let mut data = vec![0.0; self.data.len()];
        let row = self.width * self.channels;
        data.par_chunks_mut(row)
            .zip(self.data.par_chunks(row).zip(other.data.par_chunks(row)))
            .for_each(|(dst, (a, b))| {
                for (d, (x, y)) in dst.iter_mut().zip(a.iter().zip(b)) {
                    *d = f(*x, *y);
                }
            });
        Ok(Grid {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data,
        })
    }

    /// Mirrors the grid about its vertical axis: out(y, x, c) = in(y, W-1-x, c).
    pub fn flip_horizontal(&self) -> Grid {
        let (_, w, ch) = self.shape();
        let mut data = vec![0.0; self.data.len()];
        let row = w * ch;
        data.par_chunks_mut(row)
            .zip(self.data.par_chunks(row))
            .for_each(|(dst, src)| {
                for x in 0..w {
                    let sx = w - 1 - x;
                    dst[x * ch..(x + 1) * ch].copy_from_slice(&src[sx * ch..(sx + 1) * ch]);
                }
            });
        Grid {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data,
        }
    }

    /// Bilinear resize with half-pixel-aligned sampling.
    ///
    /// Source coordinates are `(i + 0.5) * src / dst - 0.5`, clamped to the
    /// source extent, so resizing to the same shape is the identity and the
    /// output stays inside the input's min/max envelope.
    pub fn resize_bilinear(&self, new_height: usize, new_width: usize) -> Result<Grid> {
        if new_height == 0 || new_width == 0 {
            return Err(Error::InvalidDimension(format!(
                "resize target {}x{}",
                new_height, new_width
            )));
        }
        let (h, w, ch) = self.shape();
        let sy_scale = h as f64 / new_height as f64;
        let sx_scale = w as f64 / new_width as f64;
        let row = new_width * ch;
        let mut data = vec![0.0; new_height * row];
        data.par_chunks_mut(row).enumerate().for_each(|(y, dst)| {
            let sy = ((y as f64 + 0.5) * sy_scale - 0.5).clamp(0.0, (h - 1) as f64);
            let y0 = sy.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let fy = sy - y0 as f64;
            for x in 0..new_width {
                let sx = ((x as f64 + 0.5) * sx_scale - 0.5).clamp(0.0, (w - 1) as f64);
                let x0 = sx.floor() as usize;
                let x1 = (x0 + 1).min(w - 1);
                let fx = sx - x0 as f64;
                for c in 0..ch {
                    let v00 = self.at(y0, x0, c);
                    let v01 = self.at(y0, x1, c);
                    let v10 = self.at(y1, x0, c);
                    let v11 = self.at(y1, x1, c);
                    let top = v00 + fx * (v01 - v00);
                    let bot = v10 + fx * (v11 - v10);
                    dst[x * ch + c] = top + fy * (bot - top);
                }
            }
        });
        Ok(Grid {
            height: new_height,
            width: new_width,
            channels: ch,
            data,
        })
    }
}

fn check_dims(height: usize, width: usize, channels: usize) -> Result<()> {
    if height == 0 || width == 0 || channels == 0 {
        return Err(Error::InvalidDimension(format!(
            "{}x{}x{}",
            height, width, channels
        )));
    }
    Ok(())
}

fn shape_error(op: &str, a: &Grid, b: &Grid) -> Error {
    Error::ShapeMismatch(format!(
        "{}: {:?} vs {:?}",
        op,
        a.shape(),
        b.shape()
    ))
}

/// Single-channel grid of non-negative disparities, in normalized units
/// (fraction of image width).
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap(Grid);

impl DisparityMap {
    /// Wraps a single-channel grid, rejecting negative values.
    pub fn from_grid(grid: Grid) -> Result<Self> {
        if grid.channels() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "disparity map must have 1 channel, got {}",
                grid.channels()
            )));
        }
        if let Some((i, &v)) = grid.data().iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::NegativeDisparity { index: i, value: v });
        }
        Ok(Self(grid))
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::from_grid(Grid::filled(height, width, 1, value)?)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::from_grid(Grid::from_fn(height, width, 1, |y, x, _| f(y, x))?)
    }

    pub fn from_data(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_grid(Grid::from_data(height, width, 1, data)?)
    }

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

    pub fn same_shape(&self, other: &DisparityMap) -> bool {
        self.0.same_shape(&other.0)
    }

    pub fn flip_horizontal(&self) -> DisparityMap {
        DisparityMap(self.0.flip_horizontal())
    }
}

/// 2-D correlation kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDimension(format!("kernel {}x{}", rows, cols)));
        }
        if weights.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "kernel weights length {} does not match {}x{}",
                weights.len(),
                rows,
                cols
            )));
        }
        if let Some(i) = weights.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            rows,
            cols,
            weights,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.weights[r * self.cols + c]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Cross-correlates a single- or multi-channel grid with a kernel, using
/// replicate (clamp-to-edge) padding.
///
/// The kernel center sits at `(rows / 2, cols / 2)`. Replicate padding keeps
/// the operation total, so kernels larger than the grid are allowed: every
/// sample index is clamped into the grid.
pub fn correlate2d(grid: &Grid, kernel: &Kernel) -> Grid {
    let (h, w, ch) = grid.shape();
    let cy = (kernel.rows() / 2) as isize;
    let cx = (kernel.cols() / 2) as isize;
    let row = w * ch;
    let mut data = vec![0.0; h * row];
    data.par_chunks_mut(row).enumerate().for_each(|(y, dst)| {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for ky in 0..kernel.rows() {
                    let sy = clamp_index(y as isize + ky as isize - cy, h);
                    for kx in 0..kernel.cols() {
                        let sx = clamp_index(x as isize + kx as isize - cx, w);
                        acc += kernel.at(ky, kx) * grid.at(sy, sx, c);
                    }
                }
                dst[x * ch + c] = acc;
            }
        }
    });
    Grid::from_data(h, w, ch, data).expect("correlation of finite inputs is finite")
}

#[inline]
pub(crate) fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Boolean validity mask with the same row-major layout as a 1-channel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn all_true(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![true; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::ShapeMismatch(format!(
                "mask and: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(Mask {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| *a && *b)
                .collect(),
        })
    }
}
