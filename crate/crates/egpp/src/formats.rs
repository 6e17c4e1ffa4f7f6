//! File I/O: PFM float maps, 16-bit PNG disparity maps, and evaluation
//! manifests.
//!
//! Disparity files are stored either in pixel units (PNG16, by convention)
//! or as raw floats (PFM, caller-declared units). Conversion to normalized
//! units happens exactly once at ingestion, in the callers.

use std::collections::HashMap;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{DisparityMap, Grid, Mask};
use crate::metrics::CameraModel;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

// ---------------------------------------------------------------------------
// PFM
// ---------------------------------------------------------------------------

struct PfmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> PfmCursor<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::PfmParse {
            path: self.path.to_path_buf(),
            offset: self.pos,
            message: message.into(),
        }
    }

    /// Reads a whitespace-delimited token and consumes the single
    /// whitespace byte that terminates it.
    fn token(&mut self) -> Result<&'a str> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("unexpected end of header"));
        }
        let token = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| self.err("header is not ASCII"))?;
        if self.pos < self.bytes.len() {
            self.pos += 1; // the terminating whitespace byte
        }
        Ok(token)
    }
}

/// Reads a PFM float map. `Pf` is single-channel, `PF` is three-channel;
/// rows are stored bottom-to-top and returned top-to-bottom. The sign of the
/// scale token selects the payload endianness; its magnitude is ignored.
pub fn read_pfm(path: &Path) -> Result<Grid> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    read_pfm_bytes(&bytes, path)
}

fn read_pfm_bytes(bytes: &[u8], path: &Path) -> Result<Grid> {
    let mut cur = PfmCursor {
        bytes,
        pos: 0,
        path,
    };
    let channels = match cur.token()? {
        "Pf" => 1,
        "PF" => 3,
        other => {
            return Err(cur.err(format!("bad magic {:?}, expected \"Pf\" or \"PF\"", other)));
        }
    };
    let width: usize = {
        let t = cur.token()?;
        t.parse()
            .map_err(|_| cur.err(format!("bad width {:?}", t)))?
    };
    let height: usize = {
        let t = cur.token()?;
        t.parse()
            .map_err(|_| cur.err(format!("bad height {:?}", t)))?
    };
    if width == 0 || height == 0 {
        return Err(cur.err(format!("degenerate dimensions {}x{}", width, height)));
    }
    let scale: f64 = {
        let t = cur.token()?;
        t.parse()
            .map_err(|_| cur.err(format!("bad scale {:?}", t)))?
    };
    if scale == 0.0 {
        return Err(cur.err("scale must be nonzero"));
    }
    let little_endian = scale < 0.0;

    let expected = width * height * channels * 4;
    let payload = &bytes[cur.pos..];
    if payload.len() != expected {
        return Err(cur.err(format!(
            "payload is {} bytes, expected {}",
            payload.len(),
            expected
        )));
    }
    let mut data = vec![0.0f64; width * height * channels];
    let row_elems = width * channels;
    for file_row in 0..height {
        let grid_row = height - 1 - file_row; // bottom-to-top storage
        for i in 0..row_elems {
            let at = (file_row * row_elems + i) * 4;
            let raw: [u8; 4] = payload[at..at + 4].try_into().unwrap();
            let v = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            if !v.is_finite() {
                return Err(Error::PfmParse {
                    path: path.to_path_buf(),
                    offset: cur.pos + at,
                    message: format!("non-finite sample {}", v),
                });
            }
            data[grid_row * row_elems + i] = v as f64;
        }
    }
    Grid::from_data(height, width, channels, data)
}

/// Writes a PFM float map: little-endian payload, scale -1.0, rows
/// bottom-to-top. The grid must be 1- or 3-channel and representable in f32.
pub fn write_pfm(path: &Path, grid: &Grid) -> Result<()> {
    let bytes = pfm_bytes(grid)?;
    fs::write(path, bytes).map_err(io_err(path))
}

/// The exact byte image `write_pfm` produces.
pub fn pfm_bytes(grid: &Grid) -> Result<Vec<u8>> {
    let magic = match grid.channels() {
        1 => "Pf",
        3 => "PF",
        n => {
            return Err(Error::ShapeMismatch(format!(
                "PFM supports 1 or 3 channels, got {}",
                n
            )));
        }
    };
    let mut out = Vec::with_capacity(32 + grid.data().len() * 4);
    out.extend_from_slice(format!("{}\n{} {}\n-1.0\n", magic, grid.width(), grid.height()).as_bytes());
    let row_elems = grid.width() * grid.channels();
    for grid_row in (0..grid.height()).rev() {
        let row = &grid.data()[grid_row * row_elems..][..row_elems];
        for (i, v) in row.iter().enumerate() {
            let f = *v as f32;
            if !f.is_finite() {
                return Err(Error::NonFinite(grid_row * row_elems + i));
            }
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// 16-bit PNG disparity
// ---------------------------------------------------------------------------

/// Reads a 16-bit grayscale PNG holding pixel-unit disparities scaled by
/// 256. Stored zeros mean "no measurement" and come back as invalid mask
/// entries (their disparity reads as 0).
pub fn read_png16_disparity(path: &Path) -> Result<(DisparityMap, Mask)> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| Error::PngFormat {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::PngFormat {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(Error::PngFormat {
            path: path.to_path_buf(),
            message: format!(
                "expected 16-bit grayscale, got {:?} {:?}",
                info.color_type, info.bit_depth
            ),
        });
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let payload = &buf[..info.buffer_size()];
    let mut data = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for pair in payload.chunks_exact(2) {
        let raw = u16::from_be_bytes([pair[0], pair[1]]);
        valid.push(raw != 0);
        data.push(raw as f64 / 256.0);
    }
    let map = DisparityMap::from_data(h, w, data)?;
    let mask = Mask::from_fn(h, w, |y, x| valid[y * w + x]);
    Ok((map, mask))
}

/// Writes pixel-unit disparities as a 16-bit grayscale PNG, value =
/// round(disparity * 256). Pixels marked invalid store 0.
pub fn write_png16_disparity(
    path: &Path,
    disparity_px: &DisparityMap,
    valid: Option<&Mask>,
) -> Result<()> {
    let (h, w) = (disparity_px.height(), disparity_px.width());
    if let Some(m) = valid {
        if m.height() != h || m.width() != w {
            return Err(Error::ShapeMismatch("png16 mask".into()));
        }
    }
    let mut bytes = Vec::with_capacity(h * w * 2);
    for y in 0..h {
        for x in 0..w {
            let ok = valid.is_none_or(|m| m.at(y, x));
            let raw = if ok {
                let scaled = (disparity_px.at(y, x) * 256.0).round();
                if scaled > u16::MAX as f64 {
                    return Err(Error::OutOfRange(format!(
                        "disparity {} px at ({}, {}) exceeds the 16-bit range",
                        disparity_px.at(y, x),
                        y,
                        x
                    )));
                }
                scaled as u16
            } else {
                0
            };
            bytes.extend_from_slice(&raw.to_be_bytes());
        }
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Sixteen);
    let mut writer = encoder.write_header().map_err(|e| Error::PngFormat {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    writer
        .write_image_data(&bytes)
        .map_err(|e| Error::PngFormat {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

/// Optional per-entry camera override.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CameraOverride {
    pub focal_px: Option<f64>,
    pub baseline_m: Option<f64>,
    pub width_px: Option<f64>,
}

impl CameraOverride {
    pub fn is_empty(&self) -> bool {
        self.focal_px.is_none() && self.baseline_m.is_none() && self.width_px.is_none()
    }

    pub fn apply(&self, base: &CameraModel) -> CameraModel {
        CameraModel {
            focal_px: self.focal_px.unwrap_or(base.focal_px),
            baseline_m: self.baseline_m.unwrap_or(base.baseline_m),
            width_px: self.width_px.unwrap_or(base.width_px),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub pred_path: PathBuf,
    pub gt_path: PathBuf,
    pub camera: CameraOverride,
    pub tag: Option<String>,
    pub line: usize,
}

impl ManifestEntry {
    pub fn label(&self) -> String {
        self.tag
            .clone()
            .unwrap_or_else(|| self.pred_path.display().to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

/// Loads a manifest: one record per line, tab-separated.
///
/// Schema: `pred<TAB>gt[<TAB>key=value ...]` with keys `f` (focal px),
/// `b` (baseline m), `w` (width px) and `tag`. Blank lines and lines
/// starting with `#` are skipped. Duplicate (pred, gt) pairs are rejected.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let base_dir = path
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("."));
    let mut entries = Vec::new();
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 || fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::ManifestParse {
                path: path.to_path_buf(),
                line: line_no,
                message: "expected at least pred<TAB>gt".into(),
            });
        }
        let key = (fields[0].to_string(), fields[1].to_string());
        if let Some(&first) = seen.get(&key) {
            return Err(Error::ManifestDuplicate {
                path: path.to_path_buf(),
                first_line: first,
                line: line_no,
            });
        }
        seen.insert(key, line_no);

        let mut camera = CameraOverride::default();
        let mut tag = None;
        for field in &fields[2..] {
            if field.is_empty() {
                continue;
            }
            let (k, v) = field.split_once('=').ok_or_else(|| Error::ManifestParse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("expected key=value, got {:?}", field),
            })?;
            let parse_num = |v: &str| -> Result<f64> {
                v.parse().map_err(|_| Error::ManifestParse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!("bad number {:?}", v),
                })
            };
            match k.to_ascii_lowercase().as_str() {
                "f" | "focal" => camera.focal_px = Some(parse_num(v)?),
                "b" | "baseline" => camera.baseline_m = Some(parse_num(v)?),
                "w" | "width" => camera.width_px = Some(parse_num(v)?),
                "tag" => tag = Some(v.to_string()),
                other => {
                    return Err(Error::ManifestParse {
                        path: path.to_path_buf(),
                        line: line_no,
                        message: format!("unknown key {:?}", other),
                    });
                }
            }
        }
        entries.push(ManifestEntry {
            pred_path: PathBuf::from(fields[0]),
            gt_path: PathBuf::from(fields[1]),
            camera,
            tag,
            line: line_no,
        });
    }
    Ok(Manifest { entries, base_dir })
}
