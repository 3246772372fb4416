//! Binary (P5) portable graymaps and explanation heatmaps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{DatasetTable, Split};
use crate::error::{Error, Result};
use crate::numerics::Mat64;

/// Raw P5 image. Samples are one byte each when `maxval < 256`, otherwise
/// two bytes big-endian.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

impl PgmImage {
    /// Pixels scaled to `[0, 1]`, row-major.
    pub fn to_unit(&self) -> Vec<f64> {
        let m = f64::from(self.maxval);
        self.pixels.iter().map(|p| f64::from(*p) / m).collect()
    }

    /// Quantises `[0, 1]` values (clamped) to `0..=maxval`.
    pub fn from_unit(values: &[f64], height: usize, width: usize, maxval: u16) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::dim(format!(
                "{} values for a {height}x{width} image",
                values.len()
            )));
        }
        if maxval == 0 {
            return Err(Error::config("maxval must be at least 1"));
        }
        let m = f64::from(maxval);
        let pixels = values
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * m).round() as u16)
            .collect();
        Ok(Self {
            width,
            height,
            maxval,
            pixels,
        })
    }
}

pub fn read_pgm(bytes: &[u8], path: &Path) -> Result<PgmImage> {
    let err = |msg: &str| Error::parse(path, msg.to_string());
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(err("bad magic, expected binary PGM `P5`"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|b| *b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(err("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(err("expected a number in header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err("header number out of range"))?;
    }
    // Exactly one whitespace byte separates the header from the raster.
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(err("missing whitespace after maxval"));
    }
    pos += 1;

    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(err("maxval must be in 1..=65535"));
    }
    let bpp = if maxval < 256 { 1 } else { 2 };
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(bpp))
        .ok_or_else(|| err("image dimensions overflow"))?;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(err(&format!(
            "truncated payload: expected {need} bytes, found {}",
            payload.len()
        )));
    }
    let pixels = if bpp == 1 {
        payload[..need].iter().map(|b| u16::from(*b)).collect()
    } else {
        payload[..need]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    Ok(PgmImage {
        width,
        height,
        maxval: maxval as u16,
        pixels,
    })
}

pub fn write_pgm(img: &PgmImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    if img.maxval < 256 {
        out.extend(img.pixels.iter().map(|p| *p as u8));
    } else {
        for p in &img.pixels {
            out.extend_from_slice(&p.to_be_bytes());
        }
    }
    out
}

/// Loads a P5 file as a one-row table with pixels in `[0, 1]`.
pub fn load_pgm(path: &Path) -> Result<DatasetTable> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = read_pgm(&bytes, path)?;
    let row = Mat64::new(1, img.width * img.height, img.to_unit())?;
    DatasetTable::new(row, Split::Test).with_shape(img.height, img.width)
}

/// Writes `[0, 1]` values as a P5 file.
pub fn save_pgm(values: &[f64], shape: (usize, usize), maxval: u16, path: &Path) -> Result<()> {
    let img = PgmImage::from_unit(values, shape.0, shape.1, maxval)?;
    std::fs::write(path, write_pgm(&img)).map_err(|e| Error::io(path, e))
}

/// Per-element contributions `θ_j · x_j` of an explanation to its logit.
pub fn contributions(theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != x.len() {
        return Err(Error::dim(format!(
            "explanation has {} elements, input has {}",
            theta.len(),
            x.len()
        )));
    }
    Ok(theta.iter().zip(x).map(|(t, v)| t * v).collect())
}

/// Scaling applied when rendering a heatmap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapScale {
    pub min: f64,
    pub max: f64,
    pub maxval: u16,
}

const HEATMAP_MAXVAL: u16 = 255;

/// Renders `|values|` min-max scaled to `0..=255` as P5 and records the
/// scaling in `<path>.txt`. A constant map renders as all zeros.
pub fn save_heatmap(values: &[f64], shape: (usize, usize), path: &Path) -> Result<HeatmapScale> {
    let (h, w) = shape;
    if values.len() != h * w {
        return Err(Error::dim(format!(
            "{} values for a {h}x{w} heatmap",
            values.len()
        )));
    }
    let mags: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let min = mags.iter().copied().fold(f64::INFINITY, f64::min);
    let max = mags.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let unit: Vec<f64> = if range > 0.0 {
        mags.iter().map(|m| (m - min) / range).collect()
    } else {
        vec![0.0; mags.len()]
    };
    save_pgm(&unit, shape, HEATMAP_MAXVAL, path)?;

    let scale = HeatmapScale {
        min: if mags.is_empty() { 0.0 } else { min },
        max: if mags.is_empty() { 0.0 } else { max },
        maxval: HEATMAP_MAXVAL,
    };
    let mut side = String::new();
    let _ = writeln!(side, "statistic = abs_contribution");
    let _ = writeln!(side, "min = {}", scale.min);
    let _ = writeln!(side, "max = {}", scale.max);
    let _ = writeln!(side, "maxval = {}", scale.maxval);
    let side_path = sidecar_path(path);
    std::fs::write(&side_path, side).map_err(|e| Error::io(&side_path, e))?;
    Ok(scale)
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}
