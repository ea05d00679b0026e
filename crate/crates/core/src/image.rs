//! Single-channel floating-point planes and their file formats.
//!
//! Samples live on the [0, 255] scale as `f64`. Three on-disk formats are
//! understood: binary (P5) and ASCII (P2) 8-bit PGM, 8-bit grayscale PNG, and
//! the native plane format (`NN3DPF01`), which stores `f32` samples. Loading
//! is bit-exact; saving rounds each sample to the nearest `f32`, so planes
//! whose samples are already `f32` values round-trip unchanged.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Magic bytes opening a native plane file.
pub const PLANE_MAGIC: &[u8; 8] = b"NN3DPF01";

const PNG_SIGNATURE: &[u8; 8] = b"\x89PNG\r\n\x1a\n";

/// A row-major grayscale image.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

/// Top-left corner of a square block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockCoord {
    pub row: usize,
    pub col: usize,
}

impl BlockCoord {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Output encodings accepted by [`save_plane`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaneFormat {
    /// 8-bit binary PGM; samples are clamped to [0, 255] and rounded.
    Pgm8,
    /// Native little-endian `f32` plane file.
    Plane,
}

impl PlaneFormat {
    /// Picks a format from a file extension: `.npf` is the native format,
    /// `.pgm` is 8-bit PGM.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "npf" => Some(PlaneFormat::Plane),
            "pgm" => Some(PlaneFormat::Pgm8),
            _ => None,
        }
    }
}

impl Plane {
    /// Builds a plane from row-major samples.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidConfig(format!(
                "plane dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::SizeMismatch(width * height, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("plane samples must be finite".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0 && value.is_finite());
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds a plane by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0);
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn same_dims(&self, other: &Plane) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_dims(&self, other: &Plane) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected_w: self.width,
                expected_h: self.height,
                got_w: other.width,
                got_h: other.height,
            })
        }
    }

    /// Applies `f` to every sample. `f` must keep samples finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Plane {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Pixelwise `f(self, other)`; dimensions must agree.
    pub fn zip_map(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Result<Plane> {
        self.check_dims(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Plane {
            width: self.width,
            height: self.height,
            data,
        })
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Largest absolute pixelwise difference.
    pub fn max_abs_diff(&self, other: &Plane) -> Result<f64> {
        self.check_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn contains_block(&self, c: BlockCoord, n1: usize) -> bool {
        n1 >= 1 && c.row + n1 <= self.height && c.col + n1 <= self.width
    }

    /// Copies the `n1`×`n1` window at `c` into a row-major vector.
    pub fn extract_block(&self, c: BlockCoord, n1: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; n1 * n1];
        self.extract_block_into(c, n1, &mut out)?;
        Ok(out)
    }

    pub fn extract_block_into(&self, c: BlockCoord, n1: usize, out: &mut [f64]) -> Result<()> {
        if !self.contains_block(c, n1) {
            return Err(Error::OutOfBounds {
                row: c.row,
                col: c.col,
                n1,
                width: self.width,
                height: self.height,
            });
        }
        if out.len() != n1 * n1 {
            return Err(Error::SizeMismatch(n1 * n1, out.len()));
        }
        for (i, dst) in out.chunks_exact_mut(n1).enumerate() {
            let start = (c.row + i) * self.width + c.col;
            dst.copy_from_slice(&self.data[start..start + n1]);
        }
        Ok(())
    }
}

/// Reads a plane from PGM, PNG, or the native plane format. The format is
/// detected from the file contents, not its extension.
pub fn load_plane(path: impl AsRef<Path>) -> Result<Plane> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;

    if bytes.starts_with(PLANE_MAGIC) {
        decode_plane_format(path, &bytes)
    } else if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(path, &bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        decode_pgm(path, &bytes)
    } else {
        Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "not a PGM, PNG, or plane file".into(),
        })
    }
}

/// Writes a plane in the requested format.
pub fn save_plane(p: &Plane, path: impl AsRef<Path>, format: PlaneFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        PlaneFormat::Plane => encode_plane_format(p),
        PlaneFormat::Pgm8 => encode_pgm8(p),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Clamp to [0, 255] then round half away from zero.
#[inline]
pub fn quantize_u8(v: f64) -> u8 {
    v.clamp(0.0, 255.0).round() as u8
}

fn encode_plane_format(p: &Plane) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * p.data.len());
    out.extend_from_slice(PLANE_MAGIC);
    out.extend_from_slice(&(p.width as u32).to_le_bytes());
    out.extend_from_slice(&(p.height as u32).to_le_bytes());
    for &v in &p.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn decode_plane_format(path: &Path, bytes: &[u8]) -> Result<Plane> {
    if bytes.len() < 16 {
        return Err(Error::malformed(path, "header truncated"));
    }
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if width == 0 || height == 0 {
        return Err(Error::malformed(path, "zero dimension"));
    }
    let payload = &bytes[16..];
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::malformed(path, "dimensions overflow"))?;
    if payload.len() != expected {
        return Err(Error::malformed(
            path,
            format!(
                "header declares {width}x{height} ({} samples) but payload holds {} bytes",
                width * height,
                payload.len()
            ),
        ));
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::malformed(path, "non-finite sample"));
    }
    Ok(Plane {
        width,
        height,
        data,
    })
}

fn encode_pgm8(p: &Plane) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", p.width, p.height).into_bytes();
    out.extend(p.data.iter().map(|&v| quantize_u8(v)));
    out
}

struct PgmHeader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PgmHeader<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn next_uint(&mut self) -> Option<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()?
            .parse()
            .ok()
    }
}

fn decode_pgm(path: &Path, bytes: &[u8]) -> Result<Plane> {
    let ascii = bytes.starts_with(b"P2");
    let mut hdr = PgmHeader { bytes, pos: 2 };
    let (width, height, maxval) = match (hdr.next_uint(), hdr.next_uint(), hdr.next_uint()) {
        (Some(w), Some(h), Some(m)) => (w, h, m),
        _ => return Err(Error::malformed(path, "bad PGM header")),
    };
    if width == 0 || height == 0 {
        return Err(Error::malformed(path, "zero dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("PGM maxval {maxval}; only 8-bit images are supported"),
        });
    }
    let n = width * height;
    let data: Vec<f64> = if ascii {
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let v = hdr
                .next_uint()
                .ok_or_else(|| Error::malformed(path, "PGM payload truncated"))?;
            data.push(v as f64);
        }
        data
    } else {
        // exactly one whitespace byte separates maxval from the raster
        let start = hdr.pos + 1;
        let payload = bytes.get(start..).unwrap_or(&[]);
        if payload.len() != n {
            return Err(Error::malformed(
                path,
                format!(
                    "header declares {width}x{height} but payload holds {} bytes",
                    payload.len()
                ),
            ));
        }
        payload.iter().map(|&b| b as f64).collect()
    };
    Ok(Plane {
        width,
        height,
        data,
    })
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<Plane> {
    let png_err = |e: png::DecodingError| Error::malformed(path, e.to_string());
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(png_err)?;
    let (color, depth) = reader.output_color_type();
    if color != png::ColorType::Grayscale || depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("PNG is {color:?} at {depth:?}; only 8-bit grayscale is supported"),
        });
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::malformed(path, "PNG too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let (width, height) = (info.width as usize, info.height as usize);
    let data = buf[..info.buffer_size()]
        .chunks_exact(info.line_size)
        .flat_map(|line| line[..width].iter().map(|&b| b as f64))
        .collect::<Vec<_>>();
    Plane::new(width, height, data)
}
