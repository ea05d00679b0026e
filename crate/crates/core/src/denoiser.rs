//! Pluggable local denoisers.
//!
//! A denoiser declares the noise levels it supports (its sigma grid) and maps
//! a noisy plane plus an assumed noise standard deviation to an estimate.
//! Three built-ins are provided as desk-scale baselines: `identity`, `gauss`
//! and `dct8`. Pretrained networks attach through [`ExternalDenoiser`], which
//! exchanges plane files with a subprocess.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{load_plane, save_plane, Plane, PlaneFormat};

/// Noise levels a denoiser was built for.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaGrid {
    /// Any sigma in `[lo, hi]`.
    Continuous { lo: f64, hi: f64 },
    /// Only these values; strictly increasing, non-empty.
    Discrete(Vec<f64>),
}

impl SigmaGrid {
    pub fn continuous(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::InvalidConfig(format!(
                "continuous grid needs lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(SigmaGrid::Continuous { lo, hi })
    }

    pub fn discrete(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidConfig("discrete grid is empty".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0))
            || values.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidConfig(format!(
                "discrete grid must be finite, positive and strictly increasing: {values:?}"
            )));
        }
        Ok(SigmaGrid::Discrete(values))
    }

    pub fn contains(&self, sigma: f64) -> bool {
        match self {
            SigmaGrid::Continuous { lo, hi } => (*lo..=*hi).contains(&sigma),
            SigmaGrid::Discrete(v) => v.contains(&sigma),
        }
    }

    /// DnCNN: one model per sigma in {5, 10, …, 75}.
    pub fn dncnn() -> Self {
        SigmaGrid::Discrete((1..=15).map(|k| 5.0 * k as f64).collect())
    }

    /// Wavelet DnCNN: models for sigma 15, 30 and 50.
    pub fn wdncnn() -> Self {
        SigmaGrid::Discrete(vec![15.0, 30.0, 50.0])
    }

    /// FFDNet: a single model for any sigma in [0, 75].
    pub fn ffdnet() -> Self {
        SigmaGrid::Continuous { lo: 0.0, hi: 75.0 }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "dncnn" => Some(Self::dncnn()),
            "wdncnn" => Some(Self::wdncnn()),
            "ffdnet" => Some(Self::ffdnet()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserSpec {
    pub name: String,
    pub sigma_grid: SigmaGrid,
}

pub trait Denoiser: Send + Sync {
    fn spec(&self) -> &DenoiserSpec;

    /// Denoises `input` assuming noise of standard deviation `sigma`.
    /// Callers go through [`denoise`], which checks the grid.
    fn denoise_unchecked(&self, input: &Plane, sigma: f64) -> Result<Plane>;
}

/// Runs `d` after checking that `sigma` lies on its grid.
pub fn denoise(d: &dyn Denoiser, input: &Plane, sigma: f64) -> Result<Plane> {
    let spec = d.spec();
    if sigma.is_nan() || sigma < 0.0 || !spec.sigma_grid.contains(sigma) {
        return Err(Error::SigmaOffGrid {
            name: spec.name.clone(),
            sigma,
        });
    }
    let out = d.denoise_unchecked(input, sigma)?;
    input.check_dims(&out)?;
    Ok(out)
}

/// Grid shared by the built-ins: they accept any sigma on the 8-bit scale.
fn builtin_grid() -> SigmaGrid {
    SigmaGrid::Continuous { lo: 0.0, hi: 255.0 }
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: &[&str] = &["identity", "gauss", "dct8"];

pub fn builtin(name: &str) -> Option<Box<dyn Denoiser>> {
    match name {
        "identity" => Some(Box::new(Identity::new())),
        "gauss" => Some(Box::new(Gauss::default())),
        "dct8" => Some(Box::new(Dct8::default())),
        _ => None,
    }
}

pub struct Identity {
    spec: DenoiserSpec,
}

impl Identity {
    pub fn new() -> Self {
        Self {
            spec: DenoiserSpec {
                name: "identity".into(),
                sigma_grid: builtin_grid(),
            },
        }
    }
}

impl Default for Identity {
    fn default() -> Self {
        Self::new()
    }
}

impl Denoiser for Identity {
    fn spec(&self) -> &DenoiserSpec {
        &self.spec
    }

    fn denoise_unchecked(&self, input: &Plane, _sigma: f64) -> Result<Plane> {
        Ok(input.clone())
    }
}

/// Runs `inner` under a different name and sigma grid, e.g. to emulate a
/// network trained only for a few noise levels with a built-in denoiser.
pub struct WithGrid {
    inner: Box<dyn Denoiser>,
    spec: DenoiserSpec,
}

impl WithGrid {
    pub fn new(inner: Box<dyn Denoiser>, name: impl Into<String>, sigma_grid: SigmaGrid) -> Self {
        Self {
            inner,
            spec: DenoiserSpec {
                name: name.into(),
                sigma_grid,
            },
        }
    }
}

impl Denoiser for WithGrid {
    fn spec(&self) -> &DenoiserSpec {
        &self.spec
    }

    fn denoise_unchecked(&self, input: &Plane, sigma: f64) -> Result<Plane> {
        self.inner.denoise_unchecked(input, sigma)
    }
}

/// Half-sample symmetric reflection of `i` into `[0, n)`.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Separable Gaussian blur whose spatial width grows with the noise level:
/// `spatial_std = sigma / sigma_per_pixel`, capped at `max_std`. Zero sigma is
/// the identity.
pub struct Gauss {
    spec: DenoiserSpec,
    pub sigma_per_pixel: f64,
    pub max_std: f64,
}

impl Default for Gauss {
    fn default() -> Self {
        Self {
            spec: DenoiserSpec {
                name: "gauss".into(),
                sigma_grid: builtin_grid(),
            },
            sigma_per_pixel: 25.0,
            max_std: 3.0,
        }
    }
}

impl Gauss {
    fn kernel(std: f64) -> Vec<f64> {
        let radius = (3.0 * std).ceil() as isize;
        let k: Vec<f64> = (-radius..=radius)
            .map(|x| (-(x * x) as f64 / (2.0 * std * std)).exp())
            .collect();
        let sum: f64 = k.iter().sum();
        k.into_iter().map(|v| v / sum).collect()
    }
}

impl Denoiser for Gauss {
    fn spec(&self) -> &DenoiserSpec {
        &self.spec
    }

    fn denoise_unchecked(&self, input: &Plane, sigma: f64) -> Result<Plane> {
        let std = (sigma / self.sigma_per_pixel).min(self.max_std);
        if std <= 0.0 {
            return Ok(input.clone());
        }
        let k = Self::kernel(std);
        let radius = (k.len() / 2) as isize;
        let (w, h) = (input.width(), input.height());
        let src = input.data();

        let mut tmp = vec![0.0; w * h];
        tmp.par_chunks_mut(w).enumerate().for_each(|(r, row)| {
            for (c, out) in row.iter_mut().enumerate() {
                *out = k
                    .iter()
                    .enumerate()
                    .map(|(j, kv)| kv * src[r * w + reflect(c as isize + j as isize - radius, w)])
                    .sum();
            }
        });
        let mut data = vec![0.0; w * h];
        data.par_chunks_mut(w).enumerate().for_each(|(r, row)| {
            for (c, out) in row.iter_mut().enumerate() {
                *out = k
                    .iter()
                    .enumerate()
                    .map(|(j, kv)| kv * tmp[reflect(r as isize + j as isize - radius, h) * w + c])
                    .sum();
            }
        });
        Plane::new(w, h, data)
    }
}

const DCT_N: usize = 8;

/// Orthonormal 8-point DCT-II matrix, `m[k][n]`.
pub fn dct8_matrix() -> [[f64; DCT_N]; DCT_N] {
    let mut m = [[0.0; DCT_N]; DCT_N];
    for (k, row) in m.iter_mut().enumerate() {
        let scale = if k == 0 {
            (1.0 / DCT_N as f64).sqrt()
        } else {
            (2.0 / DCT_N as f64).sqrt()
        };
        for (n, v) in row.iter_mut().enumerate() {
            *v = scale
                * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / (2 * DCT_N) as f64).cos();
        }
    }
    m
}

/// Sliding-window 8×8 DCT hard thresholding.
///
/// The plane is extended symmetrically by `stride` pixels on every side (more
/// on the bottom/right to land on the stride grid), every 8×8 block on the
/// stride grid is transformed, non-DC coefficients with magnitude at most
/// `threshold_factor · sigma` are zeroed, and reconstructions are averaged
/// with uniform weights.
pub struct Dct8 {
    spec: DenoiserSpec,
    pub threshold_factor: f64,
    pub stride: usize,
}

impl Default for Dct8 {
    fn default() -> Self {
        Self {
            spec: DenoiserSpec {
                name: "dct8".into(),
                sigma_grid: builtin_grid(),
            },
            threshold_factor: 2.7,
            stride: 4,
        }
    }
}

/// Geometry of the symmetric extension used by [`Dct8`].
#[derive(Debug, Clone, Copy)]
pub struct Dct8Layout {
    pub pad: usize,
    pub padded_width: usize,
    pub padded_height: usize,
    pub stride: usize,
}

impl Dct8Layout {
    pub fn new(width: usize, height: usize, stride: usize) -> Self {
        let pad = stride;
        let extent = |n: usize| {
            let base = n + 2 * pad;
            let steps = (base.saturating_sub(DCT_N)).div_ceil(stride);
            DCT_N + steps * stride
        };
        Self {
            pad,
            padded_width: extent(width),
            padded_height: extent(height),
            stride,
        }
    }

    /// Block top-left positions in the padded plane, raster order.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        let rows = (0..=self.padded_height - DCT_N).step_by(self.stride);
        rows.flat_map(|r| {
            (0..=self.padded_width - DCT_N)
                .step_by(self.stride)
                .map(move |c| (r, c))
        })
        .collect()
    }

    pub fn pad_plane(&self, p: &Plane) -> Vec<f64> {
        let (w, h) = (p.width(), p.height());
        let mut out = Vec::with_capacity(self.padded_width * self.padded_height);
        for r in 0..self.padded_height {
            let sr = reflect(r as isize - self.pad as isize, h);
            for c in 0..self.padded_width {
                out.push(p.get(sr, reflect(c as isize - self.pad as isize, w)));
            }
        }
        out
    }
}

impl Dct8 {
    pub fn layout(&self, width: usize, height: usize) -> Dct8Layout {
        Dct8Layout::new(width, height, self.stride)
    }

    /// Filters one 8×8 block in place: forward DCT, hard threshold on the AC
    /// coefficients, inverse DCT.
    pub fn filter_block(&self, m: &[[f64; DCT_N]; DCT_N], block: &mut [f64; 64], threshold: f64) {
        let mut tmp = [0.0; 64];
        let mut coef = [0.0; 64];
        // rows: tmp = block · Mᵀ
        for i in 0..DCT_N {
            for k in 0..DCT_N {
                let mut s = 0.0;
                for n in 0..DCT_N {
                    s += block[i * DCT_N + n] * m[k][n];
                }
                tmp[i * DCT_N + k] = s;
            }
        }
        // columns: coef = M · tmp
        for k in 0..DCT_N {
            for j in 0..DCT_N {
                let mut s = 0.0;
                for n in 0..DCT_N {
                    s += m[k][n] * tmp[n * DCT_N + j];
                }
                coef[k * DCT_N + j] = s;
            }
        }
        for c in coef.iter_mut().skip(1) {
            if c.abs() <= threshold {
                *c = 0.0;
            }
        }
        // inverse columns: tmp = Mᵀ · coef
        for n in 0..DCT_N {
            for j in 0..DCT_N {
                let mut s = 0.0;
                for k in 0..DCT_N {
                    s += m[k][n] * coef[k * DCT_N + j];
                }
                tmp[n * DCT_N + j] = s;
            }
        }
        // inverse rows: block = tmp · M
        for i in 0..DCT_N {
            for n in 0..DCT_N {
                let mut s = 0.0;
                for k in 0..DCT_N {
                    s += tmp[i * DCT_N + k] * m[k][n];
                }
                block[i * DCT_N + n] = s;
            }
        }
    }
}

impl Denoiser for Dct8 {
    fn spec(&self) -> &DenoiserSpec {
        &self.spec
    }

    fn denoise_unchecked(&self, input: &Plane, sigma: f64) -> Result<Plane> {
        let layout = self.layout(input.width(), input.height());
        let padded = layout.pad_plane(input);
        let pw = layout.padded_width;
        let m = dct8_matrix();
        let threshold = self.threshold_factor * sigma;

        let blocks = layout.blocks();
        let filtered: Vec<[f64; 64]> = blocks
            .par_iter()
            .map(|&(r, c)| {
                let mut b = [0.0; 64];
                for i in 0..DCT_N {
                    b[i * DCT_N..(i + 1) * DCT_N]
                        .copy_from_slice(&padded[(r + i) * pw + c..(r + i) * pw + c + DCT_N]);
                }
                self.filter_block(&m, &mut b, threshold);
                b
            })
            .collect();

        // raster-order accumulation keeps the sums independent of scheduling
        let mut num = vec![0.0; pw * layout.padded_height];
        let mut den = vec![0.0; pw * layout.padded_height];
        for (&(r, c), b) in blocks.iter().zip(&filtered) {
            for i in 0..DCT_N {
                for j in 0..DCT_N {
                    num[(r + i) * pw + c + j] += b[i * DCT_N + j];
                    den[(r + i) * pw + c + j] += 1.0;
                }
            }
        }

        let (w, h) = (input.width(), input.height());
        let mut data = Vec::with_capacity(w * h);
        for r in 0..h {
            for c in 0..w {
                let idx = (r + layout.pad) * pw + c + layout.pad;
                data.push(num[idx] / den[idx]);
            }
        }
        Plane::new(w, h, data)
    }
}

/// Formats `x` with six significant digits, trailing zeros trimmed, in plain
/// decimal notation (`37.5`, `50`, `0.333333`).
pub fn format_sigma(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// A denoiser running as a subprocess:
/// `<program> [args…] <input.npf> <output.npf> <sigma>`, exit status 0 on
/// success, both files in the native plane format.
pub struct ExternalDenoiser {
    spec: DenoiserSpec,
    program: PathBuf,
    args: Vec<String>,
    workdir: PathBuf,
    pub timeout: Duration,
    lock: Mutex<()>,
}

impl ExternalDenoiser {
    pub fn new(
        name: impl Into<String>,
        sigma_grid: SigmaGrid,
        program: impl Into<PathBuf>,
        args: Vec<String>,
        workdir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            spec: DenoiserSpec {
                name: name.into(),
                sigma_grid,
            },
            program: program.into(),
            args,
            workdir: workdir.into(),
            timeout: Duration::from_secs(300),
            lock: Mutex::new(()),
        }
    }

    /// Splits a command line on whitespace into program and leading args.
    pub fn from_command_line(
        name: impl Into<String>,
        sigma_grid: SigmaGrid,
        command: &str,
        workdir: impl Into<PathBuf>,
    ) -> Result<Self> {
        let mut parts = command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::InvalidConfig("empty external command".into()))?;
        let args = parts.map(str::to_string).collect();
        Ok(Self::new(name, sigma_grid, program, args, workdir))
    }

    pub fn workdir(&self) -> &Path {
        &self.workdir
    }

    fn run(&self, input: &Plane, sigma: f64) -> Result<Plane> {
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        std::fs::create_dir_all(&self.workdir).map_err(|e| Error::io(&self.workdir, e))?;
        let in_path = self.workdir.join("in.npf");
        let out_path = self.workdir.join("out.npf");
        save_plane(input, &in_path, PlaneFormat::Plane)?;
        match std::fs::remove_file(&out_path) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(Error::io(&out_path, e)),
        }

        let mut child = Command::new(&self.program)
            .args(&self.args)
            .arg(&in_path)
            .arg(&out_path)
            .arg(format_sigma(sigma))
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| {
                Error::External(format!("cannot start {}: {e}", self.program.display()))
            })?;

        let mut stderr = child.stderr.take().expect("stderr is piped");
        let reader = std::thread::spawn(move || {
            let mut buf = String::new();
            let _ = stderr.read_to_string(&mut buf);
            buf
        });

        let start = Instant::now();
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if start.elapsed() >= self.timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Error::External(format!(
                        "{} timed out after {:?}",
                        self.program.display(),
                        self.timeout
                    )));
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(5)),
                Err(e) => return Err(Error::External(format!("wait failed: {e}"))),
            }
        };
        let captured = reader.join().unwrap_or_default();
        if !status.success() {
            return Err(Error::External(format!(
                "{} exited with {status}: {}",
                self.program.display(),
                captured.trim()
            )));
        }
        let out = load_plane(&out_path)?;
        input.check_dims(&out)?;
        Ok(out)
    }
}

impl Denoiser for ExternalDenoiser {
    fn spec(&self) -> &DenoiserSpec {
        &self.spec
    }

    fn denoise_unchecked(&self, input: &Plane, sigma: f64) -> Result<Plane> {
        self.run(input, sigma)
    }
}
