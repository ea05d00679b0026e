//! Seeded-noise benchmark sweeps over a directory of clean images.
//!
//! Every (image, σ) pair gets its own noise realization, seeded from the
//! master seed and the image file name, so rows do not depend on directory
//! listing order. Two CSV documents come out of a sweep: the PSNR report,
//! which is byte-identical across reruns, and a per-stage timing report.
//!
//! The PSNR report pivots into a method-per-column table with, e.g.,
//! `pandas.read_csv(path, comment="#").pivot_table(index=["dataset", "sigma"],
//! columns="method", values="psnr_db")` on the `(mean)` rows.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use nn3d::denoiser::format_sigma;
use nn3d::framework::{level_matched_denoise, run};
use nn3d::{
    add_awgn, apply_nlf, build_group_table, load_plane, psnr, ConfigFile, Denoiser, Error,
    NoiseSpec, Plane,
};

pub const REPORT_HEADER: &str = "# nn3d-bench report v1";
pub const TIMING_HEADER: &str = "# nn3d-bench timings v1";
/// Image column value of per-dataset mean rows.
pub const MEAN_LABEL: &str = "(mean)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// The noisy observation, unprocessed.
    Noisy,
    /// One level-matched denoiser call, no nonlocal filtering.
    CnnfOnly,
    /// Nonlocal filter on the noisy input, τ = σ/4, groups matched on it.
    NlfOnly,
    /// The full cascade.
    Nn3d,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Noisy => "noisy",
            Method::CnnfOnly => "cnnf-only",
            Method::NlfOnly => "nlf-only",
            Method::Nn3d => "nn3d",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "noisy" => Ok(Method::Noisy),
            "cnnf-only" => Ok(Method::CnnfOnly),
            "nlf-only" => Ok(Method::NlfOnly),
            "nn3d" => Ok(Method::Nn3d),
            _ => Err(Error::InvalidConfig(format!(
                "unknown method `{s}` (expected noisy, cnnf-only, nlf-only or nn3d)"
            ))),
        }
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub cnnf: f64,
    pub bm: f64,
    pub nlf: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub dataset: String,
    pub image: String,
    pub sigma: f64,
    pub method: Method,
    pub denoiser: String,
    pub psnr: f64,
    pub times: StageTimes,
}

#[derive(Debug, Clone)]
pub struct MeanRow {
    pub dataset: String,
    pub sigma: f64,
    pub method: Method,
    pub denoiser: String,
    pub psnr: f64,
    pub images: usize,
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

fn fmt_psnr(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

impl BenchReport {
    /// Mean PSNR per (dataset, σ, method), in row order.
    pub fn means(&self) -> Vec<MeanRow> {
        let mut out: Vec<MeanRow> = Vec::new();
        for row in &self.rows {
            match out.iter_mut().find(|m| {
                m.dataset == row.dataset && m.sigma == row.sigma && m.method == row.method
            }) {
                Some(m) => {
                    m.psnr += row.psnr;
                    m.images += 1;
                }
                None => out.push(MeanRow {
                    dataset: row.dataset.clone(),
                    sigma: row.sigma,
                    method: row.method,
                    denoiser: row.denoiser.clone(),
                    psnr: row.psnr,
                    images: 1,
                }),
            }
        }
        for m in &mut out {
            m.psnr /= m.images as f64;
        }
        out.sort_by(|a, b| {
            a.dataset
                .cmp(&b.dataset)
                .then(a.sigma.partial_cmp(&b.sigma).unwrap_or(Ordering::Equal))
                .then(a.method.cmp(&b.method))
        });
        out
    }

    /// Mean PSNR of `method` at `sigma` over all images of all datasets.
    pub fn mean_psnr(&self, sigma: f64, method: Method) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.sigma == sigma && r.method == method)
            .map(|r| r.psnr)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// PSNR report: one row per (image, σ, method), then the per-dataset
    /// means. Contains no timing data and is stable across reruns.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{REPORT_HEADER}\ndataset,image,sigma,method,denoiser,psnr_db\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.dataset,
                r.image,
                format_sigma(r.sigma),
                r.method.label(),
                r.denoiser,
                fmt_psnr(r.psnr)
            );
        }
        for m in self.means() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                m.dataset,
                MEAN_LABEL,
                format_sigma(m.sigma),
                m.method.label(),
                m.denoiser,
                fmt_psnr(m.psnr)
            );
        }
        s
    }

    /// Timing report with the same row keys as [`BenchReport::to_csv`].
    pub fn timings_csv(&self) -> String {
        let mut s = format!(
            "{TIMING_HEADER}\ndataset,image,sigma,method,denoiser,cnnf_s,bm_s,nlf_s,total_s\n"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
                r.dataset,
                r.image,
                format_sigma(r.sigma),
                r.method.label(),
                r.denoiser,
                r.times.cnnf,
                r.times.bm,
                r.times.nlf,
                r.times.total
            );
        }
        s
    }
}

/// 64-bit FNV-1a over the little-endian master seed followed by the name
/// bytes, passed through the SplitMix64 finalizer.
pub fn image_seed(master: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in master.to_le_bytes().iter().chain(name.as_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    /// (file name, clean plane), sorted by file name.
    pub images: Vec<(String, Plane)>,
}

const IMAGE_EXTENSIONS: &[&str] = &["pgm", "png", "npf"];

/// Loads every `.pgm`, `.png` and `.npf` file in `dir` (not recursive).
pub fn load_dataset(dir: impl AsRef<Path>) -> nn3d::Result<Dataset> {
    let dir = dir.as_ref();
    let io = |e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    };
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "{}: no .pgm, .png or .npf images found",
            dir.display()
        )));
    }
    paths.sort();
    let images = paths
        .iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            load_plane(p).map(|plane| (name, plane))
        })
        .collect::<nn3d::Result<_>>()?;
    let name = dir
        .canonicalize()
        .ok()
        .and_then(|d| d.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "dataset".into());
    Ok(Dataset { name, images })
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub sigmas: Vec<f64>,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Schedule and matching overrides for the cascade; `sigma` is ignored
    /// and set per row.
    pub config: ConfigFile,
}

/// Runs one method on the noisy plane `z`.
pub fn run_method(
    method: Method,
    z: &Plane,
    sigma: f64,
    config: &ConfigFile,
    denoiser: &dyn Denoiser,
) -> nn3d::Result<(Plane, StageTimes)> {
    let start = Instant::now();
    let mut times = StageTimes::default();
    let estimate = match method {
        Method::Noisy => z.clone(),
        Method::CnnfOnly => {
            let out = level_matched_denoise(denoiser, z, sigma)?.output;
            times.cnnf = start.elapsed().as_secs_f64();
            out
        }
        Method::NlfOnly => {
            let cfg = ConfigFile {
                sigma: Some(sigma),
                ..config.clone()
            }
            .run_config()?;
            let t = Instant::now();
            let table = build_group_table(z, &cfg.matching)?;
            times.bm = t.elapsed().as_secs_f64();
            let t = Instant::now();
            let out = apply_nlf(z, &table, sigma / 4.0)?;
            times.nlf = t.elapsed().as_secs_f64();
            out
        }
        Method::Nn3d => {
            let cfg = ConfigFile {
                sigma: Some(sigma),
                ..config.clone()
            }
            .run_config()?;
            let (out, trace) = run(z, &cfg, denoiser)?;
            for r in &trace.records {
                times.cnnf += r.cnnf_seconds;
                times.bm += r.bm_seconds;
                times.nlf += r.nlf_seconds;
            }
            out
        }
    };
    times.total = start.elapsed().as_secs_f64();
    Ok((estimate, times))
}

pub fn run_bench(
    dataset: &Dataset,
    opts: &BenchOptions,
    denoiser: &dyn Denoiser,
) -> nn3d::Result<BenchReport> {
    if opts.methods.is_empty() || opts.sigmas.is_empty() {
        return Err(Error::InvalidConfig(
            "at least one method and one sigma are required".into(),
        ));
    }
    let mut methods = opts.methods.clone();
    methods.sort();
    methods.dedup();
    let mut rows = Vec::new();
    for (name, clean) in &dataset.images {
        let seed = image_seed(opts.seed, name);
        for &sigma in &opts.sigmas {
            let z = add_awgn(clean, NoiseSpec::new(sigma, seed)?);
            for &method in &methods {
                let (estimate, times) = run_method(method, &z, sigma, &opts.config, denoiser)?;
                rows.push(BenchRow {
                    dataset: dataset.name.clone(),
                    image: name.clone(),
                    sigma,
                    method,
                    denoiser: denoiser.spec().name.clone(),
                    psnr: psnr(clean, &estimate)?,
                    times,
                });
            }
        }
    }
    rows.sort_by(|a, b| {
        a.image
            .cmp(&b.image)
            .then(a.sigma.partial_cmp(&b.sigma).unwrap_or(Ordering::Equal))
            .then(a.method.cmp(&b.method))
    });
    Ok(BenchReport { rows })
}
