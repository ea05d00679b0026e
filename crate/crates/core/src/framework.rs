//! The iterative cascade.
//!
//! Iteration `k` mixes the noisy input with the previous estimate,
//! `z̄ₖ = λₖ z + (1 − λₖ) ŷₖ₋₁`, runs the local denoiser at the level-matched
//! noise level, and passes the result through the nonlocal filter with
//! threshold `τₖ`. Block matching runs once, after the first denoiser call.

use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use crate::denoiser::{denoise, Denoiser, SigmaGrid};
use crate::error::{Error, Result};
use crate::image::{load_plane, Plane};
use crate::matching::{build_group_table, GroupTable, MatchConfig};
use crate::nlf::apply_nlf;

/// Image used for block matching.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum PilotSource {
    /// Output of the first denoiser call.
    #[default]
    FirstCnnfOutput,
    /// The noisy observation itself.
    NoisyInput,
    /// An estimate loaded from disk, e.g. produced by another filter.
    ExternalFile(PathBuf),
}

/// How strictly the threshold schedule is validated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScheduleMode {
    /// Thresholds strictly positive and strictly decreasing.
    #[default]
    Paper,
    /// Any finite nonnegative thresholds.
    Lab,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Standard deviation of the noise in the input.
    pub sigma: f64,
    /// Mixing steps λ₁…λ_K; λ₁ = 1, strictly decreasing, positive.
    pub lambdas: Vec<f64>,
    /// Nonlocal-filter thresholds τ₁…τ_K.
    pub taus: Vec<f64>,
    pub matching: MatchConfig,
    pub bm_pilot: PilotSource,
    pub mode: ScheduleMode,
    /// Keep z̄ₖ, ỹₖ and ŷₖ in the trace.
    pub keep_snapshots: bool,
}

impl RunConfig {
    /// Two iterations with λₖ = 1/k and τₖ = σλₖ/4.
    pub fn new(sigma: f64) -> Self {
        Self::with_iterations(sigma, 2)
    }

    pub fn with_iterations(sigma: f64, iterations: usize) -> Self {
        let lambdas = default_lambdas(iterations);
        let taus = default_taus(sigma, &lambdas);
        Self {
            sigma,
            lambdas,
            taus,
            matching: MatchConfig::default(),
            bm_pilot: PilotSource::default(),
            mode: ScheduleMode::Paper,
            keep_snapshots: false,
        }
    }

    pub fn iterations(&self) -> usize {
        self.lambdas.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.lambdas.is_empty() {
            return bad("at least one iteration is required".into());
        }
        if self.taus.len() != self.lambdas.len() {
            return bad(format!(
                "{} lambdas but {} taus",
                self.lambdas.len(),
                self.taus.len()
            ));
        }
        if self.lambdas[0] != 1.0 {
            return bad(format!("lambda_1 must be 1, got {}", self.lambdas[0]));
        }
        if self.lambdas.iter().any(|l| l.is_nan() || *l <= 0.0)
            || self.lambdas.windows(2).any(|w| w[0] <= w[1])
        {
            return bad(format!(
                "lambdas must be positive and strictly decreasing: {:?}",
                self.lambdas
            ));
        }
        match self.mode {
            ScheduleMode::Paper => {
                if self.taus.iter().any(|t| !(*t > 0.0 && t.is_finite()))
                    || self.taus.windows(2).any(|w| w[0] <= w[1])
                {
                    return bad(format!(
                        "taus must be positive and strictly decreasing: {:?}",
                        self.taus
                    ));
                }
            }
            ScheduleMode::Lab => {
                if self.taus.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
                    return bad(format!(
                        "taus must be finite and nonnegative: {:?}",
                        self.taus
                    ));
                }
            }
        }
        self.matching.validate()
    }
}

pub fn default_lambdas(iterations: usize) -> Vec<f64> {
    (1..=iterations).map(|k| 1.0 / k as f64).collect()
}

pub fn default_taus(sigma: f64, lambdas: &[f64]) -> Vec<f64> {
    lambdas.iter().map(|l| sigma * l / 4.0).collect()
}

/// Picks the supported noise level for a target `λₖσ` and the input scaling
/// that matches it.
///
/// For a discrete grid this is the largest level not above the target (or
/// the smallest level if none is), for a continuous grid the target clamped
/// into range. Returns `(sigma_eff, alpha)` with `alpha = sigma_eff / target`.
pub fn level_match(grid: &SigmaGrid, target: f64) -> (f64, f64) {
    debug_assert!(target > 0.0);
    let sigma_eff = match grid {
        SigmaGrid::Continuous { lo, hi } => target.clamp(*lo, *hi),
        SigmaGrid::Discrete(levels) => levels
            .iter()
            .copied()
            .filter(|&s| s <= target)
            .fold(None, |acc: Option<f64>, s| {
                Some(acc.map_or(s, |a| a.max(s)))
            })
            .unwrap_or(levels[0]),
    };
    (sigma_eff, sigma_eff / target)
}

/// Result of one level-matched denoiser call.
#[derive(Debug, Clone)]
pub struct LocalStep {
    pub output: Plane,
    pub sigma_eff: f64,
    pub alpha: f64,
    /// Range of the scaled input handed to the denoiser.
    pub scaled_min: f64,
    pub scaled_max: f64,
}

/// Computes `α⁻¹ · CNNF(α · input, ς)` where `(ς, α)` is the level match for
/// `target`. With `α = 1` the input reaches the denoiser untouched. The scaled
/// input is not clamped, even when `α > 1` pushes it past 255.
pub fn level_matched_denoise(
    denoiser: &dyn Denoiser,
    input: &Plane,
    target: f64,
) -> Result<LocalStep> {
    let (sigma_eff, alpha) = level_match(&denoiser.spec().sigma_grid, target);
    let out = if alpha == 1.0 {
        let (scaled_min, scaled_max) = input.min_max();
        LocalStep {
            output: denoise(denoiser, input, sigma_eff)?,
            sigma_eff,
            alpha,
            scaled_min,
            scaled_max,
        }
    } else {
        let scaled = input.map(|v| alpha * v);
        let (scaled_min, scaled_max) = scaled.min_max();
        LocalStep {
            output: denoise(denoiser, &scaled, sigma_eff)?.map(|v| v / alpha),
            sigma_eff,
            alpha,
            scaled_min,
            scaled_max,
        }
    };
    Ok(out)
}

/// The plane block matching runs on.
pub fn bm_pilot_plane(z: &Plane, y_tilde_1: &Plane, cfg: &RunConfig) -> Result<Plane> {
    z.check_dims(y_tilde_1)?;
    match &cfg.bm_pilot {
        PilotSource::FirstCnnfOutput => Ok(y_tilde_1.clone()),
        PilotSource::NoisyInput => Ok(z.clone()),
        PilotSource::ExternalFile(path) => {
            let p = load_plane(path)?;
            z.check_dims(&p)?;
            Ok(p)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshots {
    pub mixed: Plane,
    pub local: Plane,
    pub estimate: Plane,
}

/// What happened in one iteration.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub lambda: f64,
    pub tau: f64,
    /// λₖσ, the noise level the denoiser would ideally see.
    pub sigma_target: f64,
    /// Level actually passed to the denoiser.
    pub sigma_eff: f64,
    pub alpha: f64,
    /// Range of αₖz̄ₖ as fed to the denoiser.
    pub scaled_min: f64,
    pub scaled_max: f64,
    pub cnnf_seconds: f64,
    pub bm_seconds: f64,
    pub nlf_seconds: f64,
    #[serde(skip)]
    pub snapshots: Option<Snapshots>,
}

#[derive(Debug, Clone, Default)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    /// Number of group tables built during the run.
    pub table_builds: usize,
}

impl IterationTrace {
    /// One JSON object per iteration, newline-terminated.
    pub fn to_json_lines(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }
}

/// Runs the cascade on `z` and returns the final estimate with its trace.
pub fn run(z: &Plane, cfg: &RunConfig, denoiser: &dyn Denoiser) -> Result<(Plane, IterationTrace)> {
    cfg.validate()?;
    let (estimate, trace, _) = run_with_table(z, cfg, denoiser, None)?;
    Ok((estimate, trace))
}

/// Like [`run`], but uses `table` instead of matching, and returns the table
/// that was used.
pub fn run_with_table(
    z: &Plane,
    cfg: &RunConfig,
    denoiser: &dyn Denoiser,
    table: Option<GroupTable>,
) -> Result<(Plane, IterationTrace, GroupTable)> {
    cfg.validate()?;
    let mut trace = IterationTrace::default();
    let mut table = table;
    let mut previous: Option<Plane> = None;

    for (i, (&lambda, &tau)) in cfg.lambdas.iter().zip(&cfg.taus).enumerate() {
        let mixed = match &previous {
            // λ₁ = 1: the first input is z itself
            None => z.clone(),
            Some(prev) => z.zip_map(prev, |a, b| lambda * a + (1.0 - lambda) * b)?,
        };

        let sigma_target = lambda * cfg.sigma;
        let t = Instant::now();
        let step = level_matched_denoise(denoiser, &mixed, sigma_target)?;
        let cnnf_seconds = t.elapsed().as_secs_f64();
        let LocalStep {
            output: local,
            sigma_eff,
            alpha,
            scaled_min,
            scaled_max,
        } = step;

        let t = Instant::now();
        if table.is_none() {
            let pilot = bm_pilot_plane(z, &local, cfg)?;
            table = Some(build_group_table(&pilot, &cfg.matching)?);
            trace.table_builds += 1;
        }
        let bm_seconds = t.elapsed().as_secs_f64();
        let groups = table.as_ref().expect("table built above");

        let t = Instant::now();
        let estimate = apply_nlf(&local, groups, tau)?;
        let nlf_seconds = t.elapsed().as_secs_f64();

        let snapshots = cfg.keep_snapshots.then(|| Snapshots {
            mixed: mixed.clone(),
            local: local.clone(),
            estimate: estimate.clone(),
        });
        trace.records.push(IterationRecord {
            k: i + 1,
            lambda,
            tau,
            sigma_target,
            sigma_eff,
            alpha,
            scaled_min,
            scaled_max,
            cnnf_seconds,
            bm_seconds,
            nlf_seconds,
            snapshots,
        });
        previous = Some(estimate);
    }

    Ok((
        previous.expect("at least one iteration"),
        trace,
        table.expect("table built in the first iteration"),
    ))
}
