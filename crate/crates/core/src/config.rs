//! Flat key-value run configuration files.
//!
//! A config file is a TOML document with top-level keys only:
//!
//! ```toml
//! sigma = 50
//! iterations = 2
//! lambda = [1.0, 0.5]
//! tau = [12.5, 6.25]
//! mode = "paper"            # or "lab"
//! n1 = 10
//! n2 = 32
//! search_radius = 19
//! ref_stride = 5
//! bm_pilot = "first_cnnf_output"   # "noisy_input" | "external_file"
//! pilot_file = "pilot.npf"
//! denoiser = "dct8"
//! grid = "wdncnn"                  # preset, or grid_values = [15, 30, 50]
//! external = "python3 dncnn.py"
//! timeout_secs = 300
//! ```
//!
//! Every key is optional; unset keys fall back to the defaults of
//! [`RunConfig::new`].

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::framework::{default_lambdas, default_taus, PilotSource, RunConfig, ScheduleMode};
use crate::matching::MatchConfig;

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub sigma: Option<f64>,
    pub iterations: Option<usize>,
    pub lambda: Option<Vec<f64>>,
    pub tau: Option<Vec<f64>>,
    pub mode: Option<String>,
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub search_radius: Option<usize>,
    pub ref_stride: Option<usize>,
    pub bm_pilot: Option<String>,
    pub pilot_file: Option<PathBuf>,
    pub denoiser: Option<String>,
    pub grid: Option<String>,
    pub grid_values: Option<Vec<f64>>,
    pub external: Option<String>,
    pub timeout_secs: Option<u64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::malformed(path, e.to_string()))
    }

    /// Overlays `other` on `self`: keys set in `other` win.
    pub fn merged(mut self, other: ConfigFile) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            sigma,
            iterations,
            lambda,
            tau,
            mode,
            n1,
            n2,
            search_radius,
            ref_stride,
            bm_pilot,
            pilot_file,
            denoiser,
            grid,
            grid_values,
            external,
            timeout_secs
        );
        self
    }

    /// Resolves the schedule and matching keys into a validated
    /// [`RunConfig`]. An explicit `tau` without an explicit `mode` selects
    /// lab mode.
    pub fn run_config(&self) -> Result<RunConfig> {
        let sigma = self
            .sigma
            .ok_or_else(|| Error::InvalidConfig("sigma is required".into()))?;
        let iterations = match (&self.iterations, &self.lambda, &self.tau) {
            (Some(k), _, _) => *k,
            (None, Some(l), _) => l.len(),
            (None, None, Some(t)) => t.len(),
            (None, None, None) => 2,
        };
        let lambdas = self
            .lambda
            .clone()
            .unwrap_or_else(|| default_lambdas(iterations));
        if lambdas.len() != iterations {
            return Err(Error::InvalidConfig(format!(
                "iterations = {iterations} but {} lambdas given",
                lambdas.len()
            )));
        }
        let taus = self
            .tau
            .clone()
            .unwrap_or_else(|| default_taus(sigma, &lambdas));
        let mode = match self.mode.as_deref() {
            Some("paper") => ScheduleMode::Paper,
            Some("lab") => ScheduleMode::Lab,
            Some(other) => {
                return Err(Error::InvalidConfig(format!(
                    "mode must be `paper` or `lab`, got `{other}`"
                )))
            }
            None if self.tau.is_some() => ScheduleMode::Lab,
            None => ScheduleMode::Paper,
        };
        let defaults = MatchConfig::default();
        let matching = MatchConfig {
            n1: self.n1.unwrap_or(defaults.n1),
            n2: self.n2.unwrap_or(defaults.n2),
            search_radius: self.search_radius.unwrap_or(defaults.search_radius),
            ref_stride: self.ref_stride.unwrap_or(defaults.ref_stride),
        };
        let bm_pilot = match self.bm_pilot.as_deref().map(|s| s.replace('-', "_")) {
            None => match &self.pilot_file {
                Some(p) => PilotSource::ExternalFile(p.clone()),
                None => PilotSource::FirstCnnfOutput,
            },
            Some(s) if s == "first_cnnf_output" => PilotSource::FirstCnnfOutput,
            Some(s) if s == "noisy_input" => PilotSource::NoisyInput,
            Some(s) if s == "external_file" => {
                PilotSource::ExternalFile(self.pilot_file.clone().ok_or_else(|| {
                    Error::InvalidConfig("bm_pilot = external_file needs pilot_file".into())
                })?)
            }
            Some(s) => {
                return Err(Error::InvalidConfig(format!("unknown bm_pilot `{s}`")));
            }
        };
        let cfg = RunConfig {
            sigma,
            lambdas,
            taus,
            matching,
            bm_pilot,
            mode,
            keep_snapshots: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
