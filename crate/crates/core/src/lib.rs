//! Grayscale image denoising by an iterative cascade of a pluggable local
//! denoiser and a nonlocal filter that shrinks groups of similar blocks along
//! their similarity dimension.
//!
//! ```no_run
//! use nn3d::{add_awgn, denoiser::Dct8, framework, load_plane, psnr, NoiseSpec, RunConfig};
//!
//! let clean = load_plane("house.pgm")?;
//! let noisy = add_awgn(&clean, NoiseSpec::new(50.0, 1)?);
//! let (estimate, trace) = framework::run(&noisy, &RunConfig::new(50.0), &Dct8::default())?;
//! println!("{:.2} dB\n{}", psnr(&clean, &estimate)?, trace.to_json_lines());
//! # Ok::<(), nn3d::Error>(())
//! ```

pub mod config;
pub mod denoiser;
pub mod error;
pub mod framework;
pub mod haar;
pub mod image;
pub mod matching;
pub mod nlf;
pub mod noise;

pub use config::ConfigFile;
pub use denoiser::{denoise, Denoiser, DenoiserSpec, SigmaGrid};
pub use error::{Error, Result};
pub use framework::{level_match, run, IterationTrace, PilotSource, RunConfig, ScheduleMode};
pub use image::{load_plane, save_plane, BlockCoord, Plane, PlaneFormat};
pub use matching::{build_group_table, match_distance, GroupTable, MatchConfig};
pub use nlf::{apply_nlf, filter_group, shrink, Group};
pub use noise::{add_awgn, mse, psnr, NoiseSpec};
