use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use nn3d::framework::{bm_pilot_plane, level_matched_denoise};
use nn3d::{build_group_table, load_plane, run, save_plane, ConfigFile, PlaneFormat};
use nn3d_cli::bench::{load_dataset, run_bench, BenchOptions, Method};
use nn3d_cli::fixtures::make_fixtures;
use nn3d_cli::setup::{build_denoiser, WORKDIR_ENV};

#[derive(Parser)]
#[command(
    name = "nn3d",
    version,
    about = "Grayscale denoising with a local/nonlocal filter cascade"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Denoise one image.
    Denoise {
        input: PathBuf,
        /// Output image; `.npf` keeps full precision, anything else is 8-bit PGM.
        output: PathBuf,
        #[arg(long)]
        sigma: Option<f64>,
        /// Print one JSON object per iteration to stderr.
        #[arg(long)]
        trace: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Add seeded noise to every image in a directory and report PSNR per method.
    Bench {
        dir: PathBuf,
        /// Comma-separated noise levels.
        #[arg(long, value_delimiter = ',', default_value = "25,50")]
        sigmas: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated: noisy, cnnf-only, nlf-only, nn3d.
        #[arg(long, value_delimiter = ',', default_value = "cnnf-only,nlf-only,nn3d")]
        methods: Vec<String>,
        /// PSNR report; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-stage timing report; defaults to `<out stem>.timings.csv` next to `--out`.
        #[arg(long)]
        timings: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write the synthetic 128×128 fixture corpus as PGM files.
    MakeFixtures { dir: PathBuf },
    /// Run block matching as the cascade would and write the group table.
    BmDump {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        sigma: Option<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML run configuration; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in denoiser: identity, gauss, dct8.
    #[arg(long)]
    denoiser: Option<String>,
    /// External denoiser command, called as `<cmd> <in.npf> <out.npf> <sigma>`.
    #[arg(long)]
    external: Option<String>,
    /// Noise-level grid preset: dncnn, wdncnn, ffdnet.
    #[arg(long)]
    grid: Option<String>,
    /// Explicit discrete grid, comma-separated.
    #[arg(long, value_delimiter = ',')]
    grid_values: Option<Vec<f64>>,
    /// External denoiser timeout in seconds.
    #[arg(long)]
    timeout: Option<u64>,
    /// Scratch directory for external denoisers.
    #[arg(long, env = WORKDIR_ENV)]
    workdir: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    tau: Option<Vec<f64>>,
    /// Schedule validation: paper or lab.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    #[arg(long)]
    search_radius: Option<usize>,
    #[arg(long)]
    ref_stride: Option<usize>,
    /// first-cnnf-output, noisy-input or external-file.
    #[arg(long)]
    bm_pilot: Option<String>,
    #[arg(long)]
    pilot_file: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self, sigma: Option<f64>) -> Result<ConfigFile> {
        let base = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let flags = ConfigFile {
            sigma,
            iterations: self.iterations,
            lambda: self.lambda.clone(),
            tau: self.tau.clone(),
            mode: self.mode.clone(),
            n1: self.n1,
            n2: self.n2,
            search_radius: self.search_radius,
            ref_stride: self.ref_stride,
            bm_pilot: self.bm_pilot.clone(),
            pilot_file: self.pilot_file.clone(),
            denoiser: self.denoiser.clone(),
            grid: self.grid.clone(),
            grid_values: self.grid_values.clone(),
            external: self.external.clone(),
            timeout_secs: self.timeout,
        };
        Ok(base.merged(flags))
    }
}

fn output_format(path: &Path) -> PlaneFormat {
    PlaneFormat::from_path(path).unwrap_or(PlaneFormat::Pgm8)
}

fn cmd_denoise(
    input: &Path,
    output: &Path,
    sigma: Option<f64>,
    trace: bool,
    args: &RunArgs,
) -> Result<()> {
    let file = args.config(sigma)?;
    let cfg = file.run_config()?;
    let denoiser = build_denoiser(&file, args.workdir.clone())?;
    let z = load_plane(input)?;
    let (estimate, records) = run(&z, &cfg, denoiser.as_ref())?;
    if trace {
        eprint!("{}", records.to_json_lines());
    }
    save_plane(&estimate, output, output_format(output))?;
    Ok(())
}

fn timings_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "bench".into());
    out.with_file_name(format!("{stem}.timings.csv"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    dir: &Path,
    sigmas: Vec<f64>,
    seed: u64,
    methods: &[String],
    out: Option<&Path>,
    timings: Option<&Path>,
    args: &RunArgs,
) -> Result<()> {
    let methods = methods
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<nn3d::Result<Vec<_>>>()?;
    let config = args.config(None)?;
    let denoiser = build_denoiser(&config, args.workdir.clone())?;
    let dataset = load_dataset(dir)?;
    let report = run_bench(
        &dataset,
        &BenchOptions {
            sigmas,
            seed,
            methods,
            config,
        },
        denoiser.as_ref(),
    )?;
    match out {
        Some(path) => write_text(path, &report.to_csv())?,
        None => print!("{}", report.to_csv()),
    }
    let timings = timings
        .map(Path::to_path_buf)
        .or_else(|| out.map(timings_path));
    match timings {
        Some(path) => write_text(&path, &report.timings_csv())?,
        None => eprint!("{}", report.timings_csv()),
    }
    Ok(())
}

fn cmd_bm_dump(input: &Path, output: &Path, sigma: Option<f64>, args: &RunArgs) -> Result<()> {
    let file = args.config(sigma)?;
    let cfg = file.run_config()?;
    let denoiser = build_denoiser(&file, args.workdir.clone())?;
    let z = load_plane(input)?;
    let first = level_matched_denoise(denoiser.as_ref(), &z, cfg.lambdas[0] * cfg.sigma)?;
    let pilot = bm_pilot_plane(&z, &first.output, &cfg)?;
    let table = build_group_table(&pilot, &cfg.matching)?;
    table.write_sidecar(output)?;
    eprintln!("{} groups written to {}", table.len(), output.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Denoise {
            input,
            output,
            sigma,
            trace,
            run,
        } => cmd_denoise(input, output, *sigma, *trace, run),
        Command::Bench {
            dir,
            sigmas,
            seed,
            methods,
            out,
            timings,
            run,
        } => cmd_bench(
            dir,
            sigmas.clone(),
            *seed,
            methods,
            out.as_deref(),
            timings.as_deref(),
            run,
        ),
        Command::MakeFixtures { dir } => make_fixtures(dir)
            .map(|paths| eprintln!("{} fixtures written to {}", paths.len(), dir.display()))
            .map_err(Into::into),
        Command::BmDump {
            input,
            output,
            sigma,
            run,
        } => cmd_bm_dump(input, output, *sigma, run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // library errors already fold their source into the message
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.ends_with(&cause) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&cause);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
