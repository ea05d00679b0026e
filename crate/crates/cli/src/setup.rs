use std::path::PathBuf;
use std::time::Duration;

use nn3d::denoiser::{builtin, ExternalDenoiser, WithGrid, BUILTIN_NAMES};
use nn3d::{ConfigFile, Denoiser, Error, SigmaGrid};

/// Environment variable naming the default working directory for external
/// denoisers.
pub const WORKDIR_ENV: &str = "NN3D_WORKDIR";

fn grid_override(cfg: &ConfigFile) -> nn3d::Result<Option<(String, SigmaGrid)>> {
    match (&cfg.grid, &cfg.grid_values) {
        (Some(_), Some(_)) => Err(Error::InvalidConfig(
            "give either grid or grid_values, not both".into(),
        )),
        (Some(name), None) => SigmaGrid::preset(name)
            .map(|g| Some((name.clone(), g)))
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown grid preset `{name}` (expected dncnn, wdncnn or ffdnet)"
                ))
            }),
        (None, Some(values)) => Ok(Some((
            "custom".into(),
            SigmaGrid::discrete(values.clone())?,
        ))),
        (None, None) => Ok(None),
    }
}

/// Builds the denoiser named by `denoiser`/`external` and the grid keys.
///
/// External commands default to a continuous grid over [0, 255]; built-ins
/// keep their own grid unless a grid key overrides it.
pub fn build_denoiser(
    cfg: &ConfigFile,
    workdir: Option<PathBuf>,
) -> nn3d::Result<Box<dyn Denoiser>> {
    let grid = grid_override(cfg)?;
    if let Some(command) = &cfg.external {
        if cfg.denoiser.is_some() {
            return Err(Error::InvalidConfig(
                "give either denoiser or external, not both".into(),
            ));
        }
        let (name, grid) = grid.unwrap_or_else(|| {
            (
                "external".into(),
                SigmaGrid::Continuous { lo: 0.0, hi: 255.0 },
            )
        });
        let workdir = workdir
            .or_else(|| std::env::var_os(WORKDIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| std::env::temp_dir().join(format!("nn3d-{}", std::process::id())));
        let mut ext = ExternalDenoiser::from_command_line(name, grid, command, workdir)?;
        if let Some(secs) = cfg.timeout_secs {
            ext.timeout = Duration::from_secs(secs);
        }
        return Ok(Box::new(ext));
    }

    let name = cfg.denoiser.as_deref().unwrap_or("dct8");
    let inner = builtin(name).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "unknown denoiser `{name}` (built-ins: {})",
            BUILTIN_NAMES.join(", ")
        ))
    })?;
    Ok(match grid {
        Some((grid_name, grid)) => {
            Box::new(WithGrid::new(inner, format!("{name}@{grid_name}"), grid))
        }
        None => inner,
    })
}
