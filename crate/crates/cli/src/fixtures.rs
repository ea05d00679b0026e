//! Synthetic 128×128 test corpus.
//!
//! Strongly self-similar content (stripes, checkers) sits next to smooth
//! content (constants, ramps) and fixed-seed random textures with little
//! self-similarity. Every sample is an integer in [0, 255], so the planes
//! survive a PGM round trip unchanged.

use std::path::{Path, PathBuf};

use nn3d::denoiser::{denoise, Gauss};
use nn3d::image::quantize_u8;
use nn3d::{add_awgn, save_plane, NoiseSpec, Plane, PlaneFormat};

pub const FIXTURE_SIZE: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureKind {
    Constant,
    Ramp,
    Stripe,
    Checker,
    RandomTexture,
}

impl FixtureKind {
    /// Stripes and checkers repeat exactly.
    pub fn is_self_similar(self) -> bool {
        matches!(self, FixtureKind::Stripe | FixtureKind::Checker)
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: String,
    pub kind: FixtureKind,
    pub plane: Plane,
}

/// Vertical stripes: every row is identical.
pub fn stripes(period: usize, lo: f64, hi: f64) -> Plane {
    Plane::from_fn(FIXTURE_SIZE, FIXTURE_SIZE, |_, c| {
        if c % period < period / 2 {
            lo
        } else {
            hi
        }
    })
}

/// Horizontal stripes: every column is identical.
pub fn horizontal_stripes(period: usize, lo: f64, hi: f64) -> Plane {
    Plane::from_fn(FIXTURE_SIZE, FIXTURE_SIZE, |r, _| {
        if r % period < period / 2 {
            lo
        } else {
            hi
        }
    })
}

/// Sinusoidal stripes at an angle, quantized to integers.
pub fn sine_stripes(period: f64, angle_deg: f64) -> Plane {
    let (s, c) = angle_deg.to_radians().sin_cos();
    Plane::from_fn(FIXTURE_SIZE, FIXTURE_SIZE, |r, col| {
        let t = (col as f64 * c + r as f64 * s) / period;
        (128.0 + 80.0 * (2.0 * std::f64::consts::PI * t).sin()).round()
    })
}

/// Checkerboard whose pattern repeats every `period` pixels in both axes.
pub fn checker(period: usize, lo: f64, hi: f64) -> Plane {
    let cell = period / 2;
    Plane::from_fn(FIXTURE_SIZE, FIXTURE_SIZE, |r, c| {
        if (r / cell + c / cell).is_multiple_of(2) {
            lo
        } else {
            hi
        }
    })
}

fn random_texture(seed: u64) -> Plane {
    let base = Plane::filled(FIXTURE_SIZE, FIXTURE_SIZE, 128.0);
    let noise = add_awgn(&base, NoiseSpec::new(70.0, seed).expect("positive sigma"));
    let smooth = denoise(&Gauss::default(), &noise, 25.0).expect("gauss accepts any sigma");
    smooth.map(|v| quantize_u8(v) as f64)
}

/// The full corpus, in a fixed order.
pub fn fixtures() -> Vec<Fixture> {
    let n = FIXTURE_SIZE as f64;
    let f = |name: &str, kind, plane| Fixture {
        name: name.to_string(),
        kind,
        plane,
    };
    vec![
        f(
            "constant_064",
            FixtureKind::Constant,
            Plane::filled(FIXTURE_SIZE, FIXTURE_SIZE, 64.0),
        ),
        f(
            "constant_180",
            FixtureKind::Constant,
            Plane::filled(FIXTURE_SIZE, FIXTURE_SIZE, 180.0),
        ),
        f(
            "ramp_horizontal",
            FixtureKind::Ramp,
            Plane::from_fn(FIXTURE_SIZE, FIXTURE_SIZE, |_, c| {
                (16.0 + 224.0 * c as f64 / (n - 1.0)).round()
            }),
        ),
        f(
            "ramp_diagonal",
            FixtureKind::Ramp,
            Plane::from_fn(FIXTURE_SIZE, FIXTURE_SIZE, |r, c| {
                (16.0 + 224.0 * (r + c) as f64 / (2.0 * n - 2.0)).round()
            }),
        ),
        f("stripe_p8", FixtureKind::Stripe, stripes(8, 64.0, 192.0)),
        f("stripe_p12", FixtureKind::Stripe, stripes(12, 80.0, 176.0)),
        f(
            "stripe_h_p10",
            FixtureKind::Stripe,
            horizontal_stripes(10, 48.0, 208.0),
        ),
        f(
            "stripe_sine_p10_a30",
            FixtureKind::Stripe,
            sine_stripes(10.0, 30.0),
        ),
        f(
            "stripe_sine_p16_a120",
            FixtureKind::Stripe,
            sine_stripes(16.0, 120.0),
        ),
        f("checker_p8", FixtureKind::Checker, checker(8, 64.0, 192.0)),
        f(
            "checker_p16",
            FixtureKind::Checker,
            checker(16, 96.0, 160.0),
        ),
        f(
            "random_texture_a",
            FixtureKind::RandomTexture,
            random_texture(0x5eed_0001),
        ),
        f(
            "random_texture_b",
            FixtureKind::RandomTexture,
            random_texture(0x5eed_0002),
        ),
    ]
}

/// Writes every fixture as `<name>.pgm` into `dir` and returns the paths.
pub fn make_fixtures(dir: impl AsRef<Path>) -> nn3d::Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| nn3d::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    fixtures()
        .into_iter()
        .map(|fx| {
            let path = dir.join(format!("{}.pgm", fx.name));
            save_plane(&fx.plane, &path, PlaneFormat::Pgm8)?;
            Ok(path)
        })
        .collect()
}
