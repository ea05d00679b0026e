//! Seeded additive white Gaussian noise and PSNR.
//!
//! Noise samples come from a ChaCha8 stream seeded with the 64-bit seed and
//! are drawn with the ziggurat sampler of `rand_distr::StandardNormal`, in
//! row-major pixel order. Output is deterministic for a given build of this
//! crate; it is not meant to match other implementations sample for sample.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::Plane;

/// Noise standard deviation (on the [0, 255] scale) and RNG seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self { sigma, seed })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Returns `y + η`, η i.i.d. N(0, σ²). Samples are not clamped.
pub fn add_awgn(y: &Plane, spec: NoiseSpec) -> Plane {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let data = y
        .data()
        .iter()
        .map(|&v| {
            let n: f64 = StandardNormal.sample(&mut rng);
            v + spec.sigma * n
        })
        .collect();
    Plane::new(y.width(), y.height(), data).expect("noise keeps dimensions and finiteness")
}

pub fn mse(reference: &Plane, estimate: &Plane) -> Result<f64> {
    reference.check_dims(estimate)?;
    let sum: f64 = reference
        .data()
        .iter()
        .zip(estimate.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.data().len() as f64)
}

/// Peak signal-to-noise ratio in dB for peak 255. Identical planes give
/// `f64::INFINITY`.
pub fn psnr(reference: &Plane, estimate: &Plane) -> Result<f64> {
    let m = mse(reference, estimate)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / m).log10())
}
