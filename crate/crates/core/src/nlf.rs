//! Nonlocal filter: shrinkage of groups along the similarity dimension and
//! weighted aggregation of the filtered blocks.
//!
//! Each group is an `n1 × n1 × n` stack of blocks. Every length-`n` fiber
//! (one pixel position across the stack) is Haar-transformed, each
//! coefficient `q` is multiplied by `q² / (q² + τ²)`, and the fiber is
//! transformed back. The group then votes into the output with a single
//! weight, the reciprocal of the summed squared shrinkage factors.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::haar;
use crate::image::{BlockCoord, Plane};
use crate::matching::GroupTable;

/// Lower clamp on the shrinkage-factor energy before it is inverted.
pub const WEIGHT_EPSILON: f64 = 1e-12;

/// Groups filtered concurrently before their blocks are aggregated.
const CHUNK: usize = 256;

/// Attenuation `q² / (q² + τ²)`. A zero threshold leaves every coefficient
/// untouched, including zero ones.
#[inline]
pub fn shrink_factor(q: f64, tau: f64) -> f64 {
    if tau == 0.0 {
        return 1.0;
    }
    let q2 = q * q;
    q2 / (q2 + tau * tau)
}

/// `q · q² / (q² + τ²)`; `shrink(0, 0) = 0`.
#[inline]
pub fn shrink(q: f64, tau: f64) -> f64 {
    q * shrink_factor(q, tau)
}

/// Stack of blocks extracted at the coordinates of one table entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    n1: usize,
    /// Block-major samples: block `b`, pixel `p` lives at `b * n1² + p`.
    blocks: Vec<f64>,
    coords: Vec<BlockCoord>,
}

impl Group {
    pub fn new(n1: usize, blocks: Vec<f64>, coords: Vec<BlockCoord>) -> Result<Self> {
        if !coords.len().is_power_of_two() {
            return Err(Error::NotPowerOfTwo(coords.len()));
        }
        if blocks.len() != coords.len() * n1 * n1 {
            return Err(Error::SizeMismatch(coords.len() * n1 * n1, blocks.len()));
        }
        Ok(Self { n1, blocks, coords })
    }

    pub fn extract(image: &Plane, coords: &[BlockCoord], n1: usize) -> Result<Self> {
        let area = n1 * n1;
        let mut blocks = vec![0.0; coords.len() * area];
        for (c, dst) in coords.iter().zip(blocks.chunks_exact_mut(area)) {
            image.extract_block_into(*c, n1, dst)?;
        }
        Group::new(n1, blocks, coords.to_vec())
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn size(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[BlockCoord] {
        &self.coords
    }

    pub fn blocks(&self) -> &[f64] {
        &self.blocks
    }

    pub fn block(&self, b: usize) -> &[f64] {
        let area = self.n1 * self.n1;
        &self.blocks[b * area..(b + 1) * area]
    }
}

/// Shrinks every fiber of `g` and returns the filtered group with its
/// aggregation weight.
pub fn filter_group(g: &Group, tau: f64) -> (Group, f64) {
    let area = g.n1 * g.n1;
    let n = g.size();
    let mut out = g.blocks.clone();
    let mut fiber = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut energy = 0.0;
    for p in 0..area {
        for (b, v) in fiber.iter_mut().enumerate() {
            *v = out[b * area + p];
        }
        haar::forward_in_place(&mut fiber, &mut scratch);
        for q in fiber.iter_mut() {
            let f = shrink_factor(*q, tau);
            energy += f * f;
            *q *= f;
        }
        haar::inverse_in_place(&mut fiber, &mut scratch);
        for (b, v) in fiber.iter().enumerate() {
            out[b * area + p] = *v;
        }
    }
    let weight = 1.0 / energy.max(WEIGHT_EPSILON);
    (
        Group {
            n1: g.n1,
            blocks: out,
            coords: g.coords.clone(),
        },
        weight,
    )
}

/// Weighted sums of block estimates and of their weights, per pixel.
#[derive(Debug, Clone)]
pub struct AccumulationBuffers {
    width: usize,
    height: usize,
    numerator: Vec<f64>,
    denominator: Vec<f64>,
}

impl AccumulationBuffers {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            numerator: vec![0.0; width * height],
            denominator: vec![0.0; width * height],
        }
    }

    /// Adds every block of `g`, scaled by `weight`, at its coordinates.
    pub fn add_group(&mut self, g: &Group, weight: f64) {
        let n1 = g.n1;
        for (b, c) in g.coords.iter().enumerate() {
            let block = g.block(b);
            for (i, src) in block.chunks_exact(n1).enumerate() {
                let start = (c.row + i) * self.width + c.col;
                let num = &mut self.numerator[start..start + n1];
                let den = &mut self.denominator[start..start + n1];
                for ((nv, dv), &v) in num.iter_mut().zip(den.iter_mut()).zip(src) {
                    *nv += weight * v;
                    *dv += weight;
                }
            }
        }
    }

    pub fn numerator(&self) -> &[f64] {
        &self.numerator
    }

    pub fn denominator(&self) -> &[f64] {
        &self.denominator
    }

    /// Pixelwise `numerator / denominator`. Fails if some pixel received no
    /// block.
    pub fn finish(self) -> Result<Plane> {
        if let Some(i) = self.denominator.iter().position(|&d| d <= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "group table leaves pixel ({}, {}) uncovered",
                i / self.width,
                i % self.width
            )));
        }
        let data = self
            .numerator
            .iter()
            .zip(&self.denominator)
            .map(|(n, d)| n / d)
            .collect();
        Plane::new(self.width, self.height, data)
    }
}

/// Filters `image` group by group and aggregates the results.
///
/// Groups are filtered in parallel but accumulated strictly in table order,
/// so the output does not depend on the thread count. A zero threshold is the
/// identity and returns `image` unchanged.
pub fn apply_nlf(image: &Plane, table: &GroupTable, tau: f64) -> Result<Plane> {
    if image.width() != table.width() || image.height() != table.height() {
        return Err(Error::DimensionMismatch {
            expected_w: table.width(),
            expected_h: table.height(),
            got_w: image.width(),
            got_h: image.height(),
        });
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "threshold must be finite and nonnegative, got {tau}"
        )));
    }
    if tau == 0.0 {
        return Ok(image.clone());
    }

    let mut acc = AccumulationBuffers::new(image.width(), image.height());
    for chunk in table.groups().chunks(CHUNK) {
        let filtered: Vec<(Group, f64)> = chunk
            .par_iter()
            .map(|coords| Group::extract(image, coords, table.n1()).map(|g| filter_group(&g, tau)))
            .collect::<Result<_>>()?;
        for (g, w) in &filtered {
            acc.add_group(g, *w);
        }
    }
    acc.finish()
}
