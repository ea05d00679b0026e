//! Block matching: builds the table of similar-block groups from a pilot
//! image.
//!
//! Reference blocks sit on a regular grid (plus the last valid row/column so
//! every pixel is covered). For each reference, all block positions whose
//! top-left corner falls in the square search window are ranked by SSD with
//! a raster-order tie-break; the reference itself always comes first.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{BlockCoord, Plane};

/// Magic bytes opening a group-table sidecar file.
pub const TABLE_MAGIC: &[u8; 8] = b"NN3DGT01";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchConfig {
    /// Block side length.
    pub n1: usize,
    /// Maximum group size, a power of two.
    pub n2: usize,
    /// Half-width of the search window; 19 gives a 39×39 window.
    pub search_radius: usize,
    /// Spacing of reference blocks, at most `n1`.
    pub ref_stride: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            n1: 10,
            n2: 32,
            search_radius: 19,
            ref_stride: 5,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 {
            return Err(Error::InvalidConfig("n1 must be at least 1".into()));
        }
        if !self.n2.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "n2 must be a power of two, got {}",
                self.n2
            )));
        }
        if self.ref_stride == 0 || self.ref_stride > self.n1 {
            return Err(Error::InvalidConfig(format!(
                "ref_stride must lie in [1, n1={}], got {}",
                self.n1, self.ref_stride
            )));
        }
        Ok(())
    }

    pub fn validate_for(&self, width: usize, height: usize) -> Result<()> {
        self.validate()?;
        if self.n1 > width.min(height) {
            return Err(Error::InvalidConfig(format!(
                "image {width}x{height} is smaller than the {0}x{0} block",
                self.n1
            )));
        }
        Ok(())
    }
}

/// Groups of mutually similar block coordinates, one per reference block, in
/// reference raster order. Each group starts with its reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupTable {
    n1: usize,
    n2: usize,
    width: usize,
    height: usize,
    groups: Vec<Vec<BlockCoord>>,
}

impl GroupTable {
    /// Assembles a table, checking that every group is non-empty, has a
    /// power-of-two size no larger than `n2`, and lies inside the image.
    pub fn new(
        n1: usize,
        n2: usize,
        width: usize,
        height: usize,
        groups: Vec<Vec<BlockCoord>>,
    ) -> Result<Self> {
        for g in &groups {
            if !g.len().is_power_of_two() || g.len() > n2 {
                return Err(Error::InvalidConfig(format!(
                    "group size {} is not a power of two <= {n2}",
                    g.len()
                )));
            }
            for c in g {
                if c.row + n1 > height || c.col + n1 > width {
                    return Err(Error::OutOfBounds {
                        row: c.row,
                        col: c.col,
                        n1,
                        width,
                        height,
                    });
                }
            }
        }
        Ok(Self {
            n1,
            n2,
            width,
            height,
            groups,
        })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn groups(&self) -> &[Vec<BlockCoord>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Row-major mask of pixels covered by at least one block of the table.
    pub fn coverage_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.width * self.height];
        for c in self.groups.iter().flatten() {
            for r in c.row..c.row + self.n1 {
                mask[r * self.width + c.col..r * self.width + c.col + self.n1].fill(true);
            }
        }
        mask
    }

    pub fn write_sidecar(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        out.extend_from_slice(TABLE_MAGIC);
        for v in [self.n1, self.n2, self.groups.len()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for g in &self.groups {
            out.extend_from_slice(&(g.len() as u32).to_le_bytes());
            for c in g {
                out.extend_from_slice(&(c.row as u32).to_le_bytes());
                out.extend_from_slice(&(c.col as u32).to_le_bytes());
            }
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&out)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Reads a sidecar. The format does not carry image dimensions, so the
    /// caller supplies them and coordinates are bounds-checked against them.
    pub fn read_sidecar(path: impl AsRef<Path>, width: usize, height: usize) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        if !bytes.starts_with(TABLE_MAGIC) {
            return Err(Error::malformed(path, "missing group-table magic"));
        }
        let mut words = bytes[8..].chunks(4).map(|w| {
            <[u8; 4]>::try_from(w)
                .map(|w| u32::from_le_bytes(w) as usize)
                .map_err(|_| Error::malformed(path, "trailing partial word"))
        });
        let mut next = || {
            words
                .next()
                .unwrap_or_else(|| Err(Error::malformed(path, "file truncated")))
        };
        let n1 = next()?;
        let n2 = next()?;
        let count = next()?;
        let mut groups = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let size = next()?;
            let mut g = Vec::with_capacity(size.min(n2));
            for _ in 0..size {
                let row = next()?;
                let col = next()?;
                g.push(BlockCoord { row, col });
            }
            groups.push(g);
        }
        if words.next().is_some() {
            return Err(Error::malformed(path, "trailing data after last group"));
        }
        GroupTable::new(n1, n2, width, height, groups)
    }
}

/// Unnormalized sum of squared differences.
pub fn match_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch(a.len(), b.len()));
    }
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        sum += d * d;
    }
    Ok(sum)
}

/// Reference positions along one axis: multiples of `stride` plus the last
/// valid position.
pub fn reference_positions(extent: usize, n1: usize, stride: usize) -> Vec<usize> {
    let last = extent - n1;
    let mut out: Vec<usize> = (0..=last).step_by(stride).collect();
    if *out.last().unwrap() != last {
        out.push(last);
    }
    out
}

/// Largest power of two not exceeding `n` (`n >= 1`).
#[inline]
pub fn floor_pow2(n: usize) -> usize {
    1 << n.ilog2()
}

/// Inclusive range of block top-left positions within `radius` of `center`.
#[inline]
pub(crate) fn window(center: usize, radius: usize, last: usize) -> (usize, usize) {
    (center.saturating_sub(radius), (center + radius).min(last))
}

pub fn build_group_table(pilot: &Plane, cfg: &MatchConfig) -> Result<GroupTable> {
    let (width, height) = (pilot.width(), pilot.height());
    cfg.validate_for(width, height)?;
    let rows = reference_positions(height, cfg.n1, cfg.ref_stride);
    let cols = reference_positions(width, cfg.n1, cfg.ref_stride);
    let refs: Vec<BlockCoord> = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| BlockCoord::new(r, c)))
        .collect();

    let groups = refs
        .par_iter()
        .map_init(
            || vec![0.0; cfg.n1 * cfg.n1],
            |ref_block, &r| match_reference(pilot, cfg, r, ref_block),
        )
        .collect();

    Ok(GroupTable {
        n1: cfg.n1,
        n2: cfg.n2,
        width,
        height,
        groups,
    })
}

/// Ranked group for one reference block.
fn match_reference(
    pilot: &Plane,
    cfg: &MatchConfig,
    reference: BlockCoord,
    ref_block: &mut [f64],
) -> Vec<BlockCoord> {
    let n1 = cfg.n1;
    let width = pilot.width();
    let data = pilot.data();
    let (r0, r1) = window(reference.row, cfg.search_radius, pilot.height() - n1);
    let (c0, c1) = window(reference.col, cfg.search_radius, width - n1);
    let pool = (r1 - r0 + 1) * (c1 - c0 + 1);
    let size = floor_pow2(cfg.n2.min(pool));
    let keep = size - 1;

    pilot
        .extract_block_into(reference, n1, ref_block)
        .expect("reference lies inside the image");

    // Best `keep` non-reference candidates, sorted by (distance, raster).
    // Candidates arrive in raster order, so an equal-distance newcomer always
    // ranks after the entries already held.
    let mut best: Vec<(f64, BlockCoord)> = Vec::with_capacity(keep + 1);
    if keep > 0 {
        for r in r0..=r1 {
            for c in c0..=c1 {
                if r == reference.row && c == reference.col {
                    continue;
                }
                let bound = if best.len() == keep {
                    best[keep - 1].0
                } else {
                    f64::INFINITY
                };
                let mut sum = 0.0;
                let mut rejected = false;
                for (i, ref_row) in ref_block.chunks_exact(n1).enumerate() {
                    let start = (r + i) * width + c;
                    for (x, y) in ref_row.iter().zip(&data[start..start + n1]) {
                        let d = x - y;
                        sum += d * d;
                    }
                    if sum >= bound {
                        rejected = true;
                        break;
                    }
                }
                if rejected {
                    continue;
                }
                let at = best.partition_point(|&(d, _)| d <= sum);
                best.insert(at, (sum, BlockCoord::new(r, c)));
                best.truncate(keep);
            }
        }
    }

    let mut group = Vec::with_capacity(size);
    group.push(reference);
    group.extend(best.into_iter().map(|(_, c)| c));
    group
}
