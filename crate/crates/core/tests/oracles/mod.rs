//! Slow, single-threaded reference implementations used as test oracles.
//! Nothing here shares code with the library beyond the plane type.
#![allow(dead_code)]

use nn3d::{add_awgn, BlockCoord, MatchConfig, NoiseSpec, Plane};

/// Orthonormal Haar matrix in coarse-to-fine order, built from the basis
/// functions: row 0 is the constant, row `2^j + k` is the k-th wavelet at
/// scale j.
pub fn haar_matrix(n: usize) -> Vec<Vec<f64>> {
    assert!(n.is_power_of_two());
    let mut m = vec![vec![0.0; n]; n];
    for v in m[0].iter_mut() {
        *v = 1.0 / (n as f64).sqrt();
    }
    for (idx, row) in m.iter_mut().enumerate().skip(1) {
        let level = idx.ilog2() as usize;
        let k = idx - (1 << level);
        let support = n >> level;
        let amp = 1.0 / (support as f64).sqrt();
        for t in 0..support {
            row[k * support + t] = if t < support / 2 { amp } else { -amp };
        }
    }
    m
}

pub fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn mat_t_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    (0..m.len())
        .map(|j| m.iter().zip(v).map(|(row, x)| row[j] * x).sum())
        .collect()
}

fn ssd(p: &Plane, a: BlockCoord, b: BlockCoord, n1: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n1 {
        for j in 0..n1 {
            let d = p.get(a.row + i, a.col + j) - p.get(b.row + i, b.col + j);
            s += d * d;
        }
    }
    s
}

fn grid(extent: usize, n1: usize, stride: usize) -> Vec<usize> {
    let last = extent - n1;
    let mut v: Vec<usize> = (0..)
        .map(|i| i * stride)
        .take_while(|&x| x <= last)
        .collect();
    if *v.last().unwrap() != last {
        v.push(last);
    }
    v
}

/// Enumerates every candidate in every window, sorts by (distance, row,
/// col), and keeps the reference plus the best of the rest.
pub fn bm_oracle(p: &Plane, cfg: &MatchConfig) -> Vec<Vec<BlockCoord>> {
    let n1 = cfg.n1;
    let (last_r, last_c) = (p.height() - n1, p.width() - n1);
    let mut out = Vec::new();
    for &r in &grid(p.height(), n1, cfg.ref_stride) {
        for &c in &grid(p.width(), n1, cfg.ref_stride) {
            let reference = BlockCoord::new(r, c);
            let rows = r.saturating_sub(cfg.search_radius)..=(r + cfg.search_radius).min(last_r);
            let cols = c.saturating_sub(cfg.search_radius)..=(c + cfg.search_radius).min(last_c);
            let mut cands: Vec<(f64, BlockCoord)> = Vec::new();
            for rr in rows {
                for cc in cols.clone() {
                    let b = BlockCoord::new(rr, cc);
                    if b != reference {
                        cands.push((ssd(p, reference, b, n1), b));
                    }
                }
            }
            let pool = cands.len() + 1;
            let mut size = 1;
            while size * 2 <= pool.min(cfg.n2) {
                size *= 2;
            }
            cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let mut group = vec![reference];
            group.extend(cands.iter().take(size - 1).map(|x| x.1));
            out.push(group);
        }
    }
    out
}

/// Group filtering and aggregation written out with explicit matrices.
pub fn nlf_reference(p: &Plane, groups: &[Vec<BlockCoord>], n1: usize, tau: f64) -> Plane {
    let (w, h) = (p.width(), p.height());
    let mut num = vec![0.0; w * h];
    let mut den = vec![0.0; w * h];
    for g in groups {
        let n = g.len();
        let m = haar_matrix(n);
        let mut filtered = vec![vec![0.0; n1 * n1]; n];
        let mut energy = 0.0;
        for i in 0..n1 {
            for j in 0..n1 {
                let fiber: Vec<f64> = g.iter().map(|b| p.get(b.row + i, b.col + j)).collect();
                let spec: Vec<f64> = mat_vec(&m, &fiber)
                    .into_iter()
                    .map(|q| {
                        let f = if tau == 0.0 {
                            1.0
                        } else {
                            q * q / (q * q + tau * tau)
                        };
                        energy += f * f;
                        q * f
                    })
                    .collect();
                for (b, v) in mat_t_vec(&m, &spec).into_iter().enumerate() {
                    filtered[b][i * n1 + j] = v;
                }
            }
        }
        let weight = 1.0 / f64::max(energy, 1e-12);
        for (b, coord) in g.iter().enumerate() {
            for i in 0..n1 {
                for j in 0..n1 {
                    let idx = (coord.row + i) * w + coord.col + j;
                    num[idx] += weight * filtered[b][i * n1 + j];
                    den[idx] += weight;
                }
            }
        }
    }
    Plane::new(w, h, num.iter().zip(&den).map(|(a, b)| a / b).collect()).unwrap()
}

/// Noisy smooth pattern; with `levels > 0` the samples are quantized to that
/// many values, which makes distance ties common.
pub fn test_image(seed: u64, width: usize, height: usize, levels: usize) -> Plane {
    let base = Plane::from_fn(width, height, |r, c| {
        128.0 + 60.0 * ((r as f64 * 0.3).sin() + (c as f64 * 0.17 + seed as f64).cos())
    });
    let noisy = add_awgn(&base, NoiseSpec::new(20.0, seed).unwrap());
    if levels == 0 {
        noisy
    } else {
        let step = 256.0 / levels as f64;
        noisy.map(|v| {
            (v.clamp(0.0, 255.0) / step)
                .floor()
                .min(levels as f64 - 1.0)
        })
    }
}
