//! Full-depth orthonormal Haar transform along the similarity dimension.
//!
//! Coefficient layout is the usual Mallat ordering: index 0 is the scaling
//! (DC) coefficient, followed by detail bands from coarsest to finest, so a
//! length-`n` signal yields `[a, d_coarse, d_.., .., d_fine (n/2 coeffs)]`.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};

/// Haar coefficients of a power-of-two length signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum(Vec<f64>);

impl Spectrum {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        check_len(coeffs.len())?;
        Ok(Self(coeffs))
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_len(n: usize) -> Result<()> {
    if n.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::NotPowerOfTwo(n))
    }
}

pub fn haar_forward(v: &[f64]) -> Result<Spectrum> {
    check_len(v.len())?;
    let mut buf = v.to_vec();
    let mut scratch = vec![0.0; v.len()];
    forward_in_place(&mut buf, &mut scratch);
    Ok(Spectrum(buf))
}

pub fn haar_inverse(s: &Spectrum) -> Result<Vec<f64>> {
    check_len(s.len())?;
    let mut buf = s.0.clone();
    let mut scratch = vec![0.0; s.len()];
    inverse_in_place(&mut buf, &mut scratch);
    Ok(buf)
}

/// In-place analysis. `buf.len()` must be a power of two and `scratch` at
/// least as long.
pub fn forward_in_place(buf: &mut [f64], scratch: &mut [f64]) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two() && scratch.len() >= n);
    let mut m = n;
    while m > 1 {
        let half = m / 2;
        for i in 0..half {
            let (x0, x1) = (buf[2 * i], buf[2 * i + 1]);
            scratch[i] = (x0 + x1) * FRAC_1_SQRT_2;
            scratch[half + i] = (x0 - x1) * FRAC_1_SQRT_2;
        }
        buf[..m].copy_from_slice(&scratch[..m]);
        m = half;
    }
}

/// In-place synthesis, the exact inverse of [`forward_in_place`].
pub fn inverse_in_place(buf: &mut [f64], scratch: &mut [f64]) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two() && scratch.len() >= n);
    let mut m = 2;
    while m <= n {
        let half = m / 2;
        for i in 0..half {
            let (a, d) = (buf[i], buf[half + i]);
            scratch[2 * i] = (a + d) * FRAC_1_SQRT_2;
            scratch[2 * i + 1] = (a - d) * FRAC_1_SQRT_2;
        }
        buf[..m].copy_from_slice(&scratch[..m]);
        m *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Explicit orthonormal Haar analysis matrix, built row by row from the
    /// basis functions rather than from the filter recursion.
    fn haar_matrix(n: usize) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; n]; n];
        m[0].iter_mut().for_each(|v| *v = 1.0 / (n as f64).sqrt());
        for (idx, row) in m.iter_mut().enumerate().skip(1) {
            let level = idx.ilog2();
            let k = idx - (1 << level);
            let support = n >> level;
            let amp = 1.0 / (support as f64).sqrt();
            for (t, v) in row.iter_mut().enumerate().skip(k * support).take(support) {
                *v = if t < k * support + support / 2 {
                    amp
                } else {
                    -amp
                };
            }
        }
        m
    }

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn constant_maps_to_dc() {
        for n in [1usize, 2, 4, 8, 16, 32] {
            let s = haar_forward(&vec![3.5; n]).unwrap();
            assert!((s.coeffs()[0] - 3.5 * (n as f64).sqrt()).abs() < 1e-12);
            assert!(s.coeffs()[1..].iter().all(|c| c.abs() < 1e-12));
            let back = haar_inverse(&s).unwrap();
            assert!(back.iter().all(|v| (v - 3.5).abs() < 1e-12));
        }
    }

    #[test]
    fn two_point_case() {
        let s = haar_forward(&[1.0, -1.0]).unwrap();
        assert!(s.coeffs()[0].abs() < 1e-15);
        assert!((s.coeffs()[1] - std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn length_one_is_identity() {
        assert_eq!(haar_forward(&[7.25]).unwrap().coeffs(), &[7.25]);
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(matches!(
            haar_forward(&[1.0; 6]),
            Err(Error::NotPowerOfTwo(6))
        ));
        assert!(haar_forward(&[]).is_err());
        assert!(Spectrum::new(vec![0.0; 3]).is_err());
    }

    #[test]
    fn basis_vectors_round_trip() {
        for i in 0..8 {
            let mut e = vec![0.0; 8];
            e[i] = 1.0;
            let back = haar_inverse(&haar_forward(&e).unwrap()).unwrap();
            for (a, b) in back.iter().zip(&e) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn matches_matrix_oracle() {
        let m = haar_matrix(32);
        let v: Vec<f64> = (0..32)
            .map(|i| ((i * 37 % 11) as f64 - 5.0) * 17.3)
            .collect();
        let s = haar_forward(&v).unwrap();
        for (row, c) in m.iter().zip(s.coeffs()) {
            let expected: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
            assert!((expected - c).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn parseval_and_round_trip(v in (0u32..6).prop_flat_map(|l| prop::collection::vec(-255.0f64..255.0, 1usize << l))) {
            let s = haar_forward(&v).unwrap();
            let nv = norm(&v);
            prop_assert!((norm(s.coeffs()) - nv).abs() <= 1e-9 * nv.max(1e-300));
            let back = haar_inverse(&s).unwrap();
            for (a, b) in back.iter().zip(&v) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }

        #[test]
        fn linearity(
            u in prop::collection::vec(-255.0f64..255.0, 16),
            v in prop::collection::vec(-255.0f64..255.0, 16),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let lhs = haar_forward(&mix).unwrap();
            let (su, sv) = (haar_forward(&u).unwrap(), haar_forward(&v).unwrap());
            let rhs: Vec<f64> = su.coeffs().iter().zip(sv.coeffs()).map(|(x, y)| a * x + b * y).collect();
            let scale = norm(&rhs).max(1.0);
            for (l, r) in lhs.coeffs().iter().zip(&rhs) {
                prop_assert!((l - r).abs() <= 1e-9 * scale);
            }
        }
    }
}
