#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use geoshoot_core::{BandLimitedField, CoeffGrid, FrequencyBand, SpectralOperators};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn band(dims: usize, b: usize, n: usize) -> Arc<FrequencyBand> {
    Arc::new(FrequencyBand::cubic(dims, b, n).unwrap())
}

pub fn ops(dims: usize, b: usize, n: usize, alpha: f64, s: u32) -> SpectralOperators {
    SpectralOperators::new(&band(dims, b, n), alpha, s).unwrap()
}

pub fn rel_diff(a: &BandLimitedField, b: &BandLimitedField) -> f64 {
    a.plus(-1.0, b).l2_norm() / a.l2_norm().max(b.l2_norm()).max(1e-300)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Random field with coefficients decaying like `1/(1+|k|^2)`.
pub fn smooth_field(band: &Arc<FrequencyBand>, seed: u64, scale: f64) -> BandLimitedField {
    let mut r = rng(seed);
    BandLimitedField::random(band, &mut r, |k| {
        let k2: i64 = k.iter().map(|x| x * x).sum();
        scale / (1.0 + k2 as f64)
    })
}

/// Random field supported on `|k_j| <= radius`.
pub fn field_with_support(band: &Arc<FrequencyBand>, seed: u64, radius: i64) -> BandLimitedField {
    let mut r = rng(seed);
    BandLimitedField::random(band, &mut r, |k| {
        if k.iter().all(|&kj| kj.abs() <= radius) {
            1.0
        } else {
            0.0
        }
    })
}

/// Direct O(B^{2d}) truncated convolution.
pub fn brute_convolution(a: &CoeffGrid, b: &CoeffGrid) -> CoeffGrid {
    let band = a.band().clone();
    let d = band.dims();
    let mut out = CoeffGrid::zeros(&band);
    for i in 0..band.len() {
        let k1 = band.frequency(i);
        for j in 0..band.len() {
            let k2 = band.frequency(j);
            let k: Vec<i64> = (0..d).map(|ax| k1[ax] + k2[ax]).collect();
            if let Some(idx) = band.index_of(&k) {
                out.data_mut()[idx] += a.data()[i] * b.data()[j];
            }
        }
    }
    out
}

/// Evaluates `sum_k c(k) m(k) exp(2 pi i k.x)` by direct summation at the
/// points of a `grid`, where `m` is an optional per-frequency multiplier.
pub fn direct_synthesis(c: &CoeffGrid, grid: &[usize], mult: impl Fn(&[i64]) -> Complex64) -> Vec<f64> {
    let band = c.band();
    let d = band.dims();
    let len: usize = grid.iter().product();
    let mut out = vec![0.0; len];
    for (flat, o) in out.iter_mut().enumerate() {
        let mut rem = flat;
        let mut x = [0.0; 3];
        for ax in 0..d {
            x[ax] = (rem % grid[ax]) as f64 / grid[ax] as f64;
            rem /= grid[ax];
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for idx in 0..band.len() {
            let k = band.frequency(idx);
            let phase: f64 = (0..d).map(|ax| 2.0 * PI * k[ax] as f64 * x[ax]).sum();
            acc += c.data()[idx] * mult(&k[..d]) * Complex64::from_polar(1.0, phase);
        }
        *o = acc.re;
    }
    out
}

/// Band coefficients of samples on `grid` by a direct DFT sum.
pub fn direct_analysis(samples: &[f64], grid: &[usize], band: &Arc<FrequencyBand>) -> CoeffGrid {
    let d = band.dims();
    let mut out = CoeffGrid::zeros(band);
    let total = samples.len() as f64;
    for idx in 0..band.len() {
        let k = band.frequency(idx);
        if band.partner(idx).is_none() {
            continue;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (flat, &s) in samples.iter().enumerate() {
            let mut rem = flat;
            let mut phase = 0.0;
            for ax in 0..d {
                phase -= 2.0 * PI * k[ax] as f64 * (rem % grid[ax]) as f64 / grid[ax] as f64;
                rem /= grid[ax];
            }
            acc += Complex64::from_polar(s, phase);
        }
        out.data_mut()[idx] = acc / total;
    }
    out
}

pub fn deriv_symbol(axis: usize) -> impl Fn(&[i64]) -> Complex64 {
    move |k: &[i64]| Complex64::new(0.0, 2.0 * PI * k[axis] as f64)
}

pub fn one(_: &[i64]) -> Complex64 {
    Complex64::new(1.0, 0.0)
}

/// Random field with the spectrum shaped like the smoothing multiplier,
/// rescaled so that `max |iota(v)|` equals `peak` (unit-length coordinates).
pub fn velocity_with_peak(ops: &SpectralOperators, seed: u64, peak: f64) -> BandLimitedField {
    let mut r = rng(seed);
    let band = ops.band().clone();
    let kmult = ops.k_multiplier().to_vec();
    let mut v = BandLimitedField::random(&band, &mut r, |_| 1.0);
    for c in 0..band.dims() {
        for (x, k) in v.component_mut(c).data_mut().iter_mut().zip(&kmult) {
            *x *= *k;
        }
    }
    let m = ops.include(&v).unwrap().max_abs();
    v.scaled(peak / m)
}
