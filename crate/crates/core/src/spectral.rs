//! Band-limited vector fields on the periodic unit domain and the spectral
//! operators acting on them.
//!
//! A field is a set of Fourier coefficients on a centered frequency band
//! `{-floor(B/2), .., ceil(B/2)-1}` per axis. Its spatial realization is
//! `f(x) = sum_k c(k) exp(2 pi i k.x)` sampled on a grid of `N >= B` points per
//! axis. For even `B` the lowest frequency `-B/2` has no conjugate partner in
//! the band; those coefficients are held at zero so that every field has a
//! real spatial realization and the effective support is symmetric.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::fft::{next_fast_len, FftNd};
use crate::grid::{check_sizes, flatten, unflatten, ScalarImage, SpatialVectorField};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone)]
pub struct FrequencyBand {
    band_sizes: Vec<usize>,
    grid_sizes: Vec<usize>,
    partner: Vec<Option<usize>>,
}

impl PartialEq for FrequencyBand {
    fn eq(&self, other: &Self) -> bool {
        self.band_sizes == other.band_sizes && self.grid_sizes == other.grid_sizes
    }
}

impl FrequencyBand {
    pub fn new(band_sizes: &[usize], grid_sizes: &[usize]) -> Result<Self> {
        check_sizes(grid_sizes)?;
        if band_sizes.len() != grid_sizes.len() {
            return invalid(format!(
                "band has {} axes but grid has {}",
                band_sizes.len(),
                grid_sizes.len()
            ));
        }
        for (j, (&b, &n)) in band_sizes.iter().zip(grid_sizes).enumerate() {
            if b == 0 || b > n {
                return invalid(format!("axis {j}: band size {b} must be in 1..={n}"));
            }
        }
        let len: usize = band_sizes.iter().product();
        let mut band = Self {
            band_sizes: band_sizes.to_vec(),
            grid_sizes: grid_sizes.to_vec(),
            partner: Vec::new(),
        };
        band.partner = (0..len)
            .map(|idx| {
                let k = band.frequency(idx);
                let neg: Vec<i64> = k[..band.dims()].iter().map(|&kj| -kj).collect();
                band.index_of(&neg)
            })
            .collect();
        Ok(band)
    }

    /// Same band size and grid size on every axis.
    pub fn cubic(dims: usize, band: usize, grid: usize) -> Result<Self> {
        Self::new(&vec![band; dims], &vec![grid; dims])
    }

    pub fn dims(&self) -> usize {
        self.band_sizes.len()
    }

    pub fn band_sizes(&self) -> &[usize] {
        &self.band_sizes
    }

    pub fn grid_sizes(&self) -> &[usize] {
        &self.grid_sizes
    }

    /// Number of coefficients per component, `prod B_j`.
    pub fn len(&self) -> usize {
        self.partner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partner.is_empty()
    }

    /// Signed frequency of a flat coefficient index (unused axes are zero).
    #[inline]
    pub fn frequency(&self, idx: usize) -> [i64; 3] {
        let pos = unflatten(idx, &self.band_sizes);
        let mut k = [0i64; 3];
        for j in 0..self.dims() {
            k[j] = pos[j] as i64 - (self.band_sizes[j] / 2) as i64;
        }
        k
    }

    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.dims() {
            return None;
        }
        let mut pos = [0usize; 3];
        for j in 0..self.dims() {
            let p = k[j] + (self.band_sizes[j] / 2) as i64;
            if p < 0 || p >= self.band_sizes[j] as i64 {
                return None;
            }
            pos[j] = p as usize;
        }
        Some(flatten(&pos[..self.dims()], &self.band_sizes))
    }

    /// Index of `-k`, or `None` when `-k` lies outside the band.
    #[inline]
    pub fn partner(&self, idx: usize) -> Option<usize> {
        self.partner[idx]
    }

    /// Flat positions of the band coefficients inside a DFT array of `sizes`.
    fn slots(&self, sizes: &[usize]) -> Vec<usize> {
        (0..self.len())
            .map(|idx| {
                let k = self.frequency(idx);
                let mut pos = [0usize; 3];
                for j in 0..self.dims() {
                    pos[j] = k[j].rem_euclid(sizes[j] as i64) as usize;
                }
                flatten(&pos[..self.dims()], sizes)
            })
            .collect()
    }
}

fn same_band(a: &FrequencyBand, b: &FrequencyBand, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::InvalidArgument(format!(
            "{what}: band {:?}/{:?} does not match {:?}/{:?}",
            a.band_sizes, a.grid_sizes, b.band_sizes, b.grid_sizes
        )));
    }
    Ok(())
}

/// Scalar coefficient array on a frequency band.
#[derive(Debug, Clone)]
pub struct CoeffGrid {
    band: Arc<FrequencyBand>,
    data: Vec<Complex64>,
}

impl PartialEq for CoeffGrid {
    fn eq(&self, other: &Self) -> bool {
        self.band == other.band && self.data == other.data
    }
}

impl CoeffGrid {
    pub fn zeros(band: &Arc<FrequencyBand>) -> Self {
        Self {
            band: band.clone(),
            data: vec![ZERO; band.len()],
        }
    }

    pub fn from_vec(band: &Arc<FrequencyBand>, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != band.len() {
            return invalid(format!(
                "{} coefficients given for a band of {}",
                data.len(),
                band.len()
            ));
        }
        Ok(Self {
            band: band.clone(),
            data,
        })
    }

    pub fn band(&self) -> &Arc<FrequencyBand> {
        &self.band
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Coefficient at signed frequency `k`; zero outside the band.
    pub fn get(&self, k: &[i64]) -> Complex64 {
        self.band.index_of(k).map_or(ZERO, |i| self.data[i])
    }

    pub fn set(&mut self, k: &[i64], value: Complex64) -> Result<()> {
        match self.band.index_of(k) {
            Some(i) => {
                self.data[i] = value;
                Ok(())
            }
            None => invalid(format!("frequency {k:?} outside the band")),
        }
    }

    pub fn axpy(&mut self, a: f64, x: &CoeffGrid) {
        debug_assert_eq!(self.data.len(), x.data.len());
        for (y, x) in self.data.iter_mut().zip(&x.data) {
            *y += x * a;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for y in &mut self.data {
            *y *= a;
        }
    }

    /// `Re sum_k a(k) conj(b(k))`.
    pub fn l2_inner(&self, other: &CoeffGrid) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_inner(self).sqrt()
    }

    /// Largest violation of `c(k) = conj(c(-k))`, counting unpaired
    /// coefficients as violations of their full magnitude.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (idx, c) in self.data.iter().enumerate() {
            let d = match self.band.partner(idx) {
                Some(p) => (c - self.data[p].conj()).norm(),
                None => c.norm(),
            };
            worst = worst.max(d);
        }
        worst
    }

    /// Projects onto Hermitian-symmetric coefficients with zero unpaired entries.
    pub fn symmetrize(&mut self) {
        for idx in 0..self.data.len() {
            match self.band.partner(idx) {
                Some(p) if p > idx => {
                    let avg = (self.data[idx] + self.data[p].conj()) * 0.5;
                    self.data[idx] = avg;
                    self.data[p] = avg.conj();
                }
                Some(p) if p == idx => self.data[idx].im = 0.0,
                Some(_) => {}
                None => self.data[idx] = ZERO,
            }
        }
    }

    fn map_mult(&self, mult: impl Fn(usize) -> Complex64) -> Self {
        Self {
            band: self.band.clone(),
            data: self.data.iter().enumerate().map(|(i, c)| c * mult(i)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// A `d`-component band-limited vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct BandLimitedField {
    components: Vec<CoeffGrid>,
}

impl BandLimitedField {
    pub fn zeros(band: &Arc<FrequencyBand>) -> Self {
        Self {
            components: (0..band.dims()).map(|_| CoeffGrid::zeros(band)).collect(),
        }
    }

    pub fn from_components(components: Vec<CoeffGrid>) -> Result<Self> {
        let Some(first) = components.first() else {
            return invalid("a vector field needs at least one component");
        };
        let band = first.band.clone();
        if components.len() != band.dims() {
            return invalid(format!(
                "{} components given for a {}-dimensional band",
                components.len(),
                band.dims()
            ));
        }
        for c in &components {
            same_band(&c.band, &band, "from_components")?;
        }
        Ok(Self { components })
    }

    pub fn band(&self) -> &Arc<FrequencyBand> {
        &self.components[0].band
    }

    pub fn dims(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, c: usize) -> &CoeffGrid {
        &self.components[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut CoeffGrid {
        &mut self.components[c]
    }

    pub fn components(&self) -> &[CoeffGrid] {
        &self.components
    }

    pub fn into_components(self) -> Vec<CoeffGrid> {
        self.components
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &BandLimitedField) {
        for (y, x) in self.components.iter_mut().zip(&x.components) {
            y.axpy(a, x);
        }
    }

    pub fn scale(&mut self, a: f64) {
        for c in &mut self.components {
            c.scale(a);
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `self + a * x` as a new field.
    pub fn plus(&self, a: f64, x: &BandLimitedField) -> Self {
        let mut out = self.clone();
        out.axpy(a, x);
        out
    }

    pub fn l2_inner(&self, other: &BandLimitedField) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.l2_inner(b))
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_inner(self).sqrt()
    }

    pub fn hermitian_defect(&self) -> f64 {
        self.components
            .iter()
            .map(CoeffGrid::hermitian_defect)
            .fold(0.0, f64::max)
    }

    pub fn symmetrize(&mut self) {
        for c in &mut self.components {
            c.symmetrize();
        }
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(CoeffGrid::is_finite)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.data.iter())
            .fold(0.0f64, |m, c| m.max(c.norm()))
    }

    /// Random Hermitian field whose coefficient at `k` has standard deviation
    /// `amplitude(k)` per real and imaginary part.
    pub fn random<R: Rng + ?Sized>(
        band: &Arc<FrequencyBand>,
        rng: &mut R,
        amplitude: impl Fn(&[i64]) -> f64,
    ) -> Self {
        let mut field = Self::zeros(band);
        for comp in &mut field.components {
            for (idx, c) in comp.data.iter_mut().enumerate() {
                let k = band.frequency(idx);
                let a = amplitude(&k[..band.dims()]);
                *c = Complex64::new(
                    a * rng.gen_range(-1.0..1.0),
                    a * rng.gen_range(-1.0..1.0),
                );
            }
        }
        field.symmetrize();
        field
    }
}

/// Gradient of a band-limited field, `entry(i, j) = d_j f_i`.
#[derive(Debug, Clone)]
pub struct SpectralJacobian {
    dims: usize,
    entries: Vec<CoeffGrid>,
}

impl SpectralJacobian {
    pub fn entry(&self, i: usize, j: usize) -> &CoeffGrid {
        &self.entries[i * self.dims + j]
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Sum of the diagonal entries.
    pub fn trace(&self) -> CoeffGrid {
        let mut out = self.entries[0].clone();
        for i in 1..self.dims {
            out.axpy(1.0, self.entry(i, i));
        }
        out
    }
}

/// Per-frequency multiplier tables for one band, plus the FFT plans needed to
/// move between coefficients and samples.
#[derive(Debug, Clone)]
pub struct SpectralOperators {
    band: Arc<FrequencyBand>,
    alpha: f64,
    s_exponent: u32,
    l_multiplier: Vec<f64>,
    k_multiplier: Vec<f64>,
    // omega[j][idx] = 2 pi k_j; the derivative multiplier is i * omega.
    omega: Vec<Vec<f64>>,
    grid_fft: FftNd,
    grid_slots: Vec<usize>,
    padded_fft: FftNd,
    padded_slots: Vec<usize>,
}

impl SpectralOperators {
    /// Builds the tables for `L = (Id - alpha * Laplacian)^s`.
    ///
    /// `alpha` is measured in squared voxels of the band's grid, so the symbol
    /// is `(1 + alpha * sum_j (2 pi k_j / N_j)^2)^s`.
    pub fn new(band: &Arc<FrequencyBand>, alpha: f64, s_exponent: u32) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return invalid(format!("alpha must be positive, got {alpha}"));
        }
        if s_exponent == 0 {
            return invalid("the exponent s must be a positive integer");
        }
        let d = band.dims();
        let mut l_multiplier = Vec::with_capacity(band.len());
        let mut omega = vec![Vec::with_capacity(band.len()); d];
        for idx in 0..band.len() {
            let k = band.frequency(idx);
            let mut lap = 0.0;
            for j in 0..d {
                let w = 2.0 * PI * k[j] as f64;
                omega[j].push(w);
                let wv = w / band.grid_sizes()[j] as f64;
                lap += wv * wv;
            }
            l_multiplier.push((1.0 + alpha * lap).powi(s_exponent as i32));
        }
        let k_multiplier = l_multiplier.iter().map(|l| 1.0 / l).collect();
        let padded: Vec<usize> = band
            .band_sizes()
            .iter()
            .map(|&b| next_fast_len(2 * b - 1))
            .collect();
        Ok(Self {
            band: band.clone(),
            alpha,
            s_exponent,
            l_multiplier,
            k_multiplier,
            omega,
            grid_fft: FftNd::new(band.grid_sizes()),
            grid_slots: band.slots(band.grid_sizes()),
            padded_fft: FftNd::new(&padded),
            padded_slots: band.slots(&padded),
        })
    }

    pub fn band(&self) -> &Arc<FrequencyBand> {
        &self.band
    }

    pub fn dims(&self) -> usize {
        self.band.dims()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn s_exponent(&self) -> u32 {
        self.s_exponent
    }

    pub fn l_multiplier(&self) -> &[f64] {
        &self.l_multiplier
    }

    pub fn k_multiplier(&self) -> &[f64] {
        &self.k_multiplier
    }

    /// Real angular frequency `2 pi k_j` on axis `j`; the derivative symbol is `i` times this.
    pub fn omega(&self, axis: usize) -> &[f64] {
        &self.omega[axis]
    }

    /// Sizes of the zero-padded grid used for truncated convolutions.
    pub fn padded_sizes(&self) -> &[usize] {
        self.padded_fft.sizes()
    }

    pub(crate) fn check(&self, f: &BandLimitedField, what: &str) -> Result<()> {
        same_band(f.band(), &self.band, what)
    }

    pub(crate) fn check_grid(&self, c: &CoeffGrid, what: &str) -> Result<()> {
        same_band(&c.band, &self.band, what)
    }

    /// Spatial samples of `f` on the band's own grid.
    pub fn include(&self, f: &BandLimitedField) -> Result<SpatialVectorField> {
        self.check(f, "include")?;
        let comps = f
            .components
            .iter()
            .map(|c| synthesize(&c.data, &self.grid_fft, &self.grid_slots))
            .collect();
        Ok(SpatialVectorField::from_parts_unchecked(self.band.grid_sizes(), comps))
    }

    pub fn include_scalar(&self, c: &CoeffGrid) -> Result<ScalarImage> {
        self.check_grid(c, "include_scalar")?;
        let values = synthesize(&c.data, &self.grid_fft, &self.grid_slots);
        Ok(ScalarImage::from_parts_unchecked(self.band.grid_sizes(), values))
    }

    /// Band-limited projection of a field sampled on the band's grid.
    pub fn project(&self, f: &SpatialVectorField) -> Result<BandLimitedField> {
        if f.sizes() != self.band.grid_sizes() {
            return invalid(format!(
                "project: field grid {:?} does not match band grid {:?}",
                f.sizes(),
                self.band.grid_sizes()
            ));
        }
        let components = f
            .components()
            .iter()
            .map(|samples| analyze(samples, &self.band, &self.grid_fft, &self.grid_slots))
            .collect();
        Ok(BandLimitedField { components })
    }

    pub fn project_scalar(&self, f: &ScalarImage) -> Result<CoeffGrid> {
        f.ensure_same_grid(self.band.grid_sizes(), "project_scalar")?;
        Ok(analyze(f.values(), &self.band, &self.grid_fft, &self.grid_slots))
    }

    pub fn apply_l(&self, f: &BandLimitedField) -> Result<BandLimitedField> {
        self.check(f, "apply_L")?;
        Ok(self.mult_field(f, &self.l_multiplier))
    }

    pub fn apply_k(&self, f: &BandLimitedField) -> Result<BandLimitedField> {
        self.check(f, "apply_K")?;
        Ok(self.mult_field(f, &self.k_multiplier))
    }

    fn mult_field(&self, f: &BandLimitedField, mult: &[f64]) -> BandLimitedField {
        BandLimitedField {
            components: f
                .components
                .iter()
                .map(|c| c.map_mult(|i| Complex64::new(mult[i], 0.0)))
                .collect(),
        }
    }

    pub(crate) fn derivative(&self, c: &CoeffGrid, axis: usize) -> CoeffGrid {
        let w = &self.omega[axis];
        c.map_mult(|i| Complex64::new(0.0, w[i]))
    }

    pub fn spectral_jacobian(&self, f: &BandLimitedField) -> Result<SpectralJacobian> {
        self.check(f, "spectral_jacobian")?;
        let d = self.dims();
        let mut entries = Vec::with_capacity(d * d);
        for comp in &f.components {
            for j in 0..d {
                entries.push(self.derivative(comp, j));
            }
        }
        Ok(SpectralJacobian { dims: d, entries })
    }

    pub fn spectral_divergence(&self, f: &BandLimitedField) -> Result<CoeffGrid> {
        self.check(f, "spectral_divergence")?;
        let mut out = CoeffGrid::zeros(&self.band);
        for (j, comp) in f.components.iter().enumerate() {
            let w = &self.omega[j];
            for (i, (o, c)) in out.data.iter_mut().zip(&comp.data).enumerate() {
                *o += c * Complex64::new(0.0, w[i]);
            }
        }
        Ok(out)
    }

    /// Linear convolution of two coefficient arrays restricted to the band.
    pub fn truncated_convolution(&self, a: &CoeffGrid, b: &CoeffGrid) -> Result<CoeffGrid> {
        self.check_grid(a, "truncated_convolution")?;
        self.check_grid(b, "truncated_convolution")?;
        let mut prod = self.lift(a);
        for (p, q) in prod.iter_mut().zip(self.lift(b)) {
            *p *= q;
        }
        Ok(self.lower(&prod))
    }

    /// `<L a, b>_{l2}`, which equals `<L iota(a), iota(b)>` under the
    /// normalized measure on the unit domain.
    pub fn inner_product_v(&self, a: &BandLimitedField, b: &BandLimitedField) -> Result<f64> {
        self.check(a, "inner_product_V")?;
        self.check(b, "inner_product_V")?;
        Ok(self.inner_v_unchecked(a, b))
    }

    pub(crate) fn inner_v_unchecked(&self, a: &BandLimitedField, b: &BandLimitedField) -> f64 {
        let mut acc = 0.0;
        for (ca, cb) in a.components.iter().zip(&b.components) {
            for ((x, y), l) in ca.data.iter().zip(&cb.data).zip(&self.l_multiplier) {
                acc += l * (x.re * y.re + x.im * y.im);
            }
        }
        acc
    }

    pub fn norm_v(&self, a: &BandLimitedField) -> f64 {
        self.inner_v_unchecked(a, a).max(0.0).sqrt()
    }

    /// Samples of a coefficient array on the zero-padded product grid.
    pub(crate) fn lift(&self, c: &CoeffGrid) -> Vec<f64> {
        synthesize(&c.data, &self.padded_fft, &self.padded_slots)
    }

    pub(crate) fn lift_derivative(&self, c: &CoeffGrid, axis: usize) -> Vec<f64> {
        self.lift(&self.derivative(c, axis))
    }

    /// Band coefficients of samples on the padded product grid.
    pub(crate) fn lower(&self, samples: &[f64]) -> CoeffGrid {
        analyze(samples, &self.band, &self.padded_fft, &self.padded_slots)
    }
}

fn synthesize(coeffs: &[Complex64], fft: &FftNd, slots: &[usize]) -> Vec<f64> {
    let mut buf = vec![ZERO; fft.len()];
    for (c, &s) in coeffs.iter().zip(slots) {
        buf[s] = *c;
    }
    fft.inverse(&mut buf);
    buf.into_iter().map(|z| z.re).collect()
}

fn analyze(samples: &[f64], band: &Arc<FrequencyBand>, fft: &FftNd, slots: &[usize]) -> CoeffGrid {
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft.forward(&mut buf);
    let norm = 1.0 / fft.len() as f64;
    let mut out = CoeffGrid {
        band: band.clone(),
        data: slots.iter().map(|&s| buf[s] * norm).collect(),
    };
    out.symmetrize();
    out
}

/// Real spatial samples of `f` on an arbitrary grid at least as large as the band.
pub fn include(f: &BandLimitedField, grid: &[usize]) -> Result<SpatialVectorField> {
    let band = f.band();
    if grid.len() != band.dims() || grid.iter().zip(band.band_sizes()).any(|(&n, &b)| n < b) {
        return invalid(format!(
            "grid {grid:?} is smaller than band {:?}",
            band.band_sizes()
        ));
    }
    let fft = FftNd::new(grid);
    let slots = band.slots(grid);
    let comps = f
        .components
        .iter()
        .map(|c| synthesize(&c.data, &fft, &slots))
        .collect();
    SpatialVectorField::new(grid, comps)
}

/// Band-limited projection of a sampled field onto `band`.
pub fn project(f: &SpatialVectorField, band: &Arc<FrequencyBand>) -> Result<BandLimitedField> {
    if f.sizes() != band.grid_sizes() {
        return invalid(format!(
            "project: field grid {:?} does not match band grid {:?}",
            f.sizes(),
            band.grid_sizes()
        ));
    }
    let fft = FftNd::new(band.grid_sizes());
    let slots = band.slots(band.grid_sizes());
    let components = f
        .components()
        .iter()
        .map(|s| analyze(s, band, &fft, &slots))
        .collect();
    Ok(BandLimitedField { components })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn band2(b: usize, n: usize) -> Arc<FrequencyBand> {
        Arc::new(FrequencyBand::cubic(2, b, n).unwrap())
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    fn field_rel_diff(a: &BandLimitedField, b: &BandLimitedField) -> f64 {
        let d = a.plus(-1.0, b).l2_norm();
        d / a.l2_norm().max(b.l2_norm()).max(1e-300)
    }

    #[test]
    fn band_validation() {
        assert!(FrequencyBand::new(&[8, 8], &[4, 8]).is_err());
        assert!(FrequencyBand::new(&[0, 8], &[8, 8]).is_err());
        assert!(FrequencyBand::new(&[4], &[8, 8]).is_err());
        let b = FrequencyBand::new(&[4, 5], &[8, 8]).unwrap();
        assert_eq!(b.frequency(0)[..2], [-2, -2]);
        assert_eq!(b.frequency(b.len() - 1)[..2], [1, 2]);
        assert_eq!(b.partner(b.index_of(&[1, -2]).unwrap()), b.index_of(&[-1, 2]));
        assert_eq!(b.partner(b.index_of(&[-2, 0]).unwrap()), None);
    }

    #[test]
    fn include_zero_and_dc() {
        let band = band2(5, 8);
        let zero = BandLimitedField::zeros(&band);
        let s = include(&zero, &[8, 8]).unwrap();
        assert_eq!(s.max_abs(), 0.0);

        let mut f = BandLimitedField::zeros(&band);
        f.component_mut(0).set(&[0, 0], Complex64::new(1.75, 0.0)).unwrap();
        let s = include(&f, &[8, 8]).unwrap();
        assert!(s.component(0).iter().all(|&v| (v - 1.75).abs() < 1e-15));
        assert!(s.component(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn include_single_frequency_matches_trig_sum() {
        let band = band2(5, 12);
        let (a, b) = (0.7, -1.3);
        let mut f = BandLimitedField::zeros(&band);
        f.component_mut(0).set(&[1, 0], Complex64::new(a / 2.0, -b / 2.0)).unwrap();
        f.component_mut(0).set(&[-1, 0], Complex64::new(a / 2.0, b / 2.0)).unwrap();
        let s = include(&f, &[12, 12]).unwrap();
        for flat in 0..144 {
            let x0 = (flat % 12) as f64 / 12.0;
            let expect = a * (2.0 * PI * x0).cos() + b * (2.0 * PI * x0).sin();
            assert!((s.component(0)[flat] - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn include_rejects_small_grid() {
        let band = band2(6, 8);
        assert!(include(&BandLimitedField::zeros(&band), &[4, 8]).is_err());
    }

    #[test]
    fn project_inverts_include() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (b, n) in [(5, 8), (6, 8), (8, 8), (7, 16)] {
            let band = band2(b, n);
            let f = BandLimitedField::random(&band, &mut rng, |_| 1.0);
            let back = project(&include(&f, &[n, n]).unwrap(), &band).unwrap();
            assert!(field_rel_diff(&f, &back) < 1e-12, "b={b} n={n}");
        }
    }

    #[test]
    fn project_constant_and_out_of_band() {
        let band = band2(8, 32);
        let c = SpatialVectorField::new(&[32, 32], vec![vec![2.5; 1024], vec![0.0; 1024]]).unwrap();
        let p = project(&c, &band).unwrap();
        assert!((p.component(0).get(&[0, 0]) - Complex64::new(2.5, 0.0)).norm() < 1e-14);
        p.component(0).data().iter().enumerate().for_each(|(i, z)| {
            if band.frequency(i)[..2] != [0, 0] {
                assert!(z.norm() < 1e-14);
            }
        });

        // cos(2 pi * 8 x): frequency 8 sits outside the band {-4..3}.
        let img = ScalarImage::from_fn(&[32, 32], |x| (2.0 * PI * 8.0 * x[0]).cos()).unwrap();
        let field = SpatialVectorField::new(&[32, 32], vec![img.values().to_vec(), vec![0.0; 1024]]).unwrap();
        let p = project(&field, &band).unwrap();
        assert!(p.max_abs_coeff() < 1e-14);
    }

    #[test]
    fn l_and_k_multipliers() {
        let band = band2(9, 16);
        let ops = SpectralOperators::new(&band, 1.0, 2).unwrap();
        let dc = band.index_of(&[0, 0]).unwrap();
        assert_eq!(ops.l_multiplier()[dc], 1.0);
        assert!(ops.l_multiplier().iter().all(|&l| l >= 1.0));
        for (l, k) in ops.l_multiplier().iter().zip(ops.k_multiplier()) {
            assert!((l * k - 1.0).abs() < 1e-15);
        }
        // Independent scalar evaluation of the symbol at k = (3, -2), N = 16.
        let idx = band.index_of(&[3, -2]).unwrap();
        let w2 = (2.0 * PI * 3.0 / 16.0f64).powi(2) + (2.0 * PI * 2.0 / 16.0f64).powi(2);
        assert!(rel(ops.l_multiplier()[idx], (1.0 + w2).powi(2)) < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = BandLimitedField::random(&band, &mut rng, |_| 1.0);
        let back = ops.apply_k(&ops.apply_l(&f).unwrap()).unwrap();
        assert!(field_rel_diff(&f, &back) < 1e-14);

        let mut dc_field = BandLimitedField::zeros(&band);
        dc_field.component_mut(1).set(&[0, 0], Complex64::new(3.0, 0.0)).unwrap();
        assert_eq!(ops.apply_l(&dc_field).unwrap(), dc_field);
        assert_eq!(ops.apply_k(&dc_field).unwrap(), dc_field);
    }

    #[test]
    fn band_mismatch_is_rejected() {
        let ops = SpectralOperators::new(&band2(5, 8), 1.0, 1).unwrap();
        let other = BandLimitedField::zeros(&band2(5, 10));
        assert!(matches!(ops.apply_l(&other), Err(Error::InvalidArgument(_))));
        assert!(ops.spectral_jacobian(&other).is_err());
        assert!(ops.inner_product_v(&other, &other).is_err());
        let c = CoeffGrid::zeros(&band2(5, 10));
        assert!(ops.truncated_convolution(&c, &c).is_err());
        assert!(SpectralOperators::new(&band2(5, 8), 0.0, 1).is_err());
        assert!(SpectralOperators::new(&band2(5, 8), 1.0, 0).is_err());
    }

    #[test]
    fn jacobian_and_divergence() {
        let band = band2(7, 16);
        let ops = SpectralOperators::new(&band, 2.0, 1).unwrap();
        let mut c = BandLimitedField::zeros(&band);
        c.component_mut(0).set(&[0, 0], Complex64::new(1.0, 0.0)).unwrap();
        let jac = ops.spectral_jacobian(&c).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(jac.entry(i, j).l2_norm(), 0.0);
            }
        }
        assert_eq!(ops.spectral_divergence(&c).unwrap().l2_norm(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = BandLimitedField::random(&band, &mut rng, |_| 1.0);
        let jac = ops.spectral_jacobian(&f).unwrap();
        let mut tr = jac.trace();
        tr.axpy(-1.0, &ops.spectral_divergence(&f).unwrap());
        assert!(tr.l2_norm() < 1e-12);

        // d/dx0 of a cos + b sin at frequency 1.
        let (a, b) = (0.4, 0.9);
        let mut g = BandLimitedField::zeros(&band);
        g.component_mut(1).set(&[1, 0], Complex64::new(a / 2.0, -b / 2.0)).unwrap();
        g.component_mut(1).set(&[-1, 0], Complex64::new(a / 2.0, b / 2.0)).unwrap();
        let jac = ops.spectral_jacobian(&g).unwrap();
        let dx = ops.include_scalar(jac.entry(1, 0)).unwrap();
        for flat in 0..256 {
            let x0 = (flat % 16) as f64 / 16.0;
            let expect = -2.0 * PI * a * (2.0 * PI * x0).sin() + 2.0 * PI * b * (2.0 * PI * x0).cos();
            assert!((dx.values()[flat] - expect).abs() < 1e-12);
        }
        assert!(jac.entry(1, 1).l2_norm() < 1e-15);
    }

    #[test]
    fn symmetrize_zeroes_unpaired() {
        let band = band2(4, 8);
        let mut c = CoeffGrid::zeros(&band);
        c.set(&[-2, 1], Complex64::new(1.0, 1.0)).unwrap();
        c.set(&[1, 1], Complex64::new(1.0, 1.0)).unwrap();
        c.symmetrize();
        assert_eq!(c.get(&[-2, 1]), ZERO);
        assert_eq!(c.get(&[1, 1]), Complex64::new(0.5, 0.5));
        assert_eq!(c.get(&[-1, -1]), Complex64::new(0.5, -0.5));
        assert_eq!(c.hermitian_defect(), 0.0);
    }
}
