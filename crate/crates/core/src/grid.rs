//! Real-valued sample grids on the periodic unit domain `[0,1)^d`.
//!
//! Samples are stored flat with axis 0 varying fastest; sample `n` along axis
//! `j` sits at coordinate `n / N_j`.

use crate::error::{invalid, Error, Result};

pub(crate) fn check_sizes(sizes: &[usize]) -> Result<()> {
    if !(2..=3).contains(&sizes.len()) {
        return invalid(format!("expected 2 or 3 axes, got {}", sizes.len()));
    }
    if sizes.iter().any(|&n| n == 0) {
        return invalid(format!("grid sizes must be positive, got {sizes:?}"));
    }
    Ok(())
}

/// Decomposes a flat index into per-axis indices (unused axes are zero).
#[inline]
pub(crate) fn unflatten(mut flat: usize, sizes: &[usize]) -> [usize; 3] {
    let mut out = [0; 3];
    for (j, &n) in sizes.iter().enumerate() {
        out[j] = flat % n;
        flat /= n;
    }
    out
}

#[inline]
pub(crate) fn flatten(idx: &[usize], sizes: &[usize]) -> usize {
    let mut flat = 0;
    for j in (0..sizes.len()).rev() {
        flat = flat * sizes[j] + idx[j];
    }
    flat
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarImage {
    sizes: Vec<usize>,
    spacing: Vec<f64>,
    values: Vec<f64>,
}

impl ScalarImage {
    /// Wraps `values` (axis-0-fastest). Spacing defaults to the normalized
    /// domain spacing `1/N_j`.
    pub fn new(sizes: &[usize], values: Vec<f64>) -> Result<Self> {
        check_sizes(sizes)?;
        let expected: usize = sizes.iter().product();
        if values.len() != expected {
            return invalid(format!(
                "image has {} samples but sizes {sizes:?} need {expected}",
                values.len()
            ));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite image value at sample {pos}"));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            spacing: sizes.iter().map(|&n| 1.0 / n as f64).collect(),
            values,
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        let len = sizes.iter().product();
        Self::new(sizes, vec![0.0; len])
    }

    /// Samples `f` at the grid coordinates of the unit domain.
    pub fn from_fn(sizes: &[usize], f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        check_sizes(sizes)?;
        let len: usize = sizes.iter().product();
        let mut x = vec![0.0; sizes.len()];
        let values = (0..len)
            .map(|flat| {
                let idx = unflatten(flat, sizes);
                for (j, xj) in x.iter_mut().enumerate() {
                    *xj = idx[j] as f64 / sizes[j] as f64;
                }
                f(&x)
            })
            .collect();
        Self::new(sizes, values)
    }

    pub fn with_spacing(mut self, spacing: Vec<f64>) -> Result<Self> {
        if spacing.len() != self.sizes.len() || spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return invalid(format!("bad spacing {spacing:?}"));
        }
        self.spacing = spacing;
        Ok(self)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn dims(&self) -> usize {
        self.sizes.len()
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn from_parts_unchecked(sizes: &[usize], values: Vec<f64>) -> Self {
        Self {
            sizes: sizes.to_vec(),
            spacing: sizes.iter().map(|&n| 1.0 / n as f64).collect(),
            values,
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub(crate) fn ensure_same_grid(&self, sizes: &[usize], what: &str) -> Result<()> {
        if self.sizes != sizes {
            return Err(Error::InvalidArgument(format!(
                "{what}: grid {:?} does not match {:?}",
                self.sizes, sizes
            )));
        }
        Ok(())
    }
}

/// A `d`-component real vector field sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialVectorField {
    sizes: Vec<usize>,
    components: Vec<Vec<f64>>,
}

impl SpatialVectorField {
    pub fn new(sizes: &[usize], components: Vec<Vec<f64>>) -> Result<Self> {
        check_sizes(sizes)?;
        let expected: usize = sizes.iter().product();
        if components.len() != sizes.len() {
            return invalid(format!(
                "vector field has {} components on a {}-axis grid",
                components.len(),
                sizes.len()
            ));
        }
        for (c, comp) in components.iter().enumerate() {
            if comp.len() != expected {
                return invalid(format!(
                    "component {c} has {} samples, expected {expected}",
                    comp.len()
                ));
            }
            if comp.iter().any(|v| !v.is_finite()) {
                return invalid(format!("component {c} has non-finite samples"));
            }
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            components,
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        let len = sizes.iter().product();
        Self::new(sizes, vec![vec![0.0; len]; sizes.len()])
    }

    pub(crate) fn from_parts_unchecked(sizes: &[usize], components: Vec<Vec<f64>>) -> Self {
        Self {
            sizes: sizes.to_vec(),
            components,
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn dims(&self) -> usize {
        self.sizes.len()
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.components[c]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.components
    }

    /// Pointwise product with a scalar field.
    pub fn scaled_by(&self, s: &ScalarImage) -> Result<Self> {
        s.ensure_same_grid(&self.sizes, "scaled_by")?;
        let components = self
            .components
            .iter()
            .map(|comp| comp.iter().zip(s.values()).map(|(a, b)| a * b).collect())
            .collect();
        Ok(Self::from_parts_unchecked(&self.sizes, components))
    }

    /// Pointwise dot product with another vector field.
    pub fn dot(&self, other: &Self) -> Result<ScalarImage> {
        if self.sizes != other.sizes {
            return invalid("dot: grids differ");
        }
        let mut out = vec![0.0; self.components[0].len()];
        for (a, b) in self.components.iter().zip(&other.components) {
            for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                *o += x * y;
            }
        }
        Ok(ScalarImage::from_parts_unchecked(&self.sizes, out))
    }

    /// Largest absolute sample over all components.
    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}
