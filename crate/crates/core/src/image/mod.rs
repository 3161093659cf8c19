//! Image kernels on the periodic grid: multilinear interpolation, warping,
//! centered-difference gradients and mismatch measures.

pub mod io;
pub mod phantom;

use crate::error::Result;
use crate::grid::{unflatten, ScalarImage, SpatialVectorField};

pub use io::{read_field, read_image, write_field, write_image};
pub use phantom::{make_phantom, PhantomKind};

/// Per-axis stencil of a periodic multilinear interpolant around a point.
#[derive(Clone, Copy, Default)]
struct Axis {
    lo: usize,
    hi: usize,
    below: usize,
    frac: f64,
}

impl Axis {
    #[inline]
    fn new(p: f64, n: usize) -> Self {
        let fl = p.floor();
        let n_i = n as i64;
        let lo = (fl as i64).rem_euclid(n_i);
        Self {
            lo: lo as usize,
            hi: ((lo + 1) % n_i) as usize,
            below: ((lo - 1).rem_euclid(n_i)) as usize,
            frac: p - fl,
        }
    }
}

/// Periodic bilinear/trilinear interpolation of a sampled image at fractional
/// voxel positions.
pub struct Interpolator<'a> {
    values: &'a [f64],
    sizes: &'a [usize],
    strides: [usize; 3],
    inv_spacing: [f64; 3],
}

impl<'a> Interpolator<'a> {
    pub fn new(image: &'a ScalarImage) -> Self {
        Self::from_raw(image.values(), image.sizes(), image.spacing())
    }

    pub(crate) fn from_raw(values: &'a [f64], sizes: &'a [usize], spacing: &[f64]) -> Self {
        let mut strides = [0; 3];
        let mut inv_spacing = [0.0; 3];
        let mut s = 1;
        for j in 0..sizes.len() {
            strides[j] = s;
            s *= sizes[j];
            inv_spacing[j] = 1.0 / spacing[j];
        }
        Self {
            values,
            sizes,
            strides,
            inv_spacing,
        }
    }

    fn axes(&self, p: &[f64]) -> [Axis; 3] {
        let mut ax = [Axis::default(); 3];
        for j in 0..self.sizes.len() {
            ax[j] = Axis::new(p[j], self.sizes[j]);
        }
        ax
    }

    /// Value at voxel position `p` (index units).
    pub fn value(&self, p: &[f64]) -> f64 {
        let d = self.sizes.len();
        let ax = self.axes(p);
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut off = 0;
            for (j, a) in ax.iter().enumerate().take(d) {
                if corner >> j & 1 == 1 {
                    w *= a.frac;
                    off += a.hi * self.strides[j];
                } else {
                    w *= 1.0 - a.frac;
                    off += a.lo * self.strides[j];
                }
            }
            if w != 0.0 {
                acc += w * self.values[off];
            }
        }
        acc
    }

    /// Value and spatial gradient (per unit length) of the interpolant at `p`.
    ///
    /// Across a cell face, where the interpolant has a kink, the gradient is
    /// the mean of the two one-sided slopes; at grid nodes this reduces to
    /// centered differences.
    pub fn value_and_gradient(&self, p: &[f64]) -> (f64, [f64; 3]) {
        let d = self.sizes.len();
        let ax = self.axes(p);
        let mut grad = [0.0; 3];
        for j in 0..d {
            let a = ax[j];
            let others = 1usize << (d - 1);
            let mut acc = 0.0;
            for corner in 0..others {
                let mut w = 1.0;
                let mut off = 0;
                let mut bit = 0;
                for (k, b) in ax.iter().enumerate().take(d) {
                    if k == j {
                        continue;
                    }
                    if corner >> bit & 1 == 1 {
                        w *= b.frac;
                        off += b.hi * self.strides[k];
                    } else {
                        w *= 1.0 - b.frac;
                        off += b.lo * self.strides[k];
                    }
                    bit += 1;
                }
                if w == 0.0 {
                    continue;
                }
                let s = self.strides[j];
                let slope = if a.frac == 0.0 {
                    0.5 * (self.values[off + a.hi * s] - self.values[off + a.below * s])
                } else {
                    self.values[off + a.hi * s] - self.values[off + a.lo * s]
                };
                acc += w * slope;
            }
            grad[j] = acc * self.inv_spacing[j];
        }
        (self.value(p), grad)
    }
}

/// Voxel position of grid node `flat` displaced by `disp` (unit-length
/// coordinates).
#[inline]
pub(crate) fn displaced_position(flat: usize, sizes: &[usize], spacing: &[f64], disp: &[f64]) -> [f64; 3] {
    let idx = unflatten(flat, sizes);
    let mut p = [0.0; 3];
    for j in 0..sizes.len() {
        p[j] = idx[j] as f64 + disp[j] / spacing[j];
    }
    p
}

/// Samples `image` at `x + displacement(x)` for every grid node `x`.
pub fn warp(image: &ScalarImage, displacement: &SpatialVectorField) -> Result<ScalarImage> {
    image.ensure_same_grid(displacement.sizes(), "warp")?;
    let interp = Interpolator::new(image);
    let sizes = image.sizes();
    let d = sizes.len();
    let mut disp = [0.0; 3];
    let values = (0..image.len())
        .map(|n| {
            for (j, dj) in disp.iter_mut().enumerate().take(d) {
                *dj = displacement.component(j)[n];
            }
            interp.value(&displaced_position(n, sizes, image.spacing(), &disp[..d]))
        })
        .collect();
    ScalarImage::new(sizes, values)?.with_spacing(image.spacing().to_vec())
}

/// Centered-difference gradient with periodic wrap, scaled by the spacing.
pub fn spatial_gradient(image: &ScalarImage) -> SpatialVectorField {
    let sizes = image.sizes();
    let v = image.values();
    let mut stride = 1;
    let mut comps = Vec::with_capacity(sizes.len());
    for (j, &n) in sizes.iter().enumerate() {
        let scale = 0.5 / image.spacing()[j];
        let comp = (0..v.len())
            .map(|flat| {
                let i = (flat / stride) % n;
                let base = flat - i * stride;
                let up = base + ((i + 1) % n) * stride;
                let down = base + ((i + n - 1) % n) * stride;
                (v[up] - v[down]) * scale
            })
            .collect();
        comps.push(comp);
        stride *= n;
    }
    SpatialVectorField::from_parts_unchecked(sizes, comps)
}

/// Mean squared difference over all voxels.
pub fn mse(a: &ScalarImage, b: &ScalarImage) -> Result<f64> {
    a.ensure_same_grid(b.sizes(), "mse")?;
    let sum: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.len() as f64)
}

/// Pointwise determinant of `Id + G`, where `gradient[i * d + j]` holds the
/// samples of `d_j u_i`.
pub fn jacobian_determinant(sizes: &[usize], gradient: &[Vec<f64>]) -> Vec<f64> {
    let d = sizes.len();
    let len: usize = sizes.iter().product();
    (0..len)
        .map(|n| {
            let a = |i: usize, j: usize| gradient[i * d + j][n] + if i == j { 1.0 } else { 0.0 };
            if d == 2 {
                a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0)
            } else {
                a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1))
                    - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
                    + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0))
            }
        })
        .collect()
}

/// Pointwise `det(Id + D w)` with `D w` from centered differences.
pub fn displacement_jacobian_determinant(w: &SpatialVectorField, spacing: &[f64]) -> Result<ScalarImage> {
    let sizes = w.sizes();
    let mut grad = Vec::with_capacity(sizes.len() * sizes.len());
    for c in w.components() {
        let img = ScalarImage::new(sizes, c.clone())?.with_spacing(spacing.to_vec())?;
        grad.extend(spatial_gradient(&img).into_components());
    }
    ScalarImage::new(sizes, jacobian_determinant(sizes, &grad))
}
