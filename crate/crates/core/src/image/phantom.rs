//! Deterministic synthetic test images on the unit domain.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::grid::ScalarImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhantomKind {
    /// Filled disc (ball in 3-D) of radius 0.25 centered in the domain.
    Circle,
    /// Thick annulus, radii 0.14 to 0.30, with an opening towards `+x`.
    CShape,
    /// Gaussian of standard deviation 0.1 centered in the domain.
    GaussianBlob,
    /// The Gaussian blob moved by `+0.0625` along every axis.
    OffsetBlob,
}

impl PhantomKind {
    pub const ALL: [PhantomKind; 4] = [Self::Circle, Self::CShape, Self::GaussianBlob, Self::OffsetBlob];

    pub fn name(self) -> &'static str {
        match self {
            Self::Circle => "circle",
            Self::CShape => "c-shape",
            Self::GaussianBlob => "gaussian-blob",
            Self::OffsetBlob => "offset-blob",
        }
    }

    /// Center of the shape in unit coordinates (first two axes; the third
    /// axis, if any, is always centered).
    pub fn center(self) -> [f64; 3] {
        match self {
            Self::OffsetBlob => [0.5625, 0.5625, 0.5625],
            _ => [0.5, 0.5, 0.5],
        }
    }
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
                Error::InvalidArgument(format!("unknown phantom '{s}', expected one of {}", names.join(", ")))
            })
    }
}

/// Periodic signed offset of `x` from `c`, wrapped into `[-0.5, 0.5)`.
fn wrap(x: f64, c: f64) -> f64 {
    let d = x - c;
    d - (d + 0.5).floor()
}

/// Smooth step from 1 (for `s < 0`) to 0 (for `s > 0`) over `width`.
fn inside(s: f64, width: f64) -> f64 {
    0.5 * (1.0 - (s / width).tanh())
}

/// Builds a phantom on `sizes`. `smoothness` is the edge width in voxels of
/// the finest axis; it also blurs the blobs.
pub fn make_phantom(kind: PhantomKind, sizes: &[usize], smoothness: f64) -> Result<ScalarImage> {
    if !(smoothness.is_finite() && smoothness > 0.0) {
        return invalid(format!("phantom smoothness must be positive, got {smoothness}"));
    }
    let h = 1.0 / *sizes.iter().max().unwrap_or(&1) as f64;
    let width = smoothness * h;
    let center = kind.center();
    let d = sizes.len();
    ScalarImage::from_fn(sizes, |x| {
        let mut off = [0.0; 3];
        for j in 0..d {
            off[j] = wrap(x[j], center[j]);
        }
        let r2: f64 = off.iter().map(|o| o * o).sum();
        match kind {
            PhantomKind::Circle => inside(r2.sqrt() - 0.25, width),
            PhantomKind::CShape => {
                let r = (off[0] * off[0] + off[1] * off[1]).sqrt();
                let ring = inside(r - 0.30, width) * inside(0.14 - r, width);
                let gap = inside(off[1].abs() - 0.07, width) * inside(-off[0], width);
                let slab = if d == 3 { inside(off[2].abs() - 0.3, width) } else { 1.0 };
                ring * (1.0 - gap) * slab
            }
            PhantomKind::GaussianBlob | PhantomKind::OffsetBlob => {
                let s2 = 0.01 + width * width;
                (-0.5 * r2 / s2).exp()
            }
        }
    })
}
