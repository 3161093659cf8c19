//! Multi-dimensional complex FFT over flat arrays stored axis-0-fastest.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Cached forward/inverse plans for one grid shape.
///
/// Neither direction is normalized; callers divide by [`FftNd::len`] where
/// they need a normalized transform.
#[derive(Clone)]
pub struct FftNd {
    sizes: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftNd").field("sizes", &self.sizes).finish()
    }
}

impl FftNd {
    pub fn new(sizes: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = sizes.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = sizes.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        Self {
            sizes: sizes.to_vec(),
            forward,
            inverse,
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        assert_eq!(data.len(), self.len(), "FFT buffer does not match plan shape");
        let total = data.len();
        let mut stride = 1;
        for (axis, plan) in plans.iter().enumerate() {
            let n = self.sizes[axis];
            if n > 1 {
                if stride == 1 {
                    // Contiguous lines can be transformed in place in one call.
                    plan.process(data);
                } else {
                    let mut line = vec![Complex64::new(0.0, 0.0); n];
                    let mut scratch =
                        vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
                    let block = stride * n;
                    for outer in (0..total).step_by(block) {
                        for inner in 0..stride {
                            let base = outer + inner;
                            for (i, slot) in line.iter_mut().enumerate() {
                                *slot = data[base + i * stride];
                            }
                            plan.process_with_scratch(&mut line, &mut scratch);
                            for (i, value) in line.iter().enumerate() {
                                data[base + i * stride] = *value;
                            }
                        }
                    }
                }
            }
            stride *= n;
        }
    }
}

/// Smallest length >= `n` whose only prime factors are 2, 3 and 5.
pub fn next_fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}
