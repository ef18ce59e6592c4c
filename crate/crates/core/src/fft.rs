//! Three-dimensional complex FFT on x-fastest arrays, built from rustfft
//! line transforms.
//!
//! The circulant-embedded convolution only ever transforms inputs that are
//! zero outside a corner box and only reads outputs inside that box, so the
//! forward and inverse passes can skip the lines that are known to be zero
//! or are not needed.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::C64;

pub struct Fft3 {
    dims: [usize; 3],
    plans: [[Arc<dyn Fft<f64>>; 3]; 2],
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("dims", &self.dims).finish()
    }
}

impl Fft3 {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let mut plan = |dir| -> [Arc<dyn Fft<f64>>; 3] {
            std::array::from_fn(|a| planner.plan_fft(dims[a], dir))
        };
        let fwd = plan(FftDirection::Forward);
        let inv = plan(FftDirection::Inverse);
        Self {
            dims,
            plans: [fwd, inv],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, data: &mut [C64]) {
        self.forward_supported(data, self.dims);
    }

    /// Inverse transform scaled by `1/len`.
    pub fn inverse(&self, data: &mut [C64]) {
        self.inverse_truncated(data, self.dims);
    }

    /// Forward transform of an array that is zero outside `[0, support)`.
    pub fn forward_supported(&self, data: &mut [C64], support: [usize; 3]) {
        assert_eq!(data.len(), self.len());
        let plans = &self.plans[0];
        self.pass_x(data, &plans[0], support[1], support[2]);
        self.pass_y(data, &plans[1], support[2]);
        self.pass_z(data, &plans[2], self.dims[1]);
    }

    /// Inverse transform that is only valid inside `[0, support)`; entries
    /// outside the box are left unspecified.
    pub fn inverse_truncated(&self, data: &mut [C64], support: [usize; 3]) {
        assert_eq!(data.len(), self.len());
        let plans = &self.plans[1];
        self.pass_z(data, &plans[2], self.dims[1]);
        self.pass_y(data, &plans[1], support[2]);
        self.pass_x(data, &plans[0], support[1], support[2]);
        let scale = 1.0 / self.len() as f64;
        let [mx, my, _] = self.dims;
        for k in 0..support[2] {
            for j in 0..support[1] {
                let row = (j + my * k) * mx;
                for v in &mut data[row..row + support[0]] {
                    *v *= scale;
                }
            }
        }
    }

    fn pass_x(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>, ny: usize, nz: usize) {
        let [mx, my, _] = self.dims;
        if mx == 1 {
            return;
        }
        data.par_chunks_mut(mx * my)
            .take(nz)
            .for_each(|slab| {
                let mut scratch = vec![C64::default(); plan.get_inplace_scratch_len()];
                plan.process_with_scratch(&mut slab[..ny * mx], &mut scratch);
            });
    }

    fn pass_y(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>, nz: usize) {
        let [mx, my, _] = self.dims;
        if my == 1 {
            return;
        }
        data.par_chunks_mut(mx * my).take(nz).for_each(|slab| {
            let mut t = vec![C64::default(); mx * my];
            let mut scratch = vec![C64::default(); plan.get_inplace_scratch_len()];
            transpose(slab, &mut t, mx, my);
            plan.process_with_scratch(&mut t, &mut scratch);
            transpose(&t, slab, my, mx);
        });
    }

    fn pass_z(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>, ny: usize) {
        let [mx, my, mz] = self.dims;
        if mz == 1 {
            return;
        }
        let mut plane = vec![C64::default(); mx * mz];
        let mut t = vec![C64::default(); mx * mz];
        let mut scratch = vec![C64::default(); plan.get_inplace_scratch_len()];
        for j in 0..ny {
            for k in 0..mz {
                let src = (j + my * k) * mx;
                plane[k * mx..(k + 1) * mx].copy_from_slice(&data[src..src + mx]);
            }
            transpose(&plane, &mut t, mx, mz);
            plan.process_with_scratch(&mut t, &mut scratch);
            transpose(&t, &mut plane, mz, mx);
            for k in 0..mz {
                let dst = (j + my * k) * mx;
                data[dst..dst + mx].copy_from_slice(&plane[k * mx..(k + 1) * mx]);
            }
        }
    }
}

/// `src` has `rows` rows of `cols` entries; `dst` receives the transpose.
fn transpose(src: &[C64], dst: &mut [C64], cols: usize, rows: usize) {
    const B: usize = 16;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Smallest integer `>= n` whose only prime factors are 2, 3, 5 and 7.
pub fn fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5, 7] {
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

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn naive_dft(data: &[C64], dims: [usize; 3], sign: f64) -> Vec<C64> {
        let [nx, ny, nz] = dims;
        let mut out = vec![C64::default(); data.len()];
        for k2 in 0..nz {
            for k1 in 0..ny {
                for k0 in 0..nx {
                    let mut acc = C64::default();
                    for z in 0..nz {
                        for y in 0..ny {
                            for x in 0..nx {
                                let ph = sign
                                    * 2.0
                                    * PI
                                    * ((k0 * x) as f64 / nx as f64
                                        + (k1 * y) as f64 / ny as f64
                                        + (k2 * z) as f64 / nz as f64);
                                acc += data[x + nx * (y + ny * z)] * C64::from_polar(1.0, ph);
                            }
                        }
                    }
                    out[k0 + nx * (k1 + ny * k2)] = acc;
                }
            }
        }
        out
    }

    fn sample(n: usize) -> Vec<C64> {
        (0..n)
            .map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect()
    }

    #[test]
    fn forward_matches_naive_dft() {
        let dims = [4, 3, 5];
        let x = sample(60);
        let mut y = x.clone();
        Fft3::new(dims).forward(&mut y);
        let want = naive_dft(&x, dims, -1.0);
        for (a, b) in y.iter().zip(&want) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn supported_forward_and_truncated_inverse() {
        let dims = [6, 4, 6];
        let support = [3, 2, 3];
        let fft = Fft3::new(dims);
        let mut x = vec![C64::default(); fft.len()];
        let vals = sample(18);
        let mut n = 0;
        for k in 0..3 {
            for j in 0..2 {
                for i in 0..3 {
                    x[i + 6 * (j + 4 * k)] = vals[n];
                    n += 1;
                }
            }
        }
        let mut full = x.clone();
        fft.forward(&mut full);
        let mut pruned = x.clone();
        fft.forward_supported(&mut pruned, support);
        for (a, b) in full.iter().zip(&pruned) {
            assert!((a - b).norm() < 1e-12);
        }
        fft.inverse_truncated(&mut pruned, support);
        for k in 0..3 {
            for j in 0..2 {
                for i in 0..3 {
                    let idx = i + 6 * (j + 4 * k);
                    assert!((pruned[idx] - x[idx]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn fast_len_is_smooth() {
        assert_eq!(fast_len(1), 1);
        assert_eq!(fast_len(11), 12);
        assert_eq!(fast_len(117), 120);
        assert_eq!(fast_len(343), 343);
    }
}
