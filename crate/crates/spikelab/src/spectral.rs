//! FFT-based transforms on square grids: the 2D sine transform used to precondition
//! Dirichlet problems, and the periodic 2D Fourier transform.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

const ROW_BATCH: usize = 64;

/// In-place transpose of an `n × n` row-major matrix.
pub fn transpose<T: Copy>(a: &mut [T], n: usize) {
    const B: usize = 32;
    for ib in (0..n).step_by(B) {
        for jb in (ib..n).step_by(B) {
            for i in ib..(ib + B).min(n) {
                let j0 = if ib == jb { i + 1 } else { jb };
                for j in j0..(jb + B).min(n) {
                    a.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}

/// Smallest `m >= n` such that `2(m+1)` has no prime factor above 5.
pub fn smooth_size(n: usize) -> usize {
    let mut m = n;
    loop {
        let mut k = 2 * (m + 1);
        for p in [2, 3, 5] {
            while k % p == 0 {
                k /= p;
            }
        }
        if k == 1 {
            return m;
        }
        m += 1;
    }
}

/// Unnormalized DST-I of every row: `X_k = Σ_j x_j sin(π (j+1)(k+1) / (n+1))`.
pub struct SineTransform {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SineTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SineTransform").field("n", &self.n).finish()
    }
}

impl SineTransform {
    pub fn new(n: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(2 * (n + 1));
        Self { n, fft }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Transforms each length-`n` row of `data` in place. Rows are packed in pairs as the real
    /// and imaginary parts of one complex FFT; both odd extensions have purely imaginary spectra.
    pub fn rows(&self, data: &mut [f64]) {
        let n = self.n;
        let m = 2 * (n + 1);
        let rows = data.len() / n;
        let pairs = rows.div_ceil(2);
        let mut buf = vec![Complex64::new(0.0, 0.0); ROW_BATCH.min(pairs) * m];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for start in (0..pairs).step_by(ROW_BATCH) {
            let count = ROW_BATCH.min(pairs - start);
            let chunk = &mut buf[..count * m];
            for q in 0..count {
                let ra = 2 * (start + q);
                let rb = ra + 1;
                let dst = &mut chunk[q * m..(q + 1) * m];
                dst[0] = Complex64::new(0.0, 0.0);
                dst[n + 1] = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    let a = data[ra * n + j];
                    let b = if rb < rows { data[rb * n + j] } else { 0.0 };
                    dst[j + 1] = Complex64::new(a, b);
                    dst[m - 1 - j] = Complex64::new(-a, -b);
                }
            }
            self.fft.process_with_scratch(chunk, &mut scratch);
            for q in 0..count {
                let ra = 2 * (start + q);
                let rb = ra + 1;
                let src = &chunk[q * m..(q + 1) * m];
                for k in 0..n {
                    data[ra * n + k] = -0.5 * src[k + 1].im;
                    if rb < rows {
                        data[rb * n + k] = 0.5 * src[k + 1].re;
                    }
                }
            }
        }
    }

    /// DST-I along both axes of an `n × n` array.
    pub fn forward_2d(&self, data: &mut [f64]) {
        self.rows(data);
        transpose(data, self.n);
        self.rows(data);
        transpose(data, self.n);
    }
}

/// Periodic complex FFT on an `n × n` grid.
pub struct Fourier2D {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: usize,
}

impl std::fmt::Debug for Fourier2D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fourier2D").field("n", &self.n).finish()
    }
}

impl Fourier2D {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self { n, fwd, inv, scratch }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn run(&self, fft: &Arc<dyn Fft<f64>>, data: &mut [Complex64]) {
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch];
        fft.process_with_scratch(data, &mut scratch);
        transpose(data, self.n);
        fft.process_with_scratch(data, &mut scratch);
        transpose(data, self.n);
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(&self.fwd, data);
    }

    /// Inverse transform including the `1/n^2` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(&self.inv, data);
        let s = 1.0 / (self.n * self.n) as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }

    /// Signed integer wavenumber of FFT index `k`.
    pub fn wavenumber(&self, k: usize) -> f64 {
        if k <= self.n / 2 {
            k as f64
        } else {
            k as f64 - self.n as f64
        }
    }
}
