//! Sine synthesis `out[i-1] = Σ_{m=1}^{n-1} g[m-1] sin(mπ i / n)` for `i = 1..n-1`,
//! evaluated with an FFT of length `2n` on the odd extension.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct SineSynthesis {
    n_cells: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SineSynthesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SineSynthesis").field("n_cells", &self.n_cells).finish()
    }
}

impl SineSynthesis {
    pub fn new(n_cells: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(2 * n_cells);
        Self { n_cells, fft }
    }

    /// `coeffs` and `out` both have length `n_cells - 1`.
    pub fn synthesize(&self, coeffs: &[f64], out: &mut [f64]) {
        let n = self.n_cells;
        debug_assert_eq!(coeffs.len(), n - 1);
        debug_assert_eq!(out.len(), n - 1);
        let mut buf = vec![Complex::new(0.0, 0.0); 2 * n];
        for m in 1..n {
            buf[m] = Complex::new(coeffs[m - 1], 0.0);
            buf[2 * n - m] = Complex::new(-coeffs[m - 1], 0.0);
        }
        self.fft.process(&mut buf);
        // FFT of the odd extension is -2i Σ g_m sin(mπi/n).
        for i in 1..n {
            out[i - 1] = -0.5 * buf[i].im;
        }
    }
}
