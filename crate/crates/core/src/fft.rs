//! Complex FFT of power-of-two length.
//!
//! Without the `std` feature the transform is a built-in iterative radix-2
//! kernel; with it, [`Fft`] dispatches to `rustfft`. Both are unnormalized:
//! `inverse(forward(x)) == n * x`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Precomputed tables for an in-place decimation-in-time radix-2 transform.
#[derive(Debug, Clone)]
pub struct Radix2 {
    n: usize,
    twiddles: Vec<Complex64>,
    bitrev: Vec<u32>,
}

impl Radix2 {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::InvalidInput(alloc::format!(
                "FFT length {n} is not a power of two"
            )));
        }
        let bits = n.trailing_zeros();
        let bitrev = (0..n as u32)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (32 - bits) })
            .collect();
        let twiddles = (0..n / 2)
            .map(|k| {
                let theta = -2.0 * PI * k as f64 / n as f64;
                Complex64::new(libm::cos(theta), libm::sin(theta))
            })
            .collect();
        Ok(Self { n, twiddles, bitrev })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn permute(&self, buf: &mut [Complex64]) {
        for (i, &r) in self.bitrev.iter().enumerate() {
            let r = r as usize;
            if i < r {
                buf.swap(i, r);
            }
        }
    }

    fn butterflies(&self, buf: &mut [Complex64], conj: bool) {
        let n = self.n;
        let mut half = 1;
        while half < n {
            let stride = n / (2 * half);
            for chunk in buf.chunks_exact_mut(2 * half) {
                let (lo, hi) = chunk.split_at_mut(half);
                for (k, (a, b)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                    let mut w = self.twiddles[k * stride];
                    if conj {
                        w = w.conj();
                    }
                    let t = *b * w;
                    *b = *a - t;
                    *a += t;
                }
            }
            half *= 2;
        }
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n);
        self.permute(buf);
        self.butterflies(buf, false);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n);
        self.permute(buf);
        self.butterflies(buf, true);
    }
}

#[derive(Clone)]
enum Backend {
    #[cfg_attr(feature = "std", allow(dead_code))]
    Radix2(Arc<Radix2>),
    #[cfg(feature = "std")]
    RustFft {
        forward: Arc<dyn rustfft::Fft<f64>>,
        inverse: Arc<dyn rustfft::Fft<f64>>,
    },
}

/// FFT plan plus scratch space. Cloning shares the plan.
#[derive(Clone)]
pub struct Fft {
    n: usize,
    backend: Backend,
    #[cfg_attr(not(feature = "std"), allow(dead_code))]
    scratch: Vec<Complex64>,
}

impl core::fmt::Debug for Fft {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Fft").field("n", &self.n).finish()
    }
}

impl Fft {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::InvalidInput(alloc::format!(
                "FFT length {n} is not a power of two"
            )));
        }
        #[cfg(feature = "std")]
        {
            let mut planner = rustfft::FftPlanner::new();
            let forward = planner.plan_fft_forward(n);
            let inverse = planner.plan_fft_inverse(n);
            let scratch_len = forward
                .get_inplace_scratch_len()
                .max(inverse.get_inplace_scratch_len());
            Ok(Self {
                n,
                backend: Backend::RustFft { forward, inverse },
                scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            })
        }
        #[cfg(not(feature = "std"))]
        {
            Ok(Self {
                n,
                backend: Backend::Radix2(Arc::new(Radix2::new(n)?)),
                scratch: vec![],
            })
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&mut self, buf: &mut [Complex64]) {
        match &self.backend {
            Backend::Radix2(plan) => plan.forward(buf),
            #[cfg(feature = "std")]
            Backend::RustFft { forward, .. } => {
                forward.process_with_scratch(buf, &mut self.scratch)
            }
        }
    }

    pub fn inverse(&mut self, buf: &mut [Complex64]) {
        match &self.backend {
            Backend::Radix2(plan) => plan.inverse(buf),
            #[cfg(feature = "std")]
            Backend::RustFft { inverse, .. } => {
                inverse.process_with_scratch(buf, &mut self.scratch)
            }
        }
    }
}

/// Angular frequencies of the DFT modes on a periodic domain of length `period`,
/// in standard FFT order (non-negative first, then negative). The Nyquist mode
/// is reported as positive.
pub fn angular_frequencies(n: usize, period: f64) -> Vec<f64> {
    let dk = 2.0 * PI / period;
    (0..n)
        .map(|m| {
            let k = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
            k * dk
        })
        .collect()
}
