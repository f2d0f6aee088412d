//! Iterative radix-2 complex FFT.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::{Complex, Error, Result};

/// Precomputed twiddles and bit-reversal table for one power-of-two size.
#[derive(Debug, Clone)]
pub struct FftPlan {
    size: usize,
    twiddles: Vec<Complex>,
    bitrev: Vec<usize>,
}

impl FftPlan {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 || !size.is_power_of_two() {
            return Err(Error::arg(format!("FFT size must be a power of two, got {size}")));
        }
        let twiddles = (0..size / 2)
            .map(|k| Complex::from_polar(1.0, -2.0 * PI * k as f64 / size as f64))
            .collect();
        let bits = size.trailing_zeros();
        let bitrev = (0..size)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        Ok(Self { size, twiddles, bitrev })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// In-place forward transform, `X_k = Σ x_n e^{-2πikn/N}`.
    pub fn forward(&self, buf: &mut [Complex]) {
        self.transform(buf, false);
    }

    /// In-place inverse transform including the `1/N` factor.
    pub fn inverse(&self, buf: &mut [Complex]) {
        self.transform(buf, true);
        let scale = 1.0 / self.size as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }

    fn transform(&self, buf: &mut [Complex], inverse: bool) {
        let n = self.size;
        assert_eq!(buf.len(), n, "buffer length does not match FFT size");
        for i in 0..n {
            let j = self.bitrev[i];
            if j > i {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let mut w = self.twiddles[k * stride];
                    if inverse {
                        w = w.conj();
                    }
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }

    /// One-sided spectrum (`N/2 + 1` bins) of a real signal zero-padded to
    /// the plan size.
    pub fn real_forward(&self, input: &[f64], scratch: &mut Vec<Complex>) -> Vec<Complex> {
        scratch.clear();
        scratch.extend(input.iter().map(|&x| Complex::new(x, 0.0)));
        scratch.resize(self.size, Complex::new(0.0, 0.0));
        self.forward(scratch);
        scratch[..self.size / 2 + 1].to_vec()
    }
}
