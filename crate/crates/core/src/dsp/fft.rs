//! 1D DFT with zero-padding.
//!
//! Power-of-two output lengths take an iterative radix-2 path; anything else
//! falls back to the naive O(N^2) sum. Sizes in this pipeline (8, 16, 64,
//! 256) are all on the fast path.

use std::f64::consts::TAU;

use num_complex::Complex64;

use super::DspError;

/// Y(m) = sum_{n < len(x)} x(n) * exp(-j*2*pi*n*m / n_out), m in [0, n_out).
pub fn fft_1d(x: &[Complex64], n_out: usize) -> Result<Vec<Complex64>, DspError> {
    if n_out < x.len() {
        return Err(DspError::BadFftSize {
            input: x.len(),
            output: n_out,
        });
    }
    if n_out == 0 {
        return Err(DspError::BadFftSize {
            input: 0,
            output: 0,
        });
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n_out];
    buf[..x.len()].copy_from_slice(x);
    if n_out.is_power_of_two() {
        fft_radix2_in_place(&mut buf);
        Ok(buf)
    } else {
        Ok(naive_dft(&buf))
    }
}

/// In-place forward transform for power-of-two lengths.
pub fn fft_radix2_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }
    // Bit-reversal permutation.
    let shift = (n.leading_zeros() + 1) as usize;
    for i in 0..n {
        let j = i.reverse_bits() >> shift;
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -TAU / len as f64;
        let wlen = Complex64::from_polar(1.0, ang);
        for start in (0..n).step_by(len) {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..len / 2 {
                let a = buf[start + k];
                let b = buf[start + k + len / 2] * w;
                buf[start + k] = a + b;
                buf[start + k + len / 2] = a - b;
                w *= wlen;
            }
        }
        len <<= 1;
    }
}

fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (m, o) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, &v) in x.iter().enumerate() {
            acc += v * Complex64::from_polar(1.0, -TAU * (i * m % n) as f64 / n as f64);
        }
        *o = acc;
    }
    out
}
