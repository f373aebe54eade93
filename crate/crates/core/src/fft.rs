//! Complex FFT of arbitrary length: iterative radix-2 for powers of two,
//! Bluestein's chirp-z reduction to a power-of-two convolution otherwise.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

#[derive(Debug, Clone)]
struct Radix2 {
    n: usize,
    // exp(-2πik/n), k < n/2
    twiddles: Vec<Complex64>,
    bitrev: Vec<usize>,
}

impl Radix2 {
    fn new(n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        let twiddles = (0..n / 2)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / n as f64;
                Complex64::new(libm::cos(a), libm::sin(a))
            })
            .collect();
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        Radix2 {
            n,
            twiddles,
            bitrev,
        }
    }

    fn forward(&self, buf: &mut [Complex64]) {
        let n = self.n;
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }
}

#[derive(Debug, Clone)]
struct Bluestein {
    inner: Radix2,
    // exp(-iπ n²/N), n < N
    chirp: Vec<Complex64>,
    // forward transform of the conjugate chirp, wrapped to the inner length
    kernel: Vec<Complex64>,
}

impl Bluestein {
    fn new(n: usize) -> Self {
        let m = (2 * n - 1).next_power_of_two();
        let inner = Radix2::new(m);
        let chirp: Vec<Complex64> = (0..n)
            .map(|k| {
                // k² mod 2N keeps the phase argument small.
                let k2 = ((k as u128 * k as u128) % (2 * n as u128)) as f64;
                let a = -PI * k2 / n as f64;
                Complex64::new(libm::cos(a), libm::sin(a))
            })
            .collect();
        let mut kernel = vec![Complex64::new(0.0, 0.0); m];
        kernel[0] = chirp[0].conj();
        for k in 1..n {
            kernel[k] = chirp[k].conj();
            kernel[m - k] = chirp[k].conj();
        }
        inner.forward(&mut kernel);
        Bluestein {
            inner,
            chirp,
            kernel,
        }
    }

    fn forward(&self, buf: &mut [Complex64]) {
        let n = self.chirp.len();
        let m = self.inner.n;
        let mut work = vec![Complex64::new(0.0, 0.0); m];
        for k in 0..n {
            work[k] = buf[k] * self.chirp[k];
        }
        self.inner.forward(&mut work);
        for (w, k) in work.iter_mut().zip(&self.kernel) {
            *w = (*w * k).conj();
        }
        // inverse via conjugated forward transform
        self.inner.forward(&mut work);
        let scale = 1.0 / m as f64;
        for k in 0..n {
            buf[k] = work[k].conj() * scale * self.chirp[k];
        }
    }
}

#[derive(Debug, Clone)]
enum Plan {
    Trivial,
    Radix2(Radix2),
    Bluestein(Bluestein),
}

/// Precomputed DFT of a fixed length `n`.
///
/// `forward` computes `X[k] = Σ x[j]·exp(−2πi·jk/n)`; `inverse` includes the
/// `1/n` factor. Plans are immutable and can be shared across threads.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    plan: Plan,
}

impl Fft {
    pub fn new(n: usize) -> Self {
        let plan = if n <= 1 {
            Plan::Trivial
        } else if n.is_power_of_two() {
            Plan::Radix2(Radix2::new(n))
        } else {
            Plan::Bluestein(Bluestein::new(n))
        };
        Fft { n, plan }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward transform. `buf.len()` must equal `self.len()`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n, "FFT buffer length");
        match &self.plan {
            Plan::Trivial => {}
            Plan::Radix2(p) => p.forward(buf),
            Plan::Bluestein(p) => p.forward(buf),
        }
    }

    /// In-place inverse transform, normalized by `1/n`.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        for v in buf.iter_mut() {
            *v = v.conj();
        }
        self.forward(buf);
        let scale = 1.0 / self.n.max(1) as f64;
        for v in buf.iter_mut() {
            *v = v.conj() * scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        let a = -2.0 * PI * ((j * k) % n) as f64 / n as f64;
                        v * Complex64::new(a.cos(), a.sin())
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft_for_many_lengths() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for n in [
            1usize, 2, 3, 4, 5, 6, 7, 8, 12, 16, 30, 64, 100, 120, 128, 200,
        ] {
            let x: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let expected = naive_dft(&x);
            let mut got = x.clone();
            let fft = Fft::new(n);
            fft.forward(&mut got);
            let scale = expected
                .iter()
                .map(|v| v.norm_sqr().sqrt())
                .fold(1.0, f64::max);
            for (a, b) in got.iter().zip(&expected) {
                assert!(
                    (a - b).norm_sqr().sqrt() < 1e-11 * scale,
                    "n={n}: {a} vs {b}"
                );
            }
            fft.inverse(&mut got);
            for (a, b) in got.iter().zip(&x) {
                assert!((a - b).norm_sqr().sqrt() < 1e-12, "n={n} inverse");
            }
        }
    }
}
