//! Mixed-radix complex FFT for arbitrary lengths.
//!
//! Lengths whose prime factors are all small are handled by a recursive
//! decimation-in-time Cooley-Tukey transform with specialised radix-2/3/4/5
//! butterflies. Lengths with a prime factor above [`MAX_DIRECT_RADIX`] go
//! through Bluestein's chirp-z algorithm on a power-of-two inner plan.
//!
//! Transforms are unnormalised: `forward` computes `X[k] = Σ x[n] e^{-2πikn/N}`
//! and `inverse` computes `x[n] = Σ X[k] e^{+2πikn/N}`.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

const MAX_DIRECT_RADIX: usize = 31;

#[derive(Debug, Clone)]
pub struct FftPlan {
    len: usize,
    kind: PlanKind,
}

#[derive(Debug, Clone)]
enum PlanKind {
    Trivial,
    MixedRadix { factors: Vec<usize>, twiddles: Vec<Complex64> },
    Bluestein(Box<Bluestein>),
}

#[derive(Debug, Clone)]
struct Bluestein {
    chirp: Vec<Complex64>,
    kernel_spectrum: Vec<Complex64>,
    inner: FftPlan,
}

impl FftPlan {
    pub fn new(len: usize) -> Self {
        if len <= 1 {
            return FftPlan { len, kind: PlanKind::Trivial };
        }
        let factors = factorize(len);
        if factors.iter().any(|&p| p > MAX_DIRECT_RADIX) {
            return FftPlan { len, kind: PlanKind::Bluestein(Box::new(Bluestein::new(len))) };
        }
        let twiddles = (0..len).map(|k| unit_phasor(-2.0 * PI * k as f64 / len as f64)).collect();
        FftPlan { len, kind: PlanKind::MixedRadix { factors, twiddles } }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place forward transform. Panics if `data.len() != self.len()`.
    pub fn forward(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len, "fft length mismatch");
        match &self.kind {
            PlanKind::Trivial => {}
            PlanKind::MixedRadix { factors, twiddles } => {
                let input = data.to_vec();
                mixed_radix(&input, 1, data, factors, twiddles, 1);
            }
            PlanKind::Bluestein(b) => b.forward(data),
        }
    }

    /// In-place unnormalised inverse transform.
    pub fn inverse(&self, data: &mut [Complex64]) {
        for z in data.iter_mut() {
            *z = z.conj();
        }
        self.forward(data);
        for z in data.iter_mut() {
            *z = z.conj();
        }
    }
}

fn unit_phasor(angle: f64) -> Complex64 {
    Complex64::new(angle.cos(), angle.sin())
}

/// Prime factors, with pairs of 2 merged into radix-4 stages, largest radix first.
fn factorize(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    while n % 4 == 0 {
        out.push(4);
        n /= 4;
    }
    let mut p = 2;
    while p * p <= n {
        while n % p == 0 {
            out.push(p);
            n /= p;
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Out-of-place recursive DIT step. `input` is read at `stride`, the result
/// occupies `out[..out.len()]`. `tw_stride` maps the local length onto the
/// full-length twiddle table.
fn mixed_radix(
    input: &[Complex64],
    stride: usize,
    out: &mut [Complex64],
    factors: &[usize],
    twiddles: &[Complex64],
    tw_stride: usize,
) {
    let n = out.len();
    let Some((&p, rest)) = factors.split_first() else {
        out[0] = input[0];
        return;
    };
    let m = n / p;
    for q in 0..p {
        mixed_radix(&input[q * stride..], stride * p, &mut out[q * m..(q + 1) * m], rest, twiddles, tw_stride * p);
    }

    let full = twiddles.len();
    let tw = |e: usize| twiddles[(e * tw_stride) % full];
    match p {
        2 => {
            for k in 0..m {
                let a = out[k];
                let b = out[k + m] * tw(k);
                out[k] = a + b;
                out[k + m] = a - b;
            }
        }
        3 => {
            let w1 = tw(m);
            let w2 = tw(2 * m);
            for k in 0..m {
                let a = out[k];
                let b = out[k + m] * tw(k);
                let c = out[k + 2 * m] * tw(2 * k);
                out[k] = a + b + c;
                out[k + m] = a + b * w1 + c * w2;
                out[k + 2 * m] = a + b * w2 + c * w1;
            }
        }
        4 => {
            for k in 0..m {
                let a0 = out[k];
                let a1 = out[k + m] * tw(k);
                let a2 = out[k + 2 * m] * tw(2 * k);
                let a3 = out[k + 3 * m] * tw(3 * k);
                let s02 = a0 + a2;
                let d02 = a0 - a2;
                let s13 = a1 + a3;
                // -i * (a1 - a3)
                let d13 = a1 - a3;
                let d13 = Complex64::new(d13.im, -d13.re);
                out[k] = s02 + s13;
                out[k + m] = d02 + d13;
                out[k + 2 * m] = s02 - s13;
                out[k + 3 * m] = d02 - d13;
            }
        }
        5 => {
            let w = [tw(0), tw(m), tw(2 * m), tw(3 * m), tw(4 * m)];
            for k in 0..m {
                let a = [
                    out[k],
                    out[k + m] * tw(k),
                    out[k + 2 * m] * tw(2 * k),
                    out[k + 3 * m] * tw(3 * k),
                    out[k + 4 * m] * tw(4 * k),
                ];
                for s in 0..5 {
                    let mut acc = a[0];
                    for (q, aq) in a.iter().enumerate().skip(1) {
                        acc += aq * w[(q * s) % 5];
                    }
                    out[k + s * m] = acc;
                }
            }
        }
        _ => {
            let mut a = [Complex64::new(0.0, 0.0); MAX_DIRECT_RADIX];
            for k in 0..m {
                for (q, slot) in a.iter_mut().enumerate().take(p) {
                    *slot = out[k + q * m] * tw(q * k);
                }
                for s in 0..p {
                    let mut acc = a[0];
                    for (q, aq) in a.iter().enumerate().take(p).skip(1) {
                        acc += aq * tw(((q * s) % p) * m);
                    }
                    out[k + s * m] = acc;
                }
            }
        }
    }
}

impl Bluestein {
    fn new(len: usize) -> Self {
        let inner_len = (2 * len - 1).next_power_of_two();
        let inner = FftPlan::new(inner_len);
        // k^2 mod 2N keeps the chirp argument small for large k.
        let chirp: Vec<Complex64> = (0..len)
            .map(|k| {
                let k2 = ((k as u128 * k as u128) % (2 * len as u128)) as f64;
                unit_phasor(-PI * k2 / len as f64)
            })
            .collect();
        let mut kernel = vec![Complex64::new(0.0, 0.0); inner_len];
        kernel[0] = chirp[0].conj();
        for k in 1..len {
            kernel[k] = chirp[k].conj();
            kernel[inner_len - k] = chirp[k].conj();
        }
        inner.forward(&mut kernel);
        let scale = 1.0 / inner_len as f64;
        for z in kernel.iter_mut() {
            *z *= scale;
        }
        Bluestein { chirp, kernel_spectrum: kernel, inner }
    }

    fn forward(&self, data: &mut [Complex64]) {
        let inner_len = self.inner.len();
        let mut work = vec![Complex64::new(0.0, 0.0); inner_len];
        for (k, (w, x)) in work.iter_mut().zip(data.iter()).enumerate() {
            *w = x * self.chirp[k];
        }
        self.inner.forward(&mut work);
        for (w, h) in work.iter_mut().zip(&self.kernel_spectrum) {
            *w *= h;
        }
        self.inner.inverse(&mut work);
        for (k, x) in data.iter_mut().enumerate() {
            *x = work[k] * self.chirp[k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| v * unit_phasor(-2.0 * PI * ((j * k) % n) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    fn signal(n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|i| {
                let t = i as f64;
                Complex64::new((0.37 * t).sin() + 0.1 * t.sqrt(), (1.3 * t + 0.2).cos())
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft_for_assorted_lengths() {
        for n in [1, 2, 3, 4, 5, 6, 7, 8, 12, 16, 25, 30, 37, 49, 64, 97, 100, 125, 250, 2 * 53] {
            let x = signal(n);
            let expected = naive_dft(&x);
            let mut got = x.clone();
            FftPlan::new(n).forward(&mut got);
            let scale = expected.iter().map(|z| z.norm()).fold(1.0, f64::max);
            for (a, b) in got.iter().zip(&expected) {
                assert!((a - b).norm() < 1e-11 * scale, "n={n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn inverse_round_trip() {
        for n in [2500, 1024, 211] {
            let x = signal(n);
            let plan = FftPlan::new(n);
            let mut y = x.clone();
            plan.forward(&mut y);
            plan.inverse(&mut y);
            for (a, b) in y.iter().zip(&x) {
                assert!((a / n as f64 - b).norm() < 1e-11);
            }
        }
    }

    #[test]
    fn factorization_prefers_radix_four() {
        assert_eq!(factorize(2500), vec![4, 5, 5, 5, 5]);
        assert_eq!(factorize(8), vec![4, 2]);
        assert_eq!(factorize(97), vec![97]);
    }
}
