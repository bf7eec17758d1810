//! Welch-averaged real coherence between two signals.

use rustfft::{num_complex::Complex64, FftPlanner};

use crate::error::{Error, Result};

pub const SEGMENT_LEN: usize = 512;
/// 75 % overlap.
pub const SEGMENT_HOP: usize = 128;

/// Minimum number of averaged segments.
const MIN_SEGMENTS: usize = 4;

/// Bins whose power is this far below the strongest bin count as empty.
const EMPTY_BIN: f64 = 1e-20;

/// Periodic Hann window of length `n`.
pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect()
}

/// Real part of the normalised cross-spectral density, Welch-averaged over
/// Hann-windowed 512-sample segments with 75 % overlap. Returns the bin
/// frequencies and one value per bin; bins without power are `None`.
pub fn welch_coherence(x: &[f64], y: &[f64], sample_rate: f64) -> Result<(Vec<f64>, Vec<Option<f64>>)> {
    if x.len() != y.len() {
        return Err(Error::ChannelMismatch { expected: x.len(), actual: y.len() });
    }
    let needed = SEGMENT_LEN + (MIN_SEGMENTS - 1) * SEGMENT_HOP;
    if x.len() < needed {
        return Err(Error::SignalTooShort { needed, actual: x.len() });
    }
    let n = SEGMENT_LEN;
    let bins = n / 2 + 1;
    let win = hann(n);
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut gxx = vec![0.0; bins];
    let mut gyy = vec![0.0; bins];
    let mut gxy = vec![Complex64::new(0.0, 0.0); bins];
    let segments = (x.len() - n) / SEGMENT_HOP + 1;
    for s in 0..segments {
        let off = s * SEGMENT_HOP;
        for i in 0..n {
            buf[i] = Complex64::new(x[off + i] * win[i], y[off + i] * win[i]);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for k in 0..bins {
            let zk = buf[k];
            let zn = buf[(n - k) % n].conj();
            let xk = (zk + zn) * 0.5;
            let yk = (zk - zn) * Complex64::new(0.0, -0.5);
            gxx[k] += xk.norm_sqr();
            gyy[k] += yk.norm_sqr();
            gxy[k] += xk * yk.conj();
        }
    }
    let peak = gxx.iter().chain(&gyy).fold(0.0f64, |m, &v| m.max(v));
    let floor = peak * EMPTY_BIN;
    let values = (0..bins)
        .map(|k| {
            if gxx[k] <= floor || gyy[k] <= floor {
                None
            } else {
                Some((gxy[k].re / (gxx[k] * gyy[k]).sqrt()).clamp(-1.0, 1.0))
            }
        })
        .collect();
    let freqs = (0..bins).map(|k| k as f64 * sample_rate / n as f64).collect();
    Ok((freqs, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn self_coherence_is_one() {
        let x = noise(20000, 1);
        let (f, c) = welch_coherence(&x, &x, 96000.0).unwrap();
        assert_eq!(f.len(), 257);
        assert_eq!(f[1], 96000.0 / 512.0);
        for v in c {
            assert!((v.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_flip_gives_minus_one() {
        let x = noise(5000, 2);
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        let (_, c) = welch_coherence(&x, &y, 48000.0).unwrap();
        assert!(c.iter().all(|v| (v.unwrap() + 1.0).abs() < 1e-12));
    }

    #[test]
    fn too_short_and_mismatched() {
        let x = noise(895, 3);
        assert!(matches!(welch_coherence(&x, &x, 48000.0), Err(Error::SignalTooShort { needed: 896, .. })));
        let x = noise(896, 3);
        assert!(welch_coherence(&x, &x, 48000.0).is_ok());
        assert!(welch_coherence(&x, &x[..895], 48000.0).is_err());
    }

    #[test]
    fn silent_bins_are_missing() {
        // a pure tone exactly on bin 16 leaves most bins empty
        let x: Vec<f64> = (0..4096).map(|i| (2.0 * std::f64::consts::PI * 16.0 * i as f64 / 512.0).cos()).collect();
        let (_, c) = welch_coherence(&x, &x, 48000.0).unwrap();
        assert!(c[16].is_some());
        assert!(c[100].is_none());
        let z = vec![0.0; 4096];
        assert!(welch_coherence(&z, &z, 48000.0).unwrap().1.iter().all(Option::is_none));
    }

    #[test]
    fn integer_delay_follows_cosine() {
        let fs = 96000.0;
        let tau = 3usize;
        let base = noise(300_000 + tau, 4);
        let x = &base[tau..];
        let y = &base[..300_000];
        let (f, c) = welch_coherence(x, y, fs).unwrap();
        for (fk, ck) in f.iter().zip(&c) {
            let expect = (2.0 * std::f64::consts::PI * fk * tau as f64 / fs).cos();
            assert!((ck.unwrap() - expect).abs() < 0.03, "{fk}: {ck:?} vs {expect}");
        }
    }

    #[test]
    fn independent_noise_floor() {
        let x = noise(300_000, 5);
        let y = noise(300_000, 6);
        let (_, c) = welch_coherence(&x, &y, 96000.0).unwrap();
        assert!(c.iter().all(|v| v.unwrap().abs() < 0.08));
    }
}
