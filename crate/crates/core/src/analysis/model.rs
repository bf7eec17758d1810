//! Expected value of the Welch coherence estimate for a source set.

use rustfft::{num_complex::Complex64, FftPlanner};

use super::sources::{receiver_distances, SourceSet};
use super::welch::{hann, SEGMENT_LEN};
use super::ReceiverPair;
use crate::error::Result;

/// Oversampling of the frequency grid used to smear the true spectra with
/// the window kernel.
const OVERSAMPLE: usize = 8;

/// Coherence the Welch estimator converges to for infinitely long noise:
/// the true cross and auto spectra smoothed by the squared magnitude of the
/// window transform, then normalised. One value per Welch bin.
pub fn expected_coherence(
    sources: &SourceSet,
    pair: &ReceiverPair,
    sample_rate: f64,
    speed_of_sound: f64,
) -> Result<Vec<f64>> {
    let dist = receiver_distances(&sources.positions, pair)?;
    let cov = sources.covariance();
    let n = SEGMENT_LEN * OVERSAMPLE;
    let freqs: Vec<f64> = (0..n)
        .map(|i| {
            let k = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
            k * sample_rate / n as f64
        })
        .collect();
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut sxx = vec![Complex64::new(0.0, 0.0); n];
    let mut syy = vec![Complex64::new(0.0, 0.0); n];
    let mut sxy = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..sources.len() {
        for l in 0..sources.len() {
            let w = cov[(k, l)];
            if w == 0.0 {
                continue;
            }
            let t = |a: usize, r: usize| dist[a][r] / speed_of_sound;
            for (i, f) in freqs.iter().enumerate() {
                let ph = |dt: f64| Complex64::from_polar(1.0, -two_pi * f * dt);
                sxx[i] += ph(t(k, 0) - t(l, 0)) * (w / (dist[k][0] * dist[l][0]));
                syy[i] += ph(t(k, 1) - t(l, 1)) * (w / (dist[k][1] * dist[l][1]));
                sxy[i] += ph(t(k, 0) - t(l, 1)) * (w / (dist[k][0] * dist[l][1]));
            }
        }
    }
    // circular convolution with |W|² through the FFT
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut kernel: Vec<Complex64> = hann(SEGMENT_LEN).into_iter().map(|w| Complex64::new(w, 0.0)).collect();
    kernel.resize(n, Complex64::new(0.0, 0.0));
    fwd.process(&mut kernel);
    let mut kernel: Vec<Complex64> = kernel.iter().map(|w| Complex64::new(w.norm_sqr(), 0.0)).collect();
    fwd.process(&mut kernel);
    let smooth = |s: &mut Vec<Complex64>| {
        fwd.process(s);
        s.iter_mut().zip(&kernel).for_each(|(a, b)| *a *= b);
        inv.process(s);
    };
    smooth(&mut sxx);
    smooth(&mut syy);
    smooth(&mut sxy);
    Ok((0..=SEGMENT_LEN / 2)
        .map(|b| {
            let i = b * OVERSAMPLE;
            let d = (sxx[i].re * syy[i].re).sqrt();
            if d > 0.0 {
                (sxy[i].re / d).clamp(-1.0, 1.0)
            } else {
                0.0
            }
        })
        .collect())
}
