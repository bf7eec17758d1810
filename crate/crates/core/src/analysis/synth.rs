//! Receiver-pair signal synthesis and the coherence experiments built on it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use super::sources::{idealized_irs, receiver_distances, Arrangement, SourceSet};
use super::welch::{welch_coherence, SEGMENT_HOP, SEGMENT_LEN};
use super::{sinc_reference, CoherenceCurve, CurveMeta, ReceiverPair, RotationEnvelope};
use crate::dsp::fft_convolve;
use crate::error::{Error, Result};
use crate::scene::DEFAULT_SPEED_OF_SOUND;

/// Largest phase step (radians) allowed between neighbouring points of the
/// coarse spectral grid.
const MAX_PHASE_STEP: f64 = 0.01;

/// Shortest noise duration accepted by the harness.
pub const MIN_DURATION: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Gaussian signals drawn directly with the target cross-spectrum.
    Spectral,
    /// Time-domain noise convolved with the idealized responses.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub sample_rate: f64,
    /// Distance of the loudspeakers or VRS from the receiver centre.
    pub radius: f64,
    pub speed_of_sound: f64,
    pub method: Method,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self { sample_rate: 96000.0, radius: 1.25, speed_of_sound: DEFAULT_SPEED_OF_SOUND, method: Method::Spectral }
    }
}

/// Auto and cross spectra on `count` points spaced `step` Hz apart.
struct Spectra {
    sxx: Vec<f64>,
    syy: Vec<f64>,
    sxy: Vec<Complex64>,
}

fn spectra_on_grid(sources: &SourceSet, pair: &ReceiverPair, c: f64, step: f64, count: usize) -> Result<Spectra> {
    let dist = receiver_distances(&sources.positions, pair)?;
    let cov = sources.covariance();
    let mut sxx = vec![0.0; count];
    let mut syy = vec![0.0; count];
    let mut sxy = vec![Complex64::new(0.0, 0.0); count];
    let two_pi = 2.0 * std::f64::consts::PI;
    for k in 0..sources.len() {
        for l in 0..sources.len() {
            let w = cov[(k, l)];
            if w == 0.0 {
                continue;
            }
            let (t1k, t2k) = (dist[k][0] / c, dist[k][1] / c);
            let (t1l, t2l) = (dist[l][0] / c, dist[l][1] / c);
            // xx and yy are Hermitian in (k, l): sum real parts over all pairs
            if k <= l {
                let m = if k == l { 1.0 } else { 2.0 };
                accumulate_real(&mut sxx, m * w / (dist[k][0] * dist[l][0]), -two_pi * step * (t1k - t1l));
                accumulate_real(&mut syy, m * w / (dist[k][1] * dist[l][1]), -two_pi * step * (t2k - t2l));
            }
            accumulate(&mut sxy, w / (dist[k][0] * dist[l][1]), -two_pi * step * (t1k - t2l));
        }
    }
    Ok(Spectra { sxx, syy, sxy })
}

/// Adds `w · cos(m·φ)` for every grid point `m`.
fn accumulate_real(out: &mut [f64], w: f64, phi: f64) {
    if phi == 0.0 {
        out.iter_mut().for_each(|v| *v += w);
        return;
    }
    let rot = Complex64::from_polar(1.0, phi);
    let mut p = Complex64::new(w, 0.0);
    for (m, v) in out.iter_mut().enumerate() {
        if m % 1024 == 0 {
            p = Complex64::from_polar(w, phi * m as f64);
        }
        *v += p.re;
        p *= rot;
    }
}

/// Adds `w · e^{j·m·φ}` for every grid point `m`.
fn accumulate(out: &mut [Complex64], w: f64, phi: f64) {
    let rot = Complex64::from_polar(1.0, phi);
    let mut p = Complex64::new(w, 0.0);
    for (m, v) in out.iter_mut().enumerate() {
        if m % 1024 == 0 {
            p = Complex64::from_polar(w, phi * m as f64);
        }
        *v += p;
        p *= rot;
    }
}

fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Two receiver signals of `len` samples whose joint spectrum matches the
/// sources radiating independent unit-variance Gaussian noise.
fn synthesize_spectral(
    sources: &SourceSet,
    pair: &ReceiverPair,
    len: usize,
    sample_rate: f64,
    c: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dist = receiver_distances(&sources.positions, pair)?;
    let times: Vec<f64> = dist.iter().flatten().map(|d| d / c).collect();
    let spread = times.iter().fold(f64::NEG_INFINITY, |m, &t| m.max(t)) - times.iter().fold(f64::INFINITY, |m, &t| m.min(t));
    let df = sample_rate / len as f64;
    let half = len / 2;
    // coarse grid spacing: a whole number of fine bins
    let max_step = if spread > 0.0 { MAX_PHASE_STEP / (2.0 * std::f64::consts::PI * spread) } else { f64::INFINITY };
    let q = ((max_step / df).floor() as usize).clamp(1, half.max(1));
    let coarse = half / q + 2;
    let s = spectra_on_grid(sources, pair, c, q as f64 * df, coarse)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (len as f64).sqrt();
    let mut z = vec![Complex64::new(0.0, 0.0); len];
    for k in 0..=half {
        let (m, frac) = (k / q, (k % q) as f64 / q as f64);
        let sxx = s.sxx[m] + (s.sxx[m + 1] - s.sxx[m]) * frac;
        let syy = s.syy[m] + (s.syy[m + 1] - s.syy[m]) * frac;
        let sxy = s.sxy[m] + (s.sxy[m + 1] - s.sxy[m]) * frac;
        let real_bin = k == 0 || 2 * k == len;
        let (z1, z2) = if real_bin {
            (Complex64::new(StandardNormal.sample(&mut rng), 0.0), Complex64::new(StandardNormal.sample(&mut rng), 0.0))
        } else {
            (complex_normal(&mut rng), complex_normal(&mut rng))
        };
        let a = sxx.max(0.0).sqrt();
        let (xk, yk) = if a > 0.0 {
            let mut b = sxy.conj() / a;
            if real_bin {
                b = Complex64::new(b.re, 0.0);
            }
            let cc = (syy - b.norm_sqr()).max(0.0).sqrt();
            (z1 * a, b * z1 + z2 * cc)
        } else {
            (Complex64::new(0.0, 0.0), z2 * syy.max(0.0).sqrt())
        };
        let (xk, yk) = (xk * scale, yk * scale);
        z[k] = xk + Complex64::i() * yk;
        if k != 0 && 2 * k != len {
            z[len - k] = xk.conj() + Complex64::i() * yk.conj();
        }
    }
    FftPlanner::new().plan_fft_inverse(len).process(&mut z);
    let inv = 1.0 / len as f64;
    Ok((z.iter().map(|v| v.re * inv).collect(), z.iter().map(|v| v.im * inv).collect()))
}

/// Time-domain reference path: one noise per mixture column, convolved
/// with the combined idealized responses.
fn synthesize_direct(
    sources: &SourceSet,
    pair: &ReceiverPair,
    len: usize,
    sample_rate: f64,
    c: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let irs = idealized_irs(&sources.positions, pair, sample_rate, c)?;
    let ir_len = irs[0][0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = [vec![0.0; len], vec![0.0; len]];
    for j in 0..sources.mix.ncols() {
        let col = sources.mix.column(j);
        if col.iter().all(|&g| g == 0.0) {
            continue;
        }
        let noise: Vec<f64> = (0..len + ir_len).map(|_| StandardNormal.sample(&mut rng)).collect();
        for (ch, o) in out.iter_mut().enumerate() {
            let mut h = vec![0.0; ir_len];
            for (k, g) in col.iter().enumerate() {
                if *g != 0.0 {
                    h.iter_mut().zip(&irs[k][ch]).for_each(|(a, b)| *a += g * b);
                }
            }
            let y = fft_convolve(&noise, &h);
            // skip the start-up transient
            o.iter_mut().zip(&y[ir_len..ir_len + len]).for_each(|(a, b)| *a += b);
        }
    }
    let [x, y] = out;
    Ok((x, y))
}

/// Receiver signals of `duration` seconds for the given sources.
pub fn synthesize_pair(
    sources: &SourceSet,
    pair: &ReceiverPair,
    duration: f64,
    seed: u64,
    options: &SimulationOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(options.sample_rate > 0.0 && options.sample_rate.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid sample rate {}", options.sample_rate)));
    }
    if sources.is_empty() {
        return Err(Error::Empty("no sources".into()));
    }
    let len = (duration * options.sample_rate).round() as usize;
    let needed = SEGMENT_LEN + 3 * SEGMENT_HOP;
    if !(duration.is_finite()) || len < needed {
        return Err(Error::SignalTooShort { needed, actual: len });
    }
    match options.method {
        Method::Spectral => synthesize_spectral(sources, pair, len, options.sample_rate, options.speed_of_sound, seed),
        Method::Direct => synthesize_direct(sources, pair, len, options.sample_rate, options.speed_of_sound, seed),
    }
}

fn meta(arrangement: Arrangement, n_vrs: usize, pair: &ReceiverPair, duration: f64, seed: u64, o: &SimulationOptions) -> CurveMeta {
    let n_vrs = if arrangement == Arrangement::Fib { 87 } else { n_vrs };
    let rotation_deg = (-pair.axis[0]).atan2(pair.axis[1]).to_degrees();
    CurveMeta {
        arrangement: arrangement.label().into(),
        n_vrs,
        rotation_deg,
        spacing_m: pair.spacing,
        radius_m: o.radius,
        duration_s: duration,
        sample_rate: o.sample_rate,
        seed,
        window: format!("hann{SEGMENT_LEN}/hop{SEGMENT_HOP}"),
    }
}

fn check_duration(duration: f64) -> Result<()> {
    if !(duration >= MIN_DURATION && duration.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise duration must be at least {MIN_DURATION} s, got {duration}")));
    }
    Ok(())
}

fn coherence_for(
    sources: &SourceSet,
    pair: &ReceiverPair,
    duration: f64,
    seed: u64,
    options: &SimulationOptions,
) -> Result<(Vec<f64>, Vec<Option<f64>>)> {
    let (x, y) = synthesize_pair(sources, pair, duration, seed, options)?;
    welch_coherence(&x, &y, options.sample_rate)
}

/// Coherence between the receivers for an arbitrary source set.
pub fn simulate_sources(
    sources: &SourceSet,
    pair: &ReceiverPair,
    duration: f64,
    seed: u64,
    options: &SimulationOptions,
) -> Result<CoherenceCurve> {
    check_duration(duration)?;
    pair.validate()?;
    let (freqs, values) = coherence_for(sources, pair, duration, seed, options)?;
    let reference = sinc_reference(pair.spacing, &freqs, options.speed_of_sound);
    let meta = CurveMeta {
        arrangement: "custom".into(),
        n_vrs: sources.mix.ncols(),
        ..meta(Arrangement::Dir, 0, pair, duration, seed, options)
    };
    Ok(CoherenceCurve { freqs, values, reference, meta })
}

/// Coherence between the two receivers for one arrangement, together with
/// the isotropic reference.
pub fn simulate_coherence(
    arrangement: Arrangement,
    n_vrs: usize,
    pair: &ReceiverPair,
    duration: f64,
    seed: u64,
    options: &SimulationOptions,
) -> Result<CoherenceCurve> {
    check_duration(duration)?;
    pair.validate()?;
    let sources = SourceSet::for_arrangement(arrangement, n_vrs, options.radius)?;
    let (freqs, values) = coherence_for(&sources, pair, duration, seed, options)?;
    let reference = sinc_reference(pair.spacing, &freqs, options.speed_of_sound);
    Ok(CoherenceCurve { freqs, values, reference, meta: meta(arrangement, n_vrs, pair, duration, seed, options) })
}

/// Per-bin minimum and maximum coherence while the receiver axis is rotated
/// in azimuth by each of `angles_deg`. Cell `i` uses seed `seed ^ i`; cells
/// run in parallel and are reduced in angle order.
pub fn rotation_sweep(
    arrangement: Arrangement,
    n_vrs: usize,
    pair: &ReceiverPair,
    angles_deg: &[f64],
    duration: f64,
    seed: u64,
    options: &SimulationOptions,
) -> Result<RotationEnvelope> {
    check_duration(duration)?;
    pair.validate()?;
    if angles_deg.is_empty() {
        return Err(Error::Empty("no rotation angles".into()));
    }
    let sources = SourceSet::for_arrangement(arrangement, n_vrs, options.radius)?;
    let cells: Vec<Vec<Option<f64>>> = angles_deg
        .par_iter()
        .enumerate()
        .map(|(i, &a)| coherence_for(&sources, &pair.rotated(a), duration, seed ^ i as u64, options).map(|r| r.1))
        .collect::<Result<_>>()?;
    let bins = cells[0].len();
    let freqs: Vec<f64> = (0..bins).map(|k| k as f64 * options.sample_rate / SEGMENT_LEN as f64).collect();
    let mut min = vec![f64::INFINITY; bins];
    let mut max = vec![f64::NEG_INFINITY; bins];
    for cell in &cells {
        for (k, v) in cell.iter().enumerate() {
            if let Some(v) = v {
                min[k] = min[k].min(*v);
                max[k] = max[k].max(*v);
            }
        }
    }
    // bins empty at every angle carry no information
    for k in 0..bins {
        if min[k] > max[k] {
            min[k] = f64::NAN;
            max[k] = f64::NAN;
        }
    }
    let reference = sinc_reference(pair.spacing, &freqs, options.speed_of_sound);
    Ok(RotationEnvelope {
        freqs,
        min,
        max,
        first: cells[0].clone(),
        reference,
        angles_deg: angles_deg.to_vec(),
        meta: meta(arrangement, n_vrs, pair, duration, seed, options),
    })
}

/// The sweep angles 0°, 2°, …, 358°.
pub fn full_circle() -> Vec<f64> {
    (0..180).map(|i| 2.0 * i as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::super::{correspondence_limit, expected_coherence};
    use super::*;
    use crate::geometry::Vec3;
    use nalgebra::DMatrix;

    fn max_dev(curve: &CoherenceCurve, other: &[f64], max_freq: f64) -> f64 {
        curve
            .freqs
            .iter()
            .zip(&curve.values)
            .zip(other)
            .filter(|((f, _), _)| **f <= max_freq)
            .filter_map(|((_, v), o)| v.map(|v| (v - o).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn single_source_matches_expectation() {
        let pair = ReceiverPair::interaural(0.17, 0.0);
        let sources = SourceSet { positions: vec![Vec3::new(0.0, 1.25, 0.0)], mix: DMatrix::identity(1, 1) };
        let opts = SimulationOptions::default();
        let c = simulate_sources(&sources, &pair, 2.0, 1, &opts).unwrap();
        let e = expected_coherence(&sources, &pair, opts.sample_rate, opts.speed_of_sound).unwrap();
        assert!(max_dev(&c, &e, 47000.0) < 0.04);
    }

    #[test]
    fn antipodal_pair_follows_cosine() {
        let opts = SimulationOptions::default();
        for (d, seed) in [(0.0156, 2), (0.17, 3)] {
            let pair = ReceiverPair::interaural(d, 0.0);
            let sources = SourceSet {
                positions: vec![Vec3::new(0.0, 1.25, 0.0), Vec3::new(0.0, -1.25, 0.0)],
                mix: DMatrix::identity(2, 2),
            };
            let c = simulate_sources(&sources, &pair, 30.0, seed, &opts).unwrap();
            let e = expected_coherence(&sources, &pair, opts.sample_rate, opts.speed_of_sound).unwrap();
            assert!(max_dev(&c, &e, 47900.0) < 0.03);
            if d < 0.02 {
                // the window misalignment loss is negligible at this spacing
                let cosine: Vec<f64> =
                    c.freqs.iter().map(|f| (2.0 * std::f64::consts::PI * f * d / 343.0).cos()).collect();
                assert!(max_dev(&c, &cosine, 47900.0) < 0.03);
            }
        }
    }

    #[test]
    fn spectral_and_direct_agree_with_expectation() {
        let pair = ReceiverPair::interaural(0.17, 30.0);
        let sources = SourceSet::for_arrangement(Arrangement::Vbap, 12, 1.25).unwrap();
        let spectral = SimulationOptions::default();
        let direct = SimulationOptions { method: Method::Direct, ..spectral };
        let e = expected_coherence(&sources, &pair, spectral.sample_rate, spectral.speed_of_sound).unwrap();
        let s = simulate_sources(&sources, &pair, 6.0, 3, &spectral).unwrap();
        let d = simulate_sources(&sources, &pair, 6.0, 3, &direct).unwrap();
        // the direct path's interpolation kernel rolls off near Nyquist
        assert!(max_dev(&s, &e, 40000.0) < 0.06, "{}", max_dev(&s, &e, 40000.0));
        assert!(max_dev(&d, &e, 40000.0) < 0.06, "{}", max_dev(&d, &e, 40000.0));
    }

    #[test]
    fn long_run_matches_expectation() {
        let pair = ReceiverPair::interaural(0.17, 0.0);
        let sources = SourceSet::for_arrangement(Arrangement::Vbap, 24, 1.25).unwrap();
        let opts = SimulationOptions::default();
        let e = expected_coherence(&sources, &pair, opts.sample_rate, opts.speed_of_sound).unwrap();
        let c = simulate_sources(&sources, &pair, 30.0, 4, &opts).unwrap();
        assert!(max_dev(&c, &e, 48000.0) < 0.03);
    }

    #[test]
    fn dir_and_vbap_coincide_for_six() {
        // all six axis directions are loudspeaker positions
        let pair = ReceiverPair::interaural(0.17, 0.0);
        let opts = SimulationOptions::default();
        let d = simulate_coherence(Arrangement::Dir, 6, &pair, 5.0, 7, &opts).unwrap();
        let v = simulate_coherence(Arrangement::Vbap, 6, &pair, 5.0, 7, &opts).unwrap();
        for (a, b) in d.values.iter().zip(&v.values) {
            assert!((a.unwrap() - b.unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let pair = ReceiverPair::interaural(0.0156, 10.0);
        let opts = SimulationOptions::default();
        let a = simulate_coherence(Arrangement::Ch86, 12, &pair, 2.0, 9, &opts).unwrap();
        let b = simulate_coherence(Arrangement::Ch86, 12, &pair, 2.0, 9, &opts).unwrap();
        let c = simulate_coherence(Arrangement::Ch86, 12, &pair, 2.0, 10, &opts).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
        assert_eq!(a.meta.arrangement, "CH86");
        assert!((a.meta.rotation_deg - 10.0).abs() < 1e-9);
    }

    #[test]
    fn sweep_cells_use_distinct_seeds() {
        let pair = ReceiverPair::interaural(0.17, 0.0);
        let opts = SimulationOptions::default();
        let env = rotation_sweep(Arrangement::Fib, 0, &pair, &[0.0, 0.0], 2.0, 5, &opts).unwrap();
        // identical geometry, different noise: the envelope opens slightly
        assert!(env.max_width(20000.0) > 0.0);
        let single = simulate_coherence(Arrangement::Fib, 0, &pair, 2.0, 5, &opts).unwrap();
        assert_eq!(env.first, single.values);
        assert!(env.min.iter().zip(&env.max).all(|(a, b)| a <= b));
    }

    #[test]
    fn invalid_requests() {
        let pair = ReceiverPair::interaural(0.17, 0.0);
        let opts = SimulationOptions::default();
        assert!(matches!(
            simulate_coherence(Arrangement::Vbap, 10, &pair, 2.0, 1, &opts),
            Err(Error::UnsupportedVrsCount(10))
        ));
        assert!(simulate_coherence(Arrangement::Dir, 6, &pair, 0.5, 1, &opts).is_err());
        assert!(rotation_sweep(Arrangement::Dir, 6, &pair, &[], 2.0, 1, &opts).is_err());
    }

    #[test]
    fn dense_field_tracks_reference_at_low_frequencies() {
        let pair = ReceiverPair::interaural(0.17, 0.0);
        let c = simulate_coherence(Arrangement::Fib, 0, &pair, 10.0, 11, &SimulationOptions::default()).unwrap();
        assert!(correspondence_limit(&c, 0.1) > 2000.0);
    }
}
