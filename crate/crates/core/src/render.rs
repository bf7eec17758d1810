//! VBAP panning, fractional delays, band filtering and MRIR assembly.

use nalgebra::Matrix3;
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdn::VrsSignals;
use crate::geometry::{ConvexHull, Vec3};
use crate::ism::Reflection;
use crate::scene::{LoudspeakerArray, VrsLayout, OCTAVE_BANDS};

/// Half-length of the windowed-sinc interpolation kernel.
const SINC_HALF: i64 = 32;

/// Length of the per-reflection band filter.
pub const BAND_FIR_LEN: usize = 256;

/// Delay (samples) introduced by the linear-phase band filter; every
/// channel of an assembled MRIR carries it.
pub const BAND_FIR_LATENCY: usize = 128;

/// Gains below this are treated as silent when listing active speakers.
const ACTIVE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanningGains {
    pub speakers: Vec<usize>,
    pub gains: Vec<f64>,
    /// Set when no triplet contained the direction and the closest one was
    /// used instead.
    pub fallback: bool,
}

/// Loudspeaker triplets of the array's convex hull.
pub fn triangulate(array: &LoudspeakerArray) -> Result<Vec<[usize; 3]>> {
    Ok(ConvexHull::new(&array.directions())?.faces)
}

/// Precomputed VBAP solver for one array.
#[derive(Debug, Clone)]
pub struct Panner {
    directions: Vec<Vec3>,
    triplets: Vec<[usize; 3]>,
    inverses: Vec<Matrix3<f64>>,
}

impl Panner {
    pub fn new(array: &LoudspeakerArray) -> Result<Self> {
        let triplets = triangulate(array)?;
        Self::with_triplets(array, triplets)
    }

    pub fn with_triplets(array: &LoudspeakerArray, triplets: Vec<[usize; 3]>) -> Result<Self> {
        let directions = array.directions();
        let mut kept = Vec::with_capacity(triplets.len());
        let mut inverses = Vec::with_capacity(triplets.len());
        for t in triplets {
            let base = Matrix3::from_columns(&[directions[t[0]], directions[t[1]], directions[t[2]]]);
            if let Some(inv) = base.try_inverse() {
                kept.push(t);
                inverses.push(inv);
            }
        }
        if kept.is_empty() {
            return Err(Error::Degenerate("no invertible loudspeaker triplet".into()));
        }
        Ok(Self { directions, triplets: kept, inverses })
    }

    pub fn triplets(&self) -> &[[usize; 3]] {
        &self.triplets
    }

    pub fn num_speakers(&self) -> usize {
        self.directions.len()
    }

    /// Unit-power gains for `direction`, taken from the triplet whose
    /// smallest raw gain is largest.
    pub fn pan(&self, direction: &Vec3) -> PanningGains {
        let p = direction.normalize();
        let mut best = (f64::NEG_INFINITY, 0, Vec3::zeros());
        for (i, inv) in self.inverses.iter().enumerate() {
            let g = inv * p;
            let m = g.min();
            if m > best.0 {
                best = (m, i, g);
            }
        }
        let (min, idx, raw) = best;
        let g = raw.map(|x| x.max(0.0));
        let g = g / g.norm();
        let (speakers, gains) = self.triplets[idx]
            .iter()
            .zip(g.iter())
            .filter(|(_, &x)| x > ACTIVE_EPS)
            .map(|(&s, &x)| (s, x))
            .unzip();
        PanningGains { speakers, gains, fallback: min < -1e-9 }
    }

    /// Dense gain vector (one entry per loudspeaker).
    pub fn pan_dense(&self, direction: &Vec3) -> Vec<f64> {
        let mut out = vec![0.0; self.directions.len()];
        let g = self.pan(direction);
        for (s, x) in g.speakers.iter().zip(&g.gains) {
            out[*s] = *x;
        }
        out
    }

    /// Loudspeakers that receive a nonzero gain from any of `directions`.
    pub fn active_speakers(&self, directions: &[Vec3]) -> Vec<usize> {
        let mut used = vec![false; self.directions.len()];
        for d in directions {
            for s in self.pan(d).speakers {
                used[s] = true;
            }
        }
        (0..used.len()).filter(|&i| used[i]).collect()
    }
}

/// VBAP gains for a single direction.
pub fn pan(direction: &Vec3, array: &LoudspeakerArray, triangulation: &[[usize; 3]]) -> Result<PanningGains> {
    Ok(Panner::with_triplets(array, triangulation.to_vec())?.pan(direction))
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Blackman-windowed sinc evaluated at `t` samples from its centre.
fn windowed_sinc(t: f64) -> f64 {
    let half = SINC_HALF as f64;
    if t.abs() >= half {
        return 0.0;
    }
    let phase = std::f64::consts::PI * t / half;
    let w = 0.42 + 0.5 * phase.cos() + 0.08 * (2.0 * phase).cos();
    sinc(t) * w
}

/// Interpolation kernel for a delay of `delay` samples: returns the index
/// of the first tap and the 64 tap values.
pub fn fractional_kernel(delay: f64) -> (i64, Vec<f64>) {
    let whole = delay.floor();
    let frac = delay - whole;
    let taps = (1 - SINC_HALF..=SINC_HALF).map(|j| windowed_sinc(j as f64 - frac)).collect();
    (whole as i64 + 1 - SINC_HALF, taps)
}

/// Delays `signal` by `delay` seconds with a 64-tap Blackman-windowed sinc.
/// The output is long enough to hold the full kernel tail.
pub fn fractional_delay(signal: &[f64], delay: f64, sample_rate: f64) -> Result<Vec<f64>> {
    if !(delay >= 0.0 && delay.is_finite()) {
        return Err(Error::InvalidArgument(format!("delay must be non-negative, got {delay}")));
    }
    let d = delay * sample_rate;
    let (start, taps) = fractional_kernel(d);
    let len = signal.len() + d.floor() as usize + SINC_HALF as usize + 1;
    let mut out = vec![0.0; len];
    for (k, &x) in signal.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &h) in taps.iter().enumerate() {
            let n = k as i64 + start + j as i64;
            if n >= 0 && (n as usize) < len {
                out[n as usize] += x * h;
            }
        }
    }
    Ok(out)
}

/// Amplitude response interpolated linearly over log-frequency between the
/// octave band centres and held constant outside them.
pub fn band_response(gains: &[f64; 7], freq: f64) -> f64 {
    if freq <= OCTAVE_BANDS[0] {
        return gains[0];
    }
    if freq >= OCTAVE_BANDS[6] {
        return gains[6];
    }
    let pos = (freq / OCTAVE_BANDS[0]).log2();
    let i = (pos.floor() as usize).min(5);
    let t = pos - i as f64;
    gains[i] * (1.0 - t) + gains[i + 1] * t
}

/// Linear-phase FIR (256 taps, centred on tap 128) approximating the
/// octave-band amplitude gains `gains`, designed by frequency sampling and
/// a Hann window.
pub fn band_fir(gains: &[f64; 7], sample_rate: f64) -> Vec<f64> {
    if gains.iter().all(|&g| g == gains[0]) {
        let mut h = vec![0.0; BAND_FIR_LEN];
        h[BAND_FIR_LATENCY] = gains[0];
        return h;
    }
    let grid = 8192;
    let mut spec: Vec<Complex64> = (0..grid)
        .map(|k| {
            let bin = if k <= grid / 2 { k } else { grid - k };
            Complex64::new(band_response(gains, bin as f64 * sample_rate / grid as f64), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_inverse(grid).process(&mut spec);
    let half = BAND_FIR_LATENCY as i64;
    (0..BAND_FIR_LEN as i64)
        .map(|n| {
            let lag = n - half;
            let idx = lag.rem_euclid(grid as i64) as usize;
            let w = 0.5 - 0.5 * (std::f64::consts::PI * n as f64 / half as f64).cos();
            spec[idx].re / grid as f64 * w
        })
        .collect()
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Impulse response of one arrival: band filter plus fractional delay.
/// Returns the first sample index (already including the band-filter
/// latency) and the taps.
pub fn arrival_response(reflection: &Reflection, sample_rate: f64) -> (i64, Vec<f64>) {
    let (start, kernel) = fractional_kernel(reflection.delay * sample_rate);
    (start, convolve(&band_fir(&reflection.band_gains, sample_rate), &kernel))
}

/// Adds `gain * taps` into `out` starting at `start`, ignoring samples that
/// fall outside the buffer.
pub fn add_scaled(out: &mut [f64], start: i64, taps: &[f64], gain: f64) {
    for (i, &h) in taps.iter().enumerate() {
        let n = start + i as i64;
        if n >= 0 && (n as usize) < out.len() {
            out[n as usize] += gain * h;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MrirMeta {
    pub array_label: String,
    pub n_vrs: usize,
    pub n_reflections: usize,
    pub vrs_gains: Vec<f64>,
    /// Samples of delay common to all channels.
    pub latency_samples: usize,
    pub seed: Option<u64>,
}

/// Multichannel room impulse response, one channel per loudspeaker.
#[derive(Debug, Clone, PartialEq)]
pub struct Mrir {
    pub channels: Vec<Vec<f64>>,
    pub sample_rate: f64,
    pub meta: MrirMeta,
}

impl Mrir {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sum of squared samples over all channels.
    pub fn energy(&self) -> f64 {
        self.channels.iter().flatten().map(|x| x * x).sum()
    }

    /// Per-sample energy summed over channels.
    pub fn energy_envelope(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for ch in &self.channels {
            for (o, x) in out.iter_mut().zip(ch) {
                *o += x * x;
            }
        }
        out
    }

    pub fn rms(&self) -> Vec<f64> {
        let n = self.len().max(1) as f64;
        self.channels.iter().map(|c| (c.iter().map(|x| x * x).sum::<f64>() / n).sqrt()).collect()
    }
}

/// Renders discrete reflections and VRS channels onto the array.
/// `frame` rotates room directions into the array frame; VRS channel `v`
/// is scaled by `layout.gains[v]` and panned to its layout direction.
pub fn assemble_mrir(
    reflections: &[Reflection],
    vrs: &VrsSignals,
    layout: &VrsLayout,
    panner: &Panner,
    frame: &Matrix3<f64>,
    sample_rate: f64,
) -> Result<Mrir> {
    if reflections.is_empty() {
        return Err(Error::Empty("no reflections to render".into()));
    }
    if (vrs.sample_rate - sample_rate).abs() > 1e-9 {
        return Err(Error::SampleRateMismatch(vrs.sample_rate, sample_rate));
    }
    if vrs.signals.len() != layout.n_vrs {
        return Err(Error::ChannelMismatch { expected: layout.n_vrs, actual: vrs.signals.len() });
    }
    let taps: Vec<(i64, Vec<f64>)> = reflections.iter().map(|r| arrival_response(r, sample_rate)).collect();
    let early_end = taps.iter().map(|(s, t)| (s + t.len() as i64).max(0) as usize).max().unwrap_or(0);
    let len = early_end.max(vrs.len());
    let mut channels = vec![vec![0.0; len]; panner.num_speakers()];

    for (r, (start, h)) in reflections.iter().zip(&taps) {
        let g = panner.pan(&(frame * r.dir()));
        for (s, x) in g.speakers.iter().zip(&g.gains) {
            add_scaled(&mut channels[*s], *start, h, *x);
        }
    }
    for (v, signal) in vrs.signals.iter().enumerate() {
        let dir = frame * Vec3::from(layout.directions[v]);
        let g = panner.pan(&dir);
        for (s, x) in g.speakers.iter().zip(&g.gains) {
            let w = x * layout.gains[v];
            for (o, y) in channels[*s].iter_mut().zip(signal) {
                *o += w * y;
            }
        }
    }
    Ok(Mrir {
        channels,
        sample_rate,
        meta: MrirMeta {
            array_label: String::new(),
            n_vrs: layout.n_vrs,
            n_reflections: reflections.len(),
            vrs_gains: layout.gains.clone(),
            latency_samples: BAND_FIR_LATENCY,
            seed: None,
        },
    })
}
