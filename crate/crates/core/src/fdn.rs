//! 96-line feedback delay network for the late reverberation, its
//! downmix onto VRS layouts and the direction-dependent VRS gains.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dsp::{fft_convolve, octave_bandpass, Biquad, Cascade};
use crate::error::{Error, Result};
use crate::geometry::{angle_between, fibonacci_sphere, Vec3};
use crate::ism::Reflection;
use crate::render::arrival_response;
use crate::scene::{Placement, Room, VrsLayout, FINE_CHANNELS, OCTAVE_BANDS};

pub const N_LINES: usize = FINE_CHANNELS;

const MIN_DELAY_S: f64 = 0.020;
const MAX_DELAY_S: f64 = 0.100;

/// Reverberation time per octave band from Eyring's formula. Bands whose
/// mean absorption reaches one yield zero.
pub fn eyring_rt60(room: &Room) -> [f64; 7] {
    std::array::from_fn(|b| {
        let alpha = room.mean_absorption(b);
        if alpha >= 1.0 {
            0.0
        } else {
            0.161 * room.volume() / (-room.total_area() * (1.0 - alpha).ln())
        }
    })
}

/// Like [`eyring_rt60`] but fails on a fully absorbent band.
pub fn eyring_rt60_checked(room: &Room) -> Result<[f64; 7]> {
    let t = eyring_rt60(room);
    match t.iter().position(|&x| x <= 0.0) {
        Some(band) => Err(Error::FullyAbsorbent { band }),
        None => Ok(t),
    }
}

fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// Delay lengths spaced logarithmically over 20–100 ms, each moved to the
/// nearest prime inside that range not used yet, so the set is mutually
/// coprime.
pub fn delay_lengths(sample_rate: f64) -> Vec<usize> {
    let lo = MIN_DELAY_S * sample_rate;
    let hi = MAX_DELAY_S * sample_rate;
    let mut used = std::collections::BTreeSet::new();
    (0..N_LINES)
        .map(|i| {
            let target = (lo * (hi / lo).powf(i as f64 / (N_LINES - 1) as f64)).round() as usize;
            let mut off = 0usize;
            loop {
                for c in [target.saturating_sub(off), target + off] {
                    let in_range = c as f64 >= lo.ceil() && c as f64 <= hi.floor();
                    if in_range && is_prime(c) && !used.contains(&c) {
                        used.insert(c);
                        return c;
                    }
                }
                off += 1;
            }
        })
        .collect()
}

/// Orthogonal matrix from the QR decomposition of a seeded Gaussian
/// matrix, with column signs fixed so the result is unique.
pub fn feedback_matrix(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    let qr = m.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Static description of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct FdnConfig {
    pub delays: Vec<usize>,
    pub feedback: DMatrix<f64>,
    pub band_rt60: [f64; 7],
    pub sample_rate: f64,
    pub seed: u64,
}

impl FdnConfig {
    pub fn new(band_rt60: [f64; 7], sample_rate: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            delays: delay_lengths(sample_rate),
            feedback: feedback_matrix(N_LINES, seed),
            band_rt60,
            sample_rate,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delays.len() != N_LINES {
            return Err(Error::ChannelMismatch { expected: N_LINES, actual: self.delays.len() });
        }
        let distinct: std::collections::BTreeSet<_> = self.delays.iter().collect();
        if distinct.len() != N_LINES || self.delays.contains(&0) {
            return Err(Error::InvalidArgument("delay lengths must be distinct and positive".into()));
        }
        if let Some(t) = self.band_rt60.iter().find(|t| !(**t > 0.0)) {
            return Err(Error::InvalidArgument(format!("reverberation time {t} must be positive")));
        }
        if !(self.sample_rate > 0.0) {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        let q = &self.feedback;
        let err = (q.transpose() * q - DMatrix::identity(N_LINES, N_LINES)).abs().max();
        if err >= 1e-9 {
            return Err(Error::InvalidArgument(format!("feedback matrix is not orthogonal (error {err:e})")));
        }
        Ok(())
    }

    /// Target per-pass amplitude gain of line `line` in each band.
    pub fn band_gains(&self, line: usize) -> [f64; 7] {
        let m = self.delays[line] as f64;
        self.band_rt60.map(|t| 10f64.powf(-3.0 * m / (self.sample_rate * t)))
    }

    /// Attenuation filters for every line plus the largest fit error at
    /// the band centres in dB.
    pub fn attenuation_filters(&self) -> (Vec<AttenuationFilter>, f64) {
        let filters: Vec<AttenuationFilter> = (0..N_LINES)
            .map(|i| AttenuationFilter::fit(&self.band_gains(i), self.sample_rate))
            .collect();
        let residual = filters.iter().map(|f| f.residual_db).fold(0.0, f64::max);
        (filters, residual)
    }

    /// Fails if any line's loop gain reaches one at any frequency.
    pub fn check_stability(&self) -> Result<()> {
        let (filters, _) = self.attenuation_filters();
        let nyq = self.sample_rate / 2.0;
        for (i, f) in filters.iter().enumerate() {
            for k in 0..400 {
                let freq = 10.0 * (0.999 * nyq / 10.0).powf(k as f64 / 399.0);
                let g = f.magnitude(freq, self.sample_rate);
                if g >= 1.0 {
                    return Err(Error::Unstable(format!("line {i} has loop gain {g:.4} at {freq:.0} Hz")));
                }
            }
        }
        Ok(())
    }
}

/// Broadband gain followed by a low shelf, five peaking sections and a
/// high shelf, fit to per-band gain targets.
#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationFilter {
    pub gain: f64,
    pub sections: Cascade,
    /// Largest deviation from the targets at the band centres, in dB.
    pub residual_db: f64,
}

const PEAK_Q: f64 = std::f64::consts::SQRT_2;

fn eq_section(index: usize, gain_db: f64, sample_rate: f64) -> Biquad {
    match index {
        0 => Biquad::low_shelf(OCTAVE_BANDS[0] * std::f64::consts::SQRT_2, gain_db, sample_rate),
        6 => Biquad::high_shelf(OCTAVE_BANDS[5] * std::f64::consts::SQRT_2, gain_db, sample_rate),
        i => Biquad::peaking(OCTAVE_BANDS[i], PEAK_Q, gain_db, sample_rate),
    }
}

impl AttenuationFilter {
    pub fn fit(targets: &[f64; 7], sample_rate: f64) -> Self {
        let db = |x: f64| 20.0 * x.log10();
        let nb = OCTAVE_BANDS.iter().filter(|&&f| f < 0.45 * sample_rate).count();
        let target_db: Vec<f64> = targets[..nb].iter().map(|&g| db(g)).collect();
        let mean = target_db.iter().sum::<f64>() / nb as f64;
        let dev: Vec<f64> = target_db.iter().map(|t| t - mean).collect();
        if dev.iter().all(|d| d.abs() < 1e-12) {
            return Self { gain: 10f64.powf(mean / 20.0), sections: Cascade::default(), residual_db: 0.0 };
        }
        // interaction of each section (at 1 dB) with every band centre
        let proto = 1.0;
        let interaction = DMatrix::from_fn(nb, nb, |k, j| {
            db(eq_section(j, proto, sample_rate).magnitude(OCTAVE_BANDS[k], sample_rate)) / proto
        });
        let inv = interaction.clone().try_inverse().unwrap_or_else(|| DMatrix::identity(nb, nb));
        let response = |g: &[f64]| -> Vec<f64> {
            (0..nb)
                .map(|k| {
                    (0..nb).map(|j| db(eq_section(j, g[j], sample_rate).magnitude(OCTAVE_BANDS[k], sample_rate))).sum()
                })
                .collect()
        };
        let mut gains = vec![0.0; nb];
        let mut err = dev.clone();
        for _ in 0..30 {
            let step = &inv * nalgebra::DVector::from_vec(err.clone());
            for (g, s) in gains.iter_mut().zip(step.iter()) {
                *g += s;
            }
            let r = response(&gains);
            err = dev.iter().zip(&r).map(|(t, x)| t - x).collect();
            if err.iter().all(|e| e.abs() < 1e-4) {
                break;
            }
        }
        let sections = Cascade((0..nb).map(|j| eq_section(j, gains[j], sample_rate)).collect());
        let residual_db = err.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        Self { gain: 10f64.powf(mean / 20.0), sections, residual_db }
    }

    pub fn magnitude(&self, freq: f64, sample_rate: f64) -> f64 {
        self.gain * self.sections.magnitude(freq, sample_rate)
    }

    #[inline]
    fn process(&mut self, x: f64) -> f64 {
        self.sections.process(self.gain * x)
    }
}

/// Signal entering one delay line: `taps` added from sample `start` on.
#[derive(Debug, Clone, PartialEq)]
pub struct FdnInput {
    pub line: usize,
    pub start: i64,
    pub taps: Vec<f64>,
}

/// Index of the fine direction closest to `dir` (lowest index on ties).
pub fn nearest_line(fine_dirs: &[Vec3], dir: &Vec3) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, f) in fine_dirs.iter().enumerate() {
        let a = angle_between(f, dir);
        if a < best.0 {
            best = (a, i);
        }
    }
    best.1
}

/// Turns the last-order arrivals into line inputs. Each arrival is band
/// filtered, delayed and routed to the line with the nearest fine
/// direction; its first recirculation is timed to leave the line one mean
/// free path after the arrival. With `source` given, the arrival
/// responses are convolved with it.
pub fn fdn_inputs(
    arrivals: &[Reflection],
    fine_dirs: &[Vec3],
    config: &FdnConfig,
    mean_free_path_s: f64,
    source: Option<&[f64]>,
) -> Vec<FdnInput> {
    let shift = (mean_free_path_s * config.sample_rate).round() as i64;
    arrivals
        .iter()
        .map(|r| {
            let line = nearest_line(fine_dirs, &r.dir());
            let (start, taps) = arrival_response(r, config.sample_rate);
            let taps = match source {
                Some(s) => fft_convolve(&taps, s),
                None => taps,
            };
            FdnInput { line, start: start + shift - config.delays[line] as i64, taps }
        })
        .collect()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        for k in 0..8 {
            acc[k] += a[8 * c + k] * b[8 * c + k];
        }
    }
    let mut s: f64 = acc.iter().sum();
    for i in 8 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Running network state.
pub struct Fdn {
    feedback: Vec<f64>,
    filters: Vec<AttenuationFilter>,
    lines: Vec<Vec<f64>>,
    pos: Vec<usize>,
    lossless: bool,
    line_out: Vec<f64>,
}

impl Fdn {
    pub fn new(config: &FdnConfig) -> Result<Self> {
        config.validate()?;
        config.check_stability()?;
        let (filters, _) = config.attenuation_filters();
        Ok(Self::build(config, filters, false))
    }

    /// Network with every attenuation removed; used to check that the
    /// feedback path conserves energy.
    pub fn lossless(config: &FdnConfig) -> Self {
        Self::build(config, Vec::new(), true)
    }

    fn build(config: &FdnConfig, filters: Vec<AttenuationFilter>, lossless: bool) -> Self {
        let n = config.delays.len();
        let mut feedback = Vec::with_capacity(n * n);
        for i in 0..n {
            feedback.extend(config.feedback.row(i).iter());
        }
        Self {
            feedback,
            filters,
            lines: config.delays.iter().map(|&m| vec![0.0; m]).collect(),
            pos: vec![0; n],
            lossless,
            line_out: vec![0.0; n],
        }
    }

    /// Advances one sample: `input[i]` enters line `i`; returns the line
    /// outputs after attenuation.
    pub fn tick(&mut self, input: &[f64]) -> &[f64] {
        let n = self.lines.len();
        for i in 0..n {
            let x = self.lines[i][self.pos[i]];
            self.line_out[i] = if self.lossless { x } else { self.filters[i].process(x) };
        }
        for i in 0..n {
            let fb = dot(&self.feedback[i * n..(i + 1) * n], &self.line_out);
            let p = self.pos[i];
            self.lines[i][p] = input[i] + fb;
            self.pos[i] = if p + 1 == self.lines[i].len() { 0 } else { p + 1 };
        }
        &self.line_out
    }

    /// Energy currently stored in the delay lines.
    pub fn stored_energy(&self) -> f64 {
        self.lines.iter().flatten().map(|x| x * x).sum()
    }
}

/// Runs the network for `duration` seconds and returns the 96 line
/// outputs.
pub fn run_fdn(config: &FdnConfig, inputs: &[FdnInput], duration: f64) -> Result<Vec<Vec<f64>>> {
    if !(duration > 0.0) {
        return Err(Error::InvalidArgument(format!("duration must be positive, got {duration}")));
    }
    if inputs.is_empty() {
        return Err(Error::Empty("no FDN input arrivals".into()));
    }
    if let Some(bad) = inputs.iter().find(|x| x.line >= N_LINES) {
        return Err(Error::InvalidArgument(format!("input line {} out of range", bad.line)));
    }
    let len = (duration * config.sample_rate).round() as usize;
    // the drive is only nonzero up to the end of the latest arrival
    let drive_len = inputs.iter().map(|x| (x.start + x.taps.len() as i64).max(0) as usize).max().unwrap_or(0).min(len);
    let mut drive = vec![vec![0.0; N_LINES]; drive_len];
    for inp in inputs {
        for (k, &x) in inp.taps.iter().enumerate() {
            let n = inp.start + k as i64;
            if n >= 0 && (n as usize) < drive_len {
                drive[n as usize][inp.line] += x;
            }
        }
    }
    let mut fdn = Fdn::new(config)?;
    let mut out = vec![vec![0.0; len]; N_LINES];
    let silent = vec![0.0; N_LINES];
    for n in 0..len {
        let y = fdn.tick(drive.get(n).unwrap_or(&silent));
        for (ch, &v) in out.iter_mut().zip(y) {
            ch[n] = v;
        }
    }
    Ok(out)
}

/// Statistical late-reverberation energy per sample of a room impulse
/// response whose direct sound has amplitude 1/r, restricted to the
/// octave band at 1 kHz of a white spectrum.
fn model_band_energy(room: &Room, rt60: f64, t: f64, sample_rate: f64) -> f64 {
    let per_second = 4.0 * std::f64::consts::PI * room.speed_of_sound / room.volume();
    let band_fraction = (OCTAVE_BANDS[3] * std::f64::consts::SQRT_2 - OCTAVE_BANDS[3] / std::f64::consts::SQRT_2)
        / (sample_rate / 2.0);
    per_second / sample_rate * band_fraction * (-13.815_510_557_964_274 * t / rt60).exp()
}

/// Scales the line outputs so their energy in the 1 kHz band matches the
/// statistical diffuse-field level over a window starting once every line
/// has recirculated after the last injected arrival. Returns the factor.
pub fn calibrate_level(
    lines: &mut [Vec<f64>],
    room: &Room,
    config: &FdnConfig,
    last_arrival_s: f64,
) -> Result<f64> {
    let fs = config.sample_rate;
    let rt = config.band_rt60[3];
    let max_delay = *config.delays.iter().max().unwrap_or(&0) as f64 / fs;
    let t0 = last_arrival_s + max_delay;
    let t1 = t0 + rt / 6.0;
    let (n0, n1) = ((t0 * fs) as usize, (t1 * fs) as usize);
    let len = lines.first().map_or(0, Vec::len);
    if n1 > len {
        return Err(Error::SignalTooShort { needed: n1, actual: len });
    }
    let mut measured = 0.0;
    for ch in lines.iter() {
        let band = octave_bandpass(OCTAVE_BANDS[3], fs).filter(&ch[..n1]);
        measured += band[n0..n1].iter().map(|x| x * x).sum::<f64>();
    }
    let model: f64 = (n0..n1).map(|n| model_band_energy(room, rt, n as f64 / fs, fs)).sum();
    if !(measured > 0.0) {
        return Err(Error::Degenerate("FDN produced no energy in the calibration window".into()));
    }
    let k = (model / measured).sqrt();
    for ch in lines.iter_mut() {
        for x in ch.iter_mut() {
            *x *= k;
        }
    }
    Ok(k)
}

/// One signal per VRS, all at the same rate and length.
#[derive(Debug, Clone, PartialEq)]
pub struct VrsSignals {
    pub signals: Vec<Vec<f64>>,
    pub sample_rate: f64,
}

impl VrsSignals {
    pub fn n_vrs(&self) -> usize {
        self.signals.len()
    }

    pub fn len(&self) -> usize {
        self.signals.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sums the fine channels into the layout's VRS, in ascending fine-index
/// order.
pub fn downmix(fine: &[Vec<f64>], layout: &VrsLayout, sample_rate: f64) -> Result<VrsSignals> {
    if fine.len() != layout.assignment.len() {
        return Err(Error::ChannelMismatch { expected: layout.assignment.len(), actual: fine.len() });
    }
    let len = fine.first().map_or(0, Vec::len);
    if fine.iter().any(|c| c.len() != len) {
        return Err(Error::InvalidArgument("fine channels differ in length".into()));
    }
    let mut signals = vec![vec![0.0; len]; layout.n_vrs];
    let mut seen = vec![false; layout.n_vrs];
    for (f, &v) in layout.assignment.iter().enumerate() {
        if seen[v] {
            for (o, x) in signals[v].iter_mut().zip(&fine[f]) {
                *o += x;
            }
        } else {
            signals[v].copy_from_slice(&fine[f]);
            seen[v] = true;
        }
    }
    Ok(VrsSignals { signals, sample_rate })
}

/// Per-VRS amplitude weights reflecting the absorption seen in each VRS's
/// share of directions: rays from the receiver on a Fibonacci lattice are
/// assigned to their nearest VRS; each weight is the square root of the
/// mean broadband reflection coefficient (1 − α) of the walls its rays hit,
/// normalised so the squared weights sum to the VRS count.
pub fn anisotropic_gains(room: &Room, placement: &Placement, layout: &VrsLayout) -> Result<Vec<f64>> {
    placement.validate(room)?;
    let dirs = layout.dirs();
    let rays = fibonacci_sphere(1000 * layout.n_vrs);
    let origin = placement.receiver_vec();
    let mut sum = vec![0.0; layout.n_vrs];
    let mut count = vec![0usize; layout.n_vrs];
    for r in &rays {
        let v = nearest_line(&dirs, r);
        let wall = room.hit_surface(&origin, r);
        sum[v] += 1.0 - room.broadband_absorption(wall);
        count[v] += 1;
    }
    let raw: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| if c == 0 { 0.0 } else { (s / c as f64).sqrt() }).collect();
    let total: f64 = raw.iter().map(|w| w * w).sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("every surface is fully absorbent".into()));
    }
    let norm = (layout.n_vrs as f64 / total).sqrt();
    Ok(raw.iter().map(|w| w * norm).collect())
}

/// Mean free path 4V/S in seconds.
pub fn mean_free_time(room: &Room) -> f64 {
    4.0 * room.volume() / room.total_area() / room.speed_of_sound
}
