//! Second-order IIR sections and the octave-band filters built from them.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex64, FftPlanner};

/// Direct-form-I biquad with coefficients normalised by `a0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl Biquad {
    pub fn new(b: [f64; 3], a0: f64, a: [f64; 2]) -> Self {
        Self { b: b.map(|x| x / a0), a: a.map(|x| x / a0), x1: 0.0, x2: 0.0, y1: 0.0, y2: 0.0 }
    }

    pub fn identity() -> Self {
        Self::new([1.0, 0.0, 0.0], 1.0, [0.0, 0.0])
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let mut y = self.b[0] * x + self.b[1] * self.x1 + self.b[2] * self.x2 - self.a[0] * self.y1 - self.a[1] * self.y2;
        // flush values far below audibility before they turn subnormal
        if y.abs() < 1e-200 {
            y = 0.0;
        }
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }

    pub fn reset(&mut self) {
        self.x1 = 0.0;
        self.x2 = 0.0;
        self.y1 = 0.0;
        self.y2 = 0.0;
    }

    /// Magnitude response at `freq`.
    pub fn magnitude(&self, freq: f64, sample_rate: f64) -> f64 {
        let w = 2.0 * PI * freq / sample_rate;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = self.b[0] + self.b[1] * z1 + self.b[2] * z2;
        let den = 1.0 + self.a[0] * z1 + self.a[1] * z2;
        (num / den).norm()
    }

    /// Peaking equaliser (audio-EQ cookbook form).
    pub fn peaking(freq: f64, q: f64, gain_db: f64, sample_rate: f64) -> Self {
        let a = 10f64.powf(gain_db / 40.0);
        let w = 2.0 * PI * freq / sample_rate;
        let alpha = w.sin() / (2.0 * q);
        let c = w.cos();
        Self::new([1.0 + alpha * a, -2.0 * c, 1.0 - alpha * a], 1.0 + alpha / a, [-2.0 * c, 1.0 - alpha / a])
    }

    /// Low shelf with slope 1.
    pub fn low_shelf(freq: f64, gain_db: f64, sample_rate: f64) -> Self {
        let a = 10f64.powf(gain_db / 40.0);
        let w = 2.0 * PI * freq / sample_rate;
        let (s, c) = w.sin_cos();
        let alpha = s / 2.0 * 2f64.sqrt();
        let k = 2.0 * a.sqrt() * alpha;
        Self::new(
            [a * ((a + 1.0) - (a - 1.0) * c + k), 2.0 * a * ((a - 1.0) - (a + 1.0) * c), a * ((a + 1.0) - (a - 1.0) * c - k)],
            (a + 1.0) + (a - 1.0) * c + k,
            [-2.0 * ((a - 1.0) + (a + 1.0) * c), (a + 1.0) + (a - 1.0) * c - k],
        )
    }

    /// High shelf with slope 1.
    pub fn high_shelf(freq: f64, gain_db: f64, sample_rate: f64) -> Self {
        let a = 10f64.powf(gain_db / 40.0);
        let w = 2.0 * PI * freq / sample_rate;
        let (s, c) = w.sin_cos();
        let alpha = s / 2.0 * 2f64.sqrt();
        let k = 2.0 * a.sqrt() * alpha;
        Self::new(
            [a * ((a + 1.0) + (a - 1.0) * c + k), -2.0 * a * ((a - 1.0) + (a + 1.0) * c), a * ((a + 1.0) + (a - 1.0) * c - k)],
            (a + 1.0) - (a - 1.0) * c + k,
            [2.0 * ((a - 1.0) - (a + 1.0) * c), (a + 1.0) - (a - 1.0) * c - k],
        )
    }

    pub fn lowpass(freq: f64, q: f64, sample_rate: f64) -> Self {
        let w = 2.0 * PI * freq / sample_rate;
        let (s, c) = w.sin_cos();
        let alpha = s / (2.0 * q);
        Self::new([(1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0], 1.0 + alpha, [-2.0 * c, 1.0 - alpha])
    }

    pub fn highpass(freq: f64, q: f64, sample_rate: f64) -> Self {
        let w = 2.0 * PI * freq / sample_rate;
        let (s, c) = w.sin_cos();
        let alpha = s / (2.0 * q);
        Self::new([(1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0], 1.0 + alpha, [-2.0 * c, 1.0 - alpha])
    }
}

/// Chain of biquads applied in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cascade(pub Vec<Biquad>);

impl Cascade {
    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        self.0.iter_mut().fold(x, |acc, s| s.process(acc))
    }

    pub fn magnitude(&self, freq: f64, sample_rate: f64) -> f64 {
        self.0.iter().map(|s| s.magnitude(freq, sample_rate)).product()
    }

    pub fn filter(&mut self, signal: &[f64]) -> Vec<f64> {
        signal.iter().map(|&x| self.process(x)).collect()
    }
}

/// Q factors of the two sections of a fourth-order Butterworth filter.
const BUTTERWORTH4_Q: [f64; 2] = [0.541_196_100_146_197, 1.306_562_964_876_376_5];

/// Octave band-pass around `centre`: fourth-order Butterworth high-pass at
/// `centre/√2` followed by a fourth-order low-pass at `centre·√2`. The
/// low-pass is dropped when its corner would reach Nyquist.
pub fn octave_bandpass(centre: f64, sample_rate: f64) -> Cascade {
    let lo = centre / 2f64.sqrt();
    let hi = centre * 2f64.sqrt();
    let mut sections: Vec<Biquad> = BUTTERWORTH4_Q.iter().map(|&q| Biquad::highpass(lo, q, sample_rate)).collect();
    if hi < 0.45 * sample_rate {
        sections.extend(BUTTERWORTH4_Q.iter().map(|&q| Biquad::lowpass(hi, q, sample_rate)));
    }
    Cascade(sections)
}

/// Linear convolution through one zero-padded FFT.
pub fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    // pack both real inputs into one complex transform
    let mut z: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(a.get(i).copied().unwrap_or(0.0), b.get(i).copied().unwrap_or(0.0)))
        .collect();
    fwd.process(&mut z);
    let mut prod = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        let zk = z[k];
        let zn = z[(n - k) % n].conj();
        let fa = (zk + zn) * 0.5;
        let fb = (zk - zn) * Complex64::new(0.0, -0.5);
        prod[k] = fa * fb;
    }
    inv.process(&mut prod);
    prod.truncate(out_len);
    prod.into_iter().map(|c| c.re / n as f64).collect()
}
