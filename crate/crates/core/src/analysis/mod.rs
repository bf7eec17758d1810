//! Coherence evaluation harness and reverberation-time estimation.

mod model;
mod rt60;
mod sources;
mod synth;
mod welch;

use serde::{Deserialize, Serialize};

use crate::csv::{format_sig, row};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub use model::expected_coherence;
pub use rt60::{energy_decay_curve, estimate_rt60, estimate_rt60_channels};
pub use sources::{idealized_irs, Arrangement, SourceSet, DENSE_VRS};
pub use synth::{full_circle, rotation_sweep, simulate_coherence, simulate_sources, synthesize_pair, Method, SimulationOptions, MIN_DURATION};
pub use welch::{welch_coherence, SEGMENT_HOP, SEGMENT_LEN};

/// Two omnidirectional receivers placed symmetrically about `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverPair {
    pub center: [f64; 3],
    pub axis: [f64; 3],
    pub spacing: f64,
}

impl ReceiverPair {
    /// Pair at the origin on the interaural (y) axis, rotated by
    /// `rotation_deg` in azimuth.
    pub fn interaural(spacing: f64, rotation_deg: f64) -> Self {
        let (s, c) = rotation_deg.to_radians().sin_cos();
        Self { center: [0.0; 3], axis: [-s, c, 0.0], spacing }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::InvalidArgument(format!("receiver spacing must be positive, got {}", self.spacing)));
        }
        if (Vec3::from(self.axis).norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("receiver axis must be a unit vector".into()));
        }
        Ok(())
    }

    /// Positions of the first and second receiver.
    pub fn positions(&self) -> [Vec3; 2] {
        let c = Vec3::from(self.center);
        let a = Vec3::from(self.axis) * (self.spacing / 2.0);
        [c + a, c - a]
    }

    pub fn rotated(&self, rotation_deg: f64) -> Self {
        let axis = crate::geometry::rot_z(rotation_deg.to_radians()) * Vec3::from(self.axis);
        Self { axis: axis.into(), ..self.clone() }
    }
}

/// Analytic coherence of a spherically isotropic field, `sin(x)/x` with
/// `x = 2πfd/c`.
pub fn sinc_reference(spacing: f64, freqs: &[f64], speed_of_sound: f64) -> Vec<f64> {
    freqs
        .iter()
        .map(|&f| {
            let x = 2.0 * std::f64::consts::PI * f * spacing / speed_of_sound;
            if x == 0.0 {
                1.0
            } else {
                x.sin() / x
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CurveMeta {
    pub arrangement: String,
    pub n_vrs: usize,
    pub rotation_deg: f64,
    pub spacing_m: f64,
    pub radius_m: f64,
    pub duration_s: f64,
    pub sample_rate: f64,
    pub seed: u64,
    pub window: String,
}

/// Estimated coherence per frequency bin with the matching reference.
/// Bins without power on either channel are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceCurve {
    pub freqs: Vec<f64>,
    pub values: Vec<Option<f64>>,
    pub reference: Vec<f64>,
    pub meta: CurveMeta,
}

impl CoherenceCurve {
    pub fn to_csv(&self) -> String {
        let mut out = row(["freq_hz", "coherence", "reference"].map(String::from));
        for i in 0..self.freqs.len() {
            let v = self.values[i].map_or_else(String::new, format_sig);
            out.push_str(&row([format_sig(self.freqs[i]), v, format_sig(self.reference[i])]));
        }
        out
    }
}

/// Minimum and maximum coherence per bin over a set of rotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationEnvelope {
    pub freqs: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Coherence at the first rotation angle.
    pub first: Vec<Option<f64>>,
    pub reference: Vec<f64>,
    pub angles_deg: Vec<f64>,
    pub meta: CurveMeta,
}

impl RotationEnvelope {
    pub fn to_csv(&self) -> String {
        let header = ["freq_hz", "coherence", "reference", "env_min", "env_max"].map(String::from);
        let mut out = row(header);
        for i in 0..self.freqs.len() {
            let v = self.first[i].map_or_else(String::new, format_sig);
            out.push_str(&row([
                format_sig(self.freqs[i]),
                v,
                format_sig(self.reference[i]),
                opt_sig(self.min[i]),
                opt_sig(self.max[i]),
            ]));
        }
        out
    }

    /// Largest per-bin spread between the envelope edges for bins up to
    /// `max_freq`.
    pub fn max_width(&self, max_freq: f64) -> f64 {
        (0..self.freqs.len())
            .filter(|&i| self.freqs[i] <= max_freq)
            .map(|i| self.max[i] - self.min[i])
            .fold(0.0, f64::max)
    }
}

fn opt_sig(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format_sig(x)
    }
}

/// Highest frequency `f*` such that every bin up to `f*` lies within `tol`
/// of the reference. Bins without a value are skipped. Returns 0 when the
/// first judged bin already deviates.
pub fn correspondence_limit(curve: &CoherenceCurve, tol: f64) -> f64 {
    limit_by(&curve.freqs, tol, |i| curve.values[i].map(|v| (v - curve.reference[i]).abs()))
}

/// Like [`correspondence_limit`] for both edges of a rotation envelope.
pub fn envelope_limit(env: &RotationEnvelope, tol: f64) -> f64 {
    limit_by(&env.freqs, tol, |i| {
        let d = (env.min[i] - env.reference[i]).abs().max((env.max[i] - env.reference[i]).abs());
        (!d.is_nan()).then_some(d)
    })
}

fn limit_by(freqs: &[f64], tol: f64, deviation: impl Fn(usize) -> Option<f64>) -> f64 {
    let mut last_ok = None;
    for (i, &f) in freqs.iter().enumerate() {
        match deviation(i) {
            Some(d) if d > tol => return last_ok.unwrap_or(0.0),
            Some(_) => last_ok = Some(f),
            None => {}
        }
    }
    last_ok.unwrap_or(0.0)
}

/// First frequency at which the reference changes sign, located on the
/// given bin grid (the first bin at or after the zero).
pub fn first_zero_bin(reference: &[f64], freqs: &[f64]) -> Option<f64> {
    (1..reference.len()).find(|&i| reference[i] <= 0.0 && reference[i - 1] > 0.0).map(|i| freqs[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(values: Vec<Option<f64>>, reference: Vec<f64>) -> CoherenceCurve {
        let freqs = (0..values.len()).map(|i| i as f64 * 100.0).collect();
        CoherenceCurve { freqs, values, reference, meta: CurveMeta::default() }
    }

    #[test]
    fn reference_zeros() {
        let fs = 96000.0;
        let freqs: Vec<f64> = (0..=256).map(|k| k as f64 * fs / 512.0).collect();
        let r = sinc_reference(0.17, &freqs, 343.0);
        assert_eq!(r[0], 1.0);
        // analytic zero at c/(2d)
        let z = first_zero_bin(&r, &freqs).unwrap();
        assert!((z - 343.0 / 0.34).abs() <= fs / 512.0);
        assert!((z - 1009.0).abs() <= fs / 512.0);
        let r = sinc_reference(0.0156, &freqs, 343.0);
        let z = first_zero_bin(&r, &freqs).unwrap();
        assert!((z - 11000.0).abs() <= fs / 512.0, "{z}");
        let at8k = sinc_reference(0.0156, &[8000.0], 343.0)[0];
        assert!((at8k - 0.33).abs() < 0.01, "{at8k}");
    }

    #[test]
    fn limit_cases() {
        let reference = vec![1.0, 0.8, 0.5, 0.1, -0.2];
        let exact = curve(reference.iter().map(|&x| Some(x)).collect(), reference.clone());
        assert_eq!(correspondence_limit(&exact, 0.1), 400.0);
        let off = curve(reference.iter().map(|&x| Some(x + 0.2)).collect(), reference.clone());
        assert_eq!(correspondence_limit(&off, 0.1), 0.0);
        let mid = curve(vec![Some(1.0), Some(0.85), Some(0.3), Some(0.1), Some(-0.2)], reference.clone());
        assert_eq!(correspondence_limit(&mid, 0.1), 100.0);
        let gap = curve(vec![None, Some(0.8), Some(0.5), None, Some(0.0)], reference);
        assert_eq!(correspondence_limit(&gap, 0.1), 200.0);
    }

    #[test]
    fn pair_geometry() {
        let p = ReceiverPair::interaural(0.2, 0.0);
        let [a, b] = p.positions();
        assert!((a - Vec3::new(0.0, 0.1, 0.0)).norm() < 1e-12);
        assert!((b + a).norm() < 1e-12);
        let r = p.rotated(90.0);
        assert!((Vec3::from(r.axis) - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
        assert_eq!(r, ReceiverPair::interaural(0.2, 90.0).rotated(0.0));
        assert!(ReceiverPair { spacing: 0.0, ..p.clone() }.validate().is_err());
    }
}
