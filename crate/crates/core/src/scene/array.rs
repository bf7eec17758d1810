use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fibonacci_sphere, from_az_el_deg, min_pairwise_angle, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Speaker {
    /// Unit direction from the array centre.
    pub direction: [f64; 3],
    pub radius: f64,
}

impl Speaker {
    pub fn dir(&self) -> Vec3 {
        Vec3::from(self.direction)
    }

    pub fn position(&self) -> Vec3 {
        self.dir() * self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoudspeakerArray {
    pub label: String,
    pub speakers: Vec<Speaker>,
}

impl LoudspeakerArray {
    pub fn from_directions(label: impl Into<String>, directions: &[Vec3], radius: f64) -> Result<Self> {
        let array = Self {
            label: label.into(),
            speakers: directions
                .iter()
                .map(|d| Speaker { direction: d.normalize().into(), radius })
                .collect(),
        };
        array.validate()?;
        Ok(array)
    }

    pub fn len(&self) -> usize {
        self.speakers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speakers.is_empty()
    }

    pub fn directions(&self) -> Vec<Vec3> {
        self.speakers.iter().map(Speaker::dir).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.speakers.is_empty() {
            return Err(Error::Empty("loudspeaker array".into()));
        }
        for s in &self.speakers {
            if (s.dir().norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("speaker direction {:?} is not unit length", s.direction)));
            }
            if !(s.radius.is_finite() && s.radius > 0.0) {
                return Err(Error::InvalidArgument(format!("speaker radius {} must be positive", s.radius)));
            }
        }
        let min = min_pairwise_angle(&self.directions()).to_degrees();
        if min < 0.1 {
            return Err(Error::Coincident(min));
        }
        Ok(())
    }
}

/// Elevation and azimuth step (degrees) of each ring of the 86-channel array.
const RINGS: [(f64, f64); 5] = [(-60.0, 60.0), (-30.0, 30.0), (0.0, 7.5), (30.0, 30.0), (60.0, 60.0)];

/// The 86-loudspeaker ring array at its physical 2.5 m radius.
pub fn build_ring_array() -> LoudspeakerArray {
    build_ring_array_with_radius(2.5)
}

/// Five elevation rings (-60, -30, 0, 30, 60 degrees) plus both poles.
/// Every ring starts at azimuth 0.
pub fn build_ring_array_with_radius(radius: f64) -> LoudspeakerArray {
    let mut dirs = vec![from_az_el_deg(0.0, -90.0)];
    for (el, step) in RINGS {
        let count = (360.0 / step).round() as usize;
        dirs.extend((0..count).map(|i| from_az_el_deg(i as f64 * step, el)));
    }
    dirs.push(from_az_el_deg(0.0, 90.0));
    LoudspeakerArray {
        label: "ring86".into(),
        speakers: dirs.into_iter().map(|d| Speaker { direction: d.into(), radius }).collect(),
    }
}

/// `n` loudspeakers on a golden-angle lattice.
pub fn build_fibonacci_array(n: usize, radius: f64) -> Result<LoudspeakerArray> {
    if n < 4 {
        return Err(Error::InvalidArgument(format!("a Fibonacci array needs at least 4 points, got {n}")));
    }
    LoudspeakerArray::from_directions(format!("fibonacci{n}"), &fibonacci_sphere(n), radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::az_el_deg;
    use std::f64::consts::PI;

    #[test]
    fn ring_array_counts() {
        let a = build_ring_array();
        assert_eq!(a.len(), 86);
        a.validate().unwrap();
        let count_at = |el: f64| {
            a.speakers.iter().filter(|s| (az_el_deg(&s.dir()).1 - el).abs() < 1e-6).count()
        };
        assert_eq!(count_at(0.0), 48);
        assert_eq!(count_at(30.0), 12);
        assert_eq!(count_at(-30.0), 12);
        assert_eq!(count_at(60.0), 6);
        assert_eq!(count_at(-60.0), 6);
        assert_eq!(count_at(90.0), 1);
        assert_eq!(count_at(-90.0), 1);
        assert!(a.speakers.iter().all(|s| s.radius == 2.5));
    }

    #[test]
    fn ring_array_is_deterministic() {
        assert_eq!(build_ring_array(), build_ring_array());
    }

    #[test]
    fn fibonacci_array_spread() {
        let a = build_fibonacci_array(87, 1.25).unwrap();
        assert_eq!(a.len(), 87);
        for s in &a.speakers {
            assert!((s.position().norm() - 1.25).abs() < 1e-9);
        }
        // ideal spacing from hexagonal packing: θ ≈ sqrt(8π / (√3 n))
        let ideal = (8.0 * PI / (3f64.sqrt() * 87.0)).sqrt();
        let min = min_pairwise_angle(&a.directions());
        assert!((min - ideal).abs() / ideal < 0.2, "min {min} ideal {ideal}");

        let t = build_fibonacci_array(4, 1.0).unwrap();
        assert!(min_pairwise_angle(&t.directions()).to_degrees() > 60.0);
        assert!(build_fibonacci_array(3, 1.0).is_err());
    }

    #[test]
    fn coincident_speakers_rejected() {
        let d = [Vec3::x(), Vec3::new(1.0, 1e-4, 0.0), Vec3::y()];
        assert!(matches!(LoudspeakerArray::from_directions("x", &d, 1.0), Err(Error::Coincident(_))));
    }
}
