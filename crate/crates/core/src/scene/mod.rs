//! Rooms, source/receiver placements, loudspeaker arrays and VRS layouts,
//! plus the named room fixtures used by the experiments.

mod array;
mod fixtures;
mod vrs;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{az_el_deg, Vec3};

pub use array::{build_fibonacci_array, build_ring_array, build_ring_array_with_radius, LoudspeakerArray, Speaker};
pub use fixtures::{fixture, reference_rt60, FIXTURE_NAMES};
pub use vrs::{build_vrs_layout, octahedral_rotations, orbit, VrsLayout, FINE_CHANNELS, SUPPORTED_VRS_COUNTS};

/// Octave band centre frequencies (Hz) used for absorption and decay data.
pub const OCTAVE_BANDS: [f64; 7] = [125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0];

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;

/// Wall indices: `[-x, +x, -y, +y, -z, +z]`, i.e. the planes `x = 0`,
/// `x = L`, `y = 0`, `y = W`, `z = 0` (floor) and `z = H` (ceiling).
pub const SURFACE_NAMES: [&str; 6] = ["-x", "+x", "-y", "+y", "-z", "+z"];

/// Shoebox room with per-wall, per-octave-band absorption coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    /// Length (x), width (y) and height (z) in metres.
    pub dims: [f64; 3],
    /// Absorption coefficient per wall (see [`SURFACE_NAMES`]) and octave band.
    pub absorption: [[f64; 7]; 6],
    #[serde(default = "default_speed_of_sound")]
    pub speed_of_sound: f64,
}

fn default_speed_of_sound() -> f64 {
    DEFAULT_SPEED_OF_SOUND
}

impl Room {
    pub fn new(dims: [f64; 3], absorption: [[f64; 7]; 6], speed_of_sound: f64) -> Result<Self> {
        let room = Self { dims, absorption, speed_of_sound };
        room.validate()?;
        Ok(room)
    }

    /// Room with the same absorption on every wall.
    pub fn uniform(dims: [f64; 3], absorption: [f64; 7]) -> Result<Self> {
        Self::new(dims, [absorption; 6], DEFAULT_SPEED_OF_SOUND)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| !(d.is_finite() && d > 0.0)) {
            return Err(Error::InvalidRoom(format!("dimensions must be positive, got {:?}", self.dims)));
        }
        for (s, bands) in self.absorption.iter().enumerate() {
            if let Some(a) = bands.iter().find(|a| !(0.0..=1.0).contains(*a)) {
                return Err(Error::InvalidRoom(format!(
                    "absorption {a} on wall {} outside [0, 1]",
                    SURFACE_NAMES[s]
                )));
            }
        }
        if !(self.speed_of_sound.is_finite() && self.speed_of_sound > 0.0) {
            return Err(Error::InvalidRoom("speed of sound must be positive".into()));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().product()
    }

    /// Area of wall `surface`.
    pub fn wall_area(&self, surface: usize) -> f64 {
        let [l, w, h] = self.dims;
        match surface / 2 {
            0 => w * h,
            1 => l * h,
            _ => l * w,
        }
    }

    pub fn total_area(&self) -> f64 {
        (0..6).map(|s| self.wall_area(s)).sum()
    }

    /// Area-weighted mean absorption in octave band `band`.
    pub fn mean_absorption(&self, band: usize) -> f64 {
        (0..6).map(|s| self.wall_area(s) * self.absorption[s][band]).sum::<f64>() / self.total_area()
    }

    /// Absorption of a wall averaged over the seven octave bands.
    pub fn broadband_absorption(&self, surface: usize) -> f64 {
        self.absorption[surface].iter().sum::<f64>() / 7.0
    }

    pub fn contains(&self, p: &[f64; 3]) -> bool {
        p.iter().zip(self.dims).all(|(&x, d)| x > 0.0 && x < d)
    }

    /// Wall hit by a ray cast from `origin` (inside the room) along `dir`.
    pub fn hit_surface(&self, origin: &Vec3, dir: &Vec3) -> usize {
        let mut best = (f64::INFINITY, 0);
        for axis in 0..3 {
            let d = dir[axis];
            if d.abs() < 1e-15 {
                continue;
            }
            let (t, surface) = if d > 0.0 {
                ((self.dims[axis] - origin[axis]) / d, 2 * axis + 1)
            } else {
                (-origin[axis] / d, 2 * axis)
            };
            if t < best.0 {
                best = (t, surface);
            }
        }
        best.1
    }
}

/// Source and receiver positions plus the receiver's yaw relative to the
/// source direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub source: [f64; 3],
    pub receiver: [f64; 3],
    /// Listener rotation in degrees relative to facing the source; positive
    /// values rotate clockwise seen from above.
    #[serde(default)]
    pub receiver_yaw_deg: f64,
}

impl Placement {
    pub fn validate(&self, room: &Room) -> Result<()> {
        for p in [self.source, self.receiver] {
            if !room.contains(&p) {
                return Err(Error::OutsideRoom(p));
            }
        }
        Ok(())
    }

    pub fn source_vec(&self) -> Vec3 {
        Vec3::from(self.source)
    }

    pub fn receiver_vec(&self) -> Vec3 {
        Vec3::from(self.receiver)
    }

    pub fn distance(&self) -> f64 {
        (self.source_vec() - self.receiver_vec()).norm()
    }

    /// Azimuth (degrees, room frame, counter-clockwise) the listener's nose
    /// points to.
    pub fn heading_deg(&self) -> f64 {
        let d = self.source_vec() - self.receiver_vec();
        let (az, _) = if d.x == 0.0 && d.y == 0.0 { (0.0, 0.0) } else { az_el_deg(&d) };
        az - self.receiver_yaw_deg
    }

    /// Rotation taking room-frame directions into the listener frame
    /// (front = +x).
    pub fn listener_frame(&self) -> nalgebra::Matrix3<f64> {
        crate::geometry::rot_z(-self.heading_deg().to_radians())
    }
}

/// Horizontal field of view (degrees) subtended at the receiver by wall
/// `surface` (a vertical wall, index 0..4).
pub fn wall_fov(placement: &Placement, room: &Room, surface: usize) -> Result<f64> {
    if surface >= 4 {
        return Err(Error::InvalidArgument("field of view is defined for vertical walls only".into()));
    }
    let [rx, ry, _] = placement.receiver;
    let [l, w, _] = room.dims;
    // wall edges in the horizontal plane
    let (a, b) = match surface {
        0 => ((0.0, 0.0), (0.0, w)),
        1 => ((l, 0.0), (l, w)),
        2 => ((0.0, 0.0), (l, 0.0)),
        _ => ((0.0, w), (l, w)),
    };
    let va = (a.0 - rx, a.1 - ry);
    let vb = (b.0 - rx, b.1 - ry);
    let cross = va.0 * vb.1 - va.1 * vb.0;
    let dot = va.0 * vb.0 + va.1 * vb.1;
    Ok(cross.abs().atan2(dot).to_degrees())
}

/// Field of view of the most absorbent vertical wall (the corridor's end
/// wall in the corridor fixtures).
pub fn corridor_fov(placement: &Placement, room: &Room) -> Result<f64> {
    placement.validate(room)?;
    let wall = (0..4)
        .max_by(|&a, &b| room.broadband_absorption(a).total_cmp(&room.broadband_absorption(b)))
        .unwrap_or(0);
    wall_fov(placement, room, wall)
}
