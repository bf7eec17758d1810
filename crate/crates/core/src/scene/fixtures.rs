use super::{Placement, Room, DEFAULT_SPEED_OF_SOUND};
use crate::error::{Error, Result};

pub const FIXTURE_NAMES: [&str; 9] = [
    "Laboratory",
    "Aula/Rec1",
    "Aula/Rec2",
    "Staircase",
    "Corridor/A",
    "Corridor/Ar",
    "Corridor/B",
    "Corridor/C",
    "Corridor/D",
];

/// Distance of each corridor position from the absorbent end wall.
const CORRIDOR_H: [(&str, f64, f64); 5] =
    [("A", 0.18, 0.0), ("Ar", 0.18, 60.0), ("B", 1.87, 0.0), ("C", 4.77, 0.0), ("D", 14.93, 0.0)];

/// Values spaced geometrically from `lo` (125 Hz) to `hi` (8 kHz).
fn log_interp(lo: f64, hi: f64) -> [f64; 7] {
    std::array::from_fn(|b| lo * (hi / lo).powf(b as f64 / 6.0))
}

/// Uniform absorption that gives reverberation time `rt60` by Eyring's
/// formula in a room of the given dimensions.
fn eyring_absorption(dims: [f64; 3], rt60: f64) -> f64 {
    let [l, w, h] = dims;
    let volume = l * w * h;
    let area = 2.0 * (l * w + l * h + w * h);
    1.0 - (-0.161 * volume / (area * rt60)).exp()
}

fn uniform_room(dims: [f64; 3], rt60: [f64; 7]) -> Room {
    let alpha = rt60.map(|t| eyring_absorption(dims, t));
    Room { dims, absorption: [alpha; 6], speed_of_sound: DEFAULT_SPEED_OF_SOUND }
}

/// Reverberation times (s, per octave band) the named room is meant to
/// have. The corridor value is the approximate range quoted for it.
pub fn reference_rt60(name: &str) -> Result<[f64; 7]> {
    let room = name.split('/').next().unwrap_or(name);
    match room {
        "Laboratory" => Ok([0.4; 7]),
        "Aula" => Ok(log_interp(7.2, 1.5)),
        "Staircase" => Ok(log_interp(5.3, 2.6)),
        "Corridor" => Ok(log_interp(1.3, 0.8)),
        _ => Err(Error::UnknownFixture(name.into())),
    }
}

/// Named room and source/receiver setup.
pub fn fixture(name: &str) -> Result<(Room, Placement)> {
    let unknown = || Error::UnknownFixture(name.into());
    let (room, placement) = match name {
        "Laboratory" => {
            let dims = [4.97, 4.12, 3.0];
            let p = Placement { source: [3.2, 2.06, 1.5], receiver: [1.5, 2.06, 1.5], receiver_yaw_deg: 0.0 };
            (uniform_room(dims, reference_rt60(name)?), p)
        }
        "Aula/Rec1" | "Aula/Rec2" => {
            // 30 m is the longest horizontal extent; a 13 m source distance
            // does not fit otherwise.
            let dims = [30.0, 12.0, 10.0];
            let distance = if name.ends_with('1') { 2.72 } else { 13.01 };
            let receiver = [8.0, 6.0, 1.7];
            let p = Placement { source: [receiver[0] + distance, 6.0, 1.7], receiver, receiver_yaw_deg: 0.0 };
            (uniform_room(dims, reference_rt60(name)?), p)
        }
        "Staircase" => {
            let dims = [2.98, 6.83, 12.71];
            let p = Placement { source: [1.49, 4.4, 1.72], receiver: [1.49, 2.4, 1.72], receiver_yaw_deg: 0.0 };
            (uniform_room(dims, reference_rt60(name)?), p)
        }
        _ => {
            let pos = name.strip_prefix("Corridor/").ok_or_else(unknown)?;
            let &(_, h, yaw) = CORRIDOR_H.iter().find(|(n, _, _)| *n == pos).ok_or_else(unknown)?;
            // reflective surfaces rise linearly in log-frequency from 0.01 to 0.11
            let reflective: [f64; 7] = std::array::from_fn(|b| 0.01 + 0.1 * b as f64 / 6.0);
            let mut absorption = [reflective; 6];
            absorption[0] = [0.99; 7];
            // 1.335 m from each side wall keeps the 5.33 m source distance exact
            let room = Room { dims: [24.0, 8.0, 6.0], absorption, speed_of_sound: DEFAULT_SPEED_OF_SOUND };
            let p = Placement { source: [h, 6.665, 1.8], receiver: [h, 1.335, 1.8], receiver_yaw_deg: yaw };
            (room, p)
        }
    };
    room.validate()?;
    placement.validate(&room)?;
    Ok((room, placement))
}
