//! Image-source model for shoebox rooms.

use serde::{Deserialize, Serialize};

use crate::csv::{format_sig, row};
use crate::error::{Error, Result};
use crate::geometry::{az_el_deg, Vec3};
use crate::scene::{Placement, Room, OCTAVE_BANDS};

/// One specular path from the source to the receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflection {
    /// Number of wall hits; 0 for the direct sound.
    pub order: u32,
    /// Image-lattice index along x, y and z.
    pub lattice: [i32; 3],
    pub image_pos: [f64; 3],
    pub delay: f64,
    pub distance: f64,
    /// Linear amplitude per octave band, including the 1/r spreading loss.
    pub band_gains: [f64; 7],
    /// Unit vector from the receiver towards the image source.
    pub direction: [f64; 3],
    /// Number of hits on each wall.
    pub wall_hits: [u32; 6],
}

impl Reflection {
    pub fn dir(&self) -> Vec3 {
        Vec3::from(self.direction)
    }
}

/// Image coordinate and hits on the low/high wall for lattice index `n`
/// along an axis of length `len` with source coordinate `s`.
fn axis_image(n: i32, len: f64, s: f64) -> (f64, u32, u32) {
    let coord = if n % 2 == 0 { n as f64 * len + s } else { n as f64 * len + len - s };
    let m = n.unsigned_abs();
    let (near, far) = (m.div_ceil(2), m / 2);
    if n >= 0 {
        (coord, far, near)
    } else {
        (coord, near, far)
    }
}

/// All image sources with at most `max_order` wall hits, sorted by delay
/// and then by lattice index.
pub fn compute_reflections(room: &Room, placement: &Placement, max_order: u32) -> Result<Vec<Reflection>> {
    room.validate()?;
    placement.validate(room)?;
    let direct = placement.distance();
    if direct < 1e-3 {
        return Err(Error::Coincident(direct));
    }
    let n = max_order as i32;
    let receiver = placement.receiver_vec();
    let mut out = Vec::new();
    for i in -n..=n {
        for j in -(n - i.abs())..=(n - i.abs()) {
            let rest = n - i.abs() - j.abs();
            for k in -rest..=rest {
                let lattice = [i, j, k];
                let mut image = [0.0; 3];
                let mut wall_hits = [0u32; 6];
                for axis in 0..3 {
                    let (c, lo, hi) = axis_image(lattice[axis], room.dims[axis], placement.source[axis]);
                    image[axis] = c;
                    wall_hits[2 * axis] = lo;
                    wall_hits[2 * axis + 1] = hi;
                }
                let offset = Vec3::from(image) - receiver;
                let distance = offset.norm();
                let band_gains = std::array::from_fn(|b| {
                    let reflect: f64 = (0..6)
                        .map(|w| (1.0 - room.absorption[w][b]).sqrt().powi(wall_hits[w] as i32))
                        .product();
                    reflect / distance
                });
                out.push(Reflection {
                    order: (i.abs() + j.abs() + k.abs()) as u32,
                    lattice,
                    image_pos: image,
                    delay: distance / room.speed_of_sound,
                    distance,
                    band_gains,
                    direction: (offset / distance).into(),
                    wall_hits,
                });
            }
        }
    }
    out.sort_by(|a, b| a.delay.total_cmp(&b.delay).then(a.lattice.cmp(&b.lattice)));
    Ok(out)
}

/// The reflections of the highest order present, which feed the FDN.
pub fn last_order_arrivals(reflections: &[Reflection]) -> Result<Vec<Reflection>> {
    let top = reflections
        .iter()
        .map(|r| r.order)
        .max()
        .ok_or_else(|| Error::Empty("no reflections".into()))?;
    if top == 0 {
        return Err(Error::Empty("only the direct sound is present".into()));
    }
    Ok(reflections.iter().filter(|r| r.order == top).cloned().collect())
}

/// CSV with one row per reflection.
pub fn reflections_csv(reflections: &[Reflection]) -> String {
    let mut header = vec!["order".to_string(), "delay_s".into(), "distance_m".into()];
    header.extend(["azimuth_deg".into(), "elevation_deg".into()]);
    header.extend(OCTAVE_BANDS.iter().map(|f| format!("g{f}")));
    let mut out = row(header);
    for r in reflections {
        let (az, el) = az_el_deg(&r.dir());
        let mut fields = vec![r.order.to_string(), format_sig(r.delay), format_sig(r.distance)];
        fields.extend([format_sig(az), format_sig(el)]);
        fields.extend(r.band_gains.iter().map(|&g| format_sig(g)));
        out.push_str(&row(fields));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn room(alpha: f64) -> Room {
        Room::uniform([5.0, 4.0, 3.0], [alpha; 7]).unwrap()
    }

    fn placement() -> Placement {
        Placement { source: [1.0, 2.0, 1.5], receiver: [3.5, 1.2, 1.1], receiver_yaw_deg: 0.0 }
    }

    /// Brute-force count of integer lattice points with L1 norm ≤ n.
    fn lattice_count(n: i32) -> usize {
        let mut c = 0;
        for i in -n..=n {
            for j in -n..=n {
                for k in -n..=n {
                    if i.abs() + j.abs() + k.abs() <= n {
                        c += 1;
                    }
                }
            }
        }
        c
    }

    #[test]
    fn direct_sound_only() {
        let r = compute_reflections(&room(0.3), &placement(), 0).unwrap();
        assert_eq!(r.len(), 1);
        let d = placement().distance();
        assert_abs_diff_eq!(r[0].delay, d / 343.0, epsilon = 1e-12);
        for g in r[0].band_gains {
            assert_abs_diff_eq!(g, 1.0 / d, epsilon = 1e-12);
        }
    }

    #[test]
    fn image_counts() {
        for n in 0..=4 {
            let r = compute_reflections(&room(0.3), &placement(), n).unwrap();
            assert_eq!(r.len(), lattice_count(n as i32));
        }
        assert_eq!(compute_reflections(&room(0.3), &placement(), 3).unwrap().len(), 63);
    }

    #[test]
    fn first_order_mirror() {
        let p = Placement { source: [1.0, 2.0, 1.5], ..placement() };
        let r = compute_reflections(&room(0.3), &p, 1).unwrap();
        let img = r.iter().find(|r| r.lattice == [-1, 0, 0]).unwrap();
        assert_eq!(img.image_pos, [-1.0, 2.0, 1.5]);
        assert_eq!(img.wall_hits, [1, 0, 0, 0, 0, 0]);
        let img = r.iter().find(|r| r.lattice == [1, 0, 0]).unwrap();
        assert_eq!(img.image_pos, [9.0, 2.0, 1.5]);
    }

    #[test]
    fn last_order_counts() {
        let r3 = compute_reflections(&room(0.3), &placement(), 3).unwrap();
        assert_eq!(last_order_arrivals(&r3).unwrap().len(), 38);
        let r1 = compute_reflections(&room(0.3), &placement(), 1).unwrap();
        assert_eq!(last_order_arrivals(&r1).unwrap().len(), 6);
        let r0 = compute_reflections(&room(0.3), &placement(), 0).unwrap();
        assert!(last_order_arrivals(&r0).is_err());
        assert!(last_order_arrivals(&[]).is_err());
    }

    #[test]
    fn coincident_rejected() {
        let p = Placement { source: [1.0, 1.0, 1.0], receiver: [1.0, 1.0, 1.0005], receiver_yaw_deg: 0.0 };
        assert!(matches!(compute_reflections(&room(0.3), &p, 1), Err(Error::Coincident(_))));
    }

    #[test]
    fn csv_layout() {
        let r = compute_reflections(&room(0.3), &placement(), 1).unwrap();
        let csv = reflections_csv(&r);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 8);
        assert_eq!(
            lines[0],
            "order,delay_s,distance_m,azimuth_deg,elevation_deg,g125,g250,g500,g1000,g2000,g4000,g8000"
        );
        assert!(!csv.contains('\r'));
        assert!(lines.iter().all(|l| l.split(',').count() == 12));
    }

    fn inside() -> impl Strategy<Value = [f64; 3]> {
        (0.05f64..4.95, 0.05f64..3.95, 0.05f64..2.95).prop_map(|(x, y, z)| [x, y, z])
    }

    proptest! {
        #[test]
        fn reflections_are_well_formed(src in inside(), rcv in inside(), alpha in 0.0f64..0.9) {
            prop_assume!((Vec3::from(src) - Vec3::from(rcv)).norm() > 0.01);
            let p = Placement { source: src, receiver: rcv, receiver_yaw_deg: 0.0 };
            let r = compute_reflections(&room(alpha), &p, 3).unwrap();
            let direct = r.iter().find(|r| r.order == 0).unwrap().delay;
            for x in &r {
                prop_assert!((x.delay - x.distance / 343.0).abs() < 1e-9);
                prop_assert!(x.delay >= direct - 1e-15);
                prop_assert_eq!(x.wall_hits.iter().sum::<u32>(), x.order);
                let expected = (1.0 - alpha).sqrt().powi(x.order as i32) / x.distance;
                prop_assert!((x.band_gains[3] - expected).abs() < 1e-12);
            }
            prop_assert!(r.windows(2).all(|w| w[0].delay <= w[1].delay));
        }

        #[test]
        fn rigid_room_is_lossless(src in inside(), rcv in inside()) {
            prop_assume!((Vec3::from(src) - Vec3::from(rcv)).norm() > 0.01);
            let p = Placement { source: src, receiver: rcv, receiver_yaw_deg: 0.0 };
            for x in compute_reflections(&room(0.0), &p, 3).unwrap() {
                for g in x.band_gains {
                    prop_assert!((g * x.distance - 1.0).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn reciprocity(src in inside(), rcv in inside()) {
            prop_assume!((Vec3::from(src) - Vec3::from(rcv)).norm() > 0.01);
            let mut absorption = [[0.1; 7]; 6];
            for (w, a) in absorption.iter_mut().enumerate() {
                a[0] = 0.05 * w as f64;
            }
            let room = Room::new([5.0, 4.0, 3.0], absorption, 343.0).unwrap();
            let fwd = Placement { source: src, receiver: rcv, receiver_yaw_deg: 0.0 };
            let rev = Placement { source: rcv, receiver: src, receiver_yaw_deg: 0.0 };
            let key = |r: &Reflection| (r.delay, r.band_gains[0]);
            let mut a: Vec<_> = compute_reflections(&room, &fwd, 3).unwrap().iter().map(key).collect();
            let mut b: Vec<_> = compute_reflections(&room, &rev, 3).unwrap().iter().map(key).collect();
            a.sort_by(|x, y| x.partial_cmp(y).unwrap());
            b.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x.0 - y.0).abs() < 1e-9 && (x.1 - y.1).abs() < 1e-9);
            }
        }
    }
}
