//! Source layouts for the coherence harness and their idealized responses.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ReceiverPair;
use crate::error::{Error, Result};
use crate::geometry::{fibonacci_sphere, Vec3};
use crate::render::fractional_kernel;
use crate::scene::{build_ring_array_with_radius, build_vrs_layout, SUPPORTED_VRS_COUNTS};

/// VRS count that selects the dense Fibonacci layout in the VBAP case.
pub const DENSE_VRS: usize = 9999;

/// Points of the equal-power Fibonacci reference arrangement.
const FIB_POINTS: usize = 87;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Arrangement {
    /// Independent noises radiated straight from the VRS positions.
    Dir,
    /// Independent VRS noises panned onto the 86-loudspeaker array.
    Vbap,
    /// Independent noise per loudspeaker with the VBAP channel powers.
    Ch86,
    /// Equal-power independent noises on a Fibonacci lattice.
    Fib,
}

impl Arrangement {
    pub const ALL: [Arrangement; 4] = [Arrangement::Dir, Arrangement::Vbap, Arrangement::Ch86, Arrangement::Fib];

    pub fn label(self) -> &'static str {
        match self {
            Arrangement::Dir => "DIR",
            Arrangement::Vbap => "VBAP",
            Arrangement::Ch86 => "CH86",
            Arrangement::Fib => "FIB",
        }
    }

    /// Checks that `n_vrs` is meaningful for this arrangement.
    pub fn check_vrs(self, n_vrs: usize) -> Result<()> {
        match self {
            Arrangement::Fib => Ok(()),
            Arrangement::Vbap | Arrangement::Ch86 if n_vrs == DENSE_VRS => Ok(()),
            _ if SUPPORTED_VRS_COUNTS.contains(&n_vrs) => Ok(()),
            _ => Err(Error::UnsupportedVrsCount(n_vrs)),
        }
    }
}

impl fmt::Display for Arrangement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Arrangement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown arrangement {s:?}; expected DIR, VBAP, CH86 or FIB")))
    }
}

/// Point sources driven by linear mixtures of independent unit-variance
/// noises: source `k` radiates `Σ_j mix[(k, j)] · n_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSet {
    pub positions: Vec<Vec3>,
    pub mix: DMatrix<f64>,
}

impl SourceSet {
    pub fn for_arrangement(arrangement: Arrangement, n_vrs: usize, radius: f64) -> Result<Self> {
        arrangement.check_vrs(n_vrs)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
        }
        let vrs_dirs = || -> Result<Vec<Vec3>> {
            if n_vrs == DENSE_VRS {
                Ok(fibonacci_sphere(DENSE_VRS))
            } else {
                Ok(build_vrs_layout(n_vrs)?.dirs())
            }
        };
        match arrangement {
            Arrangement::Dir => {
                let positions: Vec<Vec3> = vrs_dirs()?.into_iter().map(|d| d * radius).collect();
                let n = positions.len();
                Ok(Self { positions, mix: DMatrix::identity(n, n) })
            }
            Arrangement::Fib => {
                let positions: Vec<Vec3> = fibonacci_sphere(FIB_POINTS).into_iter().map(|d| d * radius).collect();
                Ok(Self { positions, mix: DMatrix::identity(FIB_POINTS, FIB_POINTS) })
            }
            Arrangement::Vbap | Arrangement::Ch86 => {
                let array = build_ring_array_with_radius(radius);
                let panner = crate::render::Panner::new(&array)?;
                let dirs = vrs_dirs()?;
                let mut gains = DMatrix::zeros(array.len(), dirs.len());
                for (j, d) in dirs.iter().enumerate() {
                    let g = panner.pan(d);
                    for (s, x) in g.speakers.iter().zip(&g.gains) {
                        gains[(*s, j)] = *x;
                    }
                }
                let positions = array.speakers.iter().map(|s| s.position()).collect();
                let mix = if arrangement == Arrangement::Vbap {
                    gains
                } else {
                    let power: Vec<f64> = gains.row_iter().map(|r| r.norm_squared().sqrt()).collect();
                    DMatrix::from_diagonal(&nalgebra::DVector::from_vec(power))
                };
                Ok(Self { positions, mix })
            }
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Source covariance `mix · mixᵀ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.mix * self.mix.transpose()
    }

    /// Number of sources carrying any power.
    pub fn active(&self) -> usize {
        self.mix.row_iter().filter(|r| r.iter().any(|&x| x != 0.0)).count()
    }
}

/// Distances from every source to the two receivers, rejecting sources
/// closer than 1 mm to either receiver.
pub(crate) fn receiver_distances(sources: &[Vec3], pair: &ReceiverPair) -> Result<Vec<[f64; 2]>> {
    pair.validate()?;
    let [a, b] = pair.positions();
    sources
        .iter()
        .map(|p| {
            let d = [(p - a).norm(), (p - b).norm()];
            let closest = d[0].min(d[1]);
            if closest < 1e-3 {
                Err(Error::Coincident(closest))
            } else {
                Ok(d)
            }
        })
        .collect()
}

/// Free-field response from every source to both receivers: a fractional
/// delay of `distance / c` with amplitude `1 / distance`. All responses
/// share a common length and start at sample 0.
pub fn idealized_irs(
    sources: &[Vec3],
    pair: &ReceiverPair,
    sample_rate: f64,
    speed_of_sound: f64,
) -> Result<Vec<[Vec<f64>; 2]>> {
    let dist = receiver_distances(sources, pair)?;
    let max = dist.iter().flatten().fold(0.0f64, |m, &d| m.max(d));
    let len = (max / speed_of_sound * sample_rate).ceil() as usize + 64;
    Ok(dist
        .iter()
        .map(|d| {
            d.map(|r| {
                let mut h = vec![0.0; len];
                let (start, taps) = fractional_kernel(r / speed_of_sound * sample_rate);
                crate::render::add_scaled(&mut h, start, &taps, 1.0 / r);
                h
            })
        })
        .collect())
}
