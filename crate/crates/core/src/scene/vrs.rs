use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angle_between, Vec3};

pub const SUPPORTED_VRS_COUNTS: [usize; 5] = [6, 12, 24, 48, 96];

/// Number of FDN output channels every layout is downmixed from.
pub const FINE_CHANNELS: usize = 96;

/// Orbit generators (polar angle, azimuth; degrees) under the rotation
/// group of the cube. Each generator contributes 24 directions.
const ORBITS_24: [(f64, f64); 1] = [(28.8967, 29.2899)];
const ORBITS_48: [(f64, f64); 2] = [(18.906_815_46, 110.905_266_82), (73.752_479_43, 49.404_365_16)];
const ORBITS_96: [(f64, f64); 4] = [(48.813, 28.994), (31.907, 42.124), (12.774, 42.952), (32.021, 88.687)];

/// Directions of the virtual reverberation sources, their gains and the
/// map from the 96 FDN channels onto them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VrsLayout {
    pub n_vrs: usize,
    pub directions: Vec<[f64; 3]>,
    pub gains: Vec<f64>,
    /// `assignment[fine]` is the VRS that FDN channel `fine` is summed into.
    pub assignment: Vec<usize>,
    /// How the directions were generated.
    pub construction: String,
}

impl VrsLayout {
    pub fn dirs(&self) -> Vec<Vec3> {
        self.directions.iter().map(|d| Vec3::from(*d)).collect()
    }

    /// Fine channels summed into VRS `coarse`, in ascending order.
    pub fn members(&self, coarse: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&f| self.assignment[f] == coarse).collect()
    }

    pub fn with_gains(mut self, gains: Vec<f64>) -> Result<Self> {
        if gains.len() != self.n_vrs {
            return Err(Error::ChannelMismatch { expected: self.n_vrs, actual: gains.len() });
        }
        if gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::InvalidArgument("VRS gains must be finite and non-negative".into()));
        }
        self.gains = gains;
        Ok(self)
    }
}

/// The 24 proper rotations of the cube: signed permutation matrices with
/// determinant +1.
pub fn octahedral_rotations() -> Vec<Matrix3<f64>> {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::with_capacity(24);
    for perm in PERMS {
        for signs in 0..8u32 {
            let mut m = Matrix3::zeros();
            for (row, &col) in perm.iter().enumerate() {
                m[(row, col)] = if signs >> (2 - row) & 1 == 1 { -1.0 } else { 1.0 };
            }
            if m.determinant() > 0.0 {
                out.push(m);
            }
        }
    }
    out
}

/// Union of the cube-rotation orbits of each `(polar, azimuth)` generator
/// (degrees).
pub fn orbit(generators: &[(f64, f64)]) -> Vec<Vec3> {
    let rotations = octahedral_rotations();
    let mut out = Vec::with_capacity(generators.len() * rotations.len());
    for &(polar, azimuth) in generators {
        let (st, ct) = polar.to_radians().sin_cos();
        let (sp, cp) = azimuth.to_radians().sin_cos();
        let p = Vec3::new(st * cp, st * sp, ct);
        out.extend(rotations.iter().map(|r| r * p));
    }
    out
}

fn axes() -> Vec<Vec3> {
    vec![Vec3::x(), -Vec3::x(), Vec3::y(), -Vec3::y(), Vec3::z(), -Vec3::z()]
}

/// Cube edge midpoints, i.e. points on the face diagonals of a room-aligned
/// cube.
fn cuboctahedron() -> Vec<Vec3> {
    let mut out = Vec::with_capacity(12);
    for axis in 0..3 {
        for s1 in [1.0, -1.0] {
            for s2 in [1.0, -1.0] {
                let mut v = Vec3::zeros();
                v[axis] = s1;
                v[(axis + 1) % 3] = s2;
                out.push(v / 2f64.sqrt());
            }
        }
    }
    out
}

fn directions_for(n_vrs: usize) -> Result<(Vec<Vec3>, String)> {
    let describe = |g: &[(f64, f64)]| {
        let parts: Vec<String> = g.iter().map(|(t, p)| format!("({t}, {p})")).collect();
        format!("cube-rotation orbits of polar/azimuth generators {}", parts.join(", "))
    };
    Ok(match n_vrs {
        6 => (axes(), "coordinate axes".into()),
        12 => (cuboctahedron(), "cuboctahedron (cube edge midpoints)".into()),
        24 => (orbit(&ORBITS_24), describe(&ORBITS_24)),
        48 => (orbit(&ORBITS_48), describe(&ORBITS_48)),
        96 => (orbit(&ORBITS_96), describe(&ORBITS_96)),
        other => return Err(Error::UnsupportedVrsCount(other)),
    })
}

/// Greedy capacity-limited nearest-direction assignment: candidate pairs
/// are taken in order of increasing angle, ties going to the lowest fine
/// index and then the lowest coarse index.
fn assign_nearest(fine: &[Vec3], coarse: &[Vec3]) -> Vec<usize> {
    let capacity = fine.len() / coarse.len();
    let mut pairs: Vec<(f64, usize, usize)> = fine
        .iter()
        .enumerate()
        .flat_map(|(i, f)| coarse.iter().enumerate().map(move |(j, c)| (angle_between(f, c), i, j)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![usize::MAX; fine.len()];
    let mut load = vec![0usize; coarse.len()];
    for (_, i, j) in pairs {
        if out[i] == usize::MAX && load[j] < capacity {
            out[i] = j;
            load[j] += 1;
        }
    }
    out
}

/// Builds the layout for `n_vrs` directions. The assignment follows the
/// pairwise downmix chain 96 → 48 → 24 → 12 → 6: at each step two channels
/// are summed into the nearest direction of the next coarser layout.
pub fn build_vrs_layout(n_vrs: usize) -> Result<VrsLayout> {
    let (directions, construction) = directions_for(n_vrs)?;
    let mut assignment: Vec<usize> = (0..FINE_CHANNELS).collect();
    let mut current = directions_for(FINE_CHANNELS)?.0;
    let mut count = FINE_CHANNELS;
    while count > n_vrs {
        count /= 2;
        let next = directions_for(count)?.0;
        let step = assign_nearest(&current, &next);
        for a in assignment.iter_mut() {
            *a = step[*a];
        }
        current = next;
    }
    Ok(VrsLayout {
        n_vrs,
        directions: directions.iter().map(|d| (*d).into()).collect(),
        gains: vec![1.0; n_vrs],
        assignment,
        construction,
    })
}
