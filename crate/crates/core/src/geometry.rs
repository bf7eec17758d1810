//! Small 3-D geometry toolkit: direction helpers, quasi-uniform sphere
//! sampling, convex hulls of small point sets and Wadell sphericity.
//!
//! Coordinates follow the room convention used throughout the crate: `x`
//! points to the listener's front (0° azimuth), `y` to the left (+90°
//! azimuth) and `z` up. Azimuth is counter-clockwise seen from above.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Unit vector for an azimuth/elevation pair given in degrees.
pub fn from_az_el_deg(azimuth: f64, elevation: f64) -> Vec3 {
    let (az, el) = (azimuth.to_radians(), elevation.to_radians());
    Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

/// Azimuth and elevation (degrees) of a non-zero vector. Azimuth is in
/// (-180, 180].
pub fn az_el_deg(v: &Vec3) -> (f64, f64) {
    let r = v.norm();
    let az = v.y.atan2(v.x).to_degrees();
    let el = (v.z / r).clamp(-1.0, 1.0).asin().to_degrees();
    (az, el)
}

/// Angle between two vectors in radians.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    // atan2 form stays accurate for nearly parallel vectors.
    a.cross(b).norm().atan2(a.dot(b))
}

/// Rotation about the z axis by `angle` radians (counter-clockwise seen from above).
pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Golden-angle (Fibonacci) lattice of `n` unit vectors.
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Smallest angle (radians) between any two of the given directions.
pub fn min_pairwise_angle(points: &[Vec3]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.min(angle_between(a, b));
        }
    }
    best
}

/// Triangulated convex hull with outward-oriented faces.
#[derive(Debug, Clone)]
pub struct ConvexHull {
    pub points: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

const PLANE_EPS: f64 = 1e-9;

impl ConvexHull {
    /// Builds the hull by testing candidate support planes. Faces that
    /// contain more than three coplanar points are fan-triangulated from
    /// their lowest-index vertex, so the result is deterministic.
    ///
    /// The construction is cubic-to-quartic in the number of points and is
    /// meant for loudspeaker and VRS sets (a few hundred points at most).
    pub fn new(points: &[Vec3]) -> Result<Self> {
        let n = points.len();
        if n < 4 {
            return Err(Error::Degenerate(format!("{n} points cannot span a volume")));
        }
        let scale = points.iter().map(|p| p.norm()).fold(0.0, f64::max).max(1e-300);
        let eps = PLANE_EPS * scale;
        let centroid = points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n as f64;

        let mut faces = Vec::new();
        let mut done_planes: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let (a, b, c) = (points[i], points[j], points[k]);
                    let normal = (b - a).cross(&(c - a));
                    let len = normal.norm();
                    if len <= eps * scale {
                        continue;
                    }
                    let mut normal = normal / len;
                    if normal.dot(&(a - centroid)) < 0.0 {
                        normal = -normal;
                    }
                    let mut coplanar = vec![i, j, k];
                    let mut supporting = true;
                    for (m, p) in points.iter().enumerate() {
                        if m == i || m == j || m == k {
                            continue;
                        }
                        let d = normal.dot(&(p - a));
                        if d > eps {
                            supporting = false;
                            break;
                        }
                        if d >= -eps {
                            coplanar.push(m);
                        }
                    }
                    if !supporting {
                        continue;
                    }
                    if coplanar.len() == n {
                        return Err(Error::Degenerate("points are coplanar".into()));
                    }
                    if coplanar.len() == 3 {
                        faces.push(orient([i, j, k], points, &normal));
                        continue;
                    }
                    coplanar.sort_unstable();
                    if done_planes.contains(&coplanar) {
                        continue;
                    }
                    faces.extend(fan_triangulate(&coplanar, points, &normal));
                    done_planes.push(coplanar);
                }
            }
        }
        if faces.is_empty() {
            return Err(Error::Degenerate("points are coplanar".into()));
        }
        Ok(Self { points: points.to_vec(), faces })
    }

    pub fn volume(&self) -> f64 {
        let c = self.interior_point();
        self.faces
            .iter()
            .map(|f| {
                let (a, b, d) = (self.points[f[0]] - c, self.points[f[1]] - c, self.points[f[2]] - c);
                a.dot(&b.cross(&d)).abs() / 6.0
            })
            .sum()
    }

    pub fn area(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let (a, b, c) = (self.points[f[0]], self.points[f[1]], self.points[f[2]]);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }

    /// Indices of points that are hull vertices.
    pub fn vertex_indices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.faces.iter().flatten().copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    fn interior_point(&self) -> Vec3 {
        let idx = self.vertex_indices();
        idx.iter().fold(Vec3::zeros(), |acc, &i| acc + self.points[i]) / idx.len() as f64
    }
}

fn orient(mut f: [usize; 3], points: &[Vec3], outward: &Vec3) -> [usize; 3] {
    let (a, b, c) = (points[f[0]], points[f[1]], points[f[2]]);
    if (b - a).cross(&(c - a)).dot(outward) < 0.0 {
        f.swap(1, 2);
    }
    f
}

fn fan_triangulate(idx: &[usize], points: &[Vec3], normal: &Vec3) -> Vec<[usize; 3]> {
    let center = idx.iter().fold(Vec3::zeros(), |acc, &i| acc + points[i]) / idx.len() as f64;
    let u = (points[idx[0]] - center).normalize();
    let v = normal.cross(&u);
    let mut ring: Vec<(f64, usize)> = idx
        .iter()
        .map(|&i| {
            let d = points[i] - center;
            (d.dot(&v).atan2(d.dot(&u)), i)
        })
        .collect();
    ring.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Rotate so that the lowest index leads the fan.
    let start = ring.iter().enumerate().min_by_key(|(_, (_, i))| *i).map(|(p, _)| p).unwrap_or(0);
    ring.rotate_left(start);
    (1..ring.len() - 1)
        .map(|t| orient([ring[0].1, ring[t].1, ring[t + 1].1], points, normal))
        .collect()
}

/// Wadell sphericity of the convex hull of `points`:
/// `π^(1/3) (6V)^(2/3) / A`. Equals one only in the sphere limit.
pub fn sphericity(points: &[Vec3]) -> Result<f64> {
    let hull = ConvexHull::new(points)?;
    let volume = hull.volume();
    let area = hull.area();
    if volume <= 0.0 || area <= 0.0 {
        return Err(Error::Degenerate("hull has no volume".into()));
    }
    Ok(PI.cbrt() * (6.0 * volume).powf(2.0 / 3.0) / area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cube() -> Vec<Vec3> {
        let mut v = Vec::new();
        for x in [-1.0, 1.0] {
            for y in [-1.0, 1.0] {
                for z in [-1.0, 1.0] {
                    v.push(Vec3::new(x, y, z).normalize());
                }
            }
        }
        v
    }

    fn octahedron() -> Vec<Vec3> {
        vec![Vec3::x(), -Vec3::x(), Vec3::y(), -Vec3::y(), Vec3::z(), -Vec3::z()]
    }

    fn icosahedron() -> Vec<Vec3> {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let mut v = Vec::new();
        for s1 in [1.0, -1.0] {
            for s2 in [1.0, -1.0] {
                v.push(Vec3::new(0.0, s1, s2 * phi).normalize());
                v.push(Vec3::new(s1, s2 * phi, 0.0).normalize());
                v.push(Vec3::new(s2 * phi, 0.0, s1).normalize());
            }
        }
        v
    }

    // Closed forms: cube (π/6)^(1/3); octahedron (π√3/... ) evaluated via
    // V and A of the regular solids with unit circumradius.
    fn analytic(volume: f64, area: f64) -> f64 {
        PI.cbrt() * (6.0 * volume).powf(2.0 / 3.0) / area
    }

    #[test]
    fn sphericity_of_platonic_solids() {
        // cube with circumradius 1: edge 2/√3
        let e = 2.0 / 3f64.sqrt();
        let cube_ref = analytic(e.powi(3), 6.0 * e * e);
        assert_abs_diff_eq!(cube_ref, 0.806, epsilon = 1e-3);
        assert_abs_diff_eq!(sphericity(&cube()).unwrap(), cube_ref, epsilon = 1e-12);

        // octahedron with circumradius 1: edge √2
        let e = 2f64.sqrt();
        let oct_ref = analytic(2f64.sqrt() / 3.0 * e.powi(3), 2.0 * 3f64.sqrt() * e * e);
        assert_abs_diff_eq!(oct_ref, 0.846, epsilon = 1e-3);
        assert_abs_diff_eq!(sphericity(&octahedron()).unwrap(), oct_ref, epsilon = 1e-12);

        // icosahedron with circumradius 1
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let e = 2.0 / (phi * 5f64.sqrt()).sqrt();
        let ico_ref = analytic(5.0 / 12.0 * (3.0 + 5f64.sqrt()) * e.powi(3), 5.0 * 3f64.sqrt() * e * e);
        assert_abs_diff_eq!(ico_ref, 0.939, epsilon = 1e-3);
        assert_abs_diff_eq!(sphericity(&icosahedron()).unwrap(), ico_ref, epsilon = 1e-12);
    }

    #[test]
    fn hull_face_counts() {
        assert_eq!(ConvexHull::new(&octahedron()).unwrap().faces.len(), 8);
        assert_eq!(ConvexHull::new(&icosahedron()).unwrap().faces.len(), 20);
        // six square faces, each split in two
        assert_eq!(ConvexHull::new(&cube()).unwrap().faces.len(), 12);
        let tetra = fibonacci_sphere(4);
        assert_eq!(ConvexHull::new(&tetra).unwrap().faces.len(), 4);
    }

    #[test]
    fn coplanar_input_is_rejected() {
        let flat: Vec<Vec3> = (0..8).map(|i| from_az_el_deg(45.0 * i as f64, 0.0)).collect();
        assert!(matches!(sphericity(&flat), Err(Error::Degenerate(_))));
        assert!(sphericity(&flat[..3]).is_err());
    }

    #[test]
    fn interior_points_are_ignored() {
        let mut pts = octahedron();
        pts.push(Vec3::new(0.1, 0.2, -0.1));
        let hull = ConvexHull::new(&pts).unwrap();
        assert_eq!(hull.faces.len(), 8);
        assert_eq!(hull.vertex_indices().len(), 6);
    }

    #[test]
    fn fibonacci_lattice_is_unit_and_spread() {
        let pts = fibonacci_sphere(87);
        assert!(pts.iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));
        assert!(min_pairwise_angle(&pts).to_degrees() > 15.0);
    }

    #[test]
    fn az_el_round_trip() {
        for (az, el) in [(0.0, 0.0), (90.0, 0.0), (-135.0, 30.0), (45.0, -60.0)] {
            let (a, e) = az_el_deg(&from_az_el_deg(az, el));
            assert_abs_diff_eq!(a, az, epsilon = 1e-9);
            assert_abs_diff_eq!(e, el, epsilon = 1e-9);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sphericity_is_scale_invariant(k in 0.01f64..100.0, n in 6usize..40) {
                let pts = fibonacci_sphere(n);
                let scaled: Vec<Vec3> = pts.iter().map(|p| p * k).collect();
                let a = sphericity(&pts).unwrap();
                let b = sphericity(&scaled).unwrap();
                prop_assert!((a - b).abs() < 1e-9);
                prop_assert!(a > 0.0 && a <= 1.0);
            }
        }
    }
}
