//! Deterministic direction sets on the sphere.

use std::f64::consts::PI;

/// Golden angle in radians.
const GOLDEN_ANGLE: f64 = 2.399963229728653;

/// `n` directions spread over the unit sphere by the Fibonacci lattice.
pub fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = i as f64 * GOLDEN_ANGLE;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

/// Deterministic right-handed orthonormal basis (t1, t2) perpendicular to a
/// unit axis (branchless construction of Duff et al.).
pub fn orthonormal_basis(axis: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let [x, y, z] = axis;
    let sign = if z >= 0.0 { 1.0 } else { -1.0 };
    let a = -1.0 / (sign + z);
    let b = x * y * a;
    let t1 = [1.0 + sign * x * x * a, sign * b, -sign * x];
    let t2 = [b, sign + y * y * a, -y];
    (t1, t2)
}

/// `n` directions over the spherical cap of half-angle `half_angle` around a
/// unit `axis`, via a Fibonacci lattice on the cap.
pub fn fibonacci_cone(n: usize, axis: [f64; 3], half_angle: f64) -> Vec<[f64; 3]> {
    let (t1, t2) = orthonormal_basis(axis);
    let cos_min = half_angle.cos();
    (0..n)
        .map(|i| {
            let c = 1.0 - (1.0 - cos_min) * (i as f64 + 0.5) / n as f64;
            let s = (1.0 - c * c).max(0.0).sqrt();
            let phi = i as f64 * GOLDEN_ANGLE;
            let (u, v) = (s * phi.cos(), s * phi.sin());
            [
                axis[0] * c + t1[0] * u + t2[0] * v,
                axis[1] * c + t1[1] * u + t2[1] * v,
                axis[2] * c + t1[2] * u + t2[2] * v,
            ]
        })
        .collect()
}

/// The 12 vertex directions of a regular icosahedron (unit vectors), used as
/// gradient-orientation bins.
pub fn icosahedron_directions() -> [[f64; 3]; 12] {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let n = (1.0 + phi * phi).sqrt();
    let a = 1.0 / n;
    let b = phi / n;
    [
        [0.0, a, b],
        [0.0, a, -b],
        [0.0, -a, b],
        [0.0, -a, -b],
        [a, b, 0.0],
        [a, -b, 0.0],
        [-a, b, 0.0],
        [-a, -b, 0.0],
        [b, 0.0, a],
        [-b, 0.0, a],
        [b, 0.0, -a],
        [-b, 0.0, -a],
    ]
}

/// Angle in [0, pi/2] between two directions, ignoring sign (for axes with
/// orientation ambiguity). Zero vectors map to the pi/4 sentinel.
pub fn folded_angle(u: [f64; 3], v: [f64; 3]) -> f64 {
    let nu = super::eig::norm(u);
    let nv = super::eig::norm(v);
    if nu < 1e-12 || nv < 1e-12 {
        return PI / 4.0;
    }
    (super::eig::dot(u, v).abs() / (nu * nv)).clamp(0.0, 1.0).acos()
}
