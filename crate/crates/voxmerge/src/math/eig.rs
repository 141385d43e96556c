//! Closed-form eigendecomposition of symmetric 3x3 matrices.

/// Symmetric 3x3 matrix in row-major order.
pub type Sym3 = [[f64; 3]; 3];

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: [f64; 3]) -> Option<[f64; 3]> {
    let n = norm(a);
    if n < 1e-12 {
        None
    } else {
        Some([a[0] / n, a[1] / n, a[2] / n])
    }
}

/// Eigenvalues of a symmetric 3x3 matrix, descending.
///
/// Uses the trigonometric solution of the characteristic polynomial.
pub fn eigenvalues(m: &Sym3) -> [f64; 3] {
    let p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
    if p1 < 1e-30 {
        let mut d = [m[0][0], m[1][1], m[2][2]];
        d.sort_by(|a, b| b.total_cmp(a));
        return d;
    }
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = (m[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let detb = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
        - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (detb / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    [e1, e2, e3]
}

/// Eigenvector for a given eigenvalue, via cross products of the rows of
/// `M - lambda I`. Returns `None` when the matrix is (near-)degenerate at
/// that eigenvalue.
pub fn eigenvector(m: &Sym3, lambda: f64) -> Option<[f64; 3]> {
    let a = [m[0][0] - lambda, m[0][1], m[0][2]];
    let b = [m[1][0], m[1][1] - lambda, m[1][2]];
    let c = [m[2][0], m[2][1], m[2][2] - lambda];
    let c0 = cross(a, b);
    let c1 = cross(a, c);
    let c2 = cross(b, c);
    let (mut best, mut best_n) = (c0, norm(c0));
    if norm(c1) > best_n {
        best_n = norm(c1);
        best = c1;
    }
    if norm(c2) > best_n {
        best_n = norm(c2);
        best = c2;
    }
    // Scale-aware degeneracy test: cross products of near-parallel rows
    // shrink relative to the matrix magnitude.
    let scale: f64 = (0..3)
        .map(|i| (0..3).map(|j| m[i][j].abs()).fold(0.0, f64::max))
        .fold(1e-12, f64::max);
    if best_n < 1e-9 * scale * scale {
        return None;
    }
    Some([best[0] / best_n, best[1] / best_n, best[2] / best_n])
}

/// Principal eigenvector (largest eigenvalue), or `None` when degenerate.
pub fn principal_axis(m: &Sym3) -> Option<[f64; 3]> {
    let ev = eigenvalues(m);
    // A repeated top eigenvalue has no unique axis.
    if (ev[0] - ev[1]).abs() < 1e-9 * ev[0].abs().max(1e-12) {
        return None;
    }
    eigenvector(m, ev[0])
}
