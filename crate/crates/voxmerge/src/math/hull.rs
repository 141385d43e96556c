//! Exact 3D convex hulls of integer lattice points.
//!
//! Voxel-center hulls are full of degeneracies (collinear runs, coplanar
//! slabs), so everything here uses exact integer predicates: orientation
//! determinants in i128, no epsilons. Degenerate ranks (point, segment,
//! planar cloud) are represented explicitly so that membership stays exact.

use rand::seq::SliceRandom;

pub type P3 = [i64; 3];

fn sub(a: P3, b: P3) -> P3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: P3, b: P3) -> P3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot128(a: P3, b: P3) -> i128 {
    a[0] as i128 * b[0] as i128 + a[1] as i128 * b[1] as i128 + a[2] as i128 * b[2] as i128
}

/// Sign of det[b-a, c-a, d-a]: positive when `d` lies on the normal side of
/// the oriented plane (a, b, c).
fn orient(a: P3, b: P3, c: P3, d: P3) -> i128 {
    let n = cross(sub(b, a), sub(c, a));
    dot128(n, sub(d, a))
}

/// Supporting half-space `n . x <= b` with outward integer normal.
#[derive(Debug, Clone, Copy)]
pub struct Plane {
    pub n: P3,
    pub b: i128,
}

impl Plane {
    fn from_triangle(a: P3, bb: P3, c: P3) -> Plane {
        let n = cross(sub(bb, a), sub(c, a));
        Plane {
            n,
            b: dot128(n, a),
        }
    }
    pub fn violates(&self, p: P3) -> bool {
        dot128(self.n, p) > self.b
    }
    pub fn contains(&self, p: P3) -> bool {
        dot128(self.n, p) <= self.b
    }
}

/// Convex hull of a finite integer point set, stratified by affine rank.
#[derive(Debug, Clone)]
pub enum Hull3 {
    Empty,
    Point(P3),
    /// Points `a + t*d` for integer t in [0, t_max]; `d` is primitive.
    Segment { a: P3, d: P3, t_max: i64 },
    /// A planar polygon: `origin`, plane `normal`, and the CCW polygon in
    /// exact (u, v) plane coordinates.
    Planar {
        origin: P3,
        normal: P3,
        u: P3,
        v: P3,
        poly: Vec<[i128; 2]>,
    },
    Solid {
        faces: Vec<Plane>,
        bbox: (P3, P3),
    },
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn bbox_of(points: &[P3]) -> (P3, P3) {
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (lo, hi)
}

/// Andrew monotone chain on exact 2D integer coordinates; returns the CCW
/// hull polygon (no repeated endpoint).
fn hull2d(mut pts: Vec<[i128; 2]>) -> Vec<[i128; 2]> {
    pts.sort();
    pts.dedup();
    let n = pts.len();
    if n < 3 {
        return pts;
    }
    let cross2 = |o: [i128; 2], a: [i128; 2], b: [i128; 2]| -> i128 {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<[i128; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross2(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[i128; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross2(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

struct Face {
    v: [usize; 3],
    plane: Plane,
    alive: bool,
}

/// Incremental hull over full-rank points. `order[0..4]` must be affinely
/// independent. Returns faces, or None when validation fails (pathological
/// degeneracy; caller retries with another insertion order).
fn incremental(points: &[P3], order: &[usize]) -> Option<Vec<Plane>> {
    let (i0, i1, i2, i3) = (order[0], order[1], order[2], order[3]);
    let (p0, p1, p2, p3) = (points[i0], points[i1], points[i2], points[i3]);
    let s = orient(p0, p1, p2, p3);
    debug_assert!(s != 0);
    // Wind each tetra face so the opposite vertex is on the inside.
    let mk = |a: usize, b: usize, c: usize, interior: usize| -> Face {
        let (pa, pb, pc, pi) = (points[a], points[b], points[c], points[interior]);
        let v = if orient(pa, pb, pc, pi) < 0 {
            [a, b, c]
        } else {
            [a, c, b]
        };
        Face {
            v,
            plane: Plane::from_triangle(points[v[0]], points[v[1]], points[v[2]]),
            alive: true,
        }
    };
    let mut faces = vec![
        mk(i0, i1, i2, i3),
        mk(i0, i1, i3, i2),
        mk(i0, i2, i3, i1),
        mk(i1, i2, i3, i0),
    ];

    for &pi in &order[4..] {
        let p = points[pi];
        // Strictly visible faces; points on a face plane do not extend the
        // polytope and are skipped safely.
        let visible: Vec<usize> = faces
            .iter()
            .enumerate()
            .filter(|(_, f)| f.alive && f.plane.violates(p))
            .map(|(i, _)| i)
            .collect();
        if visible.is_empty() {
            continue;
        }
        // Horizon: directed edges of visible faces whose reverse edge is not
        // itself on a visible face. No adjacency structure is needed.
        let mut edge_set = std::collections::BTreeSet::new();
        for &fi in &visible {
            let v = faces[fi].v;
            for k in 0..3 {
                edge_set.insert((v[k], v[(k + 1) % 3]));
            }
        }
        let mut horizon = Vec::new();
        for &(a, b) in &edge_set {
            if !edge_set.contains(&(b, a)) {
                horizon.push((a, b));
            }
        }
        for &fi in &visible {
            faces[fi].alive = false;
        }
        for (a, b) in horizon {
            faces.push(Face {
                v: [a, b, pi],
                plane: Plane::from_triangle(points[a], points[b], p),
                alive: true,
            });
        }
    }

    let planes: Vec<Plane> = faces.iter().filter(|f| f.alive).map(|f| f.plane).collect();
    // Exact validation: every input point must satisfy every face.
    for p in points {
        for pl in &planes {
            if pl.violates(*p) {
                return None;
            }
        }
    }
    Some(planes)
}

impl Hull3 {
    pub fn build(points: &[P3]) -> Hull3 {
        let mut pts = points.to_vec();
        pts.sort();
        pts.dedup();
        if pts.is_empty() {
            return Hull3::Empty;
        }
        if pts.len() == 1 {
            return Hull3::Point(pts[0]);
        }
        let p0 = pts[0];
        let d = sub(pts[1], p0);

        // Rank 2 probe: first point off the line.
        let mut k2 = None;
        for (i, &p) in pts.iter().enumerate().skip(2) {
            if cross(d, sub(p, p0)) != [0, 0, 0] {
                k2 = Some(i);
                break;
            }
        }
        let Some(k2) = k2 else {
            // Collinear: lex order along the line equals parameter order.
            let g = gcd(gcd(d[0], d[1]), d[2]);
            let prim = [d[0] / g, d[1] / g, d[2] / g];
            let last = sub(*pts.last().unwrap(), p0);
            let t_max = (0..3)
                .find(|&a| prim[a] != 0)
                .map(|a| last[a] / prim[a])
                .unwrap();
            return Hull3::Segment {
                a: p0,
                d: prim,
                t_max,
            };
        };

        let normal = cross(d, sub(pts[k2], p0));
        // Rank 3 probe: first point off the plane.
        let mut k3 = None;
        for (i, &p) in pts.iter().enumerate() {
            if dot128(normal, sub(p, p0)) != 0 {
                k3 = Some(i);
                break;
            }
        }
        let Some(k3) = k3 else {
            let u = d;
            let v = cross(normal, u);
            let poly = hull2d(
                pts.iter()
                    .map(|&p| {
                        let r = sub(p, p0);
                        [dot128(u, r), dot128(v, r)]
                    })
                    .collect(),
            );
            return Hull3::Planar {
                origin: p0,
                normal,
                u,
                v,
                poly,
            };
        };

        let bbox = bbox_of(&pts);
        let mut first = vec![0usize, 1, k2, k3];
        let mut rest: Vec<usize> = (0..pts.len()).filter(|i| !first.contains(i)).collect();
        first.extend(rest.iter().copied());
        if let Some(faces) = incremental(&pts, &first) {
            return Hull3::Solid { faces, bbox };
        }
        // Pathological insertion order; retry with deterministic shuffles.
        for attempt in 1..=5u64 {
            let mut rng = crate::math::rng_for(attempt, "hull-retry");
            rest.shuffle(&mut rng);
            let mut order = vec![0usize, 1, k2, k3];
            order.extend(rest.iter().copied());
            if let Some(faces) = incremental(&pts, &order) {
                return Hull3::Solid { faces, bbox };
            }
        }
        panic!("convex hull construction failed validation after retries");
    }

    /// Exact membership with inclusive boundary.
    pub fn contains(&self, p: P3) -> bool {
        match self {
            Hull3::Empty => false,
            Hull3::Point(q) => *q == p,
            Hull3::Segment { a, d, t_max } => {
                let r = sub(p, *a);
                if cross(*d, r) != [0, 0, 0] {
                    return false;
                }
                let axis = (0..3).find(|&k| d[k] != 0).unwrap();
                if r[axis] % d[axis] != 0 {
                    return false;
                }
                let t = r[axis] / d[axis];
                t >= 0 && t <= *t_max
            }
            Hull3::Planar {
                origin,
                normal,
                u,
                v,
                poly,
            } => {
                let r = sub(p, *origin);
                if dot128(*normal, r) != 0 {
                    return false;
                }
                let q = [dot128(*u, r), dot128(*v, r)];
                point_in_convex_polygon(poly, q)
            }
            Hull3::Solid { faces, bbox } => {
                for a in 0..3 {
                    if p[a] < bbox.0[a] || p[a] > bbox.1[a] {
                        return false;
                    }
                }
                faces.iter().all(|f| f.contains(p))
            }
        }
    }

    /// For solid hulls, the inclusive feasible x-interval on the row (y, z),
    /// already clamped to the hull bounding box. `None` when the row misses
    /// the hull, for degenerate hulls, or when any face is edge-on in x with
    /// its row constraint violated.
    pub fn x_range(&self, y: i64, z: i64) -> Option<(i64, i64)> {
        let Hull3::Solid { faces, bbox } = self else {
            return None;
        };
        if y < bbox.0[1] || y > bbox.1[1] || z < bbox.0[2] || z > bbox.1[2] {
            return None;
        }
        let mut lo = bbox.0[0];
        let mut hi = bbox.1[0];
        for f in faces {
            let rhs = f.b - f.n[1] as i128 * y as i128 - f.n[2] as i128 * z as i128;
            let nx = f.n[0] as i128;
            if nx == 0 {
                if rhs < 0 {
                    return None;
                }
            } else if nx > 0 {
                hi = hi.min(rhs.div_euclid(nx) as i64);
            } else {
                // nx*x <= rhs with nx < 0  =>  x >= rhs/nx, rounded up:
                // ceil(rhs / nx) = -floor(rhs / -nx).
                lo = lo.max((-rhs.div_euclid(-nx)) as i64);
            }
            if lo > hi {
                return None;
            }
        }
        Some((lo, hi))
    }

    pub fn bbox(&self) -> Option<(P3, P3)> {
        match self {
            Hull3::Empty => None,
            Hull3::Point(p) => Some((*p, *p)),
            Hull3::Segment { a, d, t_max } => {
                let b = [
                    a[0] + d[0] * t_max,
                    a[1] + d[1] * t_max,
                    a[2] + d[2] * t_max,
                ];
                Some((
                    [a[0].min(b[0]), a[1].min(b[1]), a[2].min(b[2])],
                    [a[0].max(b[0]), a[1].max(b[1]), a[2].max(b[2])],
                ))
            }
            Hull3::Planar { .. } => None,
            Hull3::Solid { bbox, .. } => Some(*bbox),
        }
    }
}

/// Inclusive membership in a CCW convex polygon given in exact coordinates.
fn point_in_convex_polygon(poly: &[[i128; 2]], q: [i128; 2]) -> bool {
    match poly.len() {
        0 => false,
        1 => poly[0] == q,
        2 => {
            let (a, b) = (poly[0], poly[1]);
            let cr = (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0]);
            if cr != 0 {
                return false;
            }
            let t0 = (q[0] - a[0]) * (b[0] - a[0]) + (q[1] - a[1]) * (b[1] - a[1]);
            let len2 = (b[0] - a[0]) * (b[0] - a[0]) + (b[1] - a[1]) * (b[1] - a[1]);
            t0 >= 0 && t0 <= len2
        }
        _ => {
            for i in 0..poly.len() {
                let a = poly[i];
                let b = poly[(i + 1) % poly.len()];
                let cr = (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0]);
                if cr < 0 {
                    return false;
                }
            }
            true
        }
    }
}
