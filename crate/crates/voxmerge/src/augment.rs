//! Training-set augmentation: segment swap, the 16-element isometry group of
//! a square prism (z-axis distinguished), and decision-point jitter.

use crate::edges::{EdgeDataset, EdgeSample};
use crate::error::{Result, VoxError};
use crate::segmentation::Segmentation;
use crate::volume::{AffinityGraph, Coord, Mask3, Volume3D};

/// One distance-preserving transform: a 90-degree rotation count about z,
/// then optional x and z reflections. Exactly 16 distinct elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Isometry {
    pub rot: u8, // quarter-turns about z, 0..4
    pub flip_x: bool,
    pub flip_z: bool,
}

impl Isometry {
    pub const IDENTITY: Isometry = Isometry {
        rot: 0,
        flip_x: false,
        flip_z: false,
    };

    /// Linear action on vectors: flips applied first, then rotation.
    pub fn matrix(&self) -> [[i64; 3]; 3] {
        let fx: i64 = if self.flip_x { -1 } else { 1 };
        let fz: i64 = if self.flip_z { -1 } else { 1 };
        // Rotation by rot quarter turns: (x, y) -> (x cos - y sin, x sin + y cos).
        let (c, s) = match self.rot & 3 {
            0 => (1i64, 0i64),
            1 => (0, 1),
            2 => (-1, 0),
            _ => (0, -1),
        };
        [
            [c * fx, -s, 0],
            [s * fx, c, 0],
            [0, 0, fz],
        ]
    }

    /// Apply the linear map to an integer vector.
    pub fn apply_vec(&self, v: Coord) -> Coord {
        let m = self.matrix();
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    /// Apply to f64 vectors (for direction sets and vector fields).
    pub fn apply_vec_f64(&self, v: [f64; 3]) -> [f64; 3] {
        let m = self.matrix();
        [
            m[0][0] as f64 * v[0] + m[0][1] as f64 * v[1] + m[0][2] as f64 * v[2],
            m[1][0] as f64 * v[0] + m[1][1] as f64 * v[1] + m[1][2] as f64 * v[2],
            m[2][0] as f64 * v[0] + m[2][1] as f64 * v[1] + m[2][2] as f64 * v[2],
        ]
    }

    /// Coordinate action on a grid of the given dims. Rotation by an odd
    /// number of quarter turns requires nx == ny.
    pub fn map_coord(&self, c: Coord, dims: [usize; 3]) -> Coord {
        let [nx, ny, nz] = [dims[0] as i64, dims[1] as i64, dims[2] as i64];
        let mut p = c;
        if self.flip_x {
            p[0] = nx - 1 - p[0];
        }
        if self.flip_z {
            p[2] = nz - 1 - p[2];
        }
        for _ in 0..(self.rot & 3) {
            // (x, y) -> (n-1-y, x)
            p = [ny - 1 - p[1], p[0], p[2]];
        }
        p
    }

    /// Group composition: (self o other), i.e. apply `other` first.
    pub fn compose(&self, other: &Isometry) -> Isometry {
        let m = mat_mul(self.matrix(), other.matrix());
        *isometry_group()
            .iter()
            .find(|g| g.matrix() == m)
            .expect("composition stays in the group")
    }

    pub fn inverse(&self) -> Isometry {
        *isometry_group()
            .iter()
            .find(|g| self.compose(g) == Isometry::IDENTITY)
            .expect("every element has an inverse")
    }

    fn require_square_xy(&self, dims: [usize; 3]) -> Result<()> {
        if self.rot % 2 == 1 && dims[0] != dims[1] {
            return Err(VoxError::argument(format!(
                "odd rotation requires nx == ny, got {dims:?}"
            )));
        }
        Ok(())
    }

    pub fn apply_volume(&self, vol: &Volume3D) -> Result<Volume3D> {
        self.require_square_xy(vol.dims())?;
        let dims = vol.dims();
        let odims = self.out_dims(dims);
        let mut out = Volume3D::new(odims, 0.0);
        for z in 0..dims[2] as i64 {
            for y in 0..dims[1] as i64 {
                for x in 0..dims[0] as i64 {
                    let q = self.map_coord([x, y, z], dims);
                    out.set(q, vol.get([x, y, z]));
                }
            }
        }
        Ok(out)
    }

    pub fn apply_mask(&self, mask: &Mask3) -> Result<Mask3> {
        self.require_square_xy(mask.dims())?;
        let dims = mask.dims();
        let mut out = Mask3::new(self.out_dims(dims));
        for z in 0..dims[2] as i64 {
            for y in 0..dims[1] as i64 {
                for x in 0..dims[0] as i64 {
                    if mask.get([x, y, z]) {
                        out.set(self.map_coord([x, y, z], dims), true);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn apply_segmentation(&self, seg: &Segmentation) -> Result<Segmentation> {
        self.require_square_xy(seg.dims())?;
        let dims = seg.dims();
        let mut out = Segmentation::new(self.out_dims(dims));
        for z in 0..dims[2] as i64 {
            for y in 0..dims[1] as i64 {
                for x in 0..dims[0] as i64 {
                    out.set(self.map_coord([x, y, z], dims), seg.get([x, y, z]));
                }
            }
        }
        Ok(out)
    }

    /// Affinity channels transform covariantly: the edge (v, v + e_c) maps
    /// to the edge (g v, g v + g e_c). Negated axes re-base the edge on its
    /// new lower endpoint; the dangling boundary slot wraps torus-style so
    /// the map stays a bijection and g then g^-1 is bit-exact.
    pub fn apply_affinity(&self, aff: &AffinityGraph) -> Result<AffinityGraph> {
        self.require_square_xy(aff.dims())?;
        let dims = aff.dims();
        let odims = self.out_dims(dims);
        let mut out = AffinityGraph::new(odims, 0.0);
        let m = self.matrix();
        for axis in 0..3usize {
            // g e_axis = sign * e_target
            let e = [
                (axis == 0) as i64,
                (axis == 1) as i64,
                (axis == 2) as i64,
            ];
            let ge = [
                m[0][0] * e[0] + m[0][1] * e[1] + m[0][2] * e[2],
                m[1][0] * e[0] + m[1][1] * e[1] + m[1][2] * e[2],
                m[2][0] * e[0] + m[2][1] * e[1] + m[2][2] * e[2],
            ];
            let target = (0..3).find(|&a| ge[a] != 0).unwrap();
            let sign = ge[target];
            for z in 0..dims[2] as i64 {
                for y in 0..dims[1] as i64 {
                    for x in 0..dims[0] as i64 {
                        let v = aff.edge([x, y, z], axis);
                        let mut q = self.map_coord([x, y, z], dims);
                        if sign < 0 {
                            q[target] -= 1;
                            if q[target] < 0 {
                                q[target] = odims[target] as i64 - 1;
                            }
                        }
                        out.set_edge(q, target, v);
                    }
                }
            }
        }
        Ok(out)
    }

    fn out_dims(&self, dims: [usize; 3]) -> [usize; 3] {
        if self.rot % 2 == 1 {
            [dims[1], dims[0], dims[2]]
        } else {
            dims
        }
    }
}

/// All 16 group elements in canonical (rot, flip_x, flip_z) order.
pub fn isometry_group() -> Vec<Isometry> {
    let mut g = Vec::with_capacity(16);
    for rot in 0..4u8 {
        for flip_x in [false, true] {
            for flip_z in [false, true] {
                g.push(Isometry {
                    rot,
                    flip_x,
                    flip_z,
                });
            }
        }
    }
    g
}

fn mat_mul(a: [[i64; 3]; 3], b: [[i64; 3]; 3]) -> [[i64; 3]; 3] {
    let mut c = [[0i64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

/// The 27 jittered decision points (offsets in {-1,0,1}^3 including the
/// original), clamped into the volume, in deterministic offset order.
pub fn jitter_points(dp: Coord, dims: [usize; 3]) -> Vec<Coord> {
    let mut out = Vec::with_capacity(27);
    for dz in -1..=1i64 {
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                let p = [
                    (dp[0] + dx).clamp(0, dims[0] as i64 - 1),
                    (dp[1] + dy).clamp(0, dims[1] as i64 - 1),
                    (dp[2] + dz).clamp(0, dims[2] as i64 - 1),
                ];
                out.push(p);
            }
        }
    }
    out
}

/// Exchange segment identities; the label is preserved.
pub fn swap_edge(sample: &EdgeSample) -> EdgeSample {
    EdgeSample {
        seg_a: sample.seg_b,
        seg_b: sample.seg_a,
        ..sample.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AugmentKind {
    Swap,
    Isometry,
    Jitter,
}

impl AugmentKind {
    pub fn multiplicity(&self) -> u64 {
        match self {
            AugmentKind::Swap => 2,
            AugmentKind::Isometry => 16,
            AugmentKind::Jitter => 27,
        }
    }

    pub fn parse(s: &str) -> Result<AugmentKind> {
        match s {
            "swap" => Ok(AugmentKind::Swap),
            "isometry" => Ok(AugmentKind::Isometry),
            "jitter" => Ok(AugmentKind::Jitter),
            other => Err(VoxError::argument(format!("unknown augmentation {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AugmentKind::Swap => "swap",
            AugmentKind::Isometry => "isometry",
            AugmentKind::Jitter => "jitter",
        }
    }
}

/// One fully-specified augmented view of a base edge.
#[derive(Debug, Clone)]
pub struct AugmentedSample {
    pub base_index: usize,
    pub edge: EdgeSample,
    pub swapped: bool,
    pub isometry: Isometry,
    /// Jitter offset in {-1,0,1}^3 (pre-clamp).
    pub jitter: Coord,
}

/// Lazy cartesian-product view over a dataset's augmentations. Index layout
/// is base-major, then swap, then isometry, then jitter (jitter fastest).
pub struct AugmentedDataset<'a> {
    base: &'a EdgeDataset,
    kinds: Vec<AugmentKind>,
}

impl<'a> AugmentedDataset<'a> {
    pub fn new(base: &'a EdgeDataset, kinds: &[AugmentKind]) -> Result<Self> {
        let mut sorted = kinds.to_vec();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != kinds.len() {
            return Err(VoxError::argument("duplicate augmentation kinds"));
        }
        Ok(AugmentedDataset {
            base,
            kinds: sorted,
        })
    }

    pub fn multiplicity(&self) -> u64 {
        self.kinds.iter().map(|k| k.multiplicity()).product()
    }

    /// Total example count (lazy; nothing is materialized).
    pub fn len(&self) -> u64 {
        self.base.samples.len() as u64 * self.multiplicity()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, index: u64) -> AugmentedSample {
        let mult = self.multiplicity();
        assert!(index < self.base.samples.len() as u64 * mult);
        let base_index = (index / mult) as usize;
        let mut rem = index % mult;

        // Decompose in reverse declaration order so jitter varies fastest.
        let mut jitter_idx = 0u64;
        let mut iso_idx = 0u64;
        let mut swap_idx = 0u64;
        for kind in self.kinds.iter().rev() {
            let m = kind.multiplicity();
            let v = rem % m;
            rem /= m;
            match kind {
                AugmentKind::Swap => swap_idx = v,
                AugmentKind::Isometry => iso_idx = v,
                AugmentKind::Jitter => jitter_idx = v,
            }
        }
        let base = &self.base.samples[base_index];
        let edge = if swap_idx == 1 {
            swap_edge(base)
        } else {
            base.clone()
        };
        let jitter = [
            jitter_idx as i64 % 3 - 1,
            (jitter_idx as i64 / 3) % 3 - 1,
            jitter_idx as i64 / 9 - 1,
        ];
        AugmentedSample {
            base_index,
            edge,
            swapped: swap_idx == 1,
            isometry: isometry_group()[iso_idx as usize],
            jitter,
        }
    }

    /// Materialize as a plain dataset (intended for small sets only).
    pub fn materialize(&self) -> Vec<AugmentedSample> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edges::{EdgeLabel, Split};

    #[test]
    fn group_has_16_distinct_elements() {
        let g = isometry_group();
        assert_eq!(g.len(), 16);
        let mats: std::collections::BTreeSet<_> =
            g.iter().map(|e| format!("{:?}", e.matrix())).collect();
        assert_eq!(mats.len(), 16);
    }

    #[test]
    fn group_is_closed_with_identity_and_inverses() {
        let g = isometry_group();
        for a in &g {
            for b in &g {
                let c = a.compose(b); // panics if not in group
                // Associativity via the matrix action.
                let m1 = mat_mul(a.matrix(), b.matrix());
                assert_eq!(c.matrix(), m1);
            }
            let inv = a.inverse();
            assert_eq!(a.compose(&inv), Isometry::IDENTITY);
            assert_eq!(inv.compose(a), Isometry::IDENTITY);
        }
    }

    #[test]
    fn identity_maps_volumes_to_themselves() {
        let mut v = Volume3D::new([3, 3, 2], 0.0);
        for (i, x) in v.data_mut().iter_mut().enumerate() {
            *x = i as f32;
        }
        let out = Isometry::IDENTITY.apply_volume(&v).unwrap();
        assert_eq!(v, out);
    }

    #[test]
    fn quarter_rotation_has_order_four() {
        let rot = Isometry {
            rot: 1,
            flip_x: false,
            flip_z: false,
        };
        let mut v = Volume3D::new([4, 4, 3], 0.0);
        for (i, x) in v.data_mut().iter_mut().enumerate() {
            *x = (i * 31 % 97) as f32;
        }
        let mut w = v.clone();
        for _ in 0..4 {
            w = rot.apply_volume(&w).unwrap();
        }
        assert_eq!(v, w);
    }

    #[test]
    fn inverse_restores_volumes_bit_exactly() {
        use rand::Rng;
        let mut rng = crate::math::rng_for(41, "iso-inverse");
        let mut v = Volume3D::new([5, 5, 4], 0.0);
        for x in v.data_mut() {
            *x = rng.gen::<f32>();
        }
        for g in isometry_group() {
            let fwd = g.apply_volume(&v).unwrap();
            let back = g.inverse().apply_volume(&fwd).unwrap();
            assert_eq!(v, back, "failed for {g:?}");
        }
    }

    #[test]
    fn inverse_restores_affinity_bit_exactly() {
        use rand::Rng;
        let mut rng = crate::math::rng_for(42, "iso-aff-inverse");
        let dims = [4, 4, 3];
        let n = 48;
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f32> {
            (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()
        };
        let aff =
            AffinityGraph::from_channels(dims, [mk(&mut rng), mk(&mut rng), mk(&mut rng)]).unwrap();
        for g in isometry_group() {
            let fwd = g.apply_affinity(&aff).unwrap();
            let back = g.inverse().apply_affinity(&fwd).unwrap();
            assert_eq!(aff, back, "failed for {g:?}");
        }
    }

    #[test]
    fn affinity_interior_edges_transform_covariantly() {
        use rand::Rng;
        let mut rng = crate::math::rng_for(43, "iso-aff-oracle");
        let dims = [4, 4, 4];
        let n = 64;
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f32> {
            (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()
        };
        let aff =
            AffinityGraph::from_channels(dims, [mk(&mut rng), mk(&mut rng), mk(&mut rng)]).unwrap();
        for g in isometry_group() {
            let out = g.apply_affinity(&aff).unwrap();
            // Oracle: for each interior edge (v, v+e_c), the transformed edge
            // value must appear between (g v, g(v+e_c)).
            for z in 0..4i64 {
                for y in 0..4i64 {
                    for x in 0..4i64 {
                        for axis in 0..3usize {
                            let mut w = [x, y, z];
                            w[axis] += 1;
                            if !in_bounds(w, dims) {
                                continue;
                            }
                            let gv = g.map_coord([x, y, z], dims);
                            let gw = g.map_coord(w, dims);
                            // The +axis' edge between gv and gw in the output.
                            let (base, taxis) = {
                                let d = [gw[0] - gv[0], gw[1] - gv[1], gw[2] - gv[2]];
                                let ax = (0..3).find(|&a| d[a] != 0).unwrap();
                                if d[ax] > 0 {
                                    (gv, ax)
                                } else {
                                    (gw, ax)
                                }
                            };
                            assert_eq!(
                                out.edge(base, taxis),
                                aff.edge([x, y, z], axis),
                                "edge ({x},{y},{z}) axis {axis} under {g:?}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn jitter_has_27_points_including_origin() {
        let dp = [5, 5, 5];
        let pts = jitter_points(dp, [11, 11, 11]);
        assert_eq!(pts.len(), 27);
        assert!(pts.contains(&dp));
        let set: std::collections::BTreeSet<_> = pts.iter().collect();
        assert_eq!(set.len(), 27, "distinct when unclamped");
    }

    #[test]
    fn jitter_clamps_at_edges() {
        let pts = jitter_points([0, 0, 0], [4, 4, 4]);
        assert_eq!(pts.len(), 27);
        assert!(pts.iter().all(|p| p.iter().all(|&c| c >= 0)));
    }

    #[test]
    fn swap_is_an_involution() {
        let s = EdgeSample {
            id: 3,
            seg_a: 4,
            seg_b: 9,
            decision_point: [1, 2, 3],
            label: EdgeLabel::Negative,
            window_radius: 15,
        };
        let once = swap_edge(&s);
        assert_eq!(once.seg_a, 9);
        assert_eq!(once.seg_b, 4);
        assert_eq!(once.label, s.label);
        assert_eq!(swap_edge(&once), s);
    }

    fn tiny_dataset(n: usize) -> EdgeDataset {
        EdgeDataset::new(
            (0..n)
                .map(|i| EdgeSample {
                    id: i as u64,
                    seg_a: 1,
                    seg_b: 2,
                    decision_point: [4, 4, 4],
                    label: EdgeLabel::Positive,
                    window_radius: 15,
                })
                .collect(),
            Split::Train,
        )
        .unwrap()
    }

    #[test]
    fn augmentation_multiplicities() {
        let ds = tiny_dataset(5);
        let all = AugmentedDataset::new(
            &ds,
            &[AugmentKind::Swap, AugmentKind::Isometry, AugmentKind::Jitter],
        )
        .unwrap();
        assert_eq!(all.multiplicity(), 864);
        assert_eq!(all.len(), 5 * 864);
        let none = AugmentedDataset::new(&ds, &[]).unwrap();
        assert_eq!(none.len(), 5);
        let iso = AugmentedDataset::new(&ds, &[AugmentKind::Isometry]).unwrap();
        assert_eq!(iso.len(), 80);
    }

    #[test]
    fn augmented_views_enumerate_the_product() {
        let ds = tiny_dataset(2);
        let aug = AugmentedDataset::new(
            &ds,
            &[AugmentKind::Swap, AugmentKind::Isometry, AugmentKind::Jitter],
        )
        .unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..aug.len() {
            let s = aug.get(i);
            seen.insert((
                s.base_index,
                s.swapped,
                s.isometry.rot,
                s.isometry.flip_x,
                s.isometry.flip_z,
                s.jitter,
            ));
        }
        assert_eq!(seen.len(), 2 * 864);
        // identity view exists
        let first = aug.get(0);
        assert!(!first.swapped);
        assert_eq!(first.isometry, Isometry::IDENTITY);
        assert_eq!(first.jitter, [-1, -1, -1]);
    }
}
