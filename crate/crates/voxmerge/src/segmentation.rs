//! Oversegmentation: connected components over thresholded affinities,
//! seeded watershed growth, the threshold ladder, and distance-transform
//! object breaking.

use crate::error::{Result, VoxError};
use crate::math::edt;
use crate::volume::{
    coord_index, in_bounds, index_coord, AffinityGraph, Coord, NEIGHBORS6,
};
use std::collections::BinaryHeap;
use std::path::Path;

/// Label field over a voxel grid; 0 means unassigned/outside.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    dims: [usize; 3],
    labels: Vec<u32>,
}

impl Segmentation {
    pub fn new(dims: [usize; 3]) -> Self {
        Segmentation {
            dims,
            labels: vec![0; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_labels(dims: [usize; 3], labels: Vec<u32>) -> Result<Self> {
        if labels.len() != dims[0] * dims[1] * dims[2] {
            return Err(VoxError::argument("label array does not match dims"));
        }
        Ok(Segmentation { dims, labels })
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
    #[inline]
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }
    #[inline]
    pub fn labels_mut(&mut self) -> &mut [u32] {
        &mut self.labels
    }
    #[inline]
    pub fn get(&self, c: Coord) -> u32 {
        self.labels[coord_index(c, self.dims)]
    }
    #[inline]
    pub fn get_or_zero(&self, c: Coord) -> u32 {
        if in_bounds(c, self.dims) {
            self.get(c)
        } else {
            0
        }
    }
    #[inline]
    pub fn set(&mut self, c: Coord, l: u32) {
        let i = coord_index(c, self.dims);
        self.labels[i] = l;
    }

    /// Highest label id present.
    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Voxel count per label, indexed by label id (index 0 = unassigned).
    pub fn label_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.max_label() as usize + 1];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Relabel to the contiguous set {0..L}, ordered by first appearance in
    /// voxel index order.
    pub fn compact(&mut self) {
        let mut remap = vec![0u32; self.max_label() as usize + 1];
        let mut next = 1u32;
        for &l in &self.labels {
            if l != 0 && remap[l as usize] == 0 {
                remap[l as usize] = next;
                next += 1;
            }
        }
        for l in &mut self.labels {
            *l = remap[*l as usize];
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::volume::write_vol1_u32(path, self.dims, &self.labels)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (header, payload) = crate::volume::read_vol1(path, "u32")?;
        if header.channels != 1 {
            return Err(VoxError::format("segmentation must have 1 channel"));
        }
        let dims = [
            header.dims[0] as usize,
            header.dims[1] as usize,
            header.dims[2] as usize,
        ];
        Segmentation::from_labels(dims, payload.into_u32())
    }
}

/// Iterate the supra-threshold 6-neighbors of a voxel: edges with affinity
/// strictly above `t`.
#[inline]
fn for_each_edge_above(
    aff: &AffinityGraph,
    c: Coord,
    t: f32,
    mut f: impl FnMut(Coord, f32),
) {
    let dims = aff.dims();
    for axis in 0..3 {
        // forward edge c -> c+e
        let mut fw = c;
        fw[axis] += 1;
        if in_bounds(fw, dims) {
            let a = aff.edge(c, axis);
            if a > t {
                f(fw, a);
            }
        }
        // backward edge (c-e) -> c
        let mut bw = c;
        bw[axis] -= 1;
        if in_bounds(bw, dims) {
            let a = aff.edge(bw, axis);
            if a > t {
                f(bw, a);
            }
        }
    }
}

/// Connected components of the graph restricted to edges with affinity > t.
///
/// Voxels without any supra-threshold edge stay unassigned (label 0). Labels
/// are assigned in order of each component's minimum voxel index.
pub fn components_above(aff: &AffinityGraph, t: f32) -> Result<Segmentation> {
    if !(0.0..=1.0).contains(&t) {
        return Err(VoxError::argument(format!("threshold {t} outside [0,1]")));
    }
    let mut seg = Segmentation::new(aff.dims());
    components_into(aff, t, &mut seg, 0);
    Ok(seg)
}

/// Flood unassigned voxels with new components over edges > t, labeling from
/// `next_label_base + 1` onward. Existing nonzero labels are obstacles only
/// in the sense that their voxels are skipped (they already have labels).
fn components_into(aff: &AffinityGraph, t: f32, seg: &mut Segmentation, next_label_base: u32) {
    let dims = aff.dims();
    let n = seg.labels.len();
    let mut next = next_label_base;
    let mut stack: Vec<Coord> = Vec::new();
    for i in 0..n {
        if seg.labels[i] != 0 {
            continue;
        }
        let c = index_coord(i, dims);
        // Seed only when it has at least one usable edge to an unassigned voxel.
        let mut has_edge = false;
        for_each_edge_above(aff, c, t, |q, _| {
            if seg.get(q) == 0 {
                has_edge = true;
            }
        });
        if !has_edge {
            continue;
        }
        next += 1;
        seg.labels[i] = next;
        stack.push(c);
        while let Some(p) = stack.pop() {
            for_each_edge_above(aff, p, t, |q, _| {
                let qi = coord_index(q, dims);
                if seg.labels[qi] == 0 {
                    seg.labels[qi] = next;
                    stack.push(q);
                }
            });
        }
    }
}

#[derive(PartialEq)]
struct Claim {
    aff: f32,
    label: u32,
    target: u32,
}

impl Eq for Claim {}

impl Ord for Claim {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Max-heap: highest affinity first, then smaller label, then smaller
        // voxel index, for fully deterministic flooding.
        self.aff
            .total_cmp(&other.aff)
            .then_with(|| other.label.cmp(&self.label))
            .then_with(|| other.target.cmp(&self.target))
    }
}

impl PartialOrd for Claim {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Result of a traced watershed growth: final labels plus, per voxel, the
/// running-minimum claim affinity ("watermark") at the time it was claimed.
/// Seed voxels carry watermark 2.0. The grown segmentation at any threshold
/// `t >= floor` is exactly `{v : watermark[v] > t}`.
pub struct GrowTrace {
    pub seg: Segmentation,
    pub watermark: Vec<f32>,
}

/// Expand existing labels along edges in decreasing affinity order down to
/// threshold `t`. Unassigned voxels adopt the label of the highest-affinity
/// adjacent claim; assigned voxels never change.
pub fn grow_watershed(seg: &Segmentation, aff: &AffinityGraph, t: f32) -> Result<Segmentation> {
    Ok(grow_watershed_trace(seg, aff, t)?.seg)
}

/// As `grow_watershed`, but records claim watermarks so callers can recover
/// the grown set at any threshold above `floor` from one pass.
pub fn grow_watershed_trace(
    seg: &Segmentation,
    aff: &AffinityGraph,
    floor: f32,
) -> Result<GrowTrace> {
    if seg.dims() != aff.dims() {
        return Err(VoxError::argument(format!(
            "segmentation dims {:?} do not match affinity dims {:?}",
            seg.dims(),
            aff.dims()
        )));
    }
    let dims = seg.dims();
    let mut out = seg.clone();
    let mut watermark = vec![0f32; out.labels.len()];
    let mut heap: BinaryHeap<Claim> = BinaryHeap::new();

    for i in 0..out.labels.len() {
        let l = out.labels[i];
        if l == 0 {
            continue;
        }
        watermark[i] = 2.0;
        let c = index_coord(i, dims);
        for_each_edge_above(aff, c, floor, |q, a| {
            let qi = coord_index(q, dims);
            if out.labels[qi] == 0 {
                heap.push(Claim {
                    aff: a,
                    label: l,
                    target: qi as u32,
                });
            }
        });
    }

    let mut running_min = 2.0f32;
    while let Some(claim) = heap.pop() {
        let qi = claim.target as usize;
        if out.labels[qi] != 0 {
            continue;
        }
        running_min = running_min.min(claim.aff);
        out.labels[qi] = claim.label;
        watermark[qi] = running_min;
        let c = index_coord(qi, dims);
        for_each_edge_above(aff, c, floor, |q, a| {
            let ni = coord_index(q, dims);
            if out.labels[ni] == 0 {
                heap.push(Claim {
                    aff: a,
                    label: claim.label,
                    target: ni as u32,
                });
            }
        });
    }

    Ok(GrowTrace {
        seg: out,
        watermark,
    })
}

/// The threshold-ladder oversegmentation: components at the first threshold,
/// then alternately grow to the next threshold and add new components there,
/// finishing with a final growth pass.
pub fn overseg_ladder(
    aff: &AffinityGraph,
    add_thresholds: &[f32],
    final_grow: f32,
) -> Result<Segmentation> {
    if add_thresholds.is_empty() {
        return Err(VoxError::argument("ladder needs at least one threshold"));
    }
    for w in add_thresholds.windows(2) {
        if w[1] >= w[0] {
            return Err(VoxError::argument(format!(
                "ladder thresholds must be strictly decreasing, got {add_thresholds:?}"
            )));
        }
    }
    for &t in add_thresholds {
        if !(0.0..=1.0).contains(&t) {
            return Err(VoxError::argument(format!("threshold {t} outside [0,1]")));
        }
    }
    if final_grow >= *add_thresholds.last().unwrap() {
        return Err(VoxError::argument(
            "final grow threshold must be below the last ladder threshold",
        ));
    }

    let mut seg = components_above(aff, add_thresholds[0])?;
    for &t in &add_thresholds[1..] {
        seg = grow_watershed(&seg, aff, t)?;
        let base = seg.max_label();
        components_into(aff, t, &mut seg, base);
    }
    seg = grow_watershed(&seg, aff, final_grow)?;
    seg.compact();
    Ok(seg)
}

/// Split large objects whose interior distance transform has two or more
/// well-separated regional maxima (saddle below `saddle_ratio` of the larger
/// peak), by watershed on the negated distance transform seeded at the
/// maxima. Smaller objects pass through unchanged.
pub fn break_by_distance_transform(
    seg: &Segmentation,
    min_volume: u64,
    saddle_ratio: f64,
) -> Segmentation {
    let counts = seg.label_counts();
    let mut out = seg.clone();
    let mut next_label = seg.max_label();

    for (label, &count) in counts.iter().enumerate().skip(1) {
        if count < min_volume {
            continue;
        }
        let label = label as u32;
        if let Some(parts) = split_object(seg, label, saddle_ratio) {
            // parts maps the object's voxel indices to part ids 1..k; part 1
            // keeps the original label, others get fresh labels.
            let mut part_labels = vec![0u32; parts.num_parts + 1];
            part_labels[1] = label;
            for p in 2..=parts.num_parts {
                next_label += 1;
                part_labels[p] = next_label;
            }
            for (&vi, &part) in parts.voxels.iter().zip(parts.part_of.iter()) {
                out.labels[vi] = part_labels[part];
            }
        }
    }
    out.compact();
    out
}

struct ObjectSplit {
    voxels: Vec<usize>,
    part_of: Vec<usize>,
    num_parts: usize,
}

/// Attempt to split one object. Returns None when the object has a single
/// effective peak.
fn split_object(seg: &Segmentation, label: u32, saddle_ratio: f64) -> Option<ObjectSplit> {
    let dims = seg.dims();
    // Bounding box of the object, padded by one background voxel.
    let mut lo = [i64::MAX; 3];
    let mut hi = [i64::MIN; 3];
    for (i, &l) in seg.labels().iter().enumerate() {
        if l == label {
            let c = index_coord(i, dims);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
    }
    let bdims = [
        (hi[0] - lo[0] + 3) as usize,
        (hi[1] - lo[1] + 3) as usize,
        (hi[2] - lo[2] + 3) as usize,
    ];
    let to_local = |c: Coord| -> Coord { [c[0] - lo[0] + 1, c[1] - lo[1] + 1, c[2] - lo[2] + 1] };
    let n = bdims[0] * bdims[1] * bdims[2];

    // Interior distance: distance to the nearest non-object voxel.
    let mut background = vec![true; n];
    let mut object_local: Vec<usize> = Vec::new();
    let mut object_global: Vec<usize> = Vec::new();
    for (i, &l) in seg.labels().iter().enumerate() {
        if l == label {
            let li = coord_index(to_local(index_coord(i, dims)), bdims);
            background[li] = false;
            object_local.push(li);
            object_global.push(i);
        }
    }
    let dist = edt::edt(bdims, &background);

    // Regional maxima with plateau handling: union plateaus of equal value,
    // then a plateau is a maximum iff no 26-neighbor exceeds it.
    let mut parent: Vec<usize> = (0..n).map(|i| i).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let n26 = crate::volume::neighbors26();
    let inside = |c: Coord| -> bool { in_bounds(c, bdims) };
    for &li in &object_local {
        let c = index_coord(li, bdims);
        for o in &n26 {
            let q = [c[0] + o[0], c[1] + o[1], c[2] + o[2]];
            if inside(q) {
                let qi = coord_index(q, bdims);
                if !background[qi] && dist[qi] == dist[li] {
                    let (a, b) = (find(&mut parent, li), find(&mut parent, qi));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
    }
    let mut is_max_root: std::collections::BTreeMap<usize, bool> = Default::default();
    for &li in &object_local {
        let r = find(&mut parent, li);
        is_max_root.entry(r).or_insert(true);
        let c = index_coord(li, bdims);
        for o in &n26 {
            let q = [c[0] + o[0], c[1] + o[1], c[2] + o[2]];
            if inside(q) {
                let qi = coord_index(q, bdims);
                if !background[qi] && dist[qi] > dist[li] {
                    is_max_root.insert(r, false);
                    break;
                }
            }
        }
    }
    let maxima_roots: Vec<usize> = is_max_root
        .iter()
        .filter(|(_, &v)| v)
        .map(|(&k, _)| k)
        .collect();
    if maxima_roots.len() < 2 {
        return None;
    }

    // Watershed on the negated distance transform seeded at the maxima.
    // Ties are FIFO so that fronts crossing a constant-distance plateau
    // advance in lockstep and meet near its middle.
    #[derive(PartialEq)]
    struct DistClaim {
        dist: f64,
        seq: u64,
        label: u32,
        target: u32,
    }
    impl Eq for DistClaim {}
    impl Ord for DistClaim {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.dist
                .total_cmp(&other.dist)
                .then_with(|| other.seq.cmp(&self.seq))
                .then_with(|| other.label.cmp(&self.label))
                .then_with(|| other.target.cmp(&self.target))
        }
    }
    impl PartialOrd for DistClaim {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }

    let mut basin = vec![0u32; n];
    let mut root_to_basin: std::collections::BTreeMap<usize, u32> = Default::default();
    let mut peak: Vec<f64> = vec![0.0];
    let mut seq = 0u64;
    let mut heap: BinaryHeap<DistClaim> = BinaryHeap::new();
    for &li in &object_local {
        let r = find(&mut parent, li);
        if let Some(pos) = maxima_roots.iter().position(|&m| m == r) {
            let b = pos as u32 + 1;
            root_to_basin.insert(r, b);
            if peak.len() <= b as usize {
                peak.resize(b as usize + 1, 0.0);
            }
            peak[b as usize] = peak[b as usize].max(dist[li]);
            basin[li] = b;
        }
    }
    // Saddle height per adjacent basin pair.
    let mut saddle: std::collections::BTreeMap<(u32, u32), f64> = Default::default();
    for &li in &object_local {
        if basin[li] != 0 {
            let c = index_coord(li, bdims);
            for &o in NEIGHBORS6.iter() {
                let q = [c[0] + o[0], c[1] + o[1], c[2] + o[2]];
                if inside(q) {
                    let qi = coord_index(q, bdims);
                    if !background[qi] && basin[qi] == 0 {
                        seq += 1;
                        heap.push(DistClaim {
                            dist: dist[qi],
                            seq,
                            label: basin[li],
                            target: qi as u32,
                        });
                    }
                }
            }
        }
    }
    while let Some(claim) = heap.pop() {
        let qi = claim.target as usize;
        if basin[qi] != 0 {
            continue;
        }
        basin[qi] = claim.label;
        let c = index_coord(qi, bdims);
        for &o in NEIGHBORS6.iter() {
            let q = [c[0] + o[0], c[1] + o[1], c[2] + o[2]];
            if inside(q) {
                let ni = coord_index(q, bdims);
                if !background[ni] {
                    if basin[ni] == 0 {
                        seq += 1;
                        heap.push(DistClaim {
                            dist: dist[ni],
                            seq,
                            label: claim.label,
                            target: ni as u32,
                        });
                    } else if basin[ni] != claim.label {
                        // Basins meet here; track the highest meeting point.
                        let key = (
                            claim.label.min(basin[ni]),
                            claim.label.max(basin[ni]),
                        );
                        let h = dist[qi].min(dist[ni]);
                        let e = saddle.entry(key).or_insert(0.0);
                        if h > *e {
                            *e = h;
                        }
                    }
                }
            }
        }
    }

    // Merge basin pairs that are insufficiently separated: saddle at or above
    // saddle_ratio of the larger peak.
    let nb = peak.len() - 1;
    let mut bparent: Vec<u32> = (0..=nb as u32).collect();
    fn bfind(p: &mut Vec<u32>, mut i: u32) -> u32 {
        while p[i as usize] != i {
            p[i as usize] = p[p[i as usize] as usize];
            i = p[i as usize];
        }
        i
    }
    for (&(a, b), &s) in &saddle {
        let pa = peak[a as usize].max(peak[b as usize]);
        if s >= saddle_ratio * pa {
            let (ra, rb) = (bfind(&mut bparent, a), bfind(&mut bparent, b));
            if ra != rb {
                bparent[ra.max(rb) as usize] = ra.min(rb);
            }
        }
    }
    let mut basin_to_part: std::collections::BTreeMap<u32, usize> = Default::default();
    let mut num_parts = 0usize;
    for b in 1..=nb as u32 {
        let r = bfind(&mut bparent, b);
        let next = basin_to_part.len() + 1;
        basin_to_part.entry(r).or_insert_with(|| {
            num_parts = next;
            next
        });
    }
    if basin_to_part.len() < 2 {
        return None;
    }
    let part_of: Vec<usize> = object_local
        .iter()
        .map(|&li| basin_to_part[&bfind(&mut bparent, basin[li])])
        .collect();
    Some(ObjectSplit {
        voxels: object_global,
        part_of,
        num_parts: basin_to_part.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::AffinityGraph;

    fn uniform_aff(dims: [usize; 3], v: f32) -> AffinityGraph {
        AffinityGraph::new(dims, v)
    }

    #[test]
    fn all_high_affinity_is_one_component() {
        let aff = uniform_aff([4, 4, 4], 1.0);
        let seg = components_above(&aff, 0.9).unwrap();
        assert_eq!(seg.max_label(), 1);
        assert!(seg.labels().iter().all(|&l| l == 1));
    }

    #[test]
    fn all_zero_affinity_leaves_everything_unassigned() {
        let aff = uniform_aff([4, 4, 4], 0.0);
        let seg = components_above(&aff, 0.5).unwrap();
        assert!(seg.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn components_match_union_find_oracle() {
        use rand::Rng;
        let mut rng = crate::math::rng_for(21, "components-oracle");
        for _ in 0..30 {
            let dims = [4, 4, 4];
            let n = 64;
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f32> {
                (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()
            };
            let aff =
                AffinityGraph::from_channels(dims, [mk(&mut rng), mk(&mut rng), mk(&mut rng)])
                    .unwrap();
            let t = rng.gen_range(0.2..0.8);
            let seg = components_above(&aff, t).unwrap();

            // Union-find oracle over all edges.
            let mut parent: Vec<usize> = (0..n).collect();
            fn find(p: &mut Vec<usize>, mut i: usize) -> usize {
                while p[i] != i {
                    p[i] = p[p[i]];
                    i = p[i];
                }
                i
            }
            let mut touched = vec![false; n];
            for i in 0..n {
                let c = index_coord(i, dims);
                for axis in 0..3 {
                    let mut q = c;
                    q[axis] += 1;
                    if in_bounds(q, dims) && aff.edge(c, axis) > t {
                        touched[i] = true;
                        touched[coord_index(q, dims)] = true;
                        let (a, b) = (find(&mut parent, i), find(&mut parent, coord_index(q, dims)));
                        if a != b {
                            parent[a.max(b)] = a.min(b);
                        }
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let same_oracle = touched[i]
                        && touched[j]
                        && find(&mut parent, i) == find(&mut parent, j);
                    let same_seg =
                        seg.labels()[i] != 0 && seg.labels()[i] == seg.labels()[j] && i != j;
                    if i != j {
                        assert_eq!(same_oracle, same_seg, "voxels {i},{j}");
                    }
                }
                assert_eq!(touched[i], seg.labels()[i] != 0);
            }
        }
    }

    #[test]
    fn grow_identity_at_threshold_one() {
        let mut seg = Segmentation::new([3, 3, 3]);
        seg.set([0, 0, 0], 1);
        let aff = uniform_aff([3, 3, 3], 1.0);
        let out = grow_watershed(&seg, &aff, 1.0).unwrap();
        assert_eq!(out, seg);
    }

    #[test]
    fn single_seed_floods_volume() {
        let mut seg = Segmentation::new([3, 3, 3]);
        seg.set([1, 1, 1], 5);
        let aff = uniform_aff([3, 3, 3], 0.9);
        let out = grow_watershed(&seg, &aff, 0.5).unwrap();
        assert!(out.labels().iter().all(|&l| l == 5));
    }

    #[test]
    fn growth_stops_at_low_affinity_plane() {
        // Two seeds on either side of a low-affinity x-plane.
        let dims = [5, 5, 5];
        let mut aff = uniform_aff(dims, 0.9);
        for z in 0..5 {
            for y in 0..5 {
                aff.set_edge([2, y, z], 0, 0.1); // edges crossing x=2 -> x=3
            }
        }
        let mut seg = Segmentation::new(dims);
        seg.set([0, 2, 2], 1);
        seg.set([4, 2, 2], 2);
        let out = grow_watershed(&seg, &aff, 0.5).unwrap();
        for z in 0..5i64 {
            for y in 0..5i64 {
                for x in 0..5i64 {
                    let want = if x <= 2 { 1 } else { 2 };
                    assert_eq!(out.get([x, y, z]), want, "at {x},{y},{z}");
                }
            }
        }
    }

    #[test]
    fn grow_never_relabels_assigned_voxels() {
        use rand::Rng;
        let mut rng = crate::math::rng_for(22, "grow-keeps");
        let dims = [5, 5, 5];
        let n = 125;
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f32> {
            (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()
        };
        let aff =
            AffinityGraph::from_channels(dims, [mk(&mut rng), mk(&mut rng), mk(&mut rng)]).unwrap();
        let mut seg = Segmentation::new(dims);
        for _ in 0..6 {
            let i = rng.gen_range(0..n);
            seg.labels_mut()[i] = rng.gen_range(1..4);
        }
        let before = seg.clone();
        let out = grow_watershed(&seg, &aff, 0.3).unwrap();
        for i in 0..n {
            if before.labels()[i] != 0 {
                assert_eq!(out.labels()[i], before.labels()[i]);
            }
        }
    }

    #[test]
    fn ladder_uniform_high_affinity_is_single_object() {
        let aff = uniform_aff([4, 4, 4], 0.95);
        let seg = overseg_ladder(&aff, &[0.9, 0.8, 0.7, 0.6, 0.5], 0.2).unwrap();
        assert_eq!(seg.max_label(), 1);
        assert!(seg.labels().iter().all(|&l| l == 1));
    }

    #[test]
    fn ladder_on_empty_affinity_is_empty() {
        let aff = uniform_aff([4, 4, 4], 0.0);
        let seg = overseg_ladder(&aff, &[0.9, 0.8, 0.7, 0.6, 0.5], 0.2).unwrap();
        assert!(seg.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn ladder_rejects_non_monotone_thresholds() {
        let aff = uniform_aff([2, 2, 2], 0.5);
        assert!(overseg_ladder(&aff, &[0.9, 0.9], 0.2).is_err());
        assert!(overseg_ladder(&aff, &[0.5, 0.8], 0.2).is_err());
    }

    #[test]
    fn ladder_matches_scripted_steps() {
        // Two high-affinity tubes along x, plus a weaker bridge that only the
        // second rung picks up as a separate object.
        let dims = [7, 5, 1];
        let mut aff = uniform_aff(dims, 0.0);
        for x in 0..6 {
            aff.set_edge([x, 0, 0], 0, 0.95);
            aff.set_edge([x, 4, 0], 0, 0.95);
            aff.set_edge([x, 2, 0], 0, 0.85);
        }
        let ladder = [0.9f32, 0.8, 0.7, 0.6, 0.5];
        let got = overseg_ladder(&aff, &ladder, 0.2).unwrap();

        // Scripted oracle: explicit components/grow alternation.
        let mut seg = components_above(&aff, ladder[0]).unwrap();
        for &t in &ladder[1..] {
            seg = grow_watershed(&seg, &aff, t).unwrap();
            let base = seg.max_label();
            super::components_into(&aff, t, &mut seg, base);
        }
        seg = grow_watershed(&seg, &aff, 0.2).unwrap();
        seg.compact();
        assert_eq!(got, seg);
        assert_eq!(got.max_label(), 3);
    }

    #[test]
    fn monotone_components_nest() {
        use rand::Rng;
        let mut rng = crate::math::rng_for(23, "monotone");
        let dims = [4, 4, 4];
        let n = 64;
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f32> {
            (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()
        };
        let aff =
            AffinityGraph::from_channels(dims, [mk(&mut rng), mk(&mut rng), mk(&mut rng)]).unwrap();
        let hi = components_above(&aff, 0.7).unwrap();
        let lo = components_above(&aff, 0.3).unwrap();
        // Every high-threshold component maps into exactly one low-threshold component.
        let mut map: std::collections::BTreeMap<u32, u32> = Default::default();
        for i in 0..n {
            let h = hi.labels()[i];
            if h != 0 {
                let l = lo.labels()[i];
                assert_ne!(l, 0);
                if let Some(&prev) = map.get(&h) {
                    assert_eq!(prev, l);
                } else {
                    map.insert(h, l);
                }
            }
        }
    }

    #[test]
    fn sphere_is_not_split() {
        let dims = [16, 16, 16];
        let mut seg = Segmentation::new(dims);
        for z in 0..16i64 {
            for y in 0..16i64 {
                for x in 0..16i64 {
                    let d2 = (x - 8) * (x - 8) + (y - 8) * (y - 8) + (z - 8) * (z - 8);
                    if d2 <= 25 {
                        seg.set([x, y, z], 1);
                    }
                }
            }
        }
        let out = break_by_distance_transform(&seg, 10, 0.5);
        assert_eq!(out.max_label(), 1);
    }

    #[test]
    fn dumbbell_splits_at_the_neck() {
        // Two radius-5 spheres joined by a radius-1.5 neck.
        let dims = [30, 14, 14];
        let mut seg = Segmentation::new(dims);
        let c1 = [7.0, 7.0, 7.0];
        let c2 = [22.0, 7.0, 7.0];
        for z in 0..14i64 {
            for y in 0..14i64 {
                for x in 0..30i64 {
                    let p = [x as f64, y as f64, z as f64];
                    let d1 = (p[0] - c1[0]).powi(2) + (p[1] - c1[1]).powi(2) + (p[2] - c1[2]).powi(2);
                    let d2 = (p[0] - c2[0]).powi(2) + (p[1] - c2[1]).powi(2) + (p[2] - c2[2]).powi(2);
                    let on_neck = (7.0..=22.0).contains(&p[0])
                        && (p[1] - 7.0).powi(2) + (p[2] - 7.0).powi(2) <= 2.25;
                    if d1 <= 25.0 || d2 <= 25.0 || on_neck {
                        seg.set([x, y, z], 1);
                    }
                }
            }
        }
        let out = break_by_distance_transform(&seg, 10, 0.5);
        assert_eq!(out.max_label(), 2, "dumbbell should split into two parts");
        // Split plane within +/-1 voxel of the neck center x=14.5.
        let mut max1 = i64::MIN;
        let mut min2 = i64::MAX;
        for (i, &l) in out.labels().iter().enumerate() {
            let c = index_coord(i, dims);
            let label_left = out.get_or_zero([7, 7, 7]);
            if l == label_left && l != 0 {
                max1 = max1.max(c[0]);
            } else if l != 0 {
                min2 = min2.min(c[0]);
            }
        }
        assert!((13..=16).contains(&max1), "left part ends at {max1}");
        assert!((13..=16).contains(&min2), "right part starts at {min2}");
    }

    #[test]
    fn small_objects_pass_through() {
        let dims = [8, 4, 4];
        let mut seg = Segmentation::new(dims);
        seg.set([1, 1, 1], 1);
        seg.set([2, 1, 1], 1);
        let out = break_by_distance_transform(&seg, 500, 0.5);
        assert_eq!(out, {
            let mut s = seg.clone();
            s.compact();
            s
        });
    }

    #[test]
    fn segmentation_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.vol");
        let mut seg = Segmentation::new([3, 2, 2]);
        seg.set([0, 0, 0], 3);
        seg.set([2, 1, 1], 7);
        seg.save(&path).unwrap();
        let b = Segmentation::load(&path).unwrap();
        assert_eq!(seg, b);
    }
}
