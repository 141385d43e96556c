//! Object-level hand-designed features: size, proximity, growth, rays,
//! angles, and convex hull counts.

use crate::error::{Result, VoxError};
use crate::features::{numbered_layout, EdgeContext, FeatureBlock, SegmentMaskPair};
use crate::math::{edt, eig, hull::Hull3, interp::trilinear, sphere};
use crate::volume::{coord_index, in_bounds, index_coord, AffinityGraph, Coord, Mask3, Volume3D};
use std::collections::BinaryHeap;

/// Default affinity thresholds for ray termination.
pub const RAY_THRESHOLDS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// Growth thresholds for the grown-mask angle configurations.
pub const ANGLE_GROW_THRESHOLDS: [f32; 9] = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1];

/// Number of ray directions.
pub const NUM_RAYS: usize = 42;

/// [vol_a, vol_b, ln vol_a, ln vol_b] using full-volume voxel counts.
pub fn size_features(pair: &SegmentMaskPair) -> Result<FeatureBlock> {
    if pair.vol_a == 0 || pair.vol_b == 0 {
        return Err(VoxError::domain("segment with zero volume"));
    }
    Ok(FeatureBlock::new(
        "size",
        vec![
            "vol_a".into(),
            "vol_b".into(),
            "ln_vol_a".into(),
            "ln_vol_b".into(),
        ],
        vec![
            pair.vol_a as f64,
            pair.vol_b as f64,
            (pair.vol_a as f64).ln(),
            (pair.vol_b as f64).ln(),
        ],
    ))
}

/// Minimal Euclidean distance between voxel centers of the two masks,
/// within the window.
pub fn proximity_feature(pair: &SegmentMaskPair) -> Result<FeatureBlock> {
    let dims = pair.mask_a.dims();
    if pair.mask_a.count() == 0 || pair.mask_b.count() == 0 {
        return Err(VoxError::domain("empty mask in window"));
    }
    let d = edt::edt_sq(dims, pair.mask_a.raw());
    let mut best = f64::INFINITY;
    for (i, &inb) in pair.mask_b.raw().iter().enumerate() {
        if inb {
            best = best.min(d[i]);
        }
    }
    Ok(FeatureBlock::new(
        "proximity",
        vec!["proximity".into()],
        vec![best.sqrt()],
    ))
}

#[derive(PartialEq)]
struct GrowClaim {
    aff: f32,
    target: u32,
    label: u8,
}
impl Eq for GrowClaim {}
impl Ord for GrowClaim {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Swap-invariant ordering: affinity desc, voxel index asc, label asc.
        self.aff
            .total_cmp(&other.aff)
            .then_with(|| other.target.cmp(&self.target))
            .then_with(|| other.label.cmp(&self.label))
    }
}
impl PartialOrd for GrowClaim {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Grow both masks by watershed in decreasing affinity order until their
/// basins touch: [merge_affinity, |merge_location - dp|]. Never merging
/// within the window yields the sentinel [0, window_diagonal].
pub fn growth_features(
    pair: &SegmentMaskPair,
    aff: &AffinityGraph,
    dp: Coord,
) -> FeatureBlock {
    let dims = pair.mask_a.dims();
    let n = dims[0] * dims[1] * dims[2];
    let mut owner = vec![0u8; n];
    let mut heap: BinaryHeap<GrowClaim> = BinaryHeap::new();
    for i in 0..n {
        if pair.mask_a.raw()[i] {
            owner[i] = 1;
        } else if pair.mask_b.raw()[i] {
            owner[i] = 2;
        }
    }
    let push_claims = |heap: &mut BinaryHeap<GrowClaim>, owner: &[u8], c: Coord, label: u8| {
        for axis in 0..3 {
            for dir in [1i64, -1] {
                let mut q = c;
                q[axis] += dir;
                if !in_bounds(q, dims) {
                    continue;
                }
                let qi = coord_index(q, dims);
                if owner[qi] == 0 {
                    let a = if dir > 0 {
                        aff.edge(c, axis)
                    } else {
                        aff.edge(q, axis)
                    };
                    heap.push(GrowClaim {
                        aff: a,
                        target: qi as u32,
                        label,
                    });
                }
            }
        }
    };
    let mut merge: Option<(f32, Coord)> = None;

    // A direct contact means the basins already touch before any growth:
    // take the highest-affinity contact edge, tie-broken by the edge base
    // index so the result is independent of the (a, b) ordering.
    for i in 0..n {
        if owner[i] == 0 {
            continue;
        }
        let c = index_coord(i, dims);
        for axis in 0..3 {
            let mut q = c;
            q[axis] += 1;
            if !in_bounds(q, dims) {
                continue;
            }
            let qo = owner[coord_index(q, dims)];
            if qo != 0 && qo != owner[i] {
                let a = aff.edge(c, axis);
                if merge.map_or(true, |(best, _)| a > best) {
                    merge = Some((a, c));
                }
            }
        }
    }

    if merge.is_none() {
        for i in 0..n {
            if owner[i] != 0 {
                push_claims(&mut heap, &owner, index_coord(i, dims), owner[i]);
            }
        }
        while let Some(claim) = heap.pop() {
            let qi = claim.target as usize;
            if owner[qi] != 0 {
                continue;
            }
            owner[qi] = claim.label;
            let c = index_coord(qi, dims);
            // Does this assignment touch the other basin?
            let other = 3 - claim.label;
            let mut touched = false;
            for axis in 0..3 {
                for dir in [1i64, -1] {
                    let mut q = c;
                    q[axis] += dir;
                    if in_bounds(q, dims) && owner[coord_index(q, dims)] == other {
                        touched = true;
                    }
                }
            }
            if touched {
                merge = Some((claim.aff, c));
                break;
            }
            push_claims(&mut heap, &owner, c, claim.label);
        }
    }

    let diag = ((dims[0] * dims[0] + dims[1] * dims[1] + dims[2] * dims[2]) as f64).sqrt();
    let (m_aff, m_dist) = match merge {
        Some((a, loc)) => {
            let d = (0..3)
                .map(|k| ((loc[k] - dp[k]) as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            (a as f64, d)
        }
        None => (0.0, diag),
    };
    FeatureBlock::new(
        "growth",
        vec!["merge_aff".into(), "merge_dist".into()],
        vec![m_aff, m_dist],
    )
}

fn centroid(mask: &Mask3) -> Option<[f64; 3]> {
    let mut n = 0.0;
    let mut s = [0.0f64; 3];
    for (i, &b) in mask.raw().iter().enumerate() {
        if b {
            let c = index_coord(i, mask.dims());
            n += 1.0;
            for a in 0..3 {
                s[a] += c[a] as f64;
            }
        }
    }
    if n == 0.0 {
        None
    } else {
        Some([s[0] / n, s[1] / n, s[2] / n])
    }
}

fn clamp_point(p: [f64; 3], dims: [usize; 3]) -> [f64; 3] {
    [
        p[0].clamp(0.0, (dims[0] - 1) as f64),
        p[1].clamp(0.0, (dims[1] - 1) as f64),
        p[2].clamp(0.0, (dims[2] - 1) as f64),
    ]
}

fn mean_std_max(values: &[f64]) -> [f64; 3] {
    if values.is_empty() {
        return [0.0, 0.0, 0.0];
    }
    let (mean, std) = crate::math::stats::mean_std(values);
    let max = values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    [mean, std, max]
}

/// March from `start` along `dir` in half-voxel steps until `stop` returns
/// true or the window is left; returns the distance traveled.
fn march(start: [f64; 3], dir: [f64; 3], dims: [usize; 3], mut stop: impl FnMut([f64; 3]) -> bool) -> f64 {
    const STEP: f64 = 0.5;
    let mut t = 0.0;
    loop {
        let p = [
            start[0] + t * dir[0],
            start[1] + t * dir[1],
            start[2] + t * dir[2],
        ];
        let inside = p[0] >= 0.0
            && p[1] >= 0.0
            && p[2] >= 0.0
            && p[0] <= (dims[0] - 1) as f64
            && p[1] <= (dims[1] - 1) as f64
            && p[2] <= (dims[2] - 1) as f64;
        if !inside || stop(p) {
            return t;
        }
        t += STEP;
    }
}

fn nearest_in_mask(mask: &Mask3, p: [f64; 3]) -> bool {
    let c = [
        p[0].round() as i64,
        p[1].round() as i64,
        p[2].round() as i64,
    ];
    mask.get_or_false(c)
}

/// 42 ray features: per seed and per affinity threshold the {mean, std, max}
/// termination distance (30), per seed the exit-of-union {mean, std, max}
/// (6), and per seed the penetration {mean, std, fraction-hitting} through
/// the other segment (6).
pub fn ray_features(
    pair: &SegmentMaskPair,
    bm: &Volume3D,
    thresholds: &[f64; 5],
) -> FeatureBlock {
    let dims = bm.dims();
    let dirs = sphere::fibonacci_sphere(NUM_RAYS);
    let ca = clamp_point(
        centroid(&pair.mask_a).unwrap_or([0.0, 0.0, 0.0]),
        dims,
    );
    let cb = clamp_point(
        centroid(&pair.mask_b).unwrap_or([0.0, 0.0, 0.0]),
        dims,
    );

    let mut values = Vec::with_capacity(42);
    let mut layout = Vec::with_capacity(42);

    // Threshold-termination distances, seeded per segment.
    for (seed_name, c) in [("a", ca), ("b", cb)] {
        for (ti, &th) in thresholds.iter().enumerate() {
            let dists: Vec<f64> = dirs
                .iter()
                .map(|&d| march(c, d, dims, |p| trilinear(bm.data(), dims, p) < th))
                .collect();
            let msm = mean_std_max(&dists);
            for (k, stat) in ["mean", "std", "max"].iter().enumerate() {
                layout.push(format!("ray_{seed_name}_t{ti}_{stat}"));
                values.push(msm[k]);
            }
        }
    }
    // Exit-of-union distances.
    for (seed_name, c) in [("a", ca), ("b", cb)] {
        let dists: Vec<f64> = dirs
            .iter()
            .map(|&d| {
                march(c, d, dims, |p| {
                    !nearest_in_mask(&pair.mask_a, p) && !nearest_in_mask(&pair.mask_b, p)
                })
            })
            .collect();
        let msm = mean_std_max(&dists);
        for (k, stat) in ["mean", "std", "max"].iter().enumerate() {
            layout.push(format!("ray_{seed_name}_exit_{stat}"));
            values.push(msm[k]);
        }
    }
    // Penetration through the other segment.
    for (seed_name, c, other) in [("a", ca, &pair.mask_b), ("b", cb, &pair.mask_a)] {
        let mut traversals = Vec::new();
        let mut hits = 0usize;
        for &d in &dirs {
            let mut inside_len = 0.0;
            march(c, d, dims, |p| {
                if nearest_in_mask(other, p) {
                    inside_len += 0.5;
                }
                false
            });
            if inside_len > 0.0 {
                hits += 1;
                traversals.push(inside_len);
            }
        }
        let (mean, std) = crate::math::stats::mean_std(&traversals);
        for (stat, v) in [
            ("mean", mean),
            ("std", std),
            ("frac", hits as f64 / NUM_RAYS as f64),
        ] {
            layout.push(format!("ray_{seed_name}_pen_{stat}"));
            values.push(v);
        }
    }
    FeatureBlock::new("rays", layout, values)
}

/// Central second-moment matrix of a mask's voxels.
fn second_moments(mask: &Mask3) -> Option<(f64, [f64; 3], eig::Sym3)> {
    let mut n = 0.0;
    let mut s = [0.0f64; 3];
    let mut ss = [[0.0f64; 3]; 3];
    for (i, &b) in mask.raw().iter().enumerate() {
        if b {
            let c = index_coord(i, mask.dims());
            let p = [c[0] as f64, c[1] as f64, c[2] as f64];
            n += 1.0;
            for a in 0..3 {
                s[a] += p[a];
                for bax in 0..3 {
                    ss[a][bax] += p[a] * p[bax];
                }
            }
        }
    }
    if n < 0.5 {
        return None;
    }
    let c = [s[0] / n, s[1] / n, s[2] / n];
    let mut cov = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            cov[a][b] = ss[a][b] / n - c[a] * c[b];
        }
    }
    Some((n, c, cov))
}

/// Block-any 2x downsampling of a mask.
fn downsample_mask(mask: &Mask3) -> Mask3 {
    let dims = mask.dims();
    let od = [
        dims[0].div_ceil(2),
        dims[1].div_ceil(2),
        dims[2].div_ceil(2),
    ];
    let mut out = Mask3::new(od);
    for (i, &b) in mask.raw().iter().enumerate() {
        if b {
            let c = index_coord(i, dims);
            out.set([c[0] / 2, c[1] / 2, c[2] / 2], true);
        }
    }
    out
}

/// One angle triple: [|v_c|, angle(v_o1, v_c), angle(v_o2, v_c)] with angles
/// folded to [0, pi/2]; degenerate orientations fall back to pi/4.
fn angle_triple(mask_a: &Mask3, mask_b: &Mask3) -> [f64; 3] {
    use std::f64::consts::FRAC_PI_4;
    let (Some((na, ca, cov_a)), Some((nb, cb, cov_b))) =
        (second_moments(mask_a), second_moments(mask_b))
    else {
        return [0.0, FRAC_PI_4, FRAC_PI_4];
    };
    let vc = [cb[0] - ca[0], cb[1] - ca[1], cb[2] - ca[2]];
    let vc_len = eig::norm(vc);
    let axis_of = |n: f64, cov: &eig::Sym3| -> Option<[f64; 3]> {
        if n < 1.5 {
            return None;
        }
        eig::principal_axis(cov)
    };
    let a1 = match axis_of(na, &cov_a) {
        Some(v) if vc_len > 1e-12 => sphere::folded_angle(v, vc),
        _ => FRAC_PI_4,
    };
    let a2 = match axis_of(nb, &cov_b) {
        Some(v) if vc_len > 1e-12 => sphere::folded_angle(v, vc),
        _ => FRAC_PI_4,
    };
    [vc_len, a1, a2]
}

/// 33 angle features over 11 mask configurations: the original masks, the
/// masks downsampled by two, and the masks grown by watershed at nine
/// thresholds.
pub fn angle_features(pair: &SegmentMaskPair, aff: &AffinityGraph) -> FeatureBlock {
    let dims = pair.mask_a.dims();
    let mut values = Vec::with_capacity(33);
    let mut layout = Vec::with_capacity(33);
    let push = |tag: &str, t: [f64; 3], layout: &mut Vec<String>, values: &mut Vec<f64>| {
        layout.push(format!("angle_{tag}_vc"));
        layout.push(format!("angle_{tag}_o1"));
        layout.push(format!("angle_{tag}_o2"));
        values.extend_from_slice(&t);
    };

    push(
        "orig",
        angle_triple(&pair.mask_a, &pair.mask_b),
        &mut layout,
        &mut values,
    );
    push(
        "down",
        angle_triple(&downsample_mask(&pair.mask_a), &downsample_mask(&pair.mask_b)),
        &mut layout,
        &mut values,
    );

    // One traced watershed growth provides all nine grown configurations.
    let mut seg = crate::segmentation::Segmentation::new(dims);
    for i in 0..seg.labels().len() {
        if pair.mask_a.raw()[i] {
            seg.labels_mut()[i] = 1;
        } else if pair.mask_b.raw()[i] {
            seg.labels_mut()[i] = 2;
        }
    }
    let trace = crate::segmentation::grow_watershed_trace(&seg, aff, 0.0)
        .expect("window dims always match");
    for &t in ANGLE_GROW_THRESHOLDS.iter() {
        let n = seg.labels().len();
        let mut ga = Mask3::new(dims);
        let mut gb = Mask3::new(dims);
        for i in 0..n {
            if trace.watermark[i] > t {
                match trace.seg.labels()[i] {
                    1 => ga.raw_mut()[i] = true,
                    2 => gb.raw_mut()[i] = true,
                    _ => {}
                }
            }
        }
        push(
            &format!("grow{t:.1}"),
            angle_triple(&ga, &gb),
            &mut layout,
            &mut values,
        );
    }
    FeatureBlock::new("angles", layout, values)
}

/// Voxelized convex hull counts for one mask: (inside, outside) where
/// inside voxels belong to the mask.
pub fn hull_counts(mask: &Mask3) -> (u64, u64) {
    let dims = mask.dims();
    // Surface voxels suffice: interior centers are never hull vertices.
    let mut pts: Vec<[i64; 3]> = Vec::new();
    for (i, &b) in mask.raw().iter().enumerate() {
        if b {
            let c = index_coord(i, dims);
            let surface = crate::volume::NEIGHBORS6.iter().any(|o| {
                let q = [c[0] + o[0], c[1] + o[1], c[2] + o[2]];
                !mask.get_or_false(q)
            });
            if surface {
                pts.push(c);
            }
        }
    }
    if pts.is_empty() {
        return (0, 0);
    }
    let hull = Hull3::build(&pts);
    let mut inside = 0u64;
    let mut outside = 0u64;
    match &hull {
        Hull3::Solid { bbox, .. } => {
            for z in bbox.0[2]..=bbox.1[2] {
                for y in bbox.0[1]..=bbox.1[1] {
                    if let Some((lo, hi)) = hull.x_range(y, z) {
                        for x in lo..=hi {
                            if mask.get_or_false([x, y, z]) {
                                inside += 1;
                            } else {
                                outside += 1;
                            }
                        }
                    }
                }
            }
        }
        _ => {
            // Degenerate hulls are thin; scan the point bounding box.
            let mut lo = pts[0];
            let mut hi = pts[0];
            for p in &pts {
                for a in 0..3 {
                    lo[a] = lo[a].min(p[a]);
                    hi[a] = hi[a].max(p[a]);
                }
            }
            for z in lo[2]..=hi[2] {
                for y in lo[1]..=hi[1] {
                    for x in lo[0]..=hi[0] {
                        if hull.contains([x, y, z]) {
                            if mask.get_or_false([x, y, z]) {
                                inside += 1;
                            } else {
                                outside += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    (inside, outside)
}

/// Per segment: [inside, outside, ln(1+inside), ln(1+outside)]; 8 values.
pub fn convex_hull_features(pair: &SegmentMaskPair) -> FeatureBlock {
    let mut values = Vec::with_capacity(8);
    let mut layout = Vec::with_capacity(8);
    for (name, mask) in [("a", &pair.mask_a), ("b", &pair.mask_b)] {
        let (inside, outside) = hull_counts(mask);
        layout.push(format!("hull_{name}_in"));
        layout.push(format!("hull_{name}_out"));
        layout.push(format!("hull_{name}_ln_in"));
        layout.push(format!("hull_{name}_ln_out"));
        values.push(inside as f64);
        values.push(outside as f64);
        values.push((1.0 + inside as f64).ln());
        values.push((1.0 + outside as f64).ln());
    }
    FeatureBlock::new("convex-hull", layout, values)
}

/// Convenience: every geometry block for a context.
pub fn all_geometry_blocks(ctx: &EdgeContext) -> Result<Vec<FeatureBlock>> {
    Ok(vec![
        size_features(&ctx.pair)?,
        proximity_feature(&ctx.pair)?,
        growth_features(&ctx.pair, &ctx.aff, ctx.dp),
        ray_features(&ctx.pair, &ctx.bm, &RAY_THRESHOLDS),
        angle_features(&ctx.pair, &ctx.aff),
        convex_hull_features(&ctx.pair),
    ])
}

/// A numbered-layout helper kept for feature matrices assembled elsewhere.
pub fn block_layout_of(len: usize, prefix: &str) -> Vec<String> {
    numbered_layout(prefix, len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pair_from(dims: [usize; 3], a: &[Coord], b: &[Coord]) -> SegmentMaskPair {
        let mut ma = Mask3::new(dims);
        let mut mb = Mask3::new(dims);
        for &c in a {
            ma.set(c, true);
        }
        for &c in b {
            mb.set(c, true);
        }
        let (va, vb) = (ma.count(), mb.count());
        SegmentMaskPair {
            mask_a: ma,
            mask_b: mb,
            vol_a: va,
            vol_b: vb,
        }
    }

    #[test]
    fn size_log_identities() {
        let mut p = pair_from([2, 2, 2], &[[0, 0, 0]], &[[1, 0, 0]]);
        let s = size_features(&p).unwrap();
        assert_eq!(s.values, vec![1.0, 1.0, 0.0, 0.0]);
        p.vol_a = std::f64::consts::E.round() as u64; // counts are integers; use exp(1)~3
        p.vol_b = 20;
        let s2 = size_features(&p).unwrap();
        assert_abs_diff_eq!(s2.values[2], (p.vol_a as f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(s2.values[3], (20f64).ln(), epsilon = 1e-12);
        p.vol_a = 0;
        assert!(size_features(&p).is_err());
    }

    #[test]
    fn proximity_touching_and_345() {
        let p = pair_from([4, 4, 4], &[[0, 0, 0]], &[[1, 0, 0]]);
        assert_abs_diff_eq!(proximity_feature(&p).unwrap().values[0], 1.0);
        let p2 = pair_from([6, 6, 6], &[[0, 0, 0]], &[[3, 4, 0]]);
        assert_abs_diff_eq!(proximity_feature(&p2).unwrap().values[0], 5.0);
    }

    #[test]
    fn proximity_matches_exhaustive_scan() {
        use rand::Rng;
        let mut rng = crate::math::rng_for(61, "prox-oracle");
        for _ in 0..40 {
            let dims = [6, 6, 6];
            let mut a = Vec::new();
            let mut b = Vec::new();
            for z in 0..6i64 {
                for y in 0..6i64 {
                    for x in 0..6i64 {
                        match rng.gen_range(0..10) {
                            0 => a.push([x, y, z]),
                            1 => b.push([x, y, z]),
                            _ => {}
                        }
                    }
                }
            }
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let p = pair_from(dims, &a, &b);
            let got = proximity_feature(&p).unwrap().values[0];
            let mut want = f64::INFINITY;
            for &pa in &a {
                for &pb in &b {
                    let d = (0..3).map(|k| ((pa[k] - pb[k]) as f64).powi(2)).sum::<f64>();
                    want = want.min(d);
                }
            }
            assert_abs_diff_eq!(got, want.sqrt(), epsilon = 1e-9);
        }
    }

    #[test]
    fn growth_zero_affinity_gives_sentinel() {
        let dims = [5, 5, 5];
        let p = pair_from(dims, &[[0, 2, 2]], &[[4, 2, 2]]);
        let aff = AffinityGraph::new(dims, 0.0);
        let g = growth_features(&p, &aff, [2, 2, 2]);
        assert_eq!(g.values[0], 0.0);
        let diag = (75f64).sqrt();
        assert_abs_diff_eq!(g.values[1], diag, epsilon = 1e-12);
    }

    #[test]
    fn growth_through_uniform_affinity_meets_in_the_middle() {
        let dims = [7, 3, 3];
        let p = pair_from(dims, &[[0, 1, 1]], &[[6, 1, 1]]);
        let mut aff = AffinityGraph::new(dims, 0.0);
        for x in 0..6 {
            aff.set_edge([x, 1, 1], 0, 0.9);
        }
        let g = growth_features(&p, &aff, [3, 1, 1]);
        assert!(g.values[0] >= 0.9 - 1e-6, "merge affinity {}", g.values[0]);
        assert!(g.values[1] <= 1.0 + 1e-9, "merge near dp, got {}", g.values[1]);
    }

    #[test]
    fn growth_adjacent_masks_reports_contact_affinity() {
        let dims = [4, 3, 3];
        let p = pair_from(dims, &[[1, 1, 1]], &[[2, 1, 1]]);
        let mut aff = AffinityGraph::new(dims, 0.2);
        aff.set_edge([1, 1, 1], 0, 0.9);
        let g = growth_features(&p, &aff, [2, 1, 1]);
        assert!(g.values[0] >= 0.9);
        assert_eq!(g.values[1], 1.0); // contact recorded at the a-side voxel
    }

    #[test]
    fn growth_is_swap_invariant() {
        use rand::Rng;
        let mut rng = crate::math::rng_for(62, "growth-swap");
        for _ in 0..20 {
            let dims = [6, 6, 6];
            let n = 216;
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f32> {
                (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()
            };
            let aff = AffinityGraph::from_channels(
                dims,
                [mk(&mut rng), mk(&mut rng), mk(&mut rng)],
            )
            .unwrap();
            let mut a = Vec::new();
            let mut b = Vec::new();
            for z in 0..6i64 {
                for y in 0..6i64 {
                    for x in 0..6i64 {
                        match rng.gen_range(0..12) {
                            0 => a.push([x, y, z]),
                            1 => b.push([x, y, z]),
                            _ => {}
                        }
                    }
                }
            }
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let p = pair_from(dims, &a, &b);
            let q = pair_from(dims, &b, &a);
            let dp = [3, 3, 3];
            assert_eq!(
                growth_features(&p, &aff, dp).values,
                growth_features(&q, &aff, dp).values
            );
        }
    }

    #[test]
    fn rays_zero_affinity_terminate_immediately() {
        let dims = [9, 9, 9];
        let p = pair_from(dims, &[[2, 4, 4]], &[[6, 4, 4]]);
        let bm = Volume3D::new(dims, 0.0);
        let r = ray_features(&p, &bm, &RAY_THRESHOLDS);
        assert_eq!(r.len(), 42);
        // All threshold-termination distances are zero.
        for i in 0..30 {
            assert_eq!(r.values[i], 0.0, "at {}", r.layout[i]);
        }
    }

    #[test]
    fn ray_exit_distance_tracks_sphere_radius() {
        // Spherical mask of radius 5 around the window center.
        let dims = [17, 17, 17];
        let mut a = Vec::new();
        for z in 0..17i64 {
            for y in 0..17i64 {
                for x in 0..17i64 {
                    let d2 = (x - 8) * (x - 8) + (y - 8) * (y - 8) + (z - 8) * (z - 8);
                    if d2 <= 25 {
                        a.push([x, y, z]);
                    }
                }
            }
        }
        let p = pair_from(dims, &a, &[[0, 0, 0]]);
        let bm = Volume3D::new(dims, 1.0);
        let r = ray_features(&p, &bm, &RAY_THRESHOLDS);
        let mean_exit = r.values[30]; // ray_a_exit_mean
        // Rays from the center exit the union (sphere + far corner voxel)
        // near the radius.
        assert!(
            (4.0..=6.5).contains(&mean_exit),
            "mean exit distance {mean_exit}"
        );
        // Marching oracle: directly recompute one direction.
        let dirs = sphere::fibonacci_sphere(NUM_RAYS);
        let c = centroid(&p.mask_a).unwrap();
        let d0 = dirs[0];
        let mut t = 0.0;
        loop {
            let pt = [c[0] + t * d0[0], c[1] + t * d0[1], c[2] + t * d0[2]];
            let vox = [
                pt[0].round() as i64,
                pt[1].round() as i64,
                pt[2].round() as i64,
            ];
            if !p.mask_a.get_or_false(vox) && !p.mask_b.get_or_false(vox) {
                break;
            }
            t += 0.5;
        }
        assert!(t <= r.values[32] + 1e-9, "max should dominate single ray");
    }

    #[test]
    fn rays_swap_exchanges_halves() {
        let dims = [9, 9, 9];
        let mut bm = Volume3D::new(dims, 0.8);
        bm.set([4, 4, 4], 0.1);
        let a: Vec<Coord> = (0..3).map(|i| [1 + i, 4, 4]).collect();
        let b: Vec<Coord> = (0..3).map(|i| [5 + i, 4, 4]).collect();
        let p = pair_from(dims, &a, &b);
        let q = pair_from(dims, &b, &a);
        let rp = ray_features(&p, &bm, &RAY_THRESHOLDS);
        let rq = ray_features(&q, &bm, &RAY_THRESHOLDS);
        // a-half of p equals b-half of q in each section.
        assert_eq!(&rp.values[0..15], &rq.values[15..30]);
        assert_eq!(&rp.values[15..30], &rq.values[0..15]);
        assert_eq!(&rp.values[30..33], &rq.values[33..36]);
        assert_eq!(&rp.values[36..39], &rq.values[39..42]);
    }

    #[test]
    fn collinear_rods_have_small_angles() {
        let dims = [21, 9, 9];
        let a: Vec<Coord> = (1..8).map(|x| [x, 4, 4]).collect();
        let b: Vec<Coord> = (13..20).map(|x| [x, 4, 4]).collect();
        let p = pair_from(dims, &a, &b);
        let aff = AffinityGraph::new(dims, 0.0);
        let f = angle_features(&p, &aff);
        assert_eq!(f.len(), 33);
        // original config: [vc, o1, o2]
        assert_abs_diff_eq!(f.values[0], 12.0, epsilon = 1e-9);
        assert!(f.values[1] < 0.05, "angle o1 = {}", f.values[1]);
        assert!(f.values[2] < 0.05, "angle o2 = {}", f.values[2]);
    }

    #[test]
    fn perpendicular_rod_has_right_angle() {
        let dims = [21, 21, 9];
        let a: Vec<Coord> = (1..8).map(|x| [x, 4, 4]).collect();
        // rod along y, displaced along x
        let b: Vec<Coord> = (1..14).map(|y| [15, y, 4]).collect();
        let p = pair_from(dims, &a, &b);
        let aff = AffinityGraph::new(dims, 0.0);
        let f = angle_features(&p, &aff);
        // v_c points mostly along x; b's orientation is y.
        assert!(
            f.values[2] > std::f64::consts::FRAC_PI_2 - 0.35,
            "angle o2 = {}",
            f.values[2]
        );
        // a is collinear with v_c.
        assert!(f.values[1] < 0.35, "angle o1 = {}", f.values[1]);
    }

    #[test]
    fn angles_fold_into_quarter_turn() {
        use rand::Rng;
        let mut rng = crate::math::rng_for(63, "angle-range");
        for _ in 0..10 {
            let dims = [9, 9, 9];
            let mut a = Vec::new();
            let mut b = Vec::new();
            for z in 0..9i64 {
                for y in 0..9i64 {
                    for x in 0..9i64 {
                        match rng.gen_range(0..8) {
                            0 => a.push([x, y, z]),
                            1 => b.push([x, y, z]),
                            _ => {}
                        }
                    }
                }
            }
            if a.len() < 2 || b.len() < 2 {
                continue;
            }
            let p = pair_from(dims, &a, &b);
            let aff = AffinityGraph::new(dims, 0.5);
            let f = angle_features(&p, &aff);
            for cfg in 0..11 {
                for k in [1, 2] {
                    let v = f.values[cfg * 3 + k];
                    assert!((0.0..=std::f64::consts::FRAC_PI_2 + 1e-12).contains(&v));
                }
            }
        }
    }

    #[test]
    fn solid_box_hull_has_no_outside_voxels() {
        let dims = [8, 8, 8];
        let mut a = Vec::new();
        for z in 1..5i64 {
            for y in 1..4i64 {
                for x in 1..6i64 {
                    a.push([x, y, z]);
                }
            }
        }
        let p = pair_from(dims, &a, &[[7, 7, 7]]);
        let f = convex_hull_features(&p);
        assert_eq!(f.values[0], (5 * 3 * 4) as f64); // inside = box volume
        assert_eq!(f.values[1], 0.0); // outside = 0
        assert_abs_diff_eq!(f.values[2], (1.0 + 60.0f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn hull_counts_match_membership_loop() {
        use rand::Rng;
        let mut rng = crate::math::rng_for(64, "hull-counts");
        for _ in 0..25 {
            let dims = [7, 7, 7];
            let mut mask = Mask3::new(dims);
            for i in 0..343 {
                if rng.gen_bool(0.12) {
                    mask.raw_mut()[i] = true;
                }
            }
            if mask.count() == 0 {
                continue;
            }
            let (inside, outside) = hull_counts(&mask);
            // Oracle: hull of ALL voxels (not only surface), full-grid loop.
            let pts = mask
                .voxels()
                .into_iter()
                .map(|c| [c[0], c[1], c[2]])
                .collect::<Vec<_>>();
            let hull = Hull3::build(&pts);
            let mut want_in = 0u64;
            let mut want_out = 0u64;
            for z in 0..7i64 {
                for y in 0..7i64 {
                    for x in 0..7i64 {
                        if hull.contains([x, y, z]) {
                            if mask.get([x, y, z]) {
                                want_in += 1;
                            } else {
                                want_out += 1;
                            }
                        }
                    }
                }
            }
            assert_eq!((inside, outside), (want_in, want_out));
        }
    }

    #[test]
    fn hull_and_size_blocks_permute_under_swap() {
        let dims = [7, 7, 7];
        let a: Vec<Coord> = vec![[1, 1, 1], [2, 1, 1], [2, 2, 1], [1, 2, 3]];
        let b: Vec<Coord> = vec![[5, 5, 5], [4, 5, 5]];
        let p = pair_from(dims, &a, &b);
        let q = pair_from(dims, &b, &a);
        let hp = convex_hull_features(&p);
        let hq = convex_hull_features(&q);
        assert_eq!(&hp.values[0..4], &hq.values[4..8]);
        assert_eq!(&hp.values[4..8], &hq.values[0..4]);
        let sp = size_features(&p).unwrap();
        let sq = size_features(&q).unwrap();
        assert_eq!(sp.values[0], sq.values[1]);
        assert_eq!(sp.values[2], sq.values[3]);
    }
}
