//! Per-edge feature families. Every family consumes a windowed
//! [`EdgeContext`] centered on the decision point and produces fixed-layout
//! [`FeatureBlock`]s.

pub mod boundary;
pub mod geometry;
pub mod image;
pub mod levelset;
pub mod shape;

use crate::augment::Isometry;
use crate::edges::EdgeSample;
use crate::error::{Result, VoxError};
use crate::segmentation::Segmentation;
use crate::volume::{
    affinity_to_boundary_map, extract_subvolume, in_bounds, AffinityGraph, Coord, Mask3,
    SubvolumeSpec, Volume3D,
};

/// A named, fixed-length block of real-valued features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub name: String,
    pub values: Vec<f64>,
    pub layout: Vec<String>,
}

impl FeatureBlock {
    pub fn new(name: &str, layout: Vec<String>, values: Vec<f64>) -> FeatureBlock {
        assert_eq!(layout.len(), values.len(), "block {name}: layout/value mismatch");
        for (i, v) in values.iter().enumerate() {
            assert!(
                v.is_finite(),
                "block {name}: non-finite value at {} ({})",
                layout[i],
                v
            );
        }
        FeatureBlock {
            name: name.to_string(),
            values,
            layout,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Numbered layout labels like `"g0" .. "gN"`.
pub fn numbered_layout(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// The two binary segment masks of an edge within its window, plus the
/// full-volume voxel counts of the segments.
#[derive(Debug, Clone)]
pub struct SegmentMaskPair {
    pub mask_a: Mask3,
    pub mask_b: Mask3,
    pub vol_a: u64,
    pub vol_b: u64,
}

/// All per-edge inputs the feature families need, extracted once.
#[derive(Debug, Clone)]
pub struct EdgeContext {
    pub radius: u32,
    pub side: usize,
    /// Decision point in window coordinates (the window center).
    pub dp: Coord,
    pub image: Volume3D,
    pub bm: Volume3D,
    pub aff: AffinityGraph,
    pub pair: SegmentMaskPair,
    /// Interface pixels in window coordinates, voxel-index order.
    pub interface: Vec<Coord>,
}

/// An augmentation selector for context extraction: identity by default.
#[derive(Debug, Clone, Copy)]
pub struct AugmentView {
    pub swapped: bool,
    pub isometry: Isometry,
    pub jitter: Coord,
}

impl Default for AugmentView {
    fn default() -> Self {
        AugmentView {
            swapped: false,
            isometry: Isometry::IDENTITY,
            jitter: [0, 0, 0],
        }
    }
}

/// Shared read-only volumes of one split, from which edge contexts are cut.
pub struct VolumeSet {
    pub image: Volume3D,
    pub aff: AffinityGraph,
    pub bm: Volume3D,
    pub seg: Segmentation,
    pub label_counts: Vec<u64>,
    pub image_mean: f32,
}

impl VolumeSet {
    pub fn new(image: Volume3D, aff: AffinityGraph, seg: Segmentation) -> VolumeSet {
        let bm = affinity_to_boundary_map(&aff);
        let label_counts = seg.label_counts();
        let image_mean = image.mean() as f32;
        VolumeSet {
            image,
            aff,
            bm,
            seg,
            label_counts,
            image_mean,
        }
    }
}

/// Extract the window context for one (possibly augmented) edge.
///
/// Jitter shifts the window center (clamped to the volume); swap exchanges
/// the mask roles; the isometry is applied to every extracted channel, with
/// affinity channels transforming covariantly.
pub fn build_edge_context(
    vols: &VolumeSet,
    edge: &EdgeSample,
    radius: u32,
    view: AugmentView,
) -> Result<EdgeContext> {
    let dims = vols.image.dims();
    let center = [
        (edge.decision_point[0] + view.jitter[0]).clamp(0, dims[0] as i64 - 1),
        (edge.decision_point[1] + view.jitter[1]).clamp(0, dims[1] as i64 - 1),
        (edge.decision_point[2] + view.jitter[2]).clamp(0, dims[2] as i64 - 1),
    ];
    if !in_bounds(center, dims) {
        return Err(VoxError::domain("decision point outside volume"));
    }
    let spec = SubvolumeSpec::new(center, radius, 1)?;
    let side = spec.side();
    let r = radius as i64;

    // Out-of-window padding: image gets the global mean, affinities and
    // masks get zero.
    let image = extract_subvolume(&vols.image, &spec, vols.image_mean)?;
    let mut channels: [Vec<f32>; 3] = [
        vec![0f32; side * side * side],
        vec![0f32; side * side * side],
        vec![0f32; side * side * side],
    ];
    let mut mask_a = Mask3::new([side, side, side]);
    let mut mask_b = Mask3::new([side, side, side]);
    let (la, lb) = (edge.seg_a, edge.seg_b);
    for z in 0..side as i64 {
        for y in 0..side as i64 {
            for x in 0..side as i64 {
                let g = [center[0] - r + x, center[1] - r + y, center[2] - r + z];
                if in_bounds(g, dims) {
                    let i = crate::volume::coord_index([x, y, z], [side, side, side]);
                    for axis in 0..3 {
                        channels[axis][i] = vols.aff.edge(g, axis);
                    }
                    let l = vols.seg.get(g);
                    if l == la {
                        mask_a.set([x, y, z], true);
                    } else if l == lb {
                        mask_b.set([x, y, z], true);
                    }
                }
            }
        }
    }
    let aff = AffinityGraph::from_channels([side, side, side], channels)?;

    // Apply the isometry (windows are cubes, so odd rotations are fine).
    let g = view.isometry;
    let (image, aff, mask_a, mask_b) = if g == Isometry::IDENTITY {
        (image, aff, mask_a, mask_b)
    } else {
        (
            g.apply_volume(&image)?,
            g.apply_affinity(&aff)?,
            g.apply_mask(&mask_a)?,
            g.apply_mask(&mask_b)?,
        )
    };
    let bm = affinity_to_boundary_map(&aff);

    let count_of = |l: u32| -> u64 {
        vols.label_counts.get(l as usize).copied().unwrap_or(0)
    };
    let (mask_a, mask_b, vol_a, vol_b) = if view.swapped {
        (mask_b, mask_a, count_of(lb), count_of(la))
    } else {
        (mask_a, mask_b, count_of(la), count_of(lb))
    };

    let pair = SegmentMaskPair {
        mask_a,
        mask_b,
        vol_a,
        vol_b,
    };
    let interface = interface_from_masks(&pair.mask_a, &pair.mask_b);

    Ok(EdgeContext {
        radius,
        side,
        dp: [r, r, r],
        image,
        bm,
        aff,
        pair,
        interface,
    })
}

/// Window-local interface pixels: voxels in neither mask, 26-adjacent to
/// both, plus voxels of `a` 6-adjacent to `b`. Voxel-index order.
pub fn interface_from_masks(mask_a: &Mask3, mask_b: &Mask3) -> Vec<Coord> {
    let dims = mask_a.dims();
    let n26 = crate::volume::neighbors26();
    let mut out = Vec::new();
    for z in 0..dims[2] as i64 {
        for y in 0..dims[1] as i64 {
            for x in 0..dims[0] as i64 {
                let p = [x, y, z];
                if mask_a.get(p) {
                    let touches = crate::volume::NEIGHBORS6.iter().any(|o| {
                        mask_b.get_or_false([p[0] + o[0], p[1] + o[1], p[2] + o[2]])
                    });
                    if touches {
                        out.push(p);
                    }
                } else if !mask_b.get(p) {
                    let mut near_a = false;
                    let mut near_b = false;
                    for o in &n26 {
                        let q = [p[0] + o[0], p[1] + o[1], p[2] + o[2]];
                        near_a = near_a || mask_a.get_or_false(q);
                        near_b = near_b || mask_b.get_or_false(q);
                        if near_a && near_b {
                            break;
                        }
                    }
                    if near_a && near_b {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}
