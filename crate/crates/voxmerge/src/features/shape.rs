//! Shape descriptors: the shape diameter function (cone ray casting from
//! surface voxels) and 3D shape context histograms with soft vector
//! quantization.

use crate::error::{Result, VoxError};
use crate::features::{FeatureBlock, SegmentMaskPair};
use crate::learn::{triangle_encode, Codebook};
use crate::math::{edt, sphere, stats};
use crate::volume::{index_coord, Coord, Mask3};
use std::f64::consts::PI;

/// Rays per surface voxel.
pub const SDF_RAYS: usize = 30;
/// Cone half-angle around the inward normal.
pub const SDF_CONE_HALF_ANGLE: f64 = 60.0 * PI / 180.0;

/// Histogram bins: 5 radial x 12 polar x 12 azimuth.
pub const SC_RADIAL: usize = 5;
pub const SC_POLAR: usize = 12;
pub const SC_AZIMUTH: usize = 12;

/// An L1-normalized fixed-size histogram descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramDescriptor {
    pub bins: Vec<f64>,
}

impl HistogramDescriptor {
    pub fn len(&self) -> usize {
        self.bins.len()
    }
    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

/// Surface voxels of a mask: mask voxels with a 6-neighbor inside the
/// window that is background. (Mask voxels at the window face do not count
/// as surface; a window-filling mask has none.)
pub fn surface_voxels(mask: &Mask3) -> Vec<Coord> {
    let dims = mask.dims();
    let mut out = Vec::new();
    for (i, &b) in mask.raw().iter().enumerate() {
        if !b {
            continue;
        }
        let c = index_coord(i, dims);
        let is_surface = crate::volume::NEIGHBORS6.iter().any(|o| {
            let q = [c[0] + o[0], c[1] + o[1], c[2] + o[2]];
            crate::volume::in_bounds(q, dims) && !mask.get(q)
        });
        if is_surface {
            out.push(c);
        }
    }
    out
}

/// Shape diameter values: one per surface voxel, in surface-voxel order.
/// Each value is the 1/angle-weighted median of 30 ray lengths to mask exit,
/// cast in a 120-degree cone around the inward surface normal.
pub fn shape_diameter_values(mask: &Mask3) -> Result<Vec<f64>> {
    let dims = mask.dims();
    if mask.count() == 0 {
        return Err(VoxError::domain("empty mask"));
    }
    let surface = surface_voxels(mask);
    if surface.is_empty() {
        return Err(VoxError::domain("mask fills the window; no surface voxels"));
    }
    // Inward normal from the interior distance transform: the gradient of
    // the distance-to-background points toward the medial axis.
    let background: Vec<bool> = mask.raw().iter().map(|&b| !b).collect();
    let dist = edt::edt(dims, &background);
    let at = |c: Coord| -> f64 {
        let cc = [
            c[0].clamp(0, dims[0] as i64 - 1),
            c[1].clamp(0, dims[1] as i64 - 1),
            c[2].clamp(0, dims[2] as i64 - 1),
        ];
        dist[crate::volume::coord_index(cc, dims)]
    };

    let mut values = Vec::with_capacity(surface.len());
    for &c in &surface {
        let grad = [
            (at([c[0] + 1, c[1], c[2]]) - at([c[0] - 1, c[1], c[2]])) / 2.0,
            (at([c[0], c[1] + 1, c[2]]) - at([c[0], c[1] - 1, c[2]])) / 2.0,
            (at([c[0], c[1], c[2] + 1]) - at([c[0], c[1], c[2] - 1])) / 2.0,
        ];
        let axis = match crate::math::eig::normalize(grad) {
            Some(a) => a,
            None => {
                // Flat gradient: fall back to the mean direction of interior
                // 6-neighbors.
                let mut s = [0.0f64; 3];
                for o in crate::volume::NEIGHBORS6.iter() {
                    let q = [c[0] + o[0], c[1] + o[1], c[2] + o[2]];
                    if mask.get_or_false(q) {
                        s = [s[0] + o[0] as f64, s[1] + o[1] as f64, s[2] + o[2] as f64];
                    }
                }
                crate::math::eig::normalize(s).unwrap_or([1.0, 0.0, 0.0])
            }
        };
        let dirs = sphere::fibonacci_cone(SDF_RAYS, axis, SDF_CONE_HALF_ANGLE);
        let start = [c[0] as f64, c[1] as f64, c[2] as f64];
        let mut weighted: Vec<(f64, f64)> = Vec::with_capacity(SDF_RAYS); // (length, weight)
        for d in dirs {
            let mut t = 0.5f64;
            loop {
                let p = [start[0] + t * d[0], start[1] + t * d[1], start[2] + t * d[2]];
                let vox = [
                    p[0].round() as i64,
                    p[1].round() as i64,
                    p[2].round() as i64,
                ];
                if !mask.get_or_false(vox) {
                    break;
                }
                t += 0.5;
            }
            let cosang = (d[0] * axis[0] + d[1] * axis[1] + d[2] * axis[2]).clamp(-1.0, 1.0);
            let angle = cosang.acos().max(1e-3);
            weighted.push((t, 1.0 / angle));
        }
        values.push(weighted_median(&mut weighted));
    }
    Ok(values)
}

fn weighted_median(samples: &mut [(f64, f64)]) -> f64 {
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = samples.iter().map(|s| s.1).sum();
    let mut acc = 0.0;
    for &(v, w) in samples.iter() {
        acc += w;
        if acc >= total / 2.0 {
            return v;
        }
    }
    samples.last().map(|s| s.0).unwrap_or(0.0)
}

/// 18 shape diameter features: per segment the moments [mean, var, skew,
/// kurt] (8 total) then per segment the quantiles [min, Q1, median, Q3, max]
/// (10 total). A mask with no usable surface contributes a zero sentinel.
pub fn shape_diameter_features(pair: &SegmentMaskPair) -> FeatureBlock {
    let mut moments = Vec::with_capacity(8);
    let mut quantiles = Vec::with_capacity(10);
    let mut layout_m = Vec::new();
    let mut layout_q = Vec::new();
    for (name, mask) in [("a", &pair.mask_a), ("b", &pair.mask_b)] {
        let vals = shape_diameter_values(mask).unwrap_or_default();
        let s = stats::stats10(&vals);
        let (m, q) = match s {
            Some(s) => (
                [s.mean, s.variance, s.skewness, s.kurtosis],
                [s.min, s.q1, s.median, s.q3, s.max],
            ),
            None => ([0.0; 4], [0.0; 5]),
        };
        for (f, v) in ["mean", "var", "skew", "kurt"].iter().zip(m) {
            layout_m.push(format!("sdf_{name}_{f}"));
            moments.push(v);
        }
        for (f, v) in ["min", "q1", "median", "q3", "max"].iter().zip(q) {
            layout_q.push(format!("sdf_{name}_{f}"));
            quantiles.push(v);
        }
    }
    let mut layout = layout_m;
    layout.extend(layout_q);
    let mut values = moments;
    values.extend(quantiles);
    FeatureBlock::new("shape-diameter", layout, values)
}

/// Boundary voxels of either segment (surface voxels of each mask).
fn union_boundary(pair: &SegmentMaskPair) -> Vec<Coord> {
    let mut pts = surface_voxels(&pair.mask_a);
    pts.extend(surface_voxels(&pair.mask_b));
    pts
}

/// 720-bin shape context histogram around the decision point: 5 log radial
/// bins over [1, window_radius], 12 polar bins over [0, pi], 12 azimuth bins
/// over [0, 2pi). L1-normalized; an empty boundary yields the zero histogram.
pub fn shape_context_descriptor(
    pair: &SegmentMaskPair,
    dp: Coord,
    window_radius: f64,
) -> HistogramDescriptor {
    let mut bins = vec![0.0f64; SC_RADIAL * SC_POLAR * SC_AZIMUTH];
    let pts = union_boundary(pair);
    if pts.is_empty() {
        return HistogramDescriptor { bins };
    }
    let log_rmax = window_radius.max(1.0 + 1e-9).ln();
    for p in pts {
        let d = [
            (p[0] - dp[0]) as f64,
            (p[1] - dp[1]) as f64,
            (p[2] - dp[2]) as f64,
        ];
        let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let ri = if r <= 1.0 {
            0
        } else {
            (((r.ln() / log_rmax) * SC_RADIAL as f64).floor() as usize).min(SC_RADIAL - 1)
        };
        let (pi_, ai) = if r < 1e-12 {
            (0, 0)
        } else {
            let theta = (d[2] / r).clamp(-1.0, 1.0).acos();
            let pi_ = ((theta / PI * SC_POLAR as f64).floor() as usize).min(SC_POLAR - 1);
            let mut phi = d[1].atan2(d[0]);
            if phi < 0.0 {
                phi += 2.0 * PI;
            }
            let ai = ((phi / (2.0 * PI) * SC_AZIMUTH as f64).floor() as usize).min(SC_AZIMUTH - 1);
            (pi_, ai)
        };
        bins[(ri * SC_POLAR + pi_) * SC_AZIMUTH + ai] += 1.0;
    }
    let total: f64 = bins.iter().sum();
    if total > 0.0 {
        for b in &mut bins {
            *b /= total;
        }
    }
    HistogramDescriptor { bins }
}

/// Triangle soft VQ of a shape context descriptor against a trained
/// codebook (20 clusters in the default configuration).
pub fn vq_features(desc: &HistogramDescriptor, codebook: &Codebook) -> Result<FeatureBlock> {
    let z = triangle_encode(codebook, &desc.bins)?;
    Ok(FeatureBlock::new(
        "shape-context",
        crate::features::numbered_layout("sc_vq", z.len()),
        z,
    ))
}
