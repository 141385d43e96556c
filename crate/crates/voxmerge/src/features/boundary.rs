//! Boundary-map statistics over interface pixels: the baseline feature
//! family.

use crate::features::FeatureBlock;
use crate::math::stats::{stats10, Stats10};
use crate::volume::{Coord, Volume3D};

/// The value assumed for statistics when the interface is empty: a missing
/// interface reads as "certain boundary".
pub const EMPTY_SENTINEL: f64 = 1.0;

fn stats_layout(prefix: &str) -> Vec<String> {
    Stats10::FIELDS.iter().map(|f| format!("{prefix}_{f}")).collect()
}

fn stats_or_sentinel(values: &[f64]) -> [f64; 10] {
    match stats10(values) {
        Some(s) => s.to_array(),
        None => {
            let mut a = [EMPTY_SENTINEL; 10];
            a[7] = 0.0; // count
            a
        }
    }
}

/// Ten summary statistics of the boundary map over the interface voxels:
/// mean, median, variance, skewness, kurtosis, Q1, Q3, count, min, max.
pub fn boundary_stats(bm: &Volume3D, interface: &[Coord]) -> FeatureBlock {
    let values: Vec<f64> = interface.iter().map(|&c| bm.get(c) as f64).collect();
    FeatureBlock::new(
        "boundary-stats",
        stats_layout("bm"),
        stats_or_sentinel(&values).to_vec(),
    )
}

/// Gradient magnitude at a voxel by central differences, one-sided at the
/// volume edge.
pub fn gradient_magnitude(vol: &Volume3D, c: Coord) -> f64 {
    let dims = vol.dims();
    let mut g2 = 0.0f64;
    for axis in 0..3 {
        let mut lo = c;
        lo[axis] -= 1;
        let mut hi = c;
        hi[axis] += 1;
        let has_lo = lo[axis] >= 0;
        let has_hi = hi[axis] < dims[axis] as i64;
        let d = match (has_lo, has_hi) {
            (true, true) => (vol.get(hi) as f64 - vol.get(lo) as f64) / 2.0,
            (false, true) => vol.get(hi) as f64 - vol.get(c) as f64,
            (true, false) => vol.get(c) as f64 - vol.get(lo) as f64,
            (false, false) => 0.0,
        };
        g2 += d * d;
    }
    g2.sqrt()
}

/// Six-point-stencil Laplacian; axes lacking both neighbors contribute 0.
pub fn laplacian(vol: &Volume3D, c: Coord) -> f64 {
    let dims = vol.dims();
    let mut acc = 0.0f64;
    for axis in 0..3 {
        let mut lo = c;
        lo[axis] -= 1;
        let mut hi = c;
        hi[axis] += 1;
        if lo[axis] >= 0 && hi[axis] < dims[axis] as i64 {
            acc += vol.get(hi) as f64 - 2.0 * vol.get(c) as f64 + vol.get(lo) as f64;
        }
    }
    acc
}

/// The same ten statistics over the first derivative (gradient magnitude)
/// and second derivative (Laplacian) of the boundary map at the interface:
/// 20 values.
pub fn derivative_stats(bm: &Volume3D, interface: &[Coord]) -> FeatureBlock {
    let grads: Vec<f64> = interface.iter().map(|&c| gradient_magnitude(bm, c)).collect();
    let laps: Vec<f64> = interface.iter().map(|&c| laplacian(bm, c)).collect();
    let mut layout = stats_layout("grad");
    layout.extend(stats_layout("lap"));
    let mut values = stats_or_sentinel(&grads).to_vec();
    values.extend(stats_or_sentinel(&laps));
    FeatureBlock::new("boundary-deriv", layout, values)
}
