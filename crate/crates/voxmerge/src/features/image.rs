//! Image-derived features: dense fixed-scale 3D gradient-orientation
//! descriptors with soft vector quantization, plus raw-image statistics.

use crate::error::Result;
use crate::features::boundary::{gradient_magnitude, laplacian};
use crate::features::{numbered_layout, FeatureBlock};
use crate::learn::{triangle_encode, Codebook};
use crate::math::{sphere, stats};
use crate::volume::{Coord, Volume3D};

/// Descriptor geometry: a 16^3 patch split into 2x2x2 spatial cells with 12
/// icosahedral orientation bins -> 96 dims.
pub const SIFT_PATCH: i64 = 16;
pub const SIFT_CELLS: usize = 2;
pub const SIFT_ORIENTATIONS: usize = 12;
pub const SIFT_DIMS: usize = SIFT_CELLS * SIFT_CELLS * SIFT_CELLS * SIFT_ORIENTATIONS;
/// Gaussian spatial weight sigma.
pub const SIFT_SIGMA: f64 = 8.0;
/// Standard descriptor clamp before renormalization.
const SIFT_CLAMP: f64 = 0.2;

/// Default sampling offsets: the 27 lattice points at stride 4 around the
/// decision point.
pub fn default_sift_offsets() -> Vec<Coord> {
    let mut out = Vec::with_capacity(27);
    for dz in [-4i64, 0, 4] {
        for dy in [-4i64, 0, 4] {
            for dx in [-4i64, 0, 4] {
                out.push([dx, dy, dz]);
            }
        }
    }
    out
}

/// One 96-dim descriptor at a sample point: central-difference gradients
/// over a mean-padded 16^3 patch, hard-assigned to the icosahedral bin of
/// maximal alignment, weighted by magnitude and a Gaussian window, pooled
/// into 2x2x2 cells, clamped at 0.2 and L2-renormalized. Flat patches give
/// the zero descriptor.
pub fn sift3d_descriptor(vol: &Volume3D, center: Coord) -> Vec<f64> {
    let dims = vol.dims();
    let pad = vol.mean() as f32;
    let half = SIFT_PATCH / 2;
    let bins = sphere::icosahedron_directions();
    let mut desc = vec![0.0f64; SIFT_DIMS];
    let at = |c: Coord| -> f64 { vol.get_or(c, pad) as f64 };
    for dz in -half..half {
        for dy in -half..half {
            for dx in -half..half {
                let p = [center[0] + dx, center[1] + dy, center[2] + dz];
                let g = [
                    (at([p[0] + 1, p[1], p[2]]) - at([p[0] - 1, p[1], p[2]])) / 2.0,
                    (at([p[0], p[1] + 1, p[2]]) - at([p[0], p[1] - 1, p[2]])) / 2.0,
                    (at([p[0], p[1], p[2] + 1]) - at([p[0], p[1], p[2] - 1])) / 2.0,
                ];
                let mag = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
                if mag < 1e-12 {
                    continue;
                }
                let dir = [g[0] / mag, g[1] / mag, g[2] / mag];
                // Hard assignment to the most aligned bin (lowest index wins
                // ties).
                let mut best = (f64::NEG_INFINITY, 0usize);
                for (bi, b) in bins.iter().enumerate() {
                    let d = dir[0] * b[0] + dir[1] * b[1] + dir[2] * b[2];
                    if d > best.0 {
                        best = (d, bi);
                    }
                }
                let r2 = (dx * dx + dy * dy + dz * dz) as f64;
                let w = (-r2 / (2.0 * SIFT_SIGMA * SIFT_SIGMA)).exp();
                let cell = |v: i64| -> usize {
                    if v < 0 {
                        0
                    } else {
                        1
                    }
                };
                let ci = (cell(dz) * SIFT_CELLS + cell(dy)) * SIFT_CELLS + cell(dx);
                desc[ci * SIFT_ORIENTATIONS + best.1] += mag * w;
            }
        }
    }
    let _ = dims;
    // Normalize, clamp, renormalize.
    let norm = desc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return vec![0.0; SIFT_DIMS];
    }
    for v in &mut desc {
        *v = (*v / norm).min(SIFT_CLAMP);
    }
    let norm2 = desc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm2 > 1e-12 {
        for v in &mut desc {
            *v /= norm2;
        }
    }
    desc
}

/// Descriptors at `offsets` around the decision point.
pub fn sift3d_descriptors(vol: &Volume3D, dp: Coord, offsets: &[Coord]) -> Vec<Vec<f64>> {
    offsets
        .iter()
        .map(|o| sift3d_descriptor(vol, [dp[0] + o[0], dp[1] + o[1], dp[2] + o[2]]))
        .collect()
}

/// Triangle-encode every descriptor against its codebook and average:
/// [image half (k), affinity half (k)] -> 2k values.
pub fn sift_vq_features(
    descs_image: &[Vec<f64>],
    descs_affinity: &[Vec<f64>],
    codebook_img: &Codebook,
    codebook_aff: &Codebook,
) -> Result<FeatureBlock> {
    let half = |descs: &[Vec<f64>], cb: &Codebook| -> Result<Vec<f64>> {
        let mut acc = vec![0.0f64; cb.k];
        if descs.is_empty() {
            return Ok(acc);
        }
        for d in descs {
            let z = triangle_encode(cb, d)?;
            for (a, v) in acc.iter_mut().zip(z) {
                *a += v;
            }
        }
        let inv = 1.0 / descs.len() as f64;
        for a in &mut acc {
            *a *= inv;
        }
        Ok(acc)
    };
    let mut values = half(descs_image, codebook_img)?;
    values.extend(half(descs_affinity, codebook_aff)?);
    let mut layout = numbered_layout("sift_img", codebook_img.k);
    layout.extend(numbered_layout("sift_aff", codebook_aff.k));
    Ok(FeatureBlock::new("sift", layout, values))
}

/// 40 raw-image statistics: the 10 interface statistics, the 20 interface
/// derivative statistics, and the same 10 statistics over the full window.
pub fn image_stats_features(vol: &Volume3D, interface: &[Coord]) -> FeatureBlock {
    let iface_block = crate::features::boundary::boundary_stats(vol, interface);
    let grads: Vec<f64> = interface
        .iter()
        .map(|&c| gradient_magnitude(vol, c))
        .collect();
    let laps: Vec<f64> = interface.iter().map(|&c| laplacian(vol, c)).collect();
    let window_vals: Vec<f64> = vol.data().iter().map(|&v| v as f64).collect();

    let pack = |vals: &[f64]| -> [f64; 10] {
        match stats::stats10(vals) {
            Some(s) => s.to_array(),
            None => {
                let mut a = [crate::features::boundary::EMPTY_SENTINEL; 10];
                a[7] = 0.0;
                a
            }
        }
    };

    let mut values = iface_block.values.clone();
    values.extend(pack(&grads));
    values.extend(pack(&laps));
    values.extend(pack(&window_vals));
    let mut layout: Vec<String> = iface_block
        .layout
        .iter()
        .map(|l| format!("img_{l}"))
        .collect();
    layout.extend(crate::math::stats::Stats10::FIELDS.iter().map(|f| format!("img_grad_{f}")));
    layout.extend(crate::math::stats::Stats10::FIELDS.iter().map(|f| format!("img_lap_{f}")));
    layout.extend(crate::math::stats::Stats10::FIELDS.iter().map(|f| format!("img_win_{f}")));
    FeatureBlock::new("image-stats", layout, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_volume_gives_zero_descriptors() {
        let vol = Volume3D::new([24, 24, 24], 0.5);
        let descs = sift3d_descriptors(&vol, [12, 12, 12], &default_sift_offsets());
        assert_eq!(descs.len(), 27);
        assert!(descs.iter().all(|d| d.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn ramp_concentrates_in_best_aligned_bins() {
        let dims = [32, 32, 32];
        let mut vol = Volume3D::new(dims, 0.0);
        for z in 0..32i64 {
            for y in 0..32i64 {
                for x in 0..32i64 {
                    vol.set([x, y, z], x as f32 / 32.0);
                }
            }
        }
        let d = sift3d_descriptor(&vol, [16, 16, 16]);
        // Oracle: which bins maximize alignment with +x?
        let bins = sphere::icosahedron_directions();
        let best_dot = bins.iter().map(|b| b[0]).fold(f64::NEG_INFINITY, f64::max);
        let best_bins: Vec<usize> = (0..12).filter(|&i| bins[i][0] > best_dot - 1e-9).collect();
        // Hard assignment sends ties to the lowest index; at minimum all
        // mass must live in the argmax set.
        let mut in_best = 0.0;
        let mut total = 0.0;
        for cell in 0..8 {
            for bi in 0..12 {
                let v = d[cell * 12 + bi];
                total += v;
                if best_bins.contains(&bi) {
                    in_best += v;
                }
            }
        }
        assert!(total > 0.0);
        assert_abs_diff_eq!(in_best, total, epsilon = 1e-9);
        // L2 norm 1 after renormalization.
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_abs_diff_eq!(n, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn descriptors_are_shift_and_scale_invariant() {
        use rand::Rng;
        let mut rng = crate::math::rng_for(91, "sift-invariance");
        let dims = [24, 24, 24];
        let mut vol = Volume3D::new(dims, 0.0);
        for v in vol.data_mut() {
            *v = rng.gen();
        }
        let base = sift3d_descriptor(&vol, [12, 12, 12]);
        // Additive shift.
        let mut shifted = vol.clone();
        for v in shifted.data_mut() {
            *v += 3.0;
        }
        let d_shift = sift3d_descriptor(&shifted, [12, 12, 12]);
        for (a, b) in base.iter().zip(&d_shift) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-5);
        }
        // Positive scaling.
        let mut scaled = vol.clone();
        for v in scaled.data_mut() {
            *v *= 2.5;
        }
        let d_scale = sift3d_descriptor(&scaled, [12, 12, 12]);
        for (a, b) in base.iter().zip(&d_scale) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-5);
        }
    }

    #[test]
    fn vq_block_layout_and_swap() {
        // Two tiny codebooks of different sizes to catch half mixups.
        let cb_img = Codebook {
            k: 3,
            dims: SIFT_DIMS,
            centroids: vec![0.1; 3 * SIFT_DIMS],
            seed: 0,
            trained: true,
        };
        let cb_aff = Codebook {
            k: 2,
            dims: SIFT_DIMS,
            centroids: vec![0.2; 2 * SIFT_DIMS],
            seed: 0,
            trained: true,
        };
        let d1 = vec![vec![0.3; SIFT_DIMS]];
        let d2 = vec![vec![0.6; SIFT_DIMS]];
        let f = sift_vq_features(&d1, &d2, &cb_img, &cb_aff).unwrap();
        assert_eq!(f.len(), 5);
        // Empty descriptor list zeroes its half.
        let f2 = sift_vq_features(&[], &d2, &cb_img, &cb_aff).unwrap();
        assert!(f2.values[0..3].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn descriptor_matching_centroid_dominates() {
        use rand::Rng;
        let mut rng = crate::math::rng_for(92, "sift-vq");
        let mut cents = Vec::new();
        for _ in 0..4 {
            let c: Vec<f64> = (0..SIFT_DIMS).map(|_| rng.gen_range(0.0..1.0)).collect();
            cents.extend(c);
        }
        let cb = Codebook {
            k: 4,
            dims: SIFT_DIMS,
            centroids: cents.clone(),
            seed: 0,
            trained: true,
        };
        let c2: Vec<f64> = cents[2 * SIFT_DIMS..3 * SIFT_DIMS].to_vec();
        let f = sift_vq_features(&[c2], &[], &cb, &cb).unwrap();
        let argmax = (0..4).max_by(|&a, &b| f.values[a].total_cmp(&f.values[b])).unwrap();
        assert_eq!(argmax, 2);
    }

    #[test]
    fn image_stats_blocks_disagree_when_interface_is_smaller() {
        use rand::Rng;
        let mut rng = crate::math::rng_for(93, "img-stats");
        let dims = [9, 9, 9];
        let mut vol = Volume3D::new(dims, 0.0);
        for v in vol.data_mut() {
            *v = rng.gen();
        }
        let iface: Vec<Coord> = (2..7).map(|i| [i, 4, 4]).collect();
        let f = image_stats_features(&vol, &iface);
        assert_eq!(f.len(), 40);
        // Interface mean differs from window mean on random data.
        assert!((f.values[0] - f.values[30]).abs() > 1e-9);
        // Window stats match the volume mean exactly.
        assert_abs_diff_eq!(f.values[30], vol.mean(), epsilon = 1e-6);
        // Constant image: degenerate moments as in the boundary family.
        let cv = Volume3D::new(dims, 0.4);
        let fc = image_stats_features(&cv, &iface);
        assert_abs_diff_eq!(fc.values[2], 0.0);
        assert_abs_diff_eq!(fc.values[10], 0.0); // grad mean
    }
}
