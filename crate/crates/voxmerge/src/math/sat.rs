//! Summed-area tables for windowed first/second moments of voxel sets.
//!
//! Each table entry accumulates one monomial (1, x, y, z, x², y², z², xy,
//! xz, yz) over the marked voxels, permitting O(1) boxed moment queries.

/// Number of accumulated monomials.
const NM: usize = 10;

pub struct MomentTable {
    dims: [usize; 3],
    // acc[m][i]: inclusive prefix sums of monomial m.
    acc: Vec<Vec<f64>>,
}

/// Windowed moment summary of a voxel set: count, centroid, and central
/// second-moment matrix.
#[derive(Debug, Clone, Copy)]
pub struct BoxMoments {
    pub count: f64,
    pub centroid: [f64; 3],
    pub cov: [[f64; 3]; 3],
}

impl MomentTable {
    /// Build from a boolean mask over the grid.
    pub fn build(dims: [usize; 3], mask: &[bool]) -> Self {
        let [nx, ny, nz] = dims;
        let n = nx * ny * nz;
        assert_eq!(mask.len(), n);
        let mut acc = vec![vec![0f64; n]; NM];
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let i = (z * ny + y) * nx + x;
                    if mask[i] {
                        let (fx, fy, fz) = (x as f64, y as f64, z as f64);
                        let vals = [
                            1.0,
                            fx,
                            fy,
                            fz,
                            fx * fx,
                            fy * fy,
                            fz * fz,
                            fx * fy,
                            fx * fz,
                            fy * fz,
                        ];
                        for m in 0..NM {
                            acc[m][i] = vals[m];
                        }
                    }
                    // 3D inclusive prefix sum.
                    for m in 0..NM {
                        let mut v = acc[m][i];
                        if x > 0 {
                            v += acc[m][i - 1];
                        }
                        if y > 0 {
                            v += acc[m][i - nx];
                        }
                        if z > 0 {
                            v += acc[m][i - nx * ny];
                        }
                        if x > 0 && y > 0 {
                            v -= acc[m][i - 1 - nx];
                        }
                        if x > 0 && z > 0 {
                            v -= acc[m][i - 1 - nx * ny];
                        }
                        if y > 0 && z > 0 {
                            v -= acc[m][i - nx - nx * ny];
                        }
                        if x > 0 && y > 0 && z > 0 {
                            v += acc[m][i - 1 - nx - nx * ny];
                        }
                        acc[m][i] = v;
                    }
                }
            }
        }
        MomentTable { dims, acc }
    }

    fn box_sum(&self, m: usize, lo: [usize; 3], hi: [usize; 3]) -> f64 {
        let [nx, ny, _] = self.dims;
        let a = &self.acc[m];
        let at = |x: isize, y: isize, z: isize| -> f64 {
            if x < 0 || y < 0 || z < 0 {
                0.0
            } else {
                a[(z as usize * ny + y as usize) * nx + x as usize]
            }
        };
        let (x0, y0, z0) = (lo[0] as isize - 1, lo[1] as isize - 1, lo[2] as isize - 1);
        let (x1, y1, z1) = (hi[0] as isize, hi[1] as isize, hi[2] as isize);
        at(x1, y1, z1) - at(x0, y1, z1) - at(x1, y0, z1) - at(x1, y1, z0)
            + at(x0, y0, z1)
            + at(x0, y1, z0)
            + at(x1, y0, z0)
            - at(x0, y0, z0)
    }

    /// Moments of the marked voxels within the inclusive box `[lo, hi]`
    /// (clamped to the grid). `None` when the box contains no marked voxel.
    pub fn query(&self, lo: [i64; 3], hi: [i64; 3]) -> Option<BoxMoments> {
        let mut l = [0usize; 3];
        let mut h = [0usize; 3];
        for a in 0..3 {
            if hi[a] < 0 || lo[a] >= self.dims[a] as i64 {
                return None;
            }
            l[a] = lo[a].max(0) as usize;
            h[a] = hi[a].min(self.dims[a] as i64 - 1) as usize;
        }
        let n = self.box_sum(0, l, h);
        if n < 0.5 {
            return None;
        }
        let sx = self.box_sum(1, l, h);
        let sy = self.box_sum(2, l, h);
        let sz = self.box_sum(3, l, h);
        let sxx = self.box_sum(4, l, h);
        let syy = self.box_sum(5, l, h);
        let szz = self.box_sum(6, l, h);
        let sxy = self.box_sum(7, l, h);
        let sxz = self.box_sum(8, l, h);
        let syz = self.box_sum(9, l, h);
        let c = [sx / n, sy / n, sz / n];
        let cov = [
            [
                sxx / n - c[0] * c[0],
                sxy / n - c[0] * c[1],
                sxz / n - c[0] * c[2],
            ],
            [
                sxy / n - c[0] * c[1],
                syy / n - c[1] * c[1],
                syz / n - c[1] * c[2],
            ],
            [
                sxz / n - c[0] * c[2],
                syz / n - c[1] * c[2],
                szz / n - c[2] * c[2],
            ],
        ];
        Some(BoxMoments {
            count: n,
            centroid: c,
            cov,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn query_matches_direct_summation() {
        let dims = [6, 5, 4];
        let n = 120;
        let mut rng = crate::math::rng_for(5, "sat-test");
        let mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        let table = MomentTable::build(dims, &mask);
        for _ in 0..50 {
            let lo = [
                rng.gen_range(-2..6i64),
                rng.gen_range(-2..5i64),
                rng.gen_range(-2..4i64),
            ];
            let hi = [
                lo[0] + rng.gen_range(0..5i64),
                lo[1] + rng.gen_range(0..5i64),
                lo[2] + rng.gen_range(0..5i64),
            ];
            // Direct loop.
            let mut cnt = 0.0;
            let mut sum = [0.0f64; 3];
            for z in 0..4i64 {
                for y in 0..5i64 {
                    for x in 0..6i64 {
                        let inside = x >= lo[0]
                            && x <= hi[0]
                            && y >= lo[1]
                            && y <= hi[1]
                            && z >= lo[2]
                            && z <= hi[2];
                        if inside && mask[(z as usize * 5 + y as usize) * 6 + x as usize] {
                            cnt += 1.0;
                            sum[0] += x as f64;
                            sum[1] += y as f64;
                            sum[2] += z as f64;
                        }
                    }
                }
            }
            let got = table.query(lo, hi);
            if cnt == 0.0 {
                assert!(got.is_none());
            } else {
                let g = got.unwrap();
                assert!((g.count - cnt).abs() < 1e-9);
                for a in 0..3 {
                    assert!((g.centroid[a] - sum[a] / cnt).abs() < 1e-9);
                }
            }
        }
    }
}
