//! Exact squared Euclidean distance transform on 3D grids
//! (Felzenszwalb & Huttenlocher lower-envelope algorithm, separable).

const INF: f64 = 1e20;

/// 1D squared-distance transform of a sampled function `f`.
fn dt1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                if k == 0 {
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = INF;
                break;
            }
        }
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        out[q] = d * d + f[p];
    }
}

/// Squared Euclidean distance from every voxel to the nearest seed voxel.
///
/// `seed[i]` marks distance-zero voxels. Voxels are unit-spaced; a grid with
/// no seeds returns `1e20` everywhere.
pub fn edt_sq(dims: [usize; 3], seed: &[bool]) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let n = nx * ny * nz;
    assert_eq!(seed.len(), n);
    let mut d: Vec<f64> = seed.iter().map(|&s| if s { 0.0 } else { INF }).collect();

    let maxdim = nx.max(ny).max(nz);
    let mut f = vec![0.0; maxdim];
    let mut out = vec![0.0; maxdim];
    let mut v = vec![0usize; maxdim];
    let mut z = vec![0.0; maxdim + 1];

    // x pass
    for zz in 0..nz {
        for yy in 0..ny {
            let base = (zz * ny + yy) * nx;
            f[..nx].copy_from_slice(&d[base..base + nx]);
            dt1d(&f[..nx], &mut out[..nx], &mut v, &mut z);
            d[base..base + nx].copy_from_slice(&out[..nx]);
        }
    }
    // y pass
    for zz in 0..nz {
        for xx in 0..nx {
            for yy in 0..ny {
                f[yy] = d[(zz * ny + yy) * nx + xx];
            }
            dt1d(&f[..ny], &mut out[..ny], &mut v, &mut z);
            for yy in 0..ny {
                d[(zz * ny + yy) * nx + xx] = out[yy];
            }
        }
    }
    // z pass
    for yy in 0..ny {
        for xx in 0..nx {
            for zz in 0..nz {
                f[zz] = d[(zz * ny + yy) * nx + xx];
            }
            dt1d(&f[..nz], &mut out[..nz], &mut v, &mut z);
            for zz in 0..nz {
                d[(zz * ny + yy) * nx + xx] = out[zz];
            }
        }
    }
    d
}

/// Euclidean distance (not squared) to the nearest seed.
pub fn edt(dims: [usize; 3], seed: &[bool]) -> Vec<f64> {
    edt_sq(dims, seed).into_iter().map(|v| v.sqrt()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(dims: [usize; 3], seed: &[bool]) -> Vec<f64> {
        let [nx, ny, nz] = dims;
        let mut out = vec![INF; nx * ny * nz];
        let seeds: Vec<[i64; 3]> = (0..nx * ny * nz)
            .filter(|&i| seed[i])
            .map(|i| {
                [
                    (i % nx) as i64,
                    ((i / nx) % ny) as i64,
                    (i / (nx * ny)) as i64,
                ]
            })
            .collect();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let mut best = INF;
                    for s in &seeds {
                        let dx = x as i64 - s[0];
                        let dy = y as i64 - s[1];
                        let dz = z as i64 - s[2];
                        best = best.min((dx * dx + dy * dy + dz * dz) as f64);
                    }
                    out[(z * ny + y) * nx + x] = best;
                }
            }
        }
        out
    }

    #[test]
    fn matches_bruteforce_on_random_grids() {
        use rand::Rng;
        let mut rng = crate::math::rng_for(9, "edt-test");
        for _ in 0..20 {
            let dims = [
                rng.gen_range(1..7usize),
                rng.gen_range(1..7usize),
                rng.gen_range(1..7usize),
            ];
            let n = dims[0] * dims[1] * dims[2];
            let seed: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
            if !seed.iter().any(|&s| s) {
                continue;
            }
            let got = edt_sq(dims, &seed);
            let want = brute(dims, &seed);
            for i in 0..n {
                assert!((got[i] - want[i]).abs() < 1e-9, "mismatch at {i}");
            }
        }
    }
}
