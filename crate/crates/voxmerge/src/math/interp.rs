//! Trilinear interpolation and separable Gaussian smoothing on raw grids.

/// Trilinear sample of a scalar grid at a continuous point, with coordinates
/// clamped to the valid domain.
pub fn trilinear(data: &[f32], dims: [usize; 3], p: [f64; 3]) -> f64 {
    let [nx, ny, nz] = dims;
    let cx = p[0].clamp(0.0, (nx - 1) as f64);
    let cy = p[1].clamp(0.0, (ny - 1) as f64);
    let cz = p[2].clamp(0.0, (nz - 1) as f64);
    let x0 = cx.floor() as usize;
    let y0 = cy.floor() as usize;
    let z0 = cz.floor() as usize;
    let x1 = (x0 + 1).min(nx - 1);
    let y1 = (y0 + 1).min(ny - 1);
    let z1 = (z0 + 1).min(nz - 1);
    let fx = cx - x0 as f64;
    let fy = cy - y0 as f64;
    let fz = cz - z0 as f64;
    let at = |x: usize, y: usize, z: usize| data[(z * ny + y) * nx + x] as f64;
    let c00 = at(x0, y0, z0) * (1.0 - fx) + at(x1, y0, z0) * fx;
    let c10 = at(x0, y1, z0) * (1.0 - fx) + at(x1, y1, z0) * fx;
    let c01 = at(x0, y0, z1) * (1.0 - fx) + at(x1, y0, z1) * fx;
    let c11 = at(x0, y1, z1) * (1.0 - fx) + at(x1, y1, z1) * fx;
    let c0 = c00 * (1.0 - fy) + c10 * fy;
    let c1 = c01 * (1.0 - fy) + c11 * fy;
    c0 * (1.0 - fz) + c1 * fz
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k = Vec::with_capacity(2 * radius + 1);
    for i in 0..=2 * radius {
        let d = i as f64 - radius as f64;
        k.push((-d * d / (2.0 * sigma * sigma)).exp());
    }
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

/// In-place separable Gaussian blur with replicated borders.
/// `sigma <= 0` is a no-op.
pub fn gaussian_blur(data: &mut [f32], dims: [usize; 3], sigma: f64) {
    if sigma <= 0.0 {
        return;
    }
    let [nx, ny, nz] = dims;
    let kernel = gaussian_kernel(sigma);
    let radius = kernel.len() / 2;
    let mut tmp = vec![0f32; data.len()];

    // Blur along one axis. `bases` enumerates the start index of every line
    // perpendicular to the axis; `s` is the stride along the axis.
    let pass = |src: &[f32], dst: &mut [f32], axis: usize| {
        let (len, s, bases): (usize, usize, Vec<usize>) = match axis {
            0 => (
                nx,
                1,
                (0..nz)
                    .flat_map(|z| (0..ny).map(move |y| (z * ny + y) * nx))
                    .collect(),
            ),
            1 => (
                ny,
                nx,
                (0..nz)
                    .flat_map(|z| (0..nx).map(move |x| z * ny * nx + x))
                    .collect(),
            ),
            _ => (
                nz,
                nx * ny,
                (0..ny)
                    .flat_map(|y| (0..nx).map(move |x| y * nx + x))
                    .collect(),
            ),
        };
        for base in bases {
            for i in 0..len {
                let mut acc = 0.0f64;
                for (ki, &kv) in kernel.iter().enumerate() {
                    let j = (i as isize + ki as isize - radius as isize)
                        .clamp(0, len as isize - 1) as usize;
                    acc += kv * src[base + j * s] as f64;
                }
                dst[base + i * s] = acc as f32;
            }
        }
    };

    pass(data, &mut tmp, 0);
    pass(&tmp, data, 1);
    tmp.copy_from_slice(data);
    pass(&tmp, data, 2);
}
