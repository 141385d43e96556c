//! Level-set evolution features: orientation fields from windowed second
//! moments, gradient vector flow from the boundary map, narrow-band upwind
//! advection, and the resulting overlap counts.

use crate::error::{Result, VoxError};
use crate::features::{EdgeContext, FeatureBlock, SegmentMaskPair};
use crate::math::{edt, eig, sat::MomentTable, stats};
use crate::volume::{coord_index, index_coord, Coord, Mask3, Volume3D};

/// Dense 3-component vector field over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField3D {
    dims: [usize; 3],
    data: Vec<[f64; 3]>,
}

impl VectorField3D {
    pub fn new(dims: [usize; 3]) -> Self {
        VectorField3D {
            dims,
            data: vec![[0.0; 3]; dims[0] * dims[1] * dims[2]],
        }
    }
    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
    #[inline]
    pub fn get(&self, c: Coord) -> [f64; 3] {
        self.data[coord_index(c, self.dims)]
    }
    #[inline]
    pub fn set(&mut self, c: Coord, v: [f64; 3]) {
        let i = coord_index(c, self.dims);
        self.data[i] = v;
    }
    #[inline]
    pub fn data(&self) -> &[[f64; 3]] {
        &self.data
    }
    #[inline]
    pub fn data_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.data
    }
    fn get_clamped(&self, c: Coord) -> [f64; 3] {
        let cc = [
            c[0].clamp(0, self.dims[0] as i64 - 1),
            c[1].clamp(0, self.dims[1] as i64 - 1),
            c[2].clamp(0, self.dims[2] as i64 - 1),
        ];
        self.get(cc)
    }

    /// Scaled sum of two fields.
    pub fn weighted_sum(a: &VectorField3D, wa: f64, b: &VectorField3D, wb: f64) -> VectorField3D {
        assert_eq!(a.dims, b.dims);
        let mut out = VectorField3D::new(a.dims);
        for (o, (x, y)) in out.data.iter_mut().zip(a.data.iter().zip(&b.data)) {
            for k in 0..3 {
                o[k] = wa * x[k] + wb * y[k];
            }
        }
        out
    }
}

/// Per-voxel orientation of a mask from the windowed (radius `w`) second
/// central moment matrix: the principal eigenvector, sign-aligned to already
/// visited neighbors. Also returns the 6-value eigenvalue summary block
/// (mean and std of each eigenvalue over mask voxels).
pub fn orientation_field(mask: &Mask3, w: u32) -> Result<(VectorField3D, FeatureBlock)> {
    if mask.count() == 0 {
        return Err(VoxError::domain("empty mask"));
    }
    let dims = mask.dims();
    let table = MomentTable::build(dims, mask.raw());
    let mut field = VectorField3D::new(dims);
    let r = w as i64;
    let n = dims[0] * dims[1] * dims[2];
    let mut ev_samples: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];

    for i in 0..n {
        let c = index_coord(i, dims);
        let lo = [c[0] - r, c[1] - r, c[2] - r];
        let hi = [c[0] + r, c[1] + r, c[2] + r];
        let Some(m) = table.query(lo, hi) else {
            continue;
        };
        if m.count < 1.5 {
            continue; // degenerate matrix: leave the zero vector
        }
        let mut v = match eig::principal_axis(&m.cov) {
            Some(v) => v,
            None => continue,
        };
        // Majority sign alignment with previously assigned 6-neighbors.
        let mut dot_sum = 0.0;
        for o in [[-1i64, 0, 0], [0, -1, 0], [0, 0, -1]] {
            let q = [c[0] + o[0], c[1] + o[1], c[2] + o[2]];
            if crate::volume::in_bounds(q, dims) {
                let u = field.get(q);
                dot_sum += u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
            }
        }
        if dot_sum < 0.0 {
            v = [-v[0], -v[1], -v[2]];
        }
        field.set(c, v);
        if mask.get(c) {
            let evs = eig::eigenvalues(&m.cov);
            for k in 0..3 {
                ev_samples[k].push(evs[k]);
            }
        }
    }

    let mut values = Vec::with_capacity(6);
    let mut layout = Vec::with_capacity(6);
    for k in 0..3 {
        let (mean, std) = stats::mean_std(&ev_samples[k]);
        layout.push(format!("orient_ev{k}_mean"));
        layout.push(format!("orient_ev{k}_std"));
        values.push(mean);
        values.push(std);
    }
    Ok((field, FeatureBlock::new("orientation", layout, values)))
}

fn gradient(vol: &Volume3D, c: Coord) -> [f64; 3] {
    let mut g = [0.0; 3];
    for axis in 0..3 {
        let mut lo = c;
        lo[axis] -= 1;
        let mut hi = c;
        hi[axis] += 1;
        g[axis] = (vol.get_clamped(hi) as f64 - vol.get_clamped(lo) as f64) / 2.0;
    }
    g
}

/// Gradient vector flow by fixed-point iteration of
/// `u += dt (mu lap(u) - |grad f|^2 (u - grad f))` with zero-flux borders.
pub fn gvf_field(bm: &Volume3D, mu: f64, iters: usize) -> VectorField3D {
    gvf_field_with_trace(bm, mu, iters).0
}

/// As `gvf_field` but also returns the per-step max-norm residual
/// `||u_{t+1} - u_t||_inf`.
pub fn gvf_field_with_trace(bm: &Volume3D, mu: f64, iters: usize) -> (VectorField3D, Vec<f64>) {
    let dims = bm.dims();
    let n = dims[0] * dims[1] * dims[2];
    let mut g = VectorField3D::new(dims);
    let mut mag2 = vec![0.0f64; n];
    for i in 0..n {
        let c = index_coord(i, dims);
        let gr = gradient(bm, c);
        g.data_mut()[i] = gr;
        mag2[i] = gr[0] * gr[0] + gr[1] * gr[1] + gr[2] * gr[2];
    }
    let mut u = g.clone();
    let dt = 0.125;
    let mut residuals = Vec::with_capacity(iters);
    let mut next = u.clone();
    for _ in 0..iters {
        let mut max_delta = 0.0f64;
        for i in 0..n {
            let c = index_coord(i, dims);
            let uc = u.data()[i];
            // 6-point Laplacian per component with replicated borders.
            let mut lap = [0.0; 3];
            for axis in 0..3 {
                let mut lo = c;
                lo[axis] -= 1;
                let mut hi = c;
                hi[axis] += 1;
                let ulo = u.get_clamped(lo);
                let uhi = u.get_clamped(hi);
                for k in 0..3 {
                    lap[k] += uhi[k] - 2.0 * uc[k] + ulo[k];
                }
            }
            let gi = g.data()[i];
            let mut un = [0.0; 3];
            for k in 0..3 {
                un[k] = uc[k] + dt * (mu * lap[k] - mag2[i] * (uc[k] - gi[k]));
                max_delta = max_delta.max((un[k] - uc[k]).abs());
            }
            next.data_mut()[i] = un;
        }
        std::mem::swap(&mut u, &mut next);
        residuals.push(max_delta);
    }
    (u, residuals)
}

/// The discretized GVF functional (forward differences), used as a
/// diagnostic for monotonicity checks.
pub fn gvf_energy(u: &VectorField3D, bm: &Volume3D, mu: f64) -> f64 {
    let dims = u.dims();
    let n = dims[0] * dims[1] * dims[2];
    let mut e = 0.0;
    for i in 0..n {
        let c = index_coord(i, dims);
        let g = gradient(bm, c);
        let mag2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
        let uc = u.data()[i];
        // |grad u|^2 via forward differences.
        for axis in 0..3 {
            let mut hi = c;
            hi[axis] += 1;
            if hi[axis] < dims[axis] as i64 {
                let uh = u.get(hi);
                for k in 0..3 {
                    e += mu * (uh[k] - uc[k]).powi(2);
                }
            }
        }
        let d = [uc[0] - g[0], uc[1] - g[1], uc[2] - g[2]];
        e += mag2 * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    }
    e
}

fn divergence(u: &VectorField3D, c: Coord) -> f64 {
    let mut d = 0.0;
    for axis in 0..3 {
        let mut lo = c;
        lo[axis] -= 1;
        let mut hi = c;
        hi[axis] += 1;
        d += (u.get_clamped(hi)[axis] - u.get_clamped(lo)[axis]) / 2.0;
    }
    d
}

fn curl(u: &VectorField3D, c: Coord) -> [f64; 3] {
    let p = |axis: usize, comp: usize| -> f64 {
        let mut lo = c;
        lo[axis] -= 1;
        let mut hi = c;
        hi[axis] += 1;
        (u.get_clamped(hi)[comp] - u.get_clamped(lo)[comp]) / 2.0
    };
    [
        p(1, 2) - p(2, 1),
        p(2, 0) - p(0, 2),
        p(0, 1) - p(1, 0),
    ]
}

/// [mean div, std div, mean |curl|, std |curl|] at the interface voxels.
pub fn gvf_features(u: &VectorField3D, interface: &[Coord]) -> FeatureBlock {
    let layout = vec![
        "gvf_div_mean".into(),
        "gvf_div_std".into(),
        "gvf_curl_mean".into(),
        "gvf_curl_std".into(),
    ];
    if interface.is_empty() {
        return FeatureBlock::new("gvf", layout, vec![0.0; 4]);
    }
    let divs: Vec<f64> = interface.iter().map(|&c| divergence(u, c)).collect();
    let curls: Vec<f64> = interface
        .iter()
        .map(|&c| {
            let cu = curl(u, c);
            (cu[0] * cu[0] + cu[1] * cu[1] + cu[2] * cu[2]).sqrt()
        })
        .collect();
    let (dm, ds) = stats::mean_std(&divs);
    let (cm, cs) = stats::mean_std(&curls);
    FeatureBlock::new("gvf", layout, vec![dm, ds, cm, cs])
}

/// Signed distance: positive outside the mask, negative inside, via two
/// exact distance transforms.
pub fn signed_distance(mask: &Mask3) -> Vec<f64> {
    let dims = mask.dims();
    let inv: Vec<bool> = mask.raw().iter().map(|&b| !b).collect();
    let d_out = edt::edt(dims, mask.raw()); // distance to the mask
    let d_in = edt::edt(dims, &inv); // distance to the background
    d_out
        .iter()
        .zip(&d_in)
        .map(|(&o, &i)| if i > 0.0 { -i } else { o })
        .collect()
}

/// 6-connected erosion by one voxel.
pub fn erode6(mask: &Mask3) -> Mask3 {
    let dims = mask.dims();
    let mut out = Mask3::new(dims);
    for (i, &b) in mask.raw().iter().enumerate() {
        if !b {
            continue;
        }
        let c = index_coord(i, dims);
        let keep = crate::volume::NEIGHBORS6
            .iter()
            .all(|o| mask.get_or_false([c[0] + o[0], c[1] + o[1], c[2] + o[2]]));
        if keep {
            out.raw_mut()[i] = true;
        }
    }
    out
}

/// Evolution controls; `steps` advection steps with reinitialization to a
/// signed distance function every `reinit_every` steps.
#[derive(Debug, Clone, Copy)]
pub struct EvolveParams {
    pub w_orient: f64,
    pub w_gvf: f64,
    pub steps: usize,
    pub reinit_every: usize,
}

impl Default for EvolveParams {
    fn default() -> Self {
        EvolveParams {
            w_orient: 1.0,
            w_gvf: 1.0,
            steps: 100,
            reinit_every: 20,
        }
    }
}

/// Evolve the (eroded) seed mask under pure advection `phi_t + V.grad phi = 0`
/// with upwind differencing; returns the final `{phi <= 0}` mask.
pub fn evolve_level_set(
    seed_mask: &Mask3,
    v_orient: &VectorField3D,
    v_gvf: &VectorField3D,
    params: &EvolveParams,
) -> Result<Mask3> {
    Ok(evolve_level_set_phi(seed_mask, v_orient, v_gvf, params)?.0)
}

/// As `evolve_level_set`, also returning the final level-set function and
/// the time step used.
pub fn evolve_level_set_phi(
    seed_mask: &Mask3,
    v_orient: &VectorField3D,
    v_gvf: &VectorField3D,
    params: &EvolveParams,
) -> Result<(Mask3, Vec<f64>, f64)> {
    let dims = seed_mask.dims();
    if v_orient.dims() != dims || v_gvf.dims() != dims {
        return Err(VoxError::argument("velocity field dims differ from mask"));
    }
    if seed_mask.count() == 0 {
        return Err(VoxError::domain("empty seed mask"));
    }
    let eroded = erode6(seed_mask);
    let seed = if eroded.count() > 0 { eroded } else { seed_mask.clone() };

    let v = VectorField3D::weighted_sum(v_orient, params.w_orient, v_gvf, params.w_gvf);
    // CFL: time step bounded so per-step displacement stays below one voxel.
    let vmax = v
        .data()
        .iter()
        .map(|u| u[0].abs() + u[1].abs() + u[2].abs())
        .fold(0.0f64, f64::max);
    let dt = if vmax > 0.0 { (0.5f64).min(0.9 / vmax) } else { 0.5 };

    let n = dims[0] * dims[1] * dims[2];
    let mut phi = signed_distance(&seed);
    let mut next = phi.clone();
    let at = |phi: &[f64], c: Coord| -> f64 {
        let cc = [
            c[0].clamp(0, dims[0] as i64 - 1),
            c[1].clamp(0, dims[1] as i64 - 1),
            c[2].clamp(0, dims[2] as i64 - 1),
        ];
        phi[coord_index(cc, dims)]
    };
    for step in 1..=params.steps {
        for i in 0..n {
            let c = index_coord(i, dims);
            let vel = v.data()[i];
            let mut adv = 0.0;
            for axis in 0..3 {
                let mut lo = c;
                lo[axis] -= 1;
                let mut hi = c;
                hi[axis] += 1;
                let dminus = phi[i] - at(&phi, lo);
                let dplus = at(&phi, hi) - phi[i];
                adv += vel[axis].max(0.0) * dminus + vel[axis].min(0.0) * dplus;
            }
            next[i] = phi[i] - dt * adv;
        }
        std::mem::swap(&mut phi, &mut next);
        if params.reinit_every > 0 && step % params.reinit_every == 0 && step != params.steps {
            let mut inside = Mask3::new(dims);
            for i in 0..n {
                if phi[i] <= 0.0 {
                    inside.raw_mut()[i] = true;
                }
            }
            if inside.count() > 0 && inside.count() < n as u64 {
                phi = signed_distance(&inside);
            }
        }
    }
    let mut out = Mask3::new(dims);
    for i in 0..n {
        if phi[i] <= 0.0 {
            out.raw_mut()[i] = true;
        }
    }
    Ok((out, phi, dt))
}

/// Overlap counts of the evolved masks with the opposite segments:
/// [o_ab, o_ba, mean, min, max, |o_ab - o_ba|].
pub fn overlap_features(
    pair: &SegmentMaskPair,
    evolved_a: &Mask3,
    evolved_b: &Mask3,
) -> FeatureBlock {
    let count_overlap = |evolved: &Mask3, other: &Mask3| -> f64 {
        evolved
            .raw()
            .iter()
            .zip(other.raw())
            .filter(|(&e, &o)| e && o)
            .count() as f64
    };
    let o_ab = count_overlap(evolved_a, &pair.mask_b);
    let o_ba = count_overlap(evolved_b, &pair.mask_a);
    FeatureBlock::new(
        "ls-overlap",
        vec![
            "ls_o_ab".into(),
            "ls_o_ba".into(),
            "ls_mean".into(),
            "ls_min".into(),
            "ls_max".into(),
            "ls_absdiff".into(),
        ],
        vec![
            o_ab,
            o_ba,
            (o_ab + o_ba) / 2.0,
            o_ab.min(o_ba),
            o_ab.max(o_ba),
            (o_ab - o_ba).abs(),
        ],
    )
}

/// Level-set configuration used by the pipeline orchestration.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct LevelSetConfig {
    pub moment_window: u32,
    pub gvf_mu: f64,
    pub gvf_iters: usize,
    pub evolve_steps: usize,
    pub reinit_every: usize,
    pub w_orient: f64,
    pub w_gvf: f64,
}

impl Default for LevelSetConfig {
    fn default() -> Self {
        LevelSetConfig {
            moment_window: 5,
            gvf_mu: 0.2,
            gvf_iters: 80,
            evolve_steps: 100,
            reinit_every: 20,
            w_orient: 1.0,
            w_gvf: 1.0,
        }
    }
}

fn mask_centroid(mask: &Mask3) -> Option<[f64; 3]> {
    let mut n = 0.0;
    let mut s = [0.0; 3];
    for (i, &b) in mask.raw().iter().enumerate() {
        if b {
            let c = index_coord(i, mask.dims());
            n += 1.0;
            for k in 0..3 {
                s[k] += c[k] as f64;
            }
        }
    }
    if n == 0.0 {
        None
    } else {
        Some([s[0] / n, s[1] / n, s[2] / n])
    }
}

/// Align every vector of the field so it points (weakly) along `dir`.
fn align_toward(field: &mut VectorField3D, dir: [f64; 3]) {
    for v in field.data_mut() {
        if v[0] * dir[0] + v[1] * dir[1] + v[2] * dir[2] < 0.0 {
            *v = [-v[0], -v[1], -v[2]];
        }
    }
}

/// The three level-set blocks of an edge: orientation eigen summary (6),
/// GVF curl/divergence stats (4) and evolution overlaps (6).
pub fn levelset_blocks(
    ctx: &EdgeContext,
    cfg: &LevelSetConfig,
) -> Result<(FeatureBlock, FeatureBlock, FeatureBlock)> {
    let (mut field_a, orient_a) = orientation_field(&ctx.pair.mask_a, cfg.moment_window)?;
    let (mut field_b, orient_b) = orientation_field(&ctx.pair.mask_b, cfg.moment_window)?;
    // The summary block combines both segments' eigen summaries by average,
    // keeping the block at 6 dims and symmetric in (a, b).
    let mut values = Vec::with_capacity(6);
    for k in 0..6 {
        values.push((orient_a.values[k] + orient_b.values[k]) / 2.0);
    }
    let orientation = FeatureBlock::new("orientation", orient_a.layout.clone(), values);

    let (gvf, _) = gvf_field_with_trace(&ctx.bm, cfg.gvf_mu, cfg.gvf_iters);
    let gvf_block = gvf_features(&gvf, &ctx.interface);

    // Direct the orientation fields from each segment toward the other.
    let ca = mask_centroid(&ctx.pair.mask_a);
    let cb = mask_centroid(&ctx.pair.mask_b);
    let params = EvolveParams {
        w_orient: cfg.w_orient,
        w_gvf: cfg.w_gvf,
        steps: cfg.evolve_steps,
        reinit_every: cfg.reinit_every,
    };
    let (evolved_a, evolved_b) = match (ca, cb) {
        (Some(ca), Some(cb)) => {
            let d_ab = [cb[0] - ca[0], cb[1] - ca[1], cb[2] - ca[2]];
            align_toward(&mut field_a, d_ab);
            align_toward(&mut field_b, [-d_ab[0], -d_ab[1], -d_ab[2]]);
            (
                evolve_level_set(&ctx.pair.mask_a, &field_a, &gvf, &params)?,
                evolve_level_set(&ctx.pair.mask_b, &field_b, &gvf, &params)?,
            )
        }
        _ => (ctx.pair.mask_a.clone(), ctx.pair.mask_b.clone()),
    };
    let overlap = overlap_features(&ctx.pair, &evolved_a, &evolved_b);
    Ok((orientation, gvf_block, overlap))
}
