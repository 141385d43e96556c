//! Unsupervised feature machinery: k-means codebooks with triangle soft
//! vector quantization, OMP-1 patch dictionaries, soft-threshold
//! reverse-polarity encoding with foveation, pooling regions (static and
//! dynamic), and raw end-to-end feature vectors.

use crate::error::{Result, VoxError};
use crate::features::SegmentMaskPair;
use crate::math::{edt, rng_for};
use crate::volume::{
    coord_index, extract_subvolume, in_bounds, Coord, Mask3, SubvolumeSpec, Volume3D,
};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

// ---------------------------------------------------------------------------
// Codebooks (k-means + triangle soft VQ)
// ---------------------------------------------------------------------------

/// A k-means codebook used for soft vector quantization.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub k: usize,
    pub dims: usize,
    /// Row-major centroids, k x dims.
    pub centroids: Vec<f64>,
    pub seed: u64,
    pub trained: bool,
}

impl Codebook {
    /// An untrained placeholder (queries against it are state errors).
    pub fn placeholder(k: usize, dims: usize) -> Codebook {
        Codebook {
            k,
            dims,
            centroids: vec![0.0; k * dims],
            seed: 0,
            trained: false,
        }
    }

    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dims..(j + 1) * self.dims]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's k-means with k-means++ initialization. Deterministic given the
/// seed; iterates to an assignment fixpoint or `iters` rounds. Returns the
/// codebook and the per-iteration inertia trace.
pub fn kmeans_train(
    samples: &[Vec<f64>],
    k: usize,
    seed: u64,
    iters: usize,
) -> Result<(Codebook, Vec<f64>)> {
    if k < 1 {
        return Err(VoxError::argument("k must be >= 1"));
    }
    if samples.len() < k {
        return Err(VoxError::argument(format!(
            "need at least k={k} samples, got {}",
            samples.len()
        )));
    }
    let dims = samples[0].len();
    if samples.iter().any(|s| s.len() != dims) {
        return Err(VoxError::argument("inconsistent sample dimensions"));
    }
    let mut rng = rng_for(seed, "kmeans-init");

    // k-means++ seeding.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.gen_range(0..samples.len());
    centroids.push(samples[first].clone());
    let mut d2: Vec<f64> = samples.iter().map(|s| sq_dist(s, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total <= 0.0 {
            // All remaining points coincide with a centroid; take the first
            // sample not yet chosen (or 0 when everything is a duplicate).
            (0..samples.len())
                .find(|&i| !centroids.contains(&samples[i]))
                .unwrap_or(0)
        } else {
            let mut target = rng.gen_range(0.0..total);
            let mut pick = samples.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        };
        centroids.push(samples[idx].clone());
        for (i, s) in samples.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(s, centroids.last().unwrap()));
        }
    }

    // Lloyd iterations.
    let mut assign = vec![usize::MAX; samples.len()];
    let mut inertia_trace = Vec::new();
    for _ in 0..iters.max(1) {
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, s) in samples.iter().enumerate() {
            let mut best = (f64::INFINITY, 0usize);
            for (j, c) in centroids.iter().enumerate() {
                let d = sq_dist(s, c);
                if d < best.0 {
                    best = (d, j);
                }
            }
            inertia += best.0;
            if assign[i] != best.1 {
                assign[i] = best.1;
                changed = true;
            }
        }
        inertia_trace.push(inertia);
        if !changed {
            break;
        }
        // Update.
        let mut sums = vec![vec![0.0f64; dims]; k];
        let mut counts = vec![0usize; k];
        for (i, s) in samples.iter().enumerate() {
            counts[assign[i]] += 1;
            for (a, v) in sums[assign[i]].iter_mut().zip(s) {
                *a += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                for (c, s) in centroids[j].iter_mut().zip(&sums[j]) {
                    *c = s / counts[j] as f64;
                }
            } else {
                // Re-seed an empty cluster at the point farthest from its
                // centroid (deterministic tie-break by index).
                let far = (0..samples.len())
                    .max_by(|&a, &b| {
                        sq_dist(&samples[a], &centroids[assign[a]])
                            .total_cmp(&sq_dist(&samples[b], &centroids[assign[b]]))
                            .then(b.cmp(&a))
                    })
                    .unwrap();
                centroids[j] = samples[far].clone();
            }
        }
    }

    let mut flat = Vec::with_capacity(k * dims);
    for c in centroids {
        flat.extend(c);
    }
    Ok((
        Codebook {
            k,
            dims,
            centroids: flat,
            seed,
            trained: true,
        },
        inertia_trace,
    ))
}

/// Triangle soft assignment: z_j = max(0, mu - d_j) with mu the mean of the
/// centroid distances.
pub fn triangle_encode(cb: &Codebook, x: &[f64]) -> Result<Vec<f64>> {
    if !cb.trained {
        return Err(VoxError::state("codebook is untrained"));
    }
    if x.len() != cb.dims {
        return Err(VoxError::argument(format!(
            "descriptor dim {} does not match codebook dims {}",
            x.len(),
            cb.dims
        )));
    }
    let d: Vec<f64> = (0..cb.k)
        .map(|j| sq_dist(x, cb.centroid(j)).sqrt())
        .collect();
    let mu = d.iter().sum::<f64>() / cb.k as f64;
    Ok(d.into_iter().map(|dj| (mu - dj).max(0.0)).collect())
}

// ---------------------------------------------------------------------------
// Patch dictionaries (OMP-1)
// ---------------------------------------------------------------------------

/// A learned patch dictionary: K unit-norm atoms over patch vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub k: usize,
    pub dims: usize,
    /// Row-major atoms, k x dims, each unit L2 norm.
    pub atoms: Vec<f32>,
    pub alpha: f64,
    pub seed: u64,
}

impl Dictionary {
    pub fn atom(&self, j: usize) -> &[f32] {
        &self.atoms[j * self.dims..(j + 1) * self.dims]
    }
}

fn normalize_f32(v: &mut [f32]) -> bool {
    let n = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if n < 1e-12 {
        return false;
    }
    for x in v.iter_mut() {
        *x = (*x as f64 / n) as f32;
    }
    true
}

/// Alternating single-atom assignment / atom update dictionary learning.
/// Returns the dictionary and the per-epoch reconstruction objective, which
/// is non-increasing.
pub fn omp1_train(
    patches: &[Vec<f32>],
    k: usize,
    seed: u64,
    epochs: usize,
    alpha: f64,
) -> Result<(Dictionary, Vec<f64>)> {
    if patches.len() < k {
        return Err(VoxError::argument(format!(
            "need at least K={k} patches, got {}",
            patches.len()
        )));
    }
    let dims = patches[0].len();
    if patches.iter().any(|p| p.len() != dims) {
        return Err(VoxError::argument("inconsistent patch dimensions"));
    }
    let mut rng = rng_for(seed, "omp1-init");
    // Initialize atoms from distinct random patches with nonzero norm.
    let mut order: Vec<usize> = (0..patches.len()).collect();
    order.shuffle(&mut rng);
    let mut atoms = vec![0f32; k * dims];
    let mut filled = 0usize;
    for &i in &order {
        if filled == k {
            break;
        }
        let mut cand = patches[i].clone();
        if normalize_f32(&mut cand) {
            atoms[filled * dims..(filled + 1) * dims].copy_from_slice(&cand);
            filled += 1;
        }
    }
    while filled < k {
        // Degenerate input (all-zero patches); fall back to unit axes.
        let mut cand = vec![0f32; dims];
        cand[filled % dims] = 1.0;
        atoms[filled * dims..(filled + 1) * dims].copy_from_slice(&cand);
        filled += 1;
    }

    let mut objective = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let mut acc = vec![0f64; k * dims];
        let mut assigned = vec![false; k];
        let mut obj = 0.0f64;
        for p in patches {
            // Single-atom assignment: maximize |d_j . x|.
            let mut best = (0.0f64, 0usize, 0.0f64); // (|dot|, j, dot)
            for j in 0..k {
                let d = &atoms[j * dims..(j + 1) * dims];
                let mut dot = 0.0f64;
                for (a, b) in d.iter().zip(p) {
                    dot += *a as f64 * *b as f64;
                }
                if dot.abs() > best.0 {
                    best = (dot.abs(), j, dot);
                }
            }
            let (_, j, s) = best;
            let norm2: f64 = p.iter().map(|&x| (x as f64) * (x as f64)).sum();
            obj += norm2 - s * s;
            assigned[j] = true;
            for (a, b) in acc[j * dims..(j + 1) * dims].iter_mut().zip(p) {
                *a += s * *b as f64;
            }
        }
        objective.push(obj);
        for j in 0..k {
            if assigned[j] {
                let n = acc[j * dims..(j + 1) * dims]
                    .iter()
                    .map(|x| x * x)
                    .sum::<f64>()
                    .sqrt();
                if n > 1e-12 {
                    for (a, s) in atoms[j * dims..(j + 1) * dims]
                        .iter_mut()
                        .zip(&acc[j * dims..(j + 1) * dims])
                    {
                        *a = (s / n) as f32;
                    }
                }
            } else {
                // Dead atom: re-seed from a random patch.
                for _ in 0..patches.len() {
                    let i = rng.gen_range(0..patches.len());
                    let mut cand = patches[i].clone();
                    if normalize_f32(&mut cand) {
                        atoms[j * dims..(j + 1) * dims].copy_from_slice(&cand);
                        break;
                    }
                }
            }
        }
    }

    Ok((
        Dictionary {
            k,
            dims,
            atoms,
            alpha,
            seed,
        },
        objective,
    ))
}

// ---------------------------------------------------------------------------
// Window channels and patch extraction
// ---------------------------------------------------------------------------

/// The three input channels of the unsupervised encoder over one window:
/// raw image, boundary map, and the union segment mask.
#[derive(Debug, Clone)]
pub struct WindowChannels {
    pub image: Volume3D,
    pub bm: Volume3D,
    pub mask: Volume3D,
}

impl WindowChannels {
    pub fn new(image: Volume3D, bm: Volume3D, mask: Volume3D) -> Result<Self> {
        if image.dims() != bm.dims() || image.dims() != mask.dims() {
            return Err(VoxError::argument("channel dims differ"));
        }
        Ok(WindowChannels { image, bm, mask })
    }

    pub fn from_pair(image: Volume3D, bm: Volume3D, pair: &SegmentMaskPair) -> Result<Self> {
        let dims = pair.mask_a.dims();
        let mut union = Mask3::new(dims);
        for i in 0..union.raw().len() {
            union.raw_mut()[i] = pair.mask_a.raw()[i] || pair.mask_b.raw()[i];
        }
        WindowChannels::new(image, bm, union.to_volume())
    }

    pub fn dims(&self) -> [usize; 3] {
        self.image.dims()
    }

    /// Block-mean downsample of every channel by two (partial border blocks
    /// average their in-bounds voxels).
    pub fn downsample2(&self) -> WindowChannels {
        WindowChannels {
            image: downsample2(&self.image),
            bm: downsample2(&self.bm),
            mask: downsample2(&self.mask),
        }
    }
}

fn downsample2(vol: &Volume3D) -> Volume3D {
    let dims = vol.dims();
    let od = [
        dims[0].div_ceil(2),
        dims[1].div_ceil(2),
        dims[2].div_ceil(2),
    ];
    let mut out = Volume3D::new(od, 0.0);
    for z in 0..od[2] as i64 {
        for y in 0..od[1] as i64 {
            for x in 0..od[0] as i64 {
                let mut acc = 0.0f64;
                let mut n = 0.0;
                for bz in 0..2 {
                    for by in 0..2 {
                        for bx in 0..2 {
                            let c = [2 * x + bx, 2 * y + by, 2 * z + bz];
                            if in_bounds(c, dims) {
                                acc += vol.get(c) as f64;
                                n += 1.0;
                            }
                        }
                    }
                }
                out.set([x, y, z], (acc / n) as f32);
            }
        }
    }
    out
}

/// Patch side used throughout the encoder.
pub const PATCH_SIDE: usize = 5;
const PATCH_HALF: i64 = (PATCH_SIDE as i64 - 1) / 2;

/// Patch vector length for the 3 channels.
pub fn patch_dims() -> usize {
    3 * PATCH_SIDE * PATCH_SIDE * PATCH_SIDE
}

/// Extract the normalized patch vector centered at `c` (channel-major,
/// x-fastest). The center must allow a full 5^3 patch.
fn patch_at(ch: &WindowChannels, c: Coord) -> Vec<f32> {
    let dims = ch.dims();
    debug_assert!((0..3).all(|a| c[a] >= PATCH_HALF && c[a] < dims[a] as i64 - PATCH_HALF));
    let mut v = Vec::with_capacity(patch_dims());
    for vol in [&ch.image, &ch.bm, &ch.mask] {
        for dz in -PATCH_HALF..=PATCH_HALF {
            for dy in -PATCH_HALF..=PATCH_HALF {
                for dx in -PATCH_HALF..=PATCH_HALF {
                    v.push(vol.get([c[0] + dx, c[1] + dy, c[2] + dz]));
                }
            }
        }
    }
    normalize_patch(&mut v);
    v
}

/// Mean-subtract and contrast-normalize a raw patch vector in place.
pub fn normalize_patch(v: &mut [f32]) {
    let n = v.len() as f64;
    let mean = v.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = v.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + 1e-4;
    for x in v.iter_mut() {
        *x = ((*x as f64 - mean) / denom) as f32;
    }
}

/// All 5^3 patches at valid centers of the (possibly downsampled) window.
pub fn extract_patches(ch: &WindowChannels, scale: u32) -> Result<Vec<Vec<f32>>> {
    let scaled;
    let ch = match scale {
        1 => ch,
        2 => {
            scaled = ch.downsample2();
            &scaled
        }
        other => {
            return Err(VoxError::argument(format!(
                "unsupported scale {other}; expected 1 or 2"
            )))
        }
    };
    let dims = ch.dims();
    if dims.iter().any(|&d| d < PATCH_SIDE) {
        return Err(VoxError::argument(format!(
            "window {dims:?} smaller than patch side {PATCH_SIDE}"
        )));
    }
    let mut out = Vec::new();
    for z in PATCH_HALF..dims[2] as i64 - PATCH_HALF {
        for y in PATCH_HALF..dims[1] as i64 - PATCH_HALF {
            for x in PATCH_HALF..dims[0] as i64 - PATCH_HALF {
                out.push(patch_at(ch, [x, y, z]));
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Encoding and pooling
// ---------------------------------------------------------------------------

/// Encoder settings: both scales share K and the soft threshold.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub k: usize,
    pub alpha: f64,
    pub fove_radius: i64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            k: 1000,
            alpha: 0.25,
            fove_radius: 2,
        }
    }
}

impl EncoderConfig {
    /// Length of one encoded location: 2 scales x (center + foveated) x 2K.
    pub fn encoded_len(&self) -> usize {
        8 * self.k
    }
}

/// The per-scale dictionary pair.
#[derive(Debug, Clone)]
pub struct DictPair {
    pub scale1: Dictionary,
    pub scale2: Dictionary,
}

impl DictPair {
    pub fn validate(&self, cfg: &EncoderConfig) -> Result<()> {
        for (name, d) in [("scale1", &self.scale1), ("scale2", &self.scale2)] {
            if d.k != cfg.k {
                return Err(VoxError::state(format!(
                    "{name} dictionary has K={} but config wants {}",
                    d.k, cfg.k
                )));
            }
            if d.dims != patch_dims() {
                return Err(VoxError::state(format!(
                    "{name} dictionary dims {} do not match patch dims {}",
                    d.dims,
                    patch_dims()
                )));
            }
        }
        Ok(())
    }
}

/// Soft-threshold reverse-polarity code of one patch: [relu(D x - alpha);
/// relu(-D x - alpha)], length 2K.
fn center_code(dict: &Dictionary, alpha: f32, patch: &[f32], out: &mut [f32]) {
    let k = dict.k;
    let dims = dict.dims;
    for j in 0..k {
        let atom = &dict.atoms[j * dims..(j + 1) * dims];
        let mut dot = 0.0f32;
        for (a, b) in atom.iter().zip(patch) {
            dot += a * b;
        }
        out[j] = (dot - alpha).max(0.0);
        out[k + j] = (-dot - alpha).max(0.0);
    }
}

/// Precomputed center codes over the locations of one window that a pooling
/// pass needs, per scale. Codes are computed lazily per location set but
/// deterministically (location order is voxel-index order).
pub struct WindowEncoder<'a> {
    channels: WindowChannels,
    channels2: WindowChannels,
    dicts: &'a DictPair,
    cfg: EncoderConfig,
    codes1: Vec<Option<Box<[f32]>>>,
    codes2: Vec<Option<Box<[f32]>>>,
}

impl<'a> WindowEncoder<'a> {
    pub fn new(channels: WindowChannels, dicts: &'a DictPair, cfg: EncoderConfig) -> Result<Self> {
        dicts.validate(&cfg)?;
        let dims = channels.dims();
        if dims.iter().any(|&d| d < 2 * PATCH_SIDE) {
            return Err(VoxError::argument(format!(
                "window {dims:?} too small for two-scale encoding"
            )));
        }
        let channels2 = channels.downsample2();
        let n1 = dims[0] * dims[1] * dims[2];
        let d2 = channels2.dims();
        let n2 = d2[0] * d2[1] * d2[2];
        Ok(WindowEncoder {
            channels,
            channels2,
            dicts,
            cfg,
            codes1: vec![None; n1],
            codes2: vec![None; n2],
        })
    }

    fn clamp_center(c: Coord, dims: [usize; 3]) -> Coord {
        [
            c[0].clamp(PATCH_HALF, dims[0] as i64 - 1 - PATCH_HALF),
            c[1].clamp(PATCH_HALF, dims[1] as i64 - 1 - PATCH_HALF),
            c[2].clamp(PATCH_HALF, dims[2] as i64 - 1 - PATCH_HALF),
        ]
    }

    fn code_at(&mut self, scale: usize, c: Coord) -> &[f32] {
        let (dims, alpha) = if scale == 1 {
            (self.channels.dims(), self.cfg.alpha as f32)
        } else {
            (self.channels2.dims(), self.cfg.alpha as f32)
        };
        let cc = Self::clamp_center(c, dims);
        let idx = coord_index(cc, dims);
        let slot = if scale == 1 {
            &mut self.codes1[idx]
        } else {
            &mut self.codes2[idx]
        };
        if slot.is_none() {
            let (ch, dict) = if scale == 1 {
                (&self.channels, &self.dicts.scale1)
            } else {
                (&self.channels2, &self.dicts.scale2)
            };
            let patch = patch_at(ch, cc);
            let mut code = vec![0f32; 2 * self.cfg.k].into_boxed_slice();
            center_code(dict, alpha, &patch, &mut code);
            *slot = Some(code);
        }
        if scale == 1 {
            self.codes1[idx].as_deref().unwrap()
        } else {
            self.codes2[idx].as_deref().unwrap()
        }
    }

    /// Foveated code: element-wise max of center codes over the Chebyshev
    /// ball of the configured radius (in the scale's own grid).
    fn fove_code(&mut self, scale: usize, c: Coord) -> Vec<f32> {
        let r = self.cfg.fove_radius;
        let mut out = vec![f32::NEG_INFINITY; 2 * self.cfg.k];
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    let q = [c[0] + dx, c[1] + dy, c[2] + dz];
                    let code = self.code_at(scale, q);
                    for (o, &v) in out.iter_mut().zip(code.iter()) {
                        if v > *o {
                            *o = v;
                        }
                    }
                }
            }
        }
        out
    }

    /// Full encoded vector at a location (window coordinates): per scale the
    /// center code then the foveated code; scales concatenated. Length 8K.
    pub fn encode_location(&mut self, loc: Coord) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.cfg.encoded_len());
        for scale in [1usize, 2] {
            let c = if scale == 1 {
                loc
            } else {
                [loc[0] / 2, loc[1] / 2, loc[2] / 2]
            };
            let center: Vec<f32> = self.code_at(scale, c).to_vec();
            let fove = self.fove_code(scale, c);
            out.extend(center.iter().map(|&v| v as f64));
            out.extend(fove.iter().map(|&v| v as f64));
        }
        out
    }

    /// Arithmetic mean of `encode_location` over a region (empty region
    /// yields the zero vector). Accumulation order is the region order.
    pub fn pooled_feature(&mut self, region: &[Coord]) -> Vec<f64> {
        let len = self.cfg.encoded_len();
        let mut acc = vec![0.0f64; len];
        if region.is_empty() {
            return acc;
        }
        for &loc in region {
            let e = self.encode_location(loc);
            for (a, v) in acc.iter_mut().zip(e) {
                *a += v;
            }
        }
        let inv = 1.0 / region.len() as f64;
        for a in &mut acc {
            *a *= inv;
        }
        acc
    }
}

/// Standalone one-location encoding (convenience over `WindowEncoder`).
pub fn encode_location(
    channels: &WindowChannels,
    dicts: &DictPair,
    cfg: &EncoderConfig,
    loc: Coord,
) -> Result<Vec<f64>> {
    let mut enc = WindowEncoder::new(channels.clone(), dicts, *cfg)?;
    Ok(enc.encode_location(loc))
}

// ---------------------------------------------------------------------------
// Pooling regions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolKind {
    Midpoint,
    StaticAll,
    DynObj,
    DynBnd,
}

impl PoolKind {
    pub fn parse(s: &str) -> Result<PoolKind> {
        match s {
            "midpoint" => Ok(PoolKind::Midpoint),
            "static-all" => Ok(PoolKind::StaticAll),
            "dyn-obj" => Ok(PoolKind::DynObj),
            "dyn-bnd" => Ok(PoolKind::DynBnd),
            other => Err(VoxError::argument(format!("unknown pool kind {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PoolKind::Midpoint => "midpoint",
            PoolKind::StaticAll => "static-all",
            PoolKind::DynObj => "dyn-obj",
            PoolKind::DynBnd => "dyn-bnd",
        }
    }
}

/// Build a pooling region over the window. Dynamic kinds may legitimately be
/// empty. Voxel-index ordered.
pub fn make_pool_region(
    pair: &SegmentMaskPair,
    dp: Coord,
    kind: PoolKind,
    radius: u32,
) -> Vec<Coord> {
    let dims = pair.mask_a.dims();
    match kind {
        PoolKind::Midpoint => vec![dp],
        PoolKind::StaticAll => cheb_ball_region(dp, radius, dims, |_| true),
        PoolKind::DynObj => cheb_ball_region(dp, radius, dims, |i| {
            pair.mask_a.raw()[i] || pair.mask_b.raw()[i]
        }),
        PoolKind::DynBnd => {
            // Dilate both masks by half the window radius (Euclidean) and
            // intersect.
            let rho = radius as f64 / 2.0;
            let rho2 = rho * rho;
            let da = edt::edt_sq(dims, pair.mask_a.raw());
            let db = edt::edt_sq(dims, pair.mask_b.raw());
            // Allow for floating-point representation of integer distances.
            let eps = 1e-9;
            cheb_ball_region(dp, radius, dims, |i| {
                da[i] <= rho2 + eps && db[i] <= rho2 + eps
            })
        }
    }
}

fn cheb_ball_region(
    dp: Coord,
    radius: u32,
    dims: [usize; 3],
    keep: impl Fn(usize) -> bool,
) -> Vec<Coord> {
    let r = radius as i64;
    let mut out = Vec::new();
    for z in (dp[2] - r).max(0)..=(dp[2] + r).min(dims[2] as i64 - 1) {
        for y in (dp[1] - r).max(0)..=(dp[1] + r).min(dims[1] as i64 - 1) {
            for x in (dp[0] - r).max(0)..=(dp[0] + r).min(dims[0] as i64 - 1) {
                let c = [x, y, z];
                if keep(coord_index(c, dims)) {
                    out.push(c);
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// End-to-end raw vectors
// ---------------------------------------------------------------------------

/// Raw multiscale feature vector: per scale, the four windowed channels
/// (image, boundary map, mask a, mask b) flattened and concatenated.
/// Length per scale is 4 * (2r/d + 1)^3.
pub fn end_to_end_vector(
    image: &Volume3D,
    bm: &Volume3D,
    mask_a: &Volume3D,
    mask_b: &Volume3D,
    scales: &[SubvolumeSpec],
) -> Result<Vec<f64>> {
    let dims = image.dims();
    for (name, v) in [("bm", bm), ("mask_a", mask_a), ("mask_b", mask_b)] {
        if v.dims() != dims {
            return Err(VoxError::argument(format!("{name} dims differ from image")));
        }
    }
    if scales.is_empty() {
        return Err(VoxError::argument("need at least one scale"));
    }
    let image_mean = image.mean() as f32;
    let mut out = Vec::new();
    for spec in scales {
        for (vol, pad) in [
            (image, image_mean),
            (bm, 0.0f32),
            (mask_a, 0.0),
            (mask_b, 0.0),
        ] {
            let w = extract_subvolume(vol, spec, pad)?;
            out.extend(w.data().iter().map(|&v| v as f64));
        }
    }
    Ok(out)
}

/// Total end-to-end dimensionality for a list of scales.
pub fn end_to_end_len(scales: &[SubvolumeSpec]) -> usize {
    scales
        .iter()
        .map(|s| {
            let side = s.side();
            4 * side * side * side
        })
        .sum()
}

// ---------------------------------------------------------------------------
// DICT1 / CODEBOOK1 file formats
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct Dict1Header {
    magic: String,
    #[serde(rename = "K")]
    k: usize,
    dims: usize,
    alpha: f64,
    seed: u64,
}

impl Dictionary {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = Dict1Header {
            magic: "DICT1".into(),
            k: self.k,
            dims: self.dims,
            alpha: self.alpha,
            seed: self.seed,
        };
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for v in &self.atoms {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dictionary> {
        let (header_bytes, raw) = read_header_and_payload(path)?;
        let header: Dict1Header = serde_json::from_slice(&header_bytes)
            .map_err(|e| VoxError::format(format!("bad DICT1 header: {e}")))?;
        if header.magic != "DICT1" {
            return Err(VoxError::format(format!("bad magic {:?}", header.magic)));
        }
        let expected = header.k * header.dims * 4;
        if raw.len() != expected {
            return Err(VoxError::format(format!(
                "payload size mismatch: expected {expected} bytes, found {}",
                raw.len()
            )));
        }
        Ok(Dictionary {
            k: header.k,
            dims: header.dims,
            atoms: raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
            alpha: header.alpha,
            seed: header.seed,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Codebook1Header {
    magic: String,
    k: usize,
    dims: usize,
    seed: u64,
}

impl Codebook {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        if !self.trained {
            return Err(VoxError::state("refusing to save an untrained codebook"));
        }
        let header = Codebook1Header {
            magic: "CODEBOOK1".into(),
            k: self.k,
            dims: self.dims,
            seed: self.seed,
        };
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for v in &self.centroids {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Codebook> {
        let (header_bytes, raw) = read_header_and_payload(path)?;
        let header: Codebook1Header = serde_json::from_slice(&header_bytes)
            .map_err(|e| VoxError::format(format!("bad CODEBOOK1 header: {e}")))?;
        if header.magic != "CODEBOOK1" {
            return Err(VoxError::format(format!("bad magic {:?}", header.magic)));
        }
        let expected = header.k * header.dims * 4;
        if raw.len() != expected {
            return Err(VoxError::format(format!(
                "payload size mismatch: expected {expected} bytes, found {}",
                raw.len()
            )));
        }
        Ok(Codebook {
            k: header.k,
            dims: header.dims,
            centroids: raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect(),
            seed: header.seed,
            trained: true,
        })
    }
}

fn read_header_and_payload(path: impl AsRef<Path>) -> Result<(Vec<u8>, Vec<u8>)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = r.read(&mut byte)?;
        if n == 0 {
            return Err(VoxError::format("missing header newline"));
        }
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    Ok((header, payload))
}
