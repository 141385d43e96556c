//! Dense 3D grids, affinity graphs, subvolume windowing, and VOL1 file I/O.
//!
//! Storage is canonical x-fastest: index = x + nx*(y + ny*z). All voxel
//! coordinates are (x, y, z) integer triples.

use crate::error::{Result, VoxError};
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// An (x, y, z) voxel coordinate. May be out of bounds when used as a probe.
pub type Coord = [i64; 3];

#[inline]
pub fn coord_index(c: Coord, dims: [usize; 3]) -> usize {
    debug_assert!(in_bounds(c, dims));
    (c[2] as usize * dims[1] + c[1] as usize) * dims[0] + c[0] as usize
}

#[inline]
pub fn index_coord(i: usize, dims: [usize; 3]) -> Coord {
    let [nx, ny, _] = dims;
    [
        (i % nx) as i64,
        ((i / nx) % ny) as i64,
        (i / (nx * ny)) as i64,
    ]
}

#[inline]
pub fn in_bounds(c: Coord, dims: [usize; 3]) -> bool {
    (0..3).all(|a| c[a] >= 0 && c[a] < dims[a] as i64)
}

/// The six face-neighbor offsets (+x, -x, +y, -y, +z, -z).
pub const NEIGHBORS6: [Coord; 6] = [
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];

/// The 26 offsets with Chebyshev distance 1.
pub fn neighbors26() -> Vec<Coord> {
    let mut v = Vec::with_capacity(26);
    for dz in -1..=1i64 {
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                if dx != 0 || dy != 0 || dz != 0 {
                    v.push([dx, dy, dz]);
                }
            }
        }
    }
    v
}

fn check_dims(dims: [usize; 3]) -> Result<()> {
    if dims.iter().any(|&d| d == 0) {
        return Err(VoxError::argument(format!("all dims must be >= 1, got {dims:?}")));
    }
    Ok(())
}

/// Dense scalar 3D grid stored as f32 in x-fastest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: [usize; 3],
    data: Vec<f32>,
}

impl Volume3D {
    pub fn new(dims: [usize; 3], fill: f32) -> Self {
        check_dims(dims).expect("invalid dims");
        Volume3D {
            dims,
            data: vec![fill; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<f32>) -> Result<Self> {
        check_dims(dims)?;
        if data.len() != dims[0] * dims[1] * dims[2] {
            return Err(VoxError::argument(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Volume3D { dims, data })
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
    #[inline]
    pub fn get(&self, c: Coord) -> f32 {
        self.data[coord_index(c, self.dims)]
    }
    #[inline]
    pub fn set(&mut self, c: Coord, v: f32) {
        let i = coord_index(c, self.dims);
        self.data[i] = v;
    }
    /// Value at `c`, or `pad` when out of bounds.
    #[inline]
    pub fn get_or(&self, c: Coord, pad: f32) -> f32 {
        if in_bounds(c, self.dims) {
            self.get(c)
        } else {
            pad
        }
    }
    /// Value with coordinates clamped into bounds (replicated border).
    #[inline]
    pub fn get_clamped(&self, c: Coord) -> f32 {
        let cc = [
            c[0].clamp(0, self.dims[0] as i64 - 1),
            c[1].clamp(0, self.dims[1] as i64 - 1),
            c[2].clamp(0, self.dims[2] as i64 - 1),
        ];
        self.get(cc)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_vol1(path, self.dims, 1, "f32", F32Payload(&[&self.data]))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (header, payload) = read_vol1(path, "f32")?;
        if header.channels != 1 {
            return Err(VoxError::format(format!(
                "expected 1 channel, found {}",
                header.channels
            )));
        }
        Volume3D::from_vec(header.dims_usize()?, payload.into_f32())
    }
}

/// Binary voxel mask over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask3 {
    dims: [usize; 3],
    data: Vec<bool>,
}

impl Mask3 {
    pub fn new(dims: [usize; 3]) -> Self {
        Mask3 {
            dims,
            data: vec![false; dims[0] * dims[1] * dims[2]],
        }
    }
    pub fn from_vec(dims: [usize; 3], data: Vec<bool>) -> Self {
        assert_eq!(data.len(), dims[0] * dims[1] * dims[2]);
        Mask3 { dims, data }
    }
    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
    #[inline]
    pub fn get(&self, c: Coord) -> bool {
        self.data[coord_index(c, self.dims)]
    }
    /// False outside the grid.
    #[inline]
    pub fn get_or_false(&self, c: Coord) -> bool {
        in_bounds(c, self.dims) && self.get(c)
    }
    #[inline]
    pub fn set(&mut self, c: Coord, v: bool) {
        let i = coord_index(c, self.dims);
        self.data[i] = v;
    }
    #[inline]
    pub fn raw(&self) -> &[bool] {
        &self.data
    }
    #[inline]
    pub fn raw_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }
    pub fn count(&self) -> u64 {
        self.data.iter().filter(|&&b| b).count() as u64
    }
    /// Coordinates of set voxels in index order.
    pub fn voxels(&self) -> Vec<Coord> {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| index_coord(i, self.dims))
            .collect()
    }
    /// As a 0/1 float volume.
    pub fn to_volume(&self) -> Volume3D {
        Volume3D {
            dims: self.dims,
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Per-voxel 3-channel edge affinities in [0,1]; channel k holds the edge
/// from each voxel to its +x/+y/+z neighbor (6-connectivity).
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    dims: [usize; 3],
    channels: [Vec<f32>; 3],
}

impl AffinityGraph {
    pub fn new(dims: [usize; 3], fill: f32) -> Self {
        check_dims(dims).expect("invalid dims");
        let n = dims[0] * dims[1] * dims[2];
        AffinityGraph {
            dims,
            channels: [vec![fill; n], vec![fill; n], vec![fill; n]],
        }
    }

    pub fn from_channels(dims: [usize; 3], channels: [Vec<f32>; 3]) -> Result<Self> {
        check_dims(dims)?;
        let n = dims[0] * dims[1] * dims[2];
        for (k, ch) in channels.iter().enumerate() {
            if ch.len() != n {
                return Err(VoxError::argument(format!(
                    "channel {k} length {} does not match dims {:?}",
                    ch.len(),
                    dims
                )));
            }
            if ch.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(VoxError::argument(format!(
                    "channel {k} has values outside [0,1]"
                )));
            }
        }
        Ok(AffinityGraph { dims, channels })
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
    #[inline]
    pub fn channel(&self, axis: usize) -> &[f32] {
        &self.channels[axis]
    }
    #[inline]
    pub fn channel_mut(&mut self, axis: usize) -> &mut [f32] {
        &mut self.channels[axis]
    }
    /// Affinity of the edge from `c` to its +axis neighbor.
    #[inline]
    pub fn edge(&self, c: Coord, axis: usize) -> f32 {
        self.channels[axis][coord_index(c, self.dims)]
    }
    #[inline]
    pub fn set_edge(&mut self, c: Coord, axis: usize, v: f32) {
        let i = coord_index(c, self.dims);
        self.channels[axis][i] = v;
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_vol1(
            path,
            self.dims,
            3,
            "f32",
            F32Payload(&[&self.channels[0], &self.channels[1], &self.channels[2]]),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (header, payload) = read_vol1(path, "f32")?;
        if header.channels != 3 {
            return Err(VoxError::format(format!(
                "expected 3 channels, found {}",
                header.channels
            )));
        }
        let dims = header.dims_usize()?;
        let n = dims[0] * dims[1] * dims[2];
        let all = payload.into_f32();
        let ax = all[..n].to_vec();
        let ay = all[n..2 * n].to_vec();
        let az = all[2 * n..].to_vec();
        AffinityGraph::from_channels(dims, [ax, ay, az])
    }
}

/// Window specification: integer center, radius in voxels, and integer
/// downsampling factor. The output side is `2r/d + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubvolumeSpec {
    pub center: Coord,
    pub radius: u32,
    pub downsample: u32,
}

impl SubvolumeSpec {
    pub fn new(center: Coord, radius: u32, downsample: u32) -> Result<Self> {
        if downsample == 0 {
            return Err(VoxError::argument("downsample must be >= 1"));
        }
        if downsample > 1 && radius % downsample != 0 {
            return Err(VoxError::argument(format!(
                "radius {radius} must be divisible by downsample {downsample}"
            )));
        }
        Ok(SubvolumeSpec {
            center,
            radius,
            downsample,
        })
    }

    pub fn side(&self) -> usize {
        (2 * self.radius / self.downsample + 1) as usize
    }
}

/// Extract a windowed, optionally block-mean downsampled subvolume.
///
/// Output voxel (i,j,k) averages the d^3 input block whose origin is
/// `center - r + (i,j,k)*d`; out-of-bounds voxels contribute `pad_value`.
pub fn extract_subvolume(vol: &Volume3D, spec: &SubvolumeSpec, pad_value: f32) -> Result<Volume3D> {
    if !in_bounds(spec.center, vol.dims()) {
        return Err(VoxError::domain(format!(
            "center {:?} outside volume dims {:?}",
            spec.center,
            vol.dims()
        )));
    }
    let side = spec.side();
    let d = spec.downsample as i64;
    let r = spec.radius as i64;
    let mut out = Volume3D::new([side, side, side], 0.0);
    let inv = 1.0 / (d * d * d) as f64;
    for k in 0..side as i64 {
        for j in 0..side as i64 {
            for i in 0..side as i64 {
                let origin = [
                    spec.center[0] - r + i * d,
                    spec.center[1] - r + j * d,
                    spec.center[2] - r + k * d,
                ];
                let mut acc = 0.0f64;
                for bz in 0..d {
                    for by in 0..d {
                        for bx in 0..d {
                            acc += vol.get_or([origin[0] + bx, origin[1] + by, origin[2] + bz], pad_value)
                                as f64;
                        }
                    }
                }
                out.set([i, j, k], (acc * inv) as f32);
            }
        }
    }
    Ok(out)
}

/// Collapse an affinity graph to a boundary map by averaging the three
/// channels per voxel.
pub fn affinity_to_boundary_map(aff: &AffinityGraph) -> Volume3D {
    let n = aff.channels[0].len();
    let mut data = Vec::with_capacity(n);
    for i in 0..n {
        data.push(
            ((aff.channels[0][i] as f64 + aff.channels[1][i] as f64 + aff.channels[2][i] as f64)
                / 3.0) as f32,
        );
    }
    Volume3D {
        dims: aff.dims,
        data,
    }
}

// ---------------------------------------------------------------------------
// VOL1 file format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub(crate) struct Vol1Header {
    pub magic: String,
    pub dims: [u64; 3],
    pub channels: u32,
    pub dtype: String,
}

impl Vol1Header {
    fn dims_usize(&self) -> Result<[usize; 3]> {
        Ok([
            self.dims[0] as usize,
            self.dims[1] as usize,
            self.dims[2] as usize,
        ])
    }
}

pub(crate) enum Payload {
    F32(Vec<f32>),
    U32(Vec<u32>),
}

impl Payload {
    fn into_f32(self) -> Vec<f32> {
        match self {
            Payload::F32(v) => v,
            Payload::U32(_) => unreachable!(),
        }
    }
    pub(crate) fn into_u32(self) -> Vec<u32> {
        match self {
            Payload::U32(v) => v,
            Payload::F32(_) => unreachable!(),
        }
    }
}

pub(crate) struct F32Payload<'a>(pub &'a [&'a [f32]]);

pub(crate) fn write_vol1(
    path: impl AsRef<Path>,
    dims: [usize; 3],
    channels: u32,
    dtype: &str,
    payload: F32Payload,
) -> Result<()> {
    let header = Vol1Header {
        magic: "VOL1".into(),
        dims: [dims[0] as u64, dims[1] as u64, dims[2] as u64],
        channels,
        dtype: dtype.into(),
    };
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for ch in payload.0 {
        for v in ch.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn write_vol1_u32(
    path: impl AsRef<Path>,
    dims: [usize; 3],
    data: &[u32],
) -> Result<()> {
    let header = Vol1Header {
        magic: "VOL1".into(),
        dims: [dims[0] as u64, dims[1] as u64, dims[2] as u64],
        channels: 1,
        dtype: "u32".into(),
    };
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn read_vol1(path: impl AsRef<Path>, want_dtype: &str) -> Result<(Vol1Header, Payload)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut header_bytes = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = r.read(&mut byte)?;
        if n == 0 {
            return Err(VoxError::format("missing header newline"));
        }
        if byte[0] == b'\n' {
            break;
        }
        header_bytes.push(byte[0]);
        if header_bytes.len() > 1 << 16 {
            return Err(VoxError::format("unreasonably long header"));
        }
    }
    let header: Vol1Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| VoxError::format(format!("bad header json: {e}")))?;
    if header.magic != "VOL1" {
        return Err(VoxError::format(format!("bad magic {:?}", header.magic)));
    }
    if header.dtype != want_dtype {
        return Err(VoxError::format(format!(
            "unsupported dtype {:?} (expected {want_dtype})",
            header.dtype
        )));
    }
    if header.dims.iter().any(|&d| d == 0) {
        return Err(VoxError::format("zero dimension in header"));
    }
    let count = header.dims[0] as usize * header.dims[1] as usize * header.dims[2] as usize
        * header.channels as usize;
    let expected_bytes = count * 4;
    let mut raw = Vec::with_capacity(expected_bytes);
    r.read_to_end(&mut raw)?;
    if raw.len() != expected_bytes {
        return Err(VoxError::format(format!(
            "payload size mismatch: expected {expected_bytes} bytes, found {}",
            raw.len()
        )));
    }
    let payload = match want_dtype {
        "f32" => Payload::F32(
            raw.chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
        ),
        "u32" => Payload::U32(
            raw.chunks_exact(4)
                .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
        ),
        other => return Err(VoxError::format(format!("unsupported dtype {other}"))),
    };
    Ok((header, payload))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn ramp(dims: [usize; 3]) -> Volume3D {
        let mut v = Volume3D::new(dims, 0.0);
        for z in 0..dims[2] as i64 {
            for y in 0..dims[1] as i64 {
                for x in 0..dims[0] as i64 {
                    v.set([x, y, z], (x + 10 * y + 100 * z) as f32);
                }
            }
        }
        v
    }

    #[test]
    fn subvolume_identity_case() {
        let v = ramp([5, 5, 5]);
        let spec = SubvolumeSpec::new([2, 3, 1], 0, 1).unwrap();
        let out = extract_subvolume(&v, &spec, 0.0).unwrap();
        assert_eq!(out.dims(), [1, 1, 1]);
        assert_eq!(out.get([0, 0, 0]), v.get([2, 3, 1]));
    }

    #[test]
    fn subvolume_r5_d1_has_1331_voxels() {
        let v = ramp([16, 16, 16]);
        let spec = SubvolumeSpec::new([8, 8, 8], 5, 1).unwrap();
        let out = extract_subvolume(&v, &spec, 0.0).unwrap();
        assert_eq!(out.dims(), [11, 11, 11]);
        assert_eq!(out.len(), 1331);
    }

    #[test]
    fn subvolume_blockmean_matches_bruteforce() {
        let v = ramp([5, 5, 5]);
        let spec = SubvolumeSpec::new([2, 2, 2], 2, 2).unwrap();
        let pad = 7.0f32;
        let out = extract_subvolume(&v, &spec, pad).unwrap();
        assert_eq!(out.dims(), [3, 3, 3]);
        for k in 0..3i64 {
            for j in 0..3i64 {
                for i in 0..3i64 {
                    let mut acc = 0.0f64;
                    for bz in 0..2i64 {
                        for by in 0..2i64 {
                            for bx in 0..2i64 {
                                acc += v.get_or(
                                    [2 - 2 + 2 * i + bx, 2 - 2 + 2 * j + by, 2 - 2 + 2 * k + bz],
                                    pad,
                                ) as f64;
                            }
                        }
                    }
                    let want = (acc / 8.0) as f32;
                    assert_eq!(out.get([i, j, k]), want);
                }
            }
        }
    }

    #[test]
    fn subvolume_center_must_be_inside() {
        let v = ramp([4, 4, 4]);
        let spec = SubvolumeSpec::new([4, 0, 0], 1, 1).unwrap();
        assert!(matches!(
            extract_subvolume(&v, &spec, 0.0),
            Err(VoxError::Domain(_))
        ));
    }

    #[test]
    fn spec_rejects_indivisible_radius() {
        assert!(SubvolumeSpec::new([0, 0, 0], 5, 2).is_err());
        assert!(SubvolumeSpec::new([0, 0, 0], 10, 2).is_ok());
    }

    #[test]
    fn boundary_map_is_channel_mean() {
        let dims = [2, 2, 2];
        let mut aff = AffinityGraph::new(dims, 0.0);
        aff.set_edge([0, 0, 0], 0, 0.0);
        aff.set_edge([0, 0, 0], 1, 0.5);
        aff.set_edge([0, 0, 0], 2, 1.0);
        let bm = affinity_to_boundary_map(&aff);
        assert!((bm.get([0, 0, 0]) - 0.5).abs() < 1e-7);

        let aff_c = AffinityGraph::new(dims, 0.25);
        let bm_c = affinity_to_boundary_map(&aff_c);
        assert!(bm_c.data().iter().all(|&v| (v - 0.25).abs() < 1e-7));
    }

    #[test]
    fn volume_roundtrip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("v.vol");
        let v = ramp([3, 3, 3]);
        v.save(&path).unwrap();
        let w = Volume3D::load(&path).unwrap();
        assert_eq!(v, w);
        // Byte-level identity of two writes.
        let path2 = dir.path().join("v2.vol");
        w.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn truncated_payload_reports_byte_counts() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.vol");
        let v = ramp([3, 3, 3]);
        v.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        let err = Volume3D::load(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("108"), "message should name expected bytes: {msg}");
        assert!(msg.contains("103"), "message should name actual bytes: {msg}");
    }

    #[test]
    fn dims_payload_mismatch_is_a_format_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.vol");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(
            br#"{"magic":"VOL1","dims":[2,2,2],"channels":1,"dtype":"f32"}"#,
        );
        bytes.push(b'\n');
        for i in 0..9 {
            bytes.extend_from_slice(&(i as f32).to_le_bytes());
        }
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(Volume3D::load(&path), Err(VoxError::Format(_))));
    }

    #[test]
    fn affinity_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.vol");
        let mut aff = AffinityGraph::new([2, 3, 2], 0.5);
        aff.set_edge([1, 2, 0], 1, 0.75);
        aff.save(&path).unwrap();
        let b = AffinityGraph::load(&path).unwrap();
        assert_eq!(aff, b);
    }

    #[test]
    fn affinity_rejects_out_of_range() {
        let n = 8;
        let res = AffinityGraph::from_channels(
            [2, 2, 2],
            [vec![0.5; n], vec![1.5; n], vec![0.5; n]],
        );
        assert!(matches!(res, Err(VoxError::Argument(_))));
    }
}
