//! Candidate segment pairs: adjacency detection, decision points, interface
//! pixels, and labeled edge datasets.

use crate::error::{Result, VoxError};
use crate::segmentation::Segmentation;
use crate::volume::{coord_index, in_bounds, index_coord, Coord, SubvolumeSpec, NEIGHBORS6};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeLabel {
    #[serde(rename = "pos")]
    Positive,
    #[serde(rename = "neg")]
    Negative,
    #[serde(rename = "unk")]
    Unknown,
}

/// A candidate segment pair subject to a binary merge decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSample {
    pub id: u64,
    pub seg_a: u32,
    pub seg_b: u32,
    pub decision_point: Coord,
    pub label: EdgeLabel,
    pub window_radius: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// An ordered list of edge samples with class counts.
#[derive(Debug, Clone)]
pub struct EdgeDataset {
    pub samples: Vec<EdgeSample>,
    pub split: Split,
}

impl EdgeDataset {
    pub fn new(samples: Vec<EdgeSample>, split: Split) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for s in &samples {
            if !seen.insert(s.id) {
                return Err(VoxError::argument(format!("duplicate edge id {}", s.id)));
            }
        }
        Ok(EdgeDataset { samples, split })
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let mut pos = 0;
        let mut neg = 0;
        let mut unk = 0;
        for s in &self.samples {
            match s.label {
                EdgeLabel::Positive => pos += 1,
                EdgeLabel::Negative => neg += 1,
                EdgeLabel::Unknown => unk += 1,
            }
        }
        (pos, neg, unk)
    }

    /// Samples with a known label, in order (unknowns are excluded from
    /// training and evaluation).
    pub fn known(&self) -> Vec<&EdgeSample> {
        self.samples
            .iter()
            .filter(|s| s.label != EdgeLabel::Unknown)
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            id: u64,
            a: u32,
            b: u32,
            dp: [i64; 3],
            label: &'a EdgeLabel,
        }
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        for s in &self.samples {
            serde_json::to_writer(
                &mut w,
                &Line {
                    id: s.id,
                    a: s.seg_a,
                    b: s.seg_b,
                    dp: s.decision_point,
                    label: &s.label,
                },
            )?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, split: Split, window_radius: u32) -> Result<Self> {
        #[derive(Deserialize)]
        struct Line {
            id: u64,
            a: u32,
            b: u32,
            dp: [i64; 3],
            label: EdgeLabel,
        }
        let r = BufReader::new(std::fs::File::open(path)?);
        let mut samples = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let l: Line = serde_json::from_str(&line)
                .map_err(|e| VoxError::format(format!("bad edge line: {e}")))?;
            samples.push(EdgeSample {
                id: l.id,
                seg_a: l.a,
                seg_b: l.b,
                decision_point: l.dp,
                label: l.label,
                window_radius,
            });
        }
        EdgeDataset::new(samples, split)
    }
}

/// Offsets with Chebyshev distance in [1, gap].
fn cheb_ball(gap: i64) -> Vec<Coord> {
    let mut v = Vec::new();
    for dz in -gap..=gap {
        for dy in -gap..=gap {
            for dx in -gap..=gap {
                if dx != 0 || dy != 0 || dz != 0 {
                    v.push([dx, dy, dz]);
                }
            }
        }
    }
    v
}

/// All unordered nonzero label pairs having voxels within Chebyshev distance
/// `max_gap` of each other, canonically ordered (a < b), sorted.
pub fn find_adjacent_pairs(seg: &Segmentation, max_gap: u32) -> Vec<(u32, u32)> {
    contact_map(seg, max_gap).into_keys().collect()
}

/// Closest contact per adjacent pair: for each unordered pair, the minimal
/// Euclidean voxel distance and the lexicographically smallest realizing
/// (p, q) with p in the lower label.
pub fn contact_map(seg: &Segmentation, max_gap: u32) -> BTreeMap<(u32, u32), Contact> {
    let dims = seg.dims();
    let offsets = cheb_ball(max_gap as i64);
    let mut map: BTreeMap<(u32, u32), Contact> = BTreeMap::new();
    for (i, &la) in seg.labels().iter().enumerate() {
        if la == 0 {
            continue;
        }
        let p = index_coord(i, dims);
        for o in &offsets {
            let q = [p[0] + o[0], p[1] + o[1], p[2] + o[2]];
            if !in_bounds(q, dims) {
                continue;
            }
            let lb = seg.labels()[coord_index(q, dims)];
            if lb == 0 || lb == la {
                continue;
            }
            let (key, pp, qq) = if la < lb {
                ((la, lb), p, q)
            } else {
                ((lb, la), q, p)
            };
            let d2 = dist2(pp, qq);
            let cand = Contact {
                p: pp,
                q: qq,
                dist2: d2,
            };
            map.entry(key)
                .and_modify(|c| {
                    if cand.better_than(c) {
                        *c = cand;
                    }
                })
                .or_insert(cand);
        }
    }
    map
}

/// A realizing closest pair of voxels between two segments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub p: Coord,
    pub q: Coord,
    pub dist2: i64,
}

impl Contact {
    /// Distance, then the canonical (unordered) coordinate key.
    fn better_than(&self, other: &Contact) -> bool {
        if self.dist2 != other.dist2 {
            return self.dist2 < other.dist2;
        }
        canon_key(self.p, self.q) < canon_key(other.p, other.q)
    }

    pub fn midpoint(&self) -> Coord {
        round_midpoint(self.p, self.q)
    }

    pub fn distance(&self) -> f64 {
        (self.dist2 as f64).sqrt()
    }
}

fn dist2(p: Coord, q: Coord) -> i64 {
    let dx = p[0] - q[0];
    let dy = p[1] - q[1];
    let dz = p[2] - q[2];
    dx * dx + dy * dy + dz * dz
}

/// Order-free tie-break key: the sorted pair, compared lexicographically.
fn canon_key(p: Coord, q: Coord) -> ([i64; 3], [i64; 3]) {
    if p <= q {
        (p, q)
    } else {
        (q, p)
    }
}

/// Per-coordinate round-half-up midpoint.
fn round_midpoint(p: Coord, q: Coord) -> Coord {
    let mut m = [0i64; 3];
    for a in 0..3 {
        m[a] = ((p[a] + q[a]) as f64 / 2.0 + 0.5).floor() as i64;
    }
    m
}

/// Decision point of a segment pair: the rounded midpoint of the shortest
/// line segment touching both, plus the distance. Exhaustive over all voxel
/// pairs; ties resolve to the lexicographically smallest unordered pair.
pub fn compute_decision_point(seg: &Segmentation, a: u32, b: u32) -> Result<(Coord, f64)> {
    let dims = seg.dims();
    let mut va = Vec::new();
    let mut vb = Vec::new();
    for (i, &l) in seg.labels().iter().enumerate() {
        if l == a {
            va.push(index_coord(i, dims));
        } else if l == b {
            vb.push(index_coord(i, dims));
        }
    }
    if va.is_empty() {
        return Err(VoxError::domain(format!("label {a} absent")));
    }
    if vb.is_empty() {
        return Err(VoxError::domain(format!("label {b} absent")));
    }
    let mut best: Option<Contact> = None;
    for &p in &va {
        for &q in &vb {
            let cand = Contact {
                p,
                q,
                dist2: dist2(p, q),
            };
            if best.map_or(true, |cur| cand.better_than(&cur)) {
                best = Some(cand);
            }
        }
    }
    let c = best.unwrap();
    Ok((c.midpoint(), c.distance()))
}

/// Interface pixels of a pair within a window: voxels belonging to neither
/// segment that are 26-adjacent to at least one voxel of each, plus voxels
/// of `a` 6-adjacent to `b` (the touching case). Ordered by voxel index.
pub fn interface_pixels(
    seg: &Segmentation,
    a: u32,
    b: u32,
    window: &SubvolumeSpec,
) -> Vec<Coord> {
    let dims = seg.dims();
    let r = window.radius as i64;
    let c = window.center;
    let n26 = crate::volume::neighbors26();
    let mut out = Vec::new();
    for z in (c[2] - r).max(0)..=(c[2] + r).min(dims[2] as i64 - 1) {
        for y in (c[1] - r).max(0)..=(c[1] + r).min(dims[1] as i64 - 1) {
            for x in (c[0] - r).max(0)..=(c[0] + r).min(dims[0] as i64 - 1) {
                let p = [x, y, z];
                let l = seg.get(p);
                if l == a {
                    // touching case
                    let touches_b = NEIGHBORS6.iter().any(|o| {
                        let q = [p[0] + o[0], p[1] + o[1], p[2] + o[2]];
                        in_bounds(q, dims) && seg.get(q) == b
                    });
                    if touches_b {
                        out.push(p);
                    }
                } else if l != b {
                    let mut near_a = false;
                    let mut near_b = false;
                    for o in &n26 {
                        let q = [p[0] + o[0], p[1] + o[1], p[2] + o[2]];
                        if in_bounds(q, dims) {
                            let lq = seg.get(q);
                            if lq == a {
                                near_a = true;
                            } else if lq == b {
                                near_b = true;
                            }
                        }
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
    // Voxel-index order over the full grid.
    out.sort_by_key(|&p| coord_index(p, dims));
    out
}

/// Majority ground-truth object per supervoxel, with overlap purity.
pub struct GtMapping {
    /// gt label of majority overlap (may be 0), indexed by supervoxel label.
    pub majority: Vec<u32>,
    /// majority count / total count per supervoxel label.
    pub purity: Vec<f64>,
}

pub fn map_to_ground_truth(seg: &Segmentation, gt: &Segmentation) -> Result<GtMapping> {
    if seg.dims() != gt.dims() {
        return Err(VoxError::argument("segmentation and gt dims differ"));
    }
    let nl = seg.max_label() as usize;
    let mut overlaps: Vec<BTreeMap<u32, u64>> = vec![BTreeMap::new(); nl + 1];
    for (i, &l) in seg.labels().iter().enumerate() {
        if l != 0 {
            *overlaps[l as usize].entry(gt.labels()[i]).or_insert(0) += 1;
        }
    }
    let mut majority = vec![0u32; nl + 1];
    let mut purity = vec![0.0f64; nl + 1];
    for l in 1..=nl {
        let total: u64 = overlaps[l].values().sum();
        if total == 0 {
            continue;
        }
        // Deterministic argmax: largest count, then smallest gt label.
        let (&best_label, &best_count) = overlaps[l]
            .iter()
            .max_by(|(ka, va), (kb, vb)| va.cmp(vb).then(kb.cmp(ka)))
            .unwrap();
        majority[l] = best_label;
        purity[l] = best_count as f64 / total as f64;
    }
    Ok(GtMapping { majority, purity })
}

/// Label candidate pairs against ground truth: positive iff both supervoxels
/// map to the same nonzero gt object; unknown when either maps to background
/// or falls below the purity threshold.
pub fn label_edges(
    seg: &Segmentation,
    gt: &Segmentation,
    pairs: &[(u32, u32)],
    purity_threshold: f64,
    window_radius: u32,
    split: Split,
) -> Result<EdgeDataset> {
    let mapping = map_to_ground_truth(seg, gt)?;
    let contacts = contact_map(seg, 1);
    let mut samples = Vec::with_capacity(pairs.len());
    for (idx, &(a, b)) in pairs.iter().enumerate() {
        let (a, b) = (a.min(b), a.max(b));
        let dp = match contacts.get(&(a, b)) {
            Some(c) => c.midpoint(),
            None => compute_decision_point(seg, a, b)?.0,
        };
        let (ma, mb) = (mapping.majority[a as usize], mapping.majority[b as usize]);
        let (pa, pb) = (mapping.purity[a as usize], mapping.purity[b as usize]);
        let label = if ma == 0 || mb == 0 || pa < purity_threshold || pb < purity_threshold {
            EdgeLabel::Unknown
        } else if ma == mb {
            EdgeLabel::Positive
        } else {
            EdgeLabel::Negative
        };
        samples.push(EdgeSample {
            id: idx as u64,
            seg_a: a,
            seg_b: b,
            decision_point: dp,
            label,
            window_radius,
        });
    }
    EdgeDataset::new(samples, split)
}
