//! Canonical packing layouts, segment shifts, masks, minimal-packing
//! accounting, and the stage-compatibility validator.
//!
//! A ciphertext's n slots are viewed as N_seg = n/m contiguous segments of m
//! slots. Three layouts are canonical: segment-column (one length-m matrix
//! column per active segment), folded-diagonal (two attention diagonals per
//! segment, one head per segment), and head-major (the d_h channels of each
//! head in contiguous segments). All cross-stage movement is restricted to
//! the shift family below; anything else is a remap and gets charged.

use crate::linalg::Mat;
use crate::slot_engine::{CipherVec, PlainVec};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PackError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("folded-diagonal packing requires even m, got {0}")]
    OddSequenceLength(usize),
    #[error("malformed stage graph: {0}")]
    MalformedGraph(String),
}

pub type PackResult<T> = Result<T, PackError>;

/// View of a slot vector as an m x N_seg segment grid, mat(x)_{r,s} = x[s*m+r].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentView {
    pub m: usize,
    pub n_seg: usize,
}

impl SegmentView {
    pub fn new(n: usize, m: usize) -> Self {
        assert!(m > 0 && n % m == 0, "segment length must divide slot count");
        Self { m, n_seg: n / m }
    }

    pub fn n(&self) -> usize {
        self.m * self.n_seg
    }

    pub fn slot(&self, r: usize, s: usize) -> usize {
        s * self.m + r
    }

    pub fn mat(&self, x: &[Complex64]) -> Vec<Vec<Complex64>> {
        assert_eq!(x.len(), self.n());
        (0..self.m)
            .map(|r| (0..self.n_seg).map(|s| x[self.slot(r, s)]).collect())
            .collect()
    }

    pub fn vec(&self, grid: &[Vec<Complex64>]) -> Vec<Complex64> {
        assert_eq!(grid.len(), self.m);
        let mut out = vec![Complex64::new(0.0, 0.0); self.n()];
        for (r, row) in grid.iter().enumerate() {
            assert_eq!(row.len(), self.n_seg);
            for (s, &v) in row.iter().enumerate() {
                out[self.slot(r, s)] = v;
            }
        }
        out
    }
}

/// One of the three canonical layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PackFormat {
    /// Active segment c stores one length-m matrix column.
    SegmentColumn { m: usize, c: usize },
    /// Segment h stores the diagonal pair (t, t + m/2) of head h's score
    /// matrix in its real/imaginary parts; t varies across ciphertexts.
    FoldedDiagonal { h: usize, m: usize },
    /// Segment h_loc * d_h + u stores channel u of local head h_loc.
    HeadMajor { h_blk: usize, d_h: usize, m: usize },
}

impl PackFormat {
    pub fn m(&self) -> usize {
        match *self {
            PackFormat::SegmentColumn { m, .. } => m,
            PackFormat::FoldedDiagonal { m, .. } => m,
            PackFormat::HeadMajor { m, .. } => m,
        }
    }

    pub fn validate(&self, n: usize) -> PackResult<()> {
        let m = self.m();
        if m == 0 || n % m != 0 {
            return Err(PackError::DimensionMismatch(format!(
                "segment length {m} does not divide slot count {n}"
            )));
        }
        let n_seg = n / m;
        match *self {
            PackFormat::SegmentColumn { c, .. } if c > n_seg => Err(PackError::DimensionMismatch(
                format!("{c} active segments exceed N_seg={n_seg}"),
            )),
            PackFormat::FoldedDiagonal { m, .. } if m % 2 != 0 => {
                Err(PackError::OddSequenceLength(m))
            }
            PackFormat::HeadMajor { h_blk, d_h, .. } if h_blk * d_h > n_seg => {
                Err(PackError::DimensionMismatch(format!(
                    "head-major block {h_blk}x{d_h} exceeds N_seg={n_seg}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Natural lower bound on ciphertext count for `n_entries` logical reals
/// under complex packing (two reals per slot).
pub fn k_min(n_entries: u64, n_slots: usize) -> u64 {
    assert!(n_entries >= 1);
    n_entries.div_ceil(2 * n_slots as u64)
}

/// A boundary tensor: logical entry count, layout, and ciphertext count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTensor {
    pub n_entries: u64,
    pub format: PackFormat,
    pub k: u64,
}

impl BoundaryTensor {
    pub fn k_min(&self, n_slots: usize) -> u64 {
        k_min(self.n_entries, n_slots)
    }

    pub fn is_minimal(&self, n_slots: usize) -> bool {
        self.k == self.k_min(n_slots)
    }
}

// ---------------------------------------------------------------------------
// Shift family
// ---------------------------------------------------------------------------

/// Whole-segment cyclic shift: one rotation by Delta*m slots.
pub fn phi(ct: &CipherVec, m: usize, delta: i64) -> CipherVec {
    ct.rot(delta * m as i64)
}

/// Intra-segment cyclic shift by t: two rotations plus H/U masking.
pub fn psi(ct: &CipherVec, m: usize, t: i64) -> CipherVec {
    let n = ct.n();
    let view = SegmentView::new(n, m);
    let t = t.rem_euclid(m as i64) as usize;
    if t == 0 {
        return ct.clone();
    }
    let (h_mask, u_mask) = psi_masks(&view, t);
    let s1 = t as i64;
    let s2 = (t as i64 - m as i64).rem_euclid(n as i64);
    let keep = ct.rot(s1).ptmul(&h_mask).expect("mask length");
    let wrap = ct.rot(s2).ptmul(&u_mask).expect("mask length");
    keep.add(&wrap).expect("psi halves share scale")
}

/// H keeps rows [0, m-t), U keeps rows [m-t, m), replicated across segments.
pub fn psi_masks(view: &SegmentView, t: usize) -> (PlainVec, PlainVec) {
    let mut h = vec![false; view.n()];
    let mut u = vec![false; view.n()];
    for s in 0..view.n_seg {
        for r in 0..view.m {
            if r < view.m - t {
                h[view.slot(r, s)] = true;
            } else {
                u[view.slot(r, s)] = true;
            }
        }
    }
    (PlainVec::mask(&h), PlainVec::mask(&u))
}

/// Cyclic left shift by tau within slots [0, L), leaving slots >= L unchanged.
///
/// Kernel call sites keep the inactive region zero, so the cost there is two
/// rotations, two masks, and one add. A nonzero tail is kept through a third
/// mask (rotation by zero is free).
pub fn rot_first(ct: &CipherVec, l: usize, tau: i64) -> CipherVec {
    let n = ct.n();
    assert!(l <= n);
    let tau = tau.rem_euclid(l as i64) as usize;
    if tau == 0 {
        return ct.clone();
    }
    let (a_mask, b_mask) = rot_first_masks(n, l, tau);
    let stay = ct.rot(tau as i64).ptmul(&a_mask).expect("mask length");
    let wrap = ct
        .rot((tau as i64 - l as i64).rem_euclid(n as i64))
        .ptmul(&b_mask)
        .expect("mask length");
    let mut out = stay.add(&wrap).expect("rot_first halves share scale");
    if ct.slots[l..].iter().any(|z| z.norm_sqr() != 0.0) {
        let mut tail = vec![false; n];
        tail[l..].fill(true);
        let keep = ct.ptmul(&PlainVec::mask(&tail)).expect("mask length");
        out = out.add(&keep).expect("tail keep shares scale");
    }
    out
}

/// a keeps slots [0, L-tau), b keeps slots [L-tau, L).
pub fn rot_first_masks(n: usize, l: usize, tau: usize) -> (PlainVec, PlainVec) {
    let mut a = vec![false; n];
    let mut b = vec![false; n];
    for (i, (ai, bi)) in a.iter_mut().zip(b.iter_mut()).enumerate().take(l) {
        if i < l - tau {
            *ai = true;
        } else {
            *bi = true;
        }
    }
    (PlainVec::mask(&a), PlainVec::mask(&b))
}

/// Segment shift with wrap-around restricted to the first C active segments.
pub fn phi_c(ct: &CipherVec, m: usize, c: usize, delta: i64) -> CipherVec {
    let n_seg = ct.n() / m;
    let c = c.min(n_seg);
    let delta = delta.rem_euclid(c as i64);
    rot_first(ct, c * m, delta * m as i64)
}

/// Binary segment mask keeping exactly segment s.
pub fn segment_mask(view: &SegmentView, s: usize) -> PlainVec {
    let mut bits = vec![false; view.n()];
    for r in 0..view.m {
        bits[view.slot(r, s)] = true;
    }
    PlainVec::mask(&bits)
}

/// Mask keeping a contiguous segment range [s0, s1).
pub fn segment_range_mask(view: &SegmentView, s0: usize, s1: usize) -> PlainVec {
    let mut bits = vec![false; view.n()];
    for s in s0..s1 {
        for r in 0..view.m {
            bits[view.slot(r, s)] = true;
        }
    }
    PlainVec::mask(&bits)
}

/// Channel mask for head-major blocks: keeps segment h_loc*d_h + u for every
/// local head h_loc in the block.
pub fn channel_mask(view: &SegmentView, h_blk: usize, d_h: usize, u: usize) -> PlainVec {
    let mut bits = vec![false; view.n()];
    for h_loc in 0..h_blk {
        let s = h_loc * d_h + u;
        for r in 0..view.m {
            bits[view.slot(r, s)] = true;
        }
    }
    PlainVec::mask(&bits)
}

// ---------------------------------------------------------------------------
// Packing and unpacking
// ---------------------------------------------------------------------------

/// Segment-column pack: blocks of C columns, segment c of block g holding
/// column g*C + c. Missing columns are zero.
pub fn pack_segment_column(t: &Mat, n: usize, m: usize, c: usize) -> PackResult<Vec<Vec<Complex64>>> {
    if t.rows != m {
        return Err(PackError::DimensionMismatch(format!(
            "matrix has {} rows, segment length is {m}",
            t.rows
        )));
    }
    PackFormat::SegmentColumn { m, c }.validate(n)?;
    let blocks = t.cols.div_ceil(c);
    let mut out = Vec::with_capacity(blocks);
    for g in 0..blocks {
        let mut slots = vec![Complex64::new(0.0, 0.0); n];
        for s in 0..c {
            let col = g * c + s;
            if col >= t.cols {
                break;
            }
            for r in 0..m {
                slots[s * m + r] = Complex64::new(t[(r, col)], 0.0);
            }
        }
        out.push(slots);
    }
    Ok(out)
}

pub fn unpack_segment_column(
    blocks: &[Vec<Complex64>],
    m: usize,
    c: usize,
    cols: usize,
) -> Mat {
    let mut t = Mat::zeros(m, cols);
    for (g, slots) in blocks.iter().enumerate() {
        for s in 0..c {
            let col = g * c + s;
            if col >= cols {
                break;
            }
            for r in 0..m {
                t[(r, col)] = slots[s * m + r].re;
            }
        }
    }
    t
}

/// Folded-diagonal pack of per-head m x m score matrices: ciphertext t stores,
/// in segment h, the diagonal pair s^h_t + i*s^h_{t+m/2}.
pub fn pack_folded_diagonal(scores: &[Mat], n: usize, m: usize) -> PackResult<Vec<Vec<Complex64>>> {
    if m % 2 != 0 {
        return Err(PackError::OddSequenceLength(m));
    }
    let h = scores.len();
    PackFormat::FoldedDiagonal { h, m }.validate(n)?;
    if h * m > n {
        return Err(PackError::DimensionMismatch(format!(
            "{h} heads of segment length {m} exceed {n} slots"
        )));
    }
    for s in scores {
        if s.rows != m || s.cols != m {
            return Err(PackError::DimensionMismatch(format!(
                "score matrix is {}x{}, expected {m}x{m}",
                s.rows, s.cols
            )));
        }
    }
    let mut out = Vec::with_capacity(m / 2);
    for t in 0..m / 2 {
        let mut slots = vec![Complex64::new(0.0, 0.0); n];
        for (head, s_mat) in scores.iter().enumerate() {
            for j in 0..m {
                let re = s_mat[(j, (j + t) % m)];
                let im = s_mat[(j, (j + t + m / 2) % m)];
                slots[head * m + j] = Complex64::new(re, im);
            }
        }
        out.push(slots);
    }
    Ok(out)
}

pub fn unpack_folded_diagonal(cts: &[Vec<Complex64>], h: usize, m: usize) -> Vec<Mat> {
    let mut scores = vec![Mat::zeros(m, m); h];
    for (t, slots) in cts.iter().enumerate() {
        for (head, score) in scores.iter_mut().enumerate() {
            for j in 0..m {
                let z = slots[head * m + j];
                score[(j, (j + t) % m)] = z.re;
                score[(j, (j + t + m / 2) % m)] = z.im;
            }
        }
    }
    scores
}

/// Head-major pack: one block packs H_blk heads, segment h_loc*d_h + u
/// holding column u of local head h_loc.
pub fn pack_head_major(
    heads: &[Mat],
    n: usize,
    m: usize,
    h_blk: usize,
    d_h: usize,
) -> PackResult<Vec<Vec<Complex64>>> {
    PackFormat::HeadMajor { h_blk, d_h, m }.validate(n)?;
    for v in heads {
        if v.rows != m || v.cols != d_h {
            return Err(PackError::DimensionMismatch(format!(
                "head tensor is {}x{}, expected {m}x{d_h}",
                v.rows, v.cols
            )));
        }
    }
    let blocks = heads.len().div_ceil(h_blk);
    let mut out = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let mut slots = vec![Complex64::new(0.0, 0.0); n];
        for h_loc in 0..h_blk {
            let head = b * h_blk + h_loc;
            if head >= heads.len() {
                break;
            }
            for u in 0..d_h {
                for r in 0..m {
                    slots[(h_loc * d_h + u) * m + r] = Complex64::new(heads[head][(r, u)], 0.0);
                }
            }
        }
        out.push(slots);
    }
    Ok(out)
}

pub fn unpack_head_major(
    blocks: &[Vec<Complex64>],
    heads: usize,
    m: usize,
    h_blk: usize,
    d_h: usize,
) -> Vec<Mat> {
    let mut out = vec![Mat::zeros(m, d_h); heads];
    for (b, slots) in blocks.iter().enumerate() {
        for h_loc in 0..h_blk {
            let head = b * h_blk + h_loc;
            if head >= heads {
                break;
            }
            for u in 0..d_h {
                for r in 0..m {
                    out[head][(r, u)] = slots[(h_loc * d_h + u) * m + r].re;
                }
            }
        }
    }
    out
}

/// Minimal complex pack of a flat real stream: ciphertext k holds entries
/// [2nk, 2n(k+1)) with the first n in real parts and the next n in imaginary
/// parts. The tail ciphertext is zero-padded.
pub fn pack_minimal_stream(values: &[f64], n: usize) -> Vec<Vec<Complex64>> {
    let k = k_min(values.len().max(1) as u64, n) as usize;
    let mut out = Vec::with_capacity(k);
    for blk in 0..k {
        let mut slots = vec![Complex64::new(0.0, 0.0); n];
        for (i, slot) in slots.iter_mut().enumerate() {
            let re_idx = 2 * n * blk + i;
            let im_idx = 2 * n * blk + n + i;
            let re = values.get(re_idx).copied().unwrap_or(0.0);
            let im = values.get(im_idx).copied().unwrap_or(0.0);
            *slot = Complex64::new(re, im);
        }
        out.push(slots);
    }
    out
}

pub fn unpack_minimal_stream(cts: &[Vec<Complex64>], n: usize, len: usize) -> Vec<f64> {
    let mut values = vec![0.0; len];
    for (blk, slots) in cts.iter().enumerate() {
        for (i, z) in slots.iter().enumerate() {
            let re_idx = 2 * n * blk + i;
            let im_idx = 2 * n * blk + n + i;
            if re_idx < len {
                values[re_idx] = z.re;
            }
            if im_idx < len {
                values[im_idx] = z.im;
            }
        }
    }
    values
}

// ---------------------------------------------------------------------------
// Stage-compatibility validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageDomain {
    Fhe,
    Mpc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageNode {
    pub name: String,
    pub domain: StageDomain,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum EdgeKind {
    /// Producer/consumer layouts on a direct FHE edge, with the number of
    /// ciphertext blocks that would need remapping on mismatch.
    FheToFhe {
        producer: PackFormat,
        consumer: PackFormat,
        blocks: u64,
    },
    /// Export across the FHE -> MPC boundary.
    FheToMpc { k: u64, n_entries: u64 },
    /// Import across the MPC -> FHE boundary.
    MpcToFhe { k: u64, n_entries: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageEdge {
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageGraph {
    pub n_slots: usize,
    pub m: usize,
    pub nodes: Vec<StageNode>,
    pub edges: Vec<StageEdge>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rule1Violation {
    pub edge: String,
    pub blocks: u64,
    pub rotations: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryExcess {
    pub edge: String,
    pub k: u64,
    pub k_min: u64,
    pub excess: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScpReport {
    pub violations: Vec<Rule1Violation>,
    pub remap_rotations: u64,
    pub boundary_excess: Vec<BoundaryExcess>,
    pub excess_total: u64,
}

impl ScpReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty() && self.excess_total == 0
    }
}

/// Check the three stage-compatibility rules over a pipeline graph.
///
/// Rule 1 violations on FHE->FHE edges are charged blocks * log2(m) remap
/// rotations each; Rule 2/3 violations report the ciphertext excess beyond
/// K_min at the boundary.
pub fn scp_validate(graph: &StageGraph) -> PackResult<ScpReport> {
    let domain_of = |name: &str| -> PackResult<StageDomain> {
        graph
            .nodes
            .iter()
            .find(|node| node.name == name)
            .map(|node| node.domain)
            .ok_or_else(|| PackError::MalformedGraph(format!("unknown stage `{name}`")))
    };
    if !graph.m.is_power_of_two() {
        return Err(PackError::MalformedGraph(format!(
            "segment length {} is not a power of two",
            graph.m
        )));
    }
    // DAG check: Kahn's algorithm over stage names.
    {
        use std::collections::BTreeMap;
        let mut indeg: BTreeMap<&str, usize> =
            graph.nodes.iter().map(|n| (n.name.as_str(), 0)).collect();
        for e in &graph.edges {
            domain_of(&e.from)?;
            domain_of(&e.to)?;
            *indeg.get_mut(e.to.as_str()).unwrap() += 1;
        }
        let mut queue: Vec<&str> = indeg
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&n, _)| n)
            .collect();
        let mut seen = 0usize;
        while let Some(node) = queue.pop() {
            seen += 1;
            for e in graph.edges.iter().filter(|e| e.from == node) {
                let d = indeg.get_mut(e.to.as_str()).unwrap();
                *d -= 1;
                if *d == 0 {
                    queue.push(e.to.as_str());
                }
            }
        }
        if seen != graph.nodes.len() {
            return Err(PackError::MalformedGraph("stage graph has a cycle".into()));
        }
    }

    let log2_m = graph.m.trailing_zeros() as u64;
    let mut report = ScpReport {
        violations: Vec::new(),
        remap_rotations: 0,
        boundary_excess: Vec::new(),
        excess_total: 0,
    };
    for edge in &graph.edges {
        let from = domain_of(&edge.from)?;
        let to = domain_of(&edge.to)?;
        let label = format!("{} -> {}", edge.from, edge.to);
        match &edge.kind {
            EdgeKind::FheToFhe {
                producer,
                consumer,
                blocks,
            } => {
                if (from, to) != (StageDomain::Fhe, StageDomain::Fhe) {
                    return Err(PackError::MalformedGraph(format!(
                        "edge {label} marked FHE->FHE but stages disagree"
                    )));
                }
                if producer != consumer {
                    let rotations = blocks * log2_m;
                    report.remap_rotations += rotations;
                    report.violations.push(Rule1Violation {
                        edge: label,
                        blocks: *blocks,
                        rotations,
                    });
                }
            }
            EdgeKind::FheToMpc { k, n_entries } | EdgeKind::MpcToFhe { k, n_entries } => {
                let expect = match &edge.kind {
                    EdgeKind::FheToMpc { .. } => (StageDomain::Fhe, StageDomain::Mpc),
                    _ => (StageDomain::Mpc, StageDomain::Fhe),
                };
                if (from, to) != expect {
                    return Err(PackError::MalformedGraph(format!(
                        "edge {label} boundary kind disagrees with stage domains"
                    )));
                }
                let floor = k_min(*n_entries, graph.n_slots);
                if *k < floor {
                    return Err(PackError::MalformedGraph(format!(
                        "edge {label} claims {k} ciphertexts below K_min={floor}"
                    )));
                }
                if *k > floor {
                    let excess = k - floor;
                    report.excess_total += excess;
                    report.boundary_excess.push(BoundaryExcess {
                        edge: label,
                        k: *k,
                        k_min: floor,
                        excess,
                    });
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slot_engine::{ModulusChain, OpKind, OpLedger, SlotConfig};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn ct_of(vals: &[f64]) -> (CipherVec, OpLedger) {
        let cfg = SlotConfig::new(vals.len(), ModulusChain::with_bit_sizes(40, 4));
        let ledger = OpLedger::new("pack-test");
        let slots = vals.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        (
            CipherVec::new(slots, 3, cfg.chain.target_scale(), cfg, ledger.clone()),
            ledger,
        )
    }

    fn reals(ct: &CipherVec) -> Vec<f64> {
        ct.slots.iter().map(|z| z.re).collect()
    }

    #[test]
    fn phi_rotates_whole_segments() {
        let (x, ledger) = ct_of(&[1.0, 2.0, 3.0, 4.0]);
        let y = phi(&x, 2, 1);
        assert_eq!(reals(&y), vec![3.0, 4.0, 1.0, 2.0]);
        assert_eq!(ledger.count(OpKind::Rot), 1);
        assert_eq!(ledger.count(OpKind::Ptmul), 0);
    }

    #[test]
    fn psi_rotates_within_segments() {
        let (x, ledger) = ct_of(&[1.0, 2.0, 3.0, 4.0]);
        let y = psi(&x, 2, 1);
        assert_eq!(reals(&y), vec![2.0, 1.0, 4.0, 3.0]);
        assert_eq!(ledger.count(OpKind::Rot), 2);
        assert_eq!(ledger.count(OpKind::Ptmul), 2);
        assert_eq!(ledger.count(OpKind::Add), 1);
    }

    #[test]
    fn rot_first_wraps_only_the_prefix() {
        let (x, ledger) = ct_of(&[1.0, 2.0, 3.0, 4.0]);
        let y = rot_first(&x, 3, 1);
        assert_eq!(reals(&y), vec![2.0, 3.0, 1.0, 4.0]);
        assert_eq!(ledger.count(OpKind::Rot), 2);
    }

    #[test]
    fn zero_shifts_are_identity_and_unmetered() {
        let (x, ledger) = ct_of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(reals(&phi(&x, 2, 0)), reals(&x));
        assert_eq!(reals(&psi(&x, 2, 0)), reals(&x));
        assert_eq!(reals(&psi(&x, 2, 2)), reals(&x));
        assert_eq!(reals(&rot_first(&x, 4, 0)), reals(&x));
        assert_eq!(ledger.count(OpKind::Rot), 0);
        assert_eq!(ledger.count(OpKind::Ptmul), 0);
    }

    #[test]
    fn phi_c_restricts_to_active_segments() {
        // m=2, N_seg=4, C=3 active segments: shift by one segment wraps the
        // first three segments and leaves the fourth untouched.
        let (x, _) = ct_of(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let y = phi_c(&x, 2, 3, 1);
        assert_eq!(reals(&y), vec![3.0, 4.0, 5.0, 6.0, 1.0, 2.0, 7.0, 8.0]);
    }

    #[test]
    fn shift_composition_laws_exhaustive_m4_nseg4() {
        let mut rng = StdRng::seed_from_u64(11);
        let vals: Vec<f64> = (0..16).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (x, _) = ct_of(&vals);
        for a in 0..4i64 {
            for b in 0..4i64 {
                let psi_ab = psi(&psi(&x, 4, a), 4, b);
                let psi_sum = psi(&x, 4, (a + b) % 4);
                for (l, r) in psi_ab.slots.iter().zip(&psi_sum.slots) {
                    assert!((l - r).norm() < 1e-12);
                }
                let phi_ab = phi(&phi(&x, 4, a), 4, b);
                let phi_sum = phi(&x, 4, (a + b) % 4);
                assert_eq!(phi_ab.slots, phi_sum.slots);
            }
        }
    }

    #[test]
    fn mat_vec_inverse() {
        let mut rng = StdRng::seed_from_u64(5);
        let view = SegmentView::new(12, 3);
        let x: Vec<Complex64> = (0..12)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        assert_eq!(view.vec(&view.mat(&x)), x);
    }

    #[test]
    fn segment_column_roundtrip_and_kmin() {
        // 2x4 matrix into n=4 slots: 8 logical entries, complex-minimal in one
        // ciphertext.
        let t = Mat::from_rows(vec![vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0]]);
        assert_eq!(k_min(8, 4), 1);
        let blocks = pack_segment_column(&t, 4, 2, 2).unwrap();
        assert_eq!(blocks.len(), 2);
        let back = unpack_segment_column(&blocks, 2, 2, 4);
        assert_eq!(back, t);
        let minimal = pack_minimal_stream(t.data(), 4);
        assert_eq!(minimal.len(), 1);
        let back = unpack_minimal_stream(&minimal, 4, 8);
        assert_eq!(back, t.data());
    }

    #[test]
    fn folded_diagonal_identity_example() {
        let s = Mat::identity(2);
        let cts = pack_folded_diagonal(&[s], 4, 2).unwrap();
        assert_eq!(cts.len(), 1);
        assert_eq!(cts[0][0], Complex64::new(1.0, 0.0));
        assert_eq!(cts[0][1], Complex64::new(1.0, 0.0));
        let back = unpack_folded_diagonal(&cts, 1, 2);
        assert_eq!(back[0], Mat::identity(2));
    }

    #[test]
    fn folded_diagonal_rejects_odd_m() {
        let s = Mat::identity(3);
        assert!(matches!(
            pack_folded_diagonal(&[s], 8, 3),
            Err(PackError::OddSequenceLength(3))
        ));
    }

    #[test]
    fn head_major_roundtrip_random() {
        let mut rng = StdRng::seed_from_u64(9);
        let heads: Vec<Mat> = (0..2).map(|_| Mat::random(4, 2, 1.0, &mut rng)).collect();
        let blocks = pack_head_major(&heads, 16, 4, 2, 2).unwrap();
        assert_eq!(blocks.len(), 1);
        let back = unpack_head_major(&blocks, 2, 4, 2, 2);
        assert_eq!(back, heads);
    }

    #[test]
    fn k_min_reference_values() {
        assert_eq!(k_min(12 * 128 * 128, 16384), 6);
        assert_eq!(k_min(128 * 768, 16384), 3);
        assert_eq!(k_min(1, 16384), 1);
    }

    fn two_stage_graph(kind: EdgeKind, from_domain: StageDomain, to_domain: StageDomain) -> StageGraph {
        StageGraph {
            n_slots: 16384,
            m: 128,
            nodes: vec![
                StageNode {
                    name: "a".into(),
                    domain: from_domain,
                },
                StageNode {
                    name: "b".into(),
                    domain: to_domain,
                },
            ],
            edges: vec![StageEdge {
                from: "a".into(),
                to: "b".into(),
                kind,
            }],
        }
    }

    #[test]
    fn scp_charges_rule1_remaps() {
        let fmt_a = PackFormat::SegmentColumn { m: 128, c: 120 };
        let fmt_b = PackFormat::HeadMajor {
            h_blk: 2,
            d_h: 64,
            m: 128,
        };
        let graph = two_stage_graph(
            EdgeKind::FheToFhe {
                producer: fmt_a,
                consumer: fmt_b,
                blocks: 24,
            },
            StageDomain::Fhe,
            StageDomain::Fhe,
        );
        let report = scp_validate(&graph).unwrap();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.remap_rotations, 168);
    }

    #[test]
    fn scp_reports_boundary_excess() {
        let graph = two_stage_graph(
            EdgeKind::FheToMpc {
                k: 36,
                n_entries: 128 * 3072,
            },
            StageDomain::Fhe,
            StageDomain::Mpc,
        );
        let report = scp_validate(&graph).unwrap();
        assert!(report.violations.is_empty());
        assert_eq!(report.boundary_excess.len(), 1);
        assert_eq!(report.boundary_excess[0].k_min, 12);
        assert_eq!(report.excess_total, 24);
    }

    #[test]
    fn scp_matched_edge_is_clean() {
        let fmt = PackFormat::SegmentColumn { m: 128, c: 120 };
        let graph = two_stage_graph(
            EdgeKind::FheToFhe {
                producer: fmt,
                consumer: fmt,
                blocks: 24,
            },
            StageDomain::Fhe,
            StageDomain::Fhe,
        );
        assert!(scp_validate(&graph).unwrap().is_clean());
    }

    #[test]
    fn scp_rejects_cycles_and_unknown_stages() {
        let fmt = PackFormat::SegmentColumn { m: 128, c: 120 };
        let mut graph = two_stage_graph(
            EdgeKind::FheToFhe {
                producer: fmt,
                consumer: fmt,
                blocks: 1,
            },
            StageDomain::Fhe,
            StageDomain::Fhe,
        );
        graph.edges.push(StageEdge {
            from: "b".into(),
            to: "a".into(),
            kind: EdgeKind::FheToFhe {
                producer: fmt,
                consumer: fmt,
                blocks: 1,
            },
        });
        assert!(matches!(
            scp_validate(&graph),
            Err(PackError::MalformedGraph(_))
        ));
        graph.edges.pop();
        graph.edges[0].to = "ghost".into();
        assert!(matches!(
            scp_validate(&graph),
            Err(PackError::MalformedGraph(_))
        ));
    }
}
