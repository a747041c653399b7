//! Binary-tree vector quantization over the regularly decomposed unit
//! hypercube.
//!
//! A tree of dimension `k` and precision `r` models the dyadic grid
//! `{0, 1/2^r, ..., (2^r - 1)/2^r}^k` with WHITE (empty), BLACK (full) and
//! internal nodes. The descent halves one coordinate per level, cycling
//! through the dimensions, so a cell address is the k*r-bit round-robin
//! interleave of the quantized coordinates, most significant round first.
//! Two iso-colored sibling leaves merge into their parent unless label data
//! under them differs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VisemeError};
use crate::hilbert::hilbert_kd_inv;

/// Coordinates in `[0, 1)`, the key space of a `QuantTree`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedVector(pub Vec<f64>);

impl NormalizedVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|v| !v.is_finite() || !(0.0..1.0).contains(v)) {
            return Err(VisemeError::InvalidArgument(
                "normalized coordinates must be finite and in [0, 1)".into(),
            ));
        }
        Ok(Self(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Node {
    White,
    Black,
    Internal(Box<Node>, Box<Node>),
}

/// Binary tree over the unit hypercube, with per-cell occurrence counts and
/// an optional label multimap held beside the structure so merging cannot
/// destroy label data.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantTree {
    k: u32,
    r: u32,
    root: Node,
    counts: BTreeMap<u64, u64>,
    labels: BTreeMap<u64, BTreeMap<u32, u64>>,
}

impl QuantTree {
    pub fn new(k: u32, r: u32) -> Result<Self> {
        if k == 0 || r == 0 || k * r > 60 {
            return Err(VisemeError::InvalidArgument(format!(
                "unsupported tree size k = {k}, r = {r}"
            )));
        }
        Ok(Self {
            k,
            r,
            root: Node::White,
            counts: BTreeMap::new(),
            labels: BTreeMap::new(),
        })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn depth(&self) -> u32 {
        self.k * self.r
    }

    pub fn is_empty(&self) -> bool {
        self.root == Node::White
    }

    /// Quantizes each coordinate to `r` bits.
    pub fn quantize(&self, v: &NormalizedVector) -> Result<Vec<u32>> {
        if v.dim() != self.k as usize {
            return Err(VisemeError::DimensionMismatch {
                expected: self.k as usize,
                got: v.dim(),
            });
        }
        let n = (1u64 << self.r) as f64;
        Ok(v.0
            .iter()
            .map(|&c| ((c * n) as u32).min((1 << self.r) - 1))
            .collect())
    }

    /// Full-precision cell address: round-robin interleave of the
    /// coordinate bits, dimension 0 first within each round.
    pub fn cell_code(&self, v: &NormalizedVector) -> Result<u64> {
        Ok(interleave(&self.quantize(v)?, self.r))
    }

    /// Adds a vector, growing the tree by halving one coordinate per level
    /// and merging filled sibling cells on the way back up. Re-inserting
    /// into a cell (or a merged region covering it) only bumps the count and
    /// labels.
    pub fn insert(&mut self, v: &NormalizedVector, label: Option<u32>) -> Result<u64> {
        let code = self.cell_code(v)?;
        let depth = self.depth();
        *self.counts.entry(code).or_insert(0) += 1;
        if let Some(l) = label {
            *self.labels.entry(code).or_default().entry(l).or_insert(0) += 1;
        }
        let mut root = std::mem::replace(&mut self.root, Node::White);
        Self::insert_rec(&mut root, code, 0, depth, &self.labels);
        self.root = root;
        Ok(code)
    }

    fn insert_rec(
        node: &mut Node,
        code: u64,
        level: u32,
        depth: u32,
        labels: &BTreeMap<u64, BTreeMap<u32, u64>>,
    ) {
        if *node == Node::Black {
            // A filled region absorbs finer inserts.
            return;
        }
        if level == depth {
            *node = Node::Black;
            return;
        }
        if *node == Node::White {
            *node = Node::Internal(Box::new(Node::White), Box::new(Node::White));
        }
        let bit = (code >> (depth - 1 - level)) & 1;
        if let Node::Internal(left, right) = node {
            {
                let child = if bit == 0 { &mut *left } else { &mut *right };
                Self::insert_rec(child, code, level + 1, depth, labels);
            }
            // Merge filled siblings unless their label content differs.
            if **left == Node::Black && **right == Node::Black {
                let prefix = code >> (depth - level);
                let l_set = labels_under(labels, prefix << 1, level + 1, depth);
                let r_set = labels_under(labels, (prefix << 1) | 1, level + 1, depth);
                if l_set == r_set {
                    *node = Node::Black;
                }
            }
        }
    }

    /// True when the descent for `v` lands on a filled cell or region.
    pub fn membership(&self, v: &NormalizedVector) -> Result<bool> {
        let code = self.cell_code(v)?;
        let mut node = &self.root;
        let mut level = 0;
        loop {
            match node {
                Node::White => return Ok(false),
                Node::Black => return Ok(true),
                Node::Internal(l, rt) => {
                    let bit = (code >> (self.depth() - 1 - level)) & 1;
                    node = if bit == 0 { l } else { rt };
                    level += 1;
                }
            }
        }
    }

    /// Every full-precision occupied cell, in address order. Filled regions
    /// expand to all the cells they cover.
    pub fn cells(&self) -> Vec<u64> {
        let mut out = Vec::new();
        collect_cells(&self.root, 0, 0, self.depth(), &mut out);
        out
    }

    pub fn occupied_count(&self) -> usize {
        self.cells().len()
    }

    /// Structural node count; a fully merged tree is the single filled root.
    pub fn node_count(&self) -> usize {
        fn walk(node: &Node) -> usize {
            match node {
                Node::Internal(l, r) => 1 + walk(l) + walk(r),
                _ => 1,
            }
        }
        walk(&self.root)
    }

    /// Canonical-form check: no internal node may keep two iso-colored leaf
    /// children unless the label data under them differs.
    pub fn is_canonical(&self) -> bool {
        fn walk(
            node: &Node,
            code: u64,
            level: u32,
            depth: u32,
            labels: &BTreeMap<u64, BTreeMap<u32, u64>>,
        ) -> bool {
            match node {
                Node::Internal(l, r) => {
                    if **l == Node::White && **r == Node::White {
                        return false;
                    }
                    if **l == Node::Black && **r == Node::Black {
                        let ls = labels_under(labels, code << 1, level + 1, depth);
                        let rs = labels_under(labels, (code << 1) | 1, level + 1, depth);
                        if ls == rs {
                            return false;
                        }
                    }
                    walk(l, code << 1, level + 1, depth, labels)
                        && walk(r, (code << 1) | 1, level + 1, depth, labels)
                }
                _ => true,
            }
        }
        walk(&self.root, 0, 0, self.depth(), &self.labels)
    }

    pub fn count_of(&self, code: u64) -> u64 {
        self.counts.get(&code).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<u64, u64> {
        &self.counts
    }

    pub fn labels_of(&self, code: u64) -> Option<&BTreeMap<u32, u64>> {
        self.labels.get(&code)
    }

    /// Ultra-metric structural distance: the side length `2^-q` of the
    /// smallest dyadic cell of the coordinate-cycling scheme containing both
    /// vectors, where `q` is the number of fully shared halving rounds.
    /// Vectors in the same full-precision cell sit at `2^-r`.
    pub fn hausdorff_distance(&self, u: &NormalizedVector, v: &NormalizedVector) -> Result<f64> {
        let cu = self.cell_code(u)?;
        let cv = self.cell_code(v)?;
        Ok(self.cell_distance(cu, cv))
    }

    fn cell_distance(&self, cu: u64, cv: u64) -> f64 {
        let depth = self.depth();
        let diff = cu ^ cv;
        let shared = if diff == 0 {
            depth
        } else {
            (diff << (64 - depth)).leading_zeros()
        };
        let q = (shared / self.k).min(self.r);
        (0.5f64).powi(q as i32)
    }

    /// The occupied cell minimizing the structural distance to `v` at search
    /// precision `rq <= r`; ties resolve to the smallest cell address.
    /// Returns the cell address at precision `rq` and the distance.
    pub fn nearest(&self, v: &NormalizedVector, rq: u32) -> Result<(u64, f64)> {
        if self.is_empty() {
            return Err(VisemeError::Empty("quantization tree".into()));
        }
        let rq = rq.min(self.r);
        let code = self.cell_code(v)?;
        let depth_full = self.depth();
        let depth = self.k * rq;
        // Walk the path of `v`, recording the off-path siblings.
        let mut siblings: Vec<(u32, u64, &Node)> = Vec::new();
        let mut node = &self.root;
        let mut level = 0u32;
        loop {
            match node {
                Node::Black => {
                    // Covers v's own cell.
                    return Ok((code >> (depth_full - depth), (0.5f64).powi(rq as i32)));
                }
                Node::White => break,
                Node::Internal(l, rgt) => {
                    if level == depth {
                        return Ok((code >> (depth_full - depth), (0.5f64).powi(rq as i32)));
                    }
                    let bit = (code >> (depth_full - 1 - level)) & 1;
                    let prefix = code >> (depth_full - level);
                    let (next, other, other_bit) =
                        if bit == 0 { (l, rgt, 1) } else { (rgt, l, 0) };
                    if **other != Node::White {
                        siblings.push((level, (prefix << 1) | other_bit, other));
                    }
                    node = next;
                    level += 1;
                }
            }
        }
        // Deepest divergence wins; equal rounds tie-break on cell address.
        let mut best: Option<(u32, u64)> = None;
        for &(level, sib_code, sib_node) in siblings.iter().rev() {
            let q = (level / self.k).min(rq);
            if let Some((bq, _)) = best {
                if q < bq {
                    continue;
                }
            }
            if let Some(cell) = min_black_cell(sib_node, sib_code, level + 1, depth) {
                best = match best {
                    None => Some((q, cell)),
                    Some((bq, bc)) if q > bq || (q == bq && cell < bc) => Some((q, cell)),
                    other => other,
                };
            }
        }
        let (q, cell) = best.expect("non-empty tree has an occupied sibling");
        Ok((cell, (0.5f64).powi(q as i32)))
    }

    /// Occupied cells sorted by the k-dimensional Hilbert index of their
    /// addresses, so consecutive entries are nearest neighbors in the
    /// structural metric.
    pub fn self_sort(&self) -> Result<Vec<u64>> {
        let mut keyed = self
            .cells()
            .into_iter()
            .map(|code| {
                let coords = deinterleave(code, self.k, self.r);
                Ok((hilbert_kd_inv(self.k, self.r, &coords)?, code))
            })
            .collect::<Result<Vec<_>>>()?;
        keyed.sort_unstable();
        Ok(keyed.into_iter().map(|(_, c)| c).collect())
    }

    /// Serializes header, preorder 2-bit node stream and the count/label
    /// table (label id 0 is reserved for plain occurrence counts).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"VQT1");
        out.push(self.k as u8);
        out.push(self.r as u8);
        let mut bits = BitWriter::new();
        write_preorder(&self.root, &mut bits);
        let stream = bits.finish();
        out.extend_from_slice(&(stream.len() as u32).to_le_bytes());
        out.extend_from_slice(&stream);
        let mut triples: Vec<(u64, u32, u64)> = Vec::new();
        for (&code, &count) in &self.counts {
            triples.push((code, 0, count));
        }
        for (&code, labels) in &self.labels {
            for (&label, &count) in labels {
                triples.push((code, label, count));
            }
        }
        out.extend_from_slice(&(triples.len() as u32).to_le_bytes());
        for (code, label, count) in triples {
            out.extend_from_slice(&code.to_le_bytes());
            out.extend_from_slice(&label.to_le_bytes());
            out.extend_from_slice(&(count as u32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |m: &str| VisemeError::MalformedFile(format!("quant tree: {m}"));
        if bytes.len() < 10 || &bytes[0..4] != b"VQT1" {
            return Err(err("missing VQT1 magic"));
        }
        let k = bytes[4] as u32;
        let r = bytes[5] as u32;
        let stream_len =
            u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        if bytes.len() < 10 + stream_len + 4 {
            return Err(err("truncated node stream"));
        }
        let mut reader = BitReader::new(&bytes[10..10 + stream_len]);
        let root = read_preorder(&mut reader).ok_or_else(|| err("bad node stream"))?;
        let mut pos = 10 + stream_len;
        let n = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        if bytes.len() < pos + n * 16 {
            return Err(err("truncated label table"));
        }
        let mut tree = QuantTree::new(k, r)?;
        tree.root = root;
        for _ in 0..n {
            let code = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap());
            let label = u32::from_le_bytes(bytes[pos + 8..pos + 12].try_into().unwrap());
            let count = u32::from_le_bytes(bytes[pos + 12..pos + 16].try_into().unwrap()) as u64;
            pos += 16;
            if label == 0 {
                tree.counts.insert(code, count);
            } else {
                tree.labels.entry(code).or_default().insert(label, count);
            }
        }
        Ok(tree)
    }
}

/// Distinct label ids attached to full-precision cells under the partial
/// code `prefix` of `level` bits.
fn labels_under(
    labels: &BTreeMap<u64, BTreeMap<u32, u64>>,
    prefix: u64,
    level: u32,
    depth: u32,
) -> std::collections::BTreeSet<u32> {
    let lo = prefix << (depth - level);
    let hi = lo + (1u64 << (depth - level));
    labels
        .range(lo..hi)
        .flat_map(|(_, m)| m.keys().copied())
        .collect()
}

fn collect_cells(node: &Node, code: u64, level: u32, depth: u32, out: &mut Vec<u64>) {
    match node {
        Node::White => {}
        Node::Black => {
            let span = 1u64 << (depth - level);
            let base = code << (depth - level);
            out.extend(base..base + span);
        }
        Node::Internal(l, r) => {
            collect_cells(l, code << 1, level + 1, depth, out);
            collect_cells(r, (code << 1) | 1, level + 1, depth, out);
        }
    }
}

/// Smallest cell address (at `depth` bits) covered by a filled node below
/// `code`/`level`, or None for an empty subtree.
fn min_black_cell(node: &Node, code: u64, level: u32, depth: u32) -> Option<u64> {
    match node {
        Node::White => None,
        Node::Black => Some(code << (depth - level)),
        Node::Internal(l, r) => {
            if level == depth {
                // Searching coarser than the structure: the node is occupied.
                return Some(code);
            }
            min_black_cell(l, code << 1, level + 1, depth)
                .or_else(|| min_black_cell(r, (code << 1) | 1, level + 1, depth))
        }
    }
}

pub fn interleave(coords: &[u32], r: u32) -> u64 {
    let k = coords.len() as u32;
    let mut code = 0u64;
    for round in 0..r {
        for (dim, &c) in coords.iter().enumerate() {
            let bit = ((c >> (r - 1 - round)) & 1) as u64;
            code |= bit << (k * r - 1 - (round * k + dim as u32));
        }
    }
    code
}

pub fn deinterleave(code: u64, k: u32, r: u32) -> Vec<u32> {
    let mut coords = vec![0u32; k as usize];
    for round in 0..r {
        for dim in 0..k {
            let bit = (code >> (k * r - 1 - (round * k + dim))) & 1;
            coords[dim as usize] |= (bit as u32) << (r - 1 - round);
        }
    }
    coords
}

fn write_preorder(node: &Node, bits: &mut BitWriter) {
    match node {
        Node::Internal(l, r) => {
            bits.push2(0b00);
            write_preorder(l, bits);
            write_preorder(r, bits);
        }
        Node::White => bits.push2(0b01),
        Node::Black => bits.push2(0b10),
    }
}

fn read_preorder(reader: &mut BitReader) -> Option<Node> {
    match reader.pop2()? {
        0b00 => {
            let l = read_preorder(reader)?;
            let r = read_preorder(reader)?;
            Some(Node::Internal(Box::new(l), Box::new(r)))
        }
        0b01 => Some(Node::White),
        0b10 => Some(Node::Black),
        _ => None,
    }
}

/// Packs 2-bit codes into bytes, first code in the low bits.
pub struct BitWriter {
    bytes: Vec<u8>,
    used: u8,
}

impl BitWriter {
    pub fn new() -> Self {
        Self {
            bytes: Vec::new(),
            used: 8,
        }
    }

    pub fn push2(&mut self, code: u8) {
        if self.used == 8 {
            self.bytes.push(0);
            self.used = 0;
        }
        *self.bytes.last_mut().unwrap() |= (code & 0b11) << self.used;
        self.used += 2;
    }

    pub fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

impl Default for BitWriter {
    fn default() -> Self {
        Self::new()
    }
}

pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn pop2(&mut self) -> Option<u8> {
        let byte = self.bytes.get(self.pos / 8)?;
        let code = (byte >> (self.pos % 8)) & 0b11;
        self.pos += 2;
        Some(code)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn v(coords: &[f64]) -> NormalizedVector {
        NormalizedVector::new(coords.to_vec()).unwrap()
    }

    #[test]
    fn single_insert_lands_deep_right() {
        let mut tree = QuantTree::new(2, 1).unwrap();
        let code = tree.insert(&v(&[0.75, 0.75]), None).unwrap();
        assert_eq!(code, 0b11);
        assert!(tree.membership(&v(&[0.75, 0.75])).unwrap());
        assert!(tree.membership(&v(&[0.9, 0.55])).unwrap());
        assert!(!tree.membership(&v(&[0.25, 0.75])).unwrap());
    }

    #[test]
    fn full_occupancy_collapses_to_black_root() {
        let mut tree = QuantTree::new(2, 1).unwrap();
        for p in [[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]] {
            tree.insert(&v(&p), None).unwrap();
        }
        assert_eq!(tree.root, Node::Black);
        assert_eq!(tree.occupied_count(), 4);
    }

    #[test]
    fn empty_tree_has_no_members() {
        let tree = QuantTree::new(3, 2).unwrap();
        assert!(!tree.membership(&v(&[0.1, 0.2, 0.3])).unwrap());
        assert!(tree.nearest(&v(&[0.1, 0.2, 0.3]), 2).is_err());
    }

    #[test]
    fn occupied_cells_match_hash_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let (k, r) = (5u32, 4u32);
        let mut tree = QuantTree::new(k, r).unwrap();
        let mut oracle = std::collections::BTreeSet::new();
        for _ in 0..1000 {
            let coords: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
            let vec = v(&coords);
            tree.insert(&vec, None).unwrap();
            let q: Vec<u32> = coords
                .iter()
                .map(|&c| ((c * 16.0) as u32).min(15))
                .collect();
            oracle.insert(interleave(&q, r));
            assert!(tree.membership(&vec).unwrap());
        }
        let cells = tree.cells();
        assert_eq!(cells, oracle.iter().copied().collect::<Vec<_>>());
    }

    #[test]
    fn insert_is_idempotent_per_cell() {
        let mut tree = QuantTree::new(3, 3).unwrap();
        let a = tree.insert(&v(&[0.2, 0.4, 0.6]), None).unwrap();
        let snapshot = tree.cells();
        let b = tree.insert(&v(&[0.2, 0.4, 0.6]), None).unwrap();
        assert_eq!(a, b);
        assert_eq!(tree.cells(), snapshot);
        assert_eq!(tree.count_of(a), 2);
    }

    #[test]
    fn hausdorff_same_cell_and_opposite_halves() {
        let tree = QuantTree::new(1, 4).unwrap();
        let d = tree.hausdorff_distance(&v(&[0.1]), &v(&[0.9])).unwrap();
        assert_eq!(d, 1.0);
        // Both inside cell [0.3125, 0.375) at r = 4.
        let same = tree.hausdorff_distance(&v(&[0.32]), &v(&[0.37])).unwrap();
        assert_eq!(same, (0.5f64).powi(4));
    }

    #[test]
    fn hausdorff_matches_prefix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let (k, r) = (3u32, 4u32);
        let tree = QuantTree::new(k, r).unwrap();
        for _ in 0..500 {
            let a: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
            let b: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
            let (va, vb) = (v(&a), v(&b));
            let d = tree.hausdorff_distance(&va, &vb).unwrap();
            // Oracle: shared prefix length of the interleaved addresses.
            let ca = tree.cell_code(&va).unwrap();
            let cb = tree.cell_code(&vb).unwrap();
            let mut shared = 0;
            for bit in (0..k * r).rev() {
                if (ca >> bit) & 1 == (cb >> bit) & 1 {
                    shared += 1;
                } else {
                    break;
                }
            }
            let q = (shared / k).min(r);
            assert_eq!(d, (0.5f64).powi(q as i32));
        }
    }

    #[test]
    fn nearest_single_entry_tree() {
        let mut tree = QuantTree::new(2, 3).unwrap();
        let code = tree.insert(&v(&[0.8, 0.1]), None).unwrap();
        for probe in [[0.1, 0.1], [0.9, 0.9], [0.8, 0.1]] {
            let (cell, _) = tree.nearest(&v(&probe), 3).unwrap();
            assert_eq!(cell, code);
        }
        let (_, d) = tree.nearest(&v(&[0.8, 0.1]), 3).unwrap();
        assert_eq!(d, 0.125);
    }

    #[test]
    fn nearest_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (k, r) = (3u32, 3u32);
        let mut tree = QuantTree::new(k, r).unwrap();
        for _ in 0..60 {
            let coords: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
            tree.insert(&v(&coords), None).unwrap();
        }
        let cells = tree.cells();
        for _ in 0..200 {
            let probe: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
            let probe = v(&probe);
            let (cell, dist) = tree.nearest(&probe, r).unwrap();
            let pc = tree.cell_code(&probe).unwrap();
            // Exhaustive scan over occupied cells.
            let best = cells
                .iter()
                .map(|&c| {
                    let mut shared = 0;
                    for bit in (0..k * r).rev() {
                        if (c >> bit) & 1 == (pc >> bit) & 1 {
                            shared += 1;
                        } else {
                            break;
                        }
                    }
                    let q = (shared / k).min(r);
                    ((0.5f64).powi(q as i32), c)
                })
                .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)))
                .unwrap();
            assert_eq!((dist, cell), best, "probe cell {pc:b}");
        }
    }

    #[test]
    fn merge_respects_differing_labels() {
        let mut tree = QuantTree::new(1, 1).unwrap();
        tree.insert(&v(&[0.25]), Some(1)).unwrap();
        tree.insert(&v(&[0.75]), Some(2)).unwrap();
        // Differing labels block the merge.
        assert!(matches!(tree.root, Node::Internal(_, _)));
        let mut same = QuantTree::new(1, 1).unwrap();
        same.insert(&v(&[0.25]), Some(1)).unwrap();
        same.insert(&v(&[0.75]), Some(1)).unwrap();
        assert_eq!(same.root, Node::Black);
    }

    #[test]
    fn serialization_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let mut tree = QuantTree::new(4, 3).unwrap();
        for i in 0..100 {
            let coords: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
            let label = if i % 3 == 0 { Some(1 + i % 5) } else { None };
            tree.insert(&v(&coords), label).unwrap();
        }
        let bytes = tree.to_bytes();
        let back = QuantTree::from_bytes(&bytes).unwrap();
        assert_eq!(back, tree);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn self_sort_is_a_permutation_of_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let mut tree = QuantTree::new(3, 3).unwrap();
        for _ in 0..80 {
            let coords: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            tree.insert(&v(&coords), None).unwrap();
        }
        let sorted = tree.self_sort().unwrap();
        let mut resorted = sorted.clone();
        resorted.sort_unstable();
        assert_eq!(resorted, tree.cells());
    }

    #[test]
    fn full_grid_self_sort_is_gray_adjacent() {
        // All 2^k cells occupied at r = 1: consecutive addresses in the sort
        // differ in exactly one coordinate bit.
        let k = 3u32;
        let mut tree = QuantTree::new(k, 1).unwrap();
        for i in 0..(1u32 << k) {
            let coords: Vec<f64> = (0..k)
                .map(|d| if (i >> d) & 1 == 1 { 0.75 } else { 0.25 })
                .collect();
            tree.insert(&v(&coords), None).unwrap();
        }
        let sorted = tree.self_sort().unwrap();
        assert_eq!(sorted.len(), 1 << k);
        for w in sorted.windows(2) {
            let coords_a = deinterleave(w[0], k, 1);
            let coords_b = deinterleave(w[1], k, 1);
            let diff: u32 = coords_a
                .iter()
                .zip(&coords_b)
                .map(|(&a, &b)| (a ^ b).count_ones())
                .sum();
            assert_eq!(diff, 1);
        }
    }

    #[test]
    fn interleave_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        for _ in 0..200 {
            let k = rng.gen_range(1..6u32);
            let r = rng.gen_range(1..6u32);
            let coords: Vec<u32> = (0..k).map(|_| rng.gen_range(0..(1 << r))).collect();
            let code = interleave(&coords, r);
            assert!(code < 1u64 << (k * r));
            assert_eq!(deinterleave(code, k, r), coords);
        }
    }
}
