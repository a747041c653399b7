//! Visual alphabet of simple shapes and the dictionary of compound shapes.
//!
//! A simple shape quantizes into a letter: the cell address of its domain
//! invariants in one tree plus one address per spectral band in the
//! rendering trees. Compound shapes become words, the Hilbert-ordered list
//! of their member leaves' letters. Entries keep occurrence counts, a
//! representative (first seen) descriptor and a quaternary-tree raster of
//! the domain for synthesis.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VisemeError};
use crate::hilbert::order_points;
use crate::moments::DomainDescriptor;
use crate::quant::{BitReader, BitWriter, NormalizedVector, QuantTree};
use crate::rendering::RenderingDescriptor;

/// Coordinate selection for quantization: all invariants, or the reduced
/// convex-hull set (eccentricity, leading and trailing asymmetries, one
/// curvature ratio per band).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    Full,
    ConvexHull,
}

impl Profile {
    pub fn domain_dim(self) -> u32 {
        match self {
            Profile::Full => 5,
            Profile::ConvexHull => 3,
        }
    }

    pub fn band_dim(self) -> u32 {
        match self {
            Profile::Full => 5,
            Profile::ConvexHull => 1,
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = VisemeError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Profile::Full),
            "convex-hull" => Ok(Profile::ConvexHull),
            other => Err(VisemeError::InvalidArgument(format!(
                "unknown profile `{other}` (expected full or convex-hull)"
            ))),
        }
    }
}

/// Largest representable coordinate below 1.0.
const ONE_MINUS: f64 = 1.0 - f64::EPSILON;

fn unit_from_ratio(v: f64) -> f64 {
    // Eccentricities and other [0, 1] ratios map identically.
    v.clamp(0.0, ONE_MINUS)
}

fn unit_from_signed(v: f64, clamp: f64) -> f64 {
    // Signed asymmetries clamp to [-A, A] then map affinely into [0, 1).
    let c = v.clamp(-clamp, clamp);
    (((c + clamp) / (2.0 * clamp)).min(ONE_MINUS)).max(0.0)
}

/// Maps a domain descriptor into the unit hypercube of the profile.
pub fn normalize_domain(
    d: &DomainDescriptor,
    profile: Profile,
    clamp: f64,
) -> Result<NormalizedVector> {
    let inv = d.invariants();
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(VisemeError::InvalidArgument(
            "non-finite domain invariant".into(),
        ));
    }
    let coords = match profile {
        Profile::Full => vec![
            unit_from_ratio(inv[0]),
            unit_from_signed(inv[1], clamp),
            unit_from_signed(inv[2], clamp),
            unit_from_signed(inv[3], clamp),
            unit_from_signed(inv[4], clamp),
        ],
        Profile::ConvexHull => vec![
            unit_from_ratio(inv[0]),
            unit_from_signed(inv[1], clamp),
            unit_from_signed(inv[4], clamp),
        ],
    };
    NormalizedVector::new(coords)
}

/// Maps one band's rendering invariants into the unit hypercube.
pub fn normalize_band(invariants: &[f64; 5], profile: Profile, clamp: f64) -> Result<NormalizedVector> {
    if invariants.iter().any(|v| !v.is_finite()) {
        return Err(VisemeError::InvalidArgument(
            "non-finite rendering invariant".into(),
        ));
    }
    let coords = match profile {
        Profile::Full => invariants
            .iter()
            .map(|&v| unit_from_signed(v, clamp))
            .collect(),
        Profile::ConvexHull => vec![unit_from_signed(invariants[0], clamp)],
    };
    NormalizedVector::new(coords)
}

/// Quantized identity of a simple shape: domain cell plus one cell per band.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Letter {
    pub domain: u64,
    pub bands: Vec<u64>,
}

/// Binary raster of a shape domain in its own frame: centered on the
/// gravity center, rotated by the domain angle, and scaled by the shape's
/// inertia length so shapes of any size sharing a letter share the mask.
/// Stored as a quaternary tree over a `2^m` square covering
/// `[-half_width, half_width]^2` in inertia-length units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainMask {
    pub m: u32,
    /// Frame extent, in units of the shape's inertia length.
    pub half_width: f64,
    /// Preorder 2-bit stream (00 subdivide, 01 empty, 10 full), hex packed.
    pub stream: String,
}

/// Unit length of a shape frame: the standard deviation along the major
/// inertia axis, `sqrt(M(u1^2) / S)`. Degenerate shapes fall back to one
/// pixel so their frames stay usable.
pub fn inertia_length(scale: f64, surface: i64) -> f64 {
    if scale > 0.0 && surface > 0 {
        (scale / surface as f64).sqrt().max(f64::MIN_POSITIVE)
    } else {
        1.0
    }
}

impl DomainMask {
    /// Rasterizes pixels into the normalized shape frame. The grid
    /// resolution tracks the shape's pixel extent so a cell spans roughly
    /// one image pixel, capped by `m_cap`.
    pub fn build(
        pixels: impl Iterator<Item = (f64, f64)>,
        center: (f64, f64),
        theta: f64,
        sigma: f64,
        m_cap: u32,
    ) -> DomainMask {
        let (s, c) = theta.sin_cos();
        let frame: Vec<(f64, f64)> = pixels
            .map(|(x, y)| {
                let (dx, dy) = (x - center.0, y - center.1);
                ((c * dx + s * dy) / sigma, (-s * dx + c * dy) / sigma)
            })
            .collect();
        let extent = frame
            .iter()
            .map(|&(u, v)| u.abs().max(v.abs()))
            .fold(0.0f64, f64::max);
        let half_width = extent + 0.5 / sigma;
        // Cell size lands in (0.7, 1.4] image pixels unless capped.
        let px_extent = half_width * sigma;
        let m = ((2.0 * px_extent / 1.4).log2().ceil() as i64).clamp(1, m_cap as i64) as u32;
        let n = 1usize << m;
        let mut grid = vec![false; n * n];
        let scale = n as f64 / (2.0 * half_width);
        for (u, v) in frame {
            let cu = (((u + half_width) * scale) as usize).min(n - 1);
            let cv = (((v + half_width) * scale) as usize).min(n - 1);
            grid[cv * n + cu] = true;
        }
        let mut bits = BitWriter::new();
        encode_quad(&grid, n, 0, 0, n, &mut bits);
        DomainMask {
            m,
            half_width,
            stream: hex_encode(&bits.finish()),
        }
    }

    /// Decoded occupancy grid, row-major, `2^m` per side.
    pub fn grid(&self) -> Result<Vec<bool>> {
        let bytes = hex_decode(&self.stream)?;
        let n = 1usize << self.m;
        let mut grid = vec![false; n * n];
        let mut reader = BitReader::new(&bytes);
        decode_quad(&mut grid, n, 0, 0, n, &mut reader)
            .ok_or_else(|| VisemeError::MalformedFile("domain mask stream".into()))?;
        Ok(grid)
    }

    /// Membership of a point in normalized frame units, given the decoded
    /// grid.
    pub fn contains(&self, grid: &[bool], u: f64, v: f64) -> bool {
        if u.abs() >= self.half_width || v.abs() >= self.half_width {
            return false;
        }
        let n = 1usize << self.m;
        let scale = n as f64 / (2.0 * self.half_width);
        let cu = (((u + self.half_width) * scale) as usize).min(n - 1);
        let cv = (((v + self.half_width) * scale) as usize).min(n - 1);
        grid[cv * n + cu]
    }
}

fn encode_quad(grid: &[bool], n: usize, x0: usize, y0: usize, size: usize, bits: &mut BitWriter) {
    let mut any = false;
    let mut all = true;
    for y in y0..y0 + size {
        for x in x0..x0 + size {
            if grid[y * n + x] {
                any = true;
            } else {
                all = false;
            }
        }
        if any && !all {
            break;
        }
    }
    if !any {
        bits.push2(0b01);
    } else if all {
        bits.push2(0b10);
    } else {
        bits.push2(0b00);
        let h = size / 2;
        encode_quad(grid, n, x0, y0, h, bits);
        encode_quad(grid, n, x0 + h, y0, h, bits);
        encode_quad(grid, n, x0, y0 + h, h, bits);
        encode_quad(grid, n, x0 + h, y0 + h, h, bits);
    }
}

fn decode_quad(
    grid: &mut [bool],
    n: usize,
    x0: usize,
    y0: usize,
    size: usize,
    reader: &mut BitReader,
) -> Option<()> {
    match reader.pop2()? {
        0b01 => Some(()),
        0b10 => {
            for y in y0..y0 + size {
                for x in x0..x0 + size {
                    grid[y * n + x] = true;
                }
            }
            Some(())
        }
        0b00 if size > 1 => {
            let h = size / 2;
            decode_quad(grid, n, x0, y0, h, reader)?;
            decode_quad(grid, n, x0 + h, y0, h, reader)?;
            decode_quad(grid, n, x0, y0 + h, h, reader)?;
            decode_quad(grid, n, x0 + h, y0 + h, h, reader)
        }
        _ => None,
    }
}

pub fn hex_encode(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

pub fn hex_decode(s: &str) -> Result<Vec<u8>> {
    if s.len() % 2 != 0 {
        return Err(VisemeError::MalformedFile("odd hex length".into()));
    }
    (0..s.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&s[i..i + 2], 16)
                .map_err(|_| VisemeError::MalformedFile("bad hex digit".into()))
        })
        .collect()
}

/// Alphabet entry: representative invariants, synthesis mask and count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphabetEntry {
    pub letter: Letter,
    pub domain_invariants: [f64; 5],
    pub band_invariants: Vec<[f64; 5]>,
    pub band_flat: Vec<bool>,
    pub mask: DomainMask,
    pub count: u64,
}

/// The visual alphabet: quantization trees plus the entry table, kept
/// sorted by letter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alphabet {
    pub profile: Profile,
    pub clamp: f64,
    pub r: u32,
    pub bands: usize,
    #[serde(with = "tree_hex")]
    pub domain_tree: QuantTree,
    #[serde(with = "tree_vec_hex")]
    pub band_trees: Vec<QuantTree>,
    pub entries: Vec<AlphabetEntry>,
}

mod tree_hex {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(tree: &QuantTree, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&hex_encode(&tree.to_bytes()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<QuantTree, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex_decode(&s).map_err(serde::de::Error::custom)?;
        QuantTree::from_bytes(&bytes).map_err(serde::de::Error::custom)
    }
}

mod tree_vec_hex {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        trees: &[QuantTree],
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let hexes: Vec<String> = trees.iter().map(|t| hex_encode(&t.to_bytes())).collect();
        hexes.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<QuantTree>, D::Error> {
        let hexes = Vec::<String>::deserialize(d)?;
        hexes
            .into_iter()
            .map(|h| {
                let bytes = hex_decode(&h).map_err(serde::de::Error::custom)?;
                QuantTree::from_bytes(&bytes).map_err(serde::de::Error::custom)
            })
            .collect()
    }
}

impl Alphabet {
    pub fn new(profile: Profile, clamp: f64, r: u32, bands: usize) -> Result<Self> {
        Ok(Self {
            profile,
            clamp,
            r,
            bands,
            domain_tree: QuantTree::new(profile.domain_dim(), r)?,
            band_trees: (0..bands)
                .map(|_| QuantTree::new(profile.band_dim(), r))
                .collect::<Result<_>>()?,
            entries: Vec::new(),
        })
    }

    /// Quantizes one simple shape, accumulating its occurrence. The first
    /// occurrence's descriptors and mask become the cell representative.
    pub fn insert_shape(
        &mut self,
        domain: &DomainDescriptor,
        rendering: &RenderingDescriptor,
        mask: DomainMask,
        label: Option<u32>,
    ) -> Result<Letter> {
        if rendering.bands.len() != self.bands {
            return Err(VisemeError::DimensionMismatch {
                expected: self.bands,
                got: rendering.bands.len(),
            });
        }
        let dv = normalize_domain(domain, self.profile, self.clamp)?;
        let domain_code = self.domain_tree.insert(&dv, label)?;
        let mut band_codes = Vec::with_capacity(self.bands);
        for (tree, band) in self.band_trees.iter_mut().zip(&rendering.bands) {
            let bv = normalize_band(&band.invariants, self.profile, self.clamp)?;
            band_codes.push(tree.insert(&bv, label)?);
        }
        let letter = Letter {
            domain: domain_code,
            bands: band_codes,
        };
        match self.entries.binary_search_by(|e| e.letter.cmp(&letter)) {
            Ok(i) => self.entries[i].count += 1,
            Err(i) => self.entries.insert(
                i,
                AlphabetEntry {
                    letter: letter.clone(),
                    domain_invariants: domain.invariants(),
                    band_invariants: rendering.bands.iter().map(|b| b.invariants).collect(),
                    band_flat: rendering.bands.iter().map(|b| b.flat).collect(),
                    mask,
                    count: 1,
                },
            ),
        }
        Ok(letter)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, letter: &Letter) -> Option<&AlphabetEntry> {
        self.entries
            .binary_search_by(|e| e.letter.cmp(letter))
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    /// Content fingerprint used to pair sentences with their alphabet.
    pub fn id(&self) -> u64 {
        fnv64(self.to_json().unwrap_or_default().as_bytes())
    }
}

pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// A compound shape spelled with alphabet letters.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word(pub Vec<Letter>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictEntry {
    pub word: Word,
    pub count: u64,
    pub labels: BTreeMap<u32, u64>,
}

/// Dictionary of compound shapes: deduplicated words with counts and
/// labels, kept sorted by word.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    pub words: Vec<DictEntry>,
}

impl Dictionary {
    /// Spells a compound from its member leaves and records the word. The
    /// letters follow the Hilbert visiting order of the leaf gravity
    /// centers.
    pub fn insert_compound(
        &mut self,
        leaf_centers: &[(f64, f64)],
        leaf_letters: &[Letter],
        label: Option<u32>,
    ) -> Result<Word> {
        if leaf_centers.len() != leaf_letters.len() || leaf_letters.is_empty() {
            return Err(VisemeError::InvalidArgument(
                "compound needs matching centers and letters".into(),
            ));
        }
        let order = order_points(leaf_centers, 8);
        let word = Word(order.into_iter().map(|i| leaf_letters[i].clone()).collect());
        let i = match self.words.binary_search_by(|e| e.word.cmp(&word)) {
            Ok(i) => i,
            Err(i) => {
                self.words.insert(
                    i,
                    DictEntry {
                        word: word.clone(),
                        count: 0,
                        labels: BTreeMap::new(),
                    },
                );
                i
            }
        };
        self.words[i].count += 1;
        if let Some(l) = label {
            *self.words[i].labels.entry(l).or_insert(0) += 1;
        }
        Ok(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &Word) -> Option<&DictEntry> {
        self.words
            .binary_search_by(|e| e.word.cmp(word))
            .ok()
            .map(|i| &self.words[i])
    }

    /// Distinct words sharing a label are synonyms of each other.
    pub fn synonyms(&self, label: u32) -> Vec<&Word> {
        self.words
            .iter()
            .filter(|e| e.labels.contains_key(&label))
            .map(|e| &e.word)
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}
