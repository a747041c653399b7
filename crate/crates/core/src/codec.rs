//! Sentence encoding and image synthesis: the full pipeline from rasters to
//! Hilbert-ordered words and back.
//!
//! Encoding decomposes the image, describes every region, quantizes simple
//! shapes into the alphabet, spells compounds into the dictionary, and lists
//! the leaf words in the Hilbert visiting order of their gravity centers.
//! Synthesis replays each word: the stored domain mask is placed at the
//! recorded pose, unclaimed pixels are filled by iterated median filtering
//! of the label raster, and each band's analytic expression is evaluated
//! back through the inverse frame chain.

use serde::{Deserialize, Serialize};

use crate::alphabet::{Alphabet, Dictionary, DomainMask, Letter, Profile, Word};
use crate::error::{Result, VisemeError};
use crate::grouping::{aggregate, CompoundShape};
use crate::hilbert::order_points;
use crate::image::MultiImage;
use crate::rendering::{band_surface_from_pose, eval_band_surface, BandPose};
use crate::segment::{decompose, DecomposeParams, DecompTree};

/// Grid resolution for the visiting order of gravity centers.
const ORDER_BITS: u32 = 8;

#[derive(Debug, Clone, Copy)]
pub struct EncodeConfig {
    pub precision: f64,
    pub min_card: usize,
    /// Bits per quantized coordinate.
    pub vq_bits: u32,
    pub profile: Profile,
    pub clamp: f64,
    /// Also list compound words in the sentence (they index the dictionary;
    /// synthesis replays the simple words).
    pub include_compounds: bool,
    /// Resolution cap for stored domain masks.
    pub mask_cap: u32,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            precision: 4.0,
            min_card: 8,
            vq_bits: 4,
            profile: Profile::Full,
            clamp: 2.0,
            include_compounds: false,
            mask_cap: 10,
        }
    }
}

/// Localization of one word: where the shape sits in the image plane and
/// how each band's surface leans on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordPose {
    pub x_g: f64,
    pub y_g: f64,
    /// Domain orientation in radians.
    pub theta: f64,
    /// Major inertia value.
    pub scale: f64,
    pub surface: i64,
    pub bands: Vec<BandPose>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SentenceItem {
    Simple { letter: Letter, pose: WordPose },
    Compound { word: Word, pose: WordPose },
}

impl SentenceItem {
    pub fn pose(&self) -> &WordPose {
        match self {
            SentenceItem::Simple { pose, .. } => pose,
            SentenceItem::Compound { pose, .. } => pose,
        }
    }
}

/// Hilbert-ordered list of words plus the header needed for synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub width: u32,
    pub height: u32,
    pub bands: usize,
    pub depth: u32,
    pub precision: f64,
    pub vq_bits: u32,
    pub profile: Profile,
    pub clamp: f64,
    pub alphabet_id: u64,
    pub items: Vec<SentenceItem>,
}

pub struct EncodeResult {
    pub tree: DecompTree,
    pub shapes: Vec<CompoundShape>,
    pub alphabet: Alphabet,
    pub dictionary: Dictionary,
    pub sentence: Sentence,
}

/// Runs the full encoding pipeline.
pub fn encode(img: &MultiImage, cfg: &EncodeConfig) -> Result<EncodeResult> {
    let tree = decompose(
        img,
        DecomposeParams {
            precision: cfg.precision,
            min_card: cfg.min_card,
        },
    )?;
    let shapes = aggregate(&tree)?;
    let mut alphabet = Alphabet::new(cfg.profile, cfg.clamp, cfg.vq_bits, img.bands())?;

    // Quantize every leaf into the alphabet.
    let w = tree.width as i64;
    let mut leaf_letters: std::collections::BTreeMap<usize, Letter> = Default::default();
    for node in tree.leaves() {
        let shape = &shapes[node.id];
        let pixels = node.pixels.as_ref().expect("leaf pixels");
        let mask = DomainMask::build(
            pixels
                .iter()
                .map(|&p| ((p as i64 % w) as f64, (p as i64 / w) as f64)),
            (shape.domain.x_g, shape.domain.y_g),
            shape.domain.theta,
            crate::alphabet::inertia_length(shape.domain.scale, shape.domain.surface),
            cfg.mask_cap,
        );
        let letter = alphabet.insert_shape(&shape.domain, &shape.rendering, mask, None)?;
        leaf_letters.insert(node.id, letter);
    }

    // Spell every node of the hierarchy into the dictionary.
    let mut dictionary = Dictionary::default();
    for shape in &shapes {
        let centers: Vec<(f64, f64)> = shape
            .member_leaves
            .iter()
            .map(|&l| (shapes[l].domain.x_g, shapes[l].domain.y_g))
            .collect();
        let letters: Vec<Letter> = shape
            .member_leaves
            .iter()
            .map(|&l| leaf_letters[&l].clone())
            .collect();
        dictionary.insert_compound(&centers, &letters, None)?;
    }

    // Sentence: leaves (and optionally compounds) in visiting order.
    let mut carriers: Vec<((f64, f64), SentenceItem)> = Vec::new();
    for node in tree.leaves() {
        let shape = &shapes[node.id];
        carriers.push((
            (shape.domain.x_g, shape.domain.y_g),
            SentenceItem::Simple {
                letter: leaf_letters[&node.id].clone(),
                pose: pose_of(shape),
            },
        ));
    }
    if cfg.include_compounds {
        for node in &tree.nodes {
            if node.is_leaf() {
                continue;
            }
            let shape = &shapes[node.id];
            let centers: Vec<(f64, f64)> = shape
                .member_leaves
                .iter()
                .map(|&l| (shapes[l].domain.x_g, shapes[l].domain.y_g))
                .collect();
            let letters: Vec<Letter> = shape
                .member_leaves
                .iter()
                .map(|&l| leaf_letters[&l].clone())
                .collect();
            let order = order_points(&centers, ORDER_BITS);
            let word = Word(order.into_iter().map(|i| letters[i].clone()).collect());
            carriers.push((
                (shape.domain.x_g, shape.domain.y_g),
                SentenceItem::Compound {
                    word,
                    pose: pose_of(shape),
                },
            ));
        }
    }
    let centers: Vec<(f64, f64)> = carriers.iter().map(|(c, _)| *c).collect();
    let order = order_points(&centers, ORDER_BITS);
    let items: Vec<SentenceItem> = order
        .into_iter()
        .map(|i| carriers[i].1.clone())
        .collect();

    let sentence = Sentence {
        width: img.width(),
        height: img.height(),
        bands: img.bands(),
        depth: img.depth(),
        precision: cfg.precision,
        vq_bits: cfg.vq_bits,
        profile: cfg.profile,
        clamp: cfg.clamp,
        alphabet_id: alphabet.id(),
        items,
    };
    Ok(EncodeResult {
        tree,
        shapes,
        alphabet,
        dictionary,
        sentence,
    })
}

fn pose_of(shape: &CompoundShape) -> WordPose {
    WordPose {
        x_g: shape.domain.x_g,
        y_g: shape.domain.y_g,
        theta: shape.domain.theta,
        scale: shape.domain.scale,
        surface: shape.domain.surface,
        bands: shape.rendering.bands.iter().map(|b| b.pose).collect(),
    }
}

/// Rebuilds an image from a sentence and its alphabet. Words are rasterized
/// in sentence order, claiming unclaimed pixels only; leftover holes take
/// the median label of their claimed neighbors, iterated to coverage.
pub fn synthesize(sentence: &Sentence, alphabet: &Alphabet) -> Result<MultiImage> {
    Ok(synthesize_with_labels(sentence, alphabet)?.0)
}

/// Synthesis that also returns the word-claim raster.
pub fn synthesize_with_labels(
    sentence: &Sentence,
    alphabet: &Alphabet,
) -> Result<(MultiImage, Vec<u32>)> {
    if alphabet.id() != sentence.alphabet_id {
        return Err(VisemeError::MalformedFile(
            "sentence references a different alphabet".into(),
        ));
    }
    let (w, h) = (sentence.width as usize, sentence.height as usize);
    let simple: Vec<(&Letter, &WordPose)> = sentence
        .items
        .iter()
        .filter_map(|item| match item {
            SentenceItem::Simple { letter, pose } => Some((letter, pose)),
            SentenceItem::Compound { .. } => None,
        })
        .collect();
    if simple.is_empty() {
        let img = MultiImage::filled(
            sentence.width,
            sentence.height,
            sentence.bands,
            sentence.depth,
            0,
        )?;
        return Ok((img, vec![0; w * h]));
    }

    const UNCLAIMED: u32 = u32::MAX;
    let mut claims = vec![UNCLAIMED; w * h];
    let mut surfaces: Vec<Vec<crate::segment::poly::Coeffs>> = Vec::with_capacity(simple.len());
    for (wi, (letter, pose)) in simple.iter().enumerate() {
        let entry = alphabet.get(letter).ok_or_else(|| {
            VisemeError::UnresolvedCode(format!("letter {letter:?} not in alphabet"))
        })?;
        if entry.band_invariants.len() != pose.bands.len() {
            return Err(VisemeError::DimensionMismatch {
                expected: pose.bands.len(),
                got: entry.band_invariants.len(),
            });
        }
        surfaces.push(
            pose.bands
                .iter()
                .zip(&entry.band_invariants)
                .zip(&entry.band_flat)
                .map(|((bp, inv), &flat)| band_surface_from_pose(bp, inv, flat))
                .collect(),
        );
        // Claim pass over the mask bounding box, rescaled by this word's
        // own inertia length.
        let mask = &entry.mask;
        let grid = mask.grid()?;
        let sigma = crate::alphabet::inertia_length(pose.scale, pose.surface);
        let reach = mask.half_width * sigma * std::f64::consts::SQRT_2 + 1.0;
        let x_lo = ((pose.x_g - reach).floor().max(0.0)) as usize;
        let x_hi = ((pose.x_g + reach).ceil().min((w - 1) as f64)) as usize;
        let y_lo = ((pose.y_g - reach).floor().max(0.0)) as usize;
        let y_hi = ((pose.y_g + reach).ceil().min((h - 1) as f64)) as usize;
        let (s, c) = pose.theta.sin_cos();
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                let slot = &mut claims[y * w + x];
                if *slot != UNCLAIMED {
                    continue;
                }
                let (dx, dy) = (x as f64 - pose.x_g, y as f64 - pose.y_g);
                let (u, v) = (
                    (c * dx + s * dy) / sigma,
                    (-s * dx + c * dy) / sigma,
                );
                if mask.contains(&grid, u, v) {
                    *slot = wi as u32;
                }
            }
        }
    }

    fill_holes(&mut claims, w, h);

    let mut planes = vec![vec![0u8; w * h]; sentence.bands];
    let max_level = (sentence.depth - 1) as f64;
    for y in 0..h {
        for x in 0..w {
            let wi = claims[y * w + x] as usize;
            let pose = simple[wi].1;
            let (dx, dy) = (x as f64 - pose.x_g, y as f64 - pose.y_g);
            for (b, plane) in planes.iter_mut().enumerate() {
                let z = eval_band_surface(&pose.bands[b], &surfaces[wi][b], dx, dy);
                plane[y * w + x] = z.round().clamp(0.0, max_level) as u8;
            }
        }
    }
    let img = MultiImage::new(sentence.width, sentence.height, sentence.depth, planes)?;
    Ok((img, claims))
}

/// Iterated 3x3 median fill of unclaimed pixels from their claimed
/// neighbors; each pass advances the frontier one pixel.
fn fill_holes(claims: &mut [u32], w: usize, h: usize) {
    const UNCLAIMED: u32 = u32::MAX;
    let max_iters = w.max(h);
    for _ in 0..max_iters {
        let mut changed = false;
        let snapshot = claims.to_vec();
        for y in 0..h {
            for x in 0..w {
                if snapshot[y * w + x] != UNCLAIMED {
                    continue;
                }
                let mut neighbors = Vec::with_capacity(8);
                for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        if (nx, ny) == (x, y) {
                            continue;
                        }
                        let v = snapshot[ny * w + nx];
                        if v != UNCLAIMED {
                            neighbors.push(v);
                        }
                    }
                }
                if !neighbors.is_empty() {
                    neighbors.sort_unstable();
                    claims[y * w + x] = neighbors[(neighbors.len() - 1) / 2];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// Peak signal-to-noise ratio and the largest absolute sample difference.
pub fn image_fidelity(a: &MultiImage, b: &MultiImage) -> Result<(f64, u32)> {
    if a.width() != b.width() || a.height() != b.height() || a.bands() != b.bands() {
        return Err(VisemeError::DimensionMismatch {
            expected: a.pixel_count() * a.bands(),
            got: b.pixel_count() * b.bands(),
        });
    }
    let mut sq = 0.0f64;
    let mut max_err = 0u32;
    for band in 0..a.bands() {
        for (pa, pb) in a.plane(band).iter().zip(b.plane(band)) {
            let d = (*pa as i32 - *pb as i32).unsigned_abs();
            max_err = max_err.max(d);
            sq += (d as f64) * (d as f64);
        }
    }
    let mse = sq / (a.pixel_count() * a.bands()) as f64;
    let peak = (a.depth() - 1) as f64;
    let psnr = if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    };
    Ok((psnr, max_err))
}

impl Sentence {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    /// Compact little-endian form mirroring the JSON field order, poses as
    /// 32-bit floats.
    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"VSN1");
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&(self.bands as u32).to_le_bytes());
        out.extend_from_slice(&self.depth.to_le_bytes());
        out.extend_from_slice(&(self.precision as f32).to_le_bytes());
        out.extend_from_slice(&self.vq_bits.to_le_bytes());
        out.push(match self.profile {
            Profile::Full => 0,
            Profile::ConvexHull => 1,
        });
        out.extend_from_slice(&(self.clamp as f32).to_le_bytes());
        out.extend_from_slice(&self.alphabet_id.to_le_bytes());
        out.extend_from_slice(&(self.items.len() as u32).to_le_bytes());
        for item in &self.items {
            match item {
                SentenceItem::Simple { letter, pose } => {
                    out.push(0);
                    write_letter(&mut out, letter);
                    write_pose(&mut out, pose);
                }
                SentenceItem::Compound { word, pose } => {
                    out.push(1);
                    out.extend_from_slice(&(word.0.len() as u32).to_le_bytes());
                    for letter in &word.0 {
                        write_letter(&mut out, letter);
                    }
                    write_pose(&mut out, pose);
                }
            }
        }
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(4)? != b"VSN1" {
            return Err(VisemeError::MalformedFile("missing VSN1 magic".into()));
        }
        let width = r.u32()?;
        let height = r.u32()?;
        let bands = r.u32()? as usize;
        let depth = r.u32()?;
        let precision = r.f32()? as f64;
        let vq_bits = r.u32()?;
        let profile = match r.u8()? {
            0 => Profile::Full,
            1 => Profile::ConvexHull,
            _ => return Err(VisemeError::MalformedFile("bad profile code".into())),
        };
        let clamp = r.f32()? as f64;
        let alphabet_id = r.u64()?;
        let count = r.u32()? as usize;
        let mut items = Vec::with_capacity(count);
        for _ in 0..count {
            let kind = r.u8()?;
            let item = match kind {
                0 => SentenceItem::Simple {
                    letter: read_letter(&mut r, bands)?,
                    pose: read_pose(&mut r, bands)?,
                },
                1 => {
                    let n = r.u32()? as usize;
                    let mut letters = Vec::with_capacity(n);
                    for _ in 0..n {
                        letters.push(read_letter(&mut r, bands)?);
                    }
                    SentenceItem::Compound {
                        word: Word(letters),
                        pose: read_pose(&mut r, bands)?,
                    }
                }
                _ => return Err(VisemeError::MalformedFile("bad item kind".into())),
            };
            items.push(item);
        }
        Ok(Sentence {
            width,
            height,
            bands,
            depth,
            precision,
            vq_bits,
            profile,
            clamp,
            alphabet_id,
            items,
        })
    }
}

fn write_letter(out: &mut Vec<u8>, letter: &Letter) {
    out.extend_from_slice(&letter.domain.to_le_bytes());
    for &b in &letter.bands {
        out.extend_from_slice(&b.to_le_bytes());
    }
}

fn write_pose(out: &mut Vec<u8>, pose: &WordPose) {
    for v in [pose.x_g, pose.y_g, pose.theta, pose.scale, pose.surface as f64] {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for b in &pose.bands {
        for v in [b.z_center, b.theta_xz, b.theta_yz, b.theta_xu, b.lambda_u] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(VisemeError::TruncatedPayload {
                expected: self.pos + n,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn read_letter(r: &mut Cursor, bands: usize) -> Result<Letter> {
    let domain = r.u64()?;
    let mut band_codes = Vec::with_capacity(bands);
    for _ in 0..bands {
        band_codes.push(r.u64()?);
    }
    Ok(Letter {
        domain,
        bands: band_codes,
    })
}

fn read_pose(r: &mut Cursor, bands: usize) -> Result<WordPose> {
    let x_g = r.f32()? as f64;
    let y_g = r.f32()? as f64;
    let theta = r.f32()? as f64;
    let scale = r.f32()? as f64;
    let surface = r.f32()? as i64;
    let mut band_poses = Vec::with_capacity(bands);
    for _ in 0..bands {
        band_poses.push(BandPose {
            z_center: r.f32()? as f64,
            theta_xz: r.f32()? as f64,
            theta_yz: r.f32()? as f64,
            theta_xu: r.f32()? as f64,
            lambda_u: r.f32()? as f64,
        });
    }
    Ok(WordPose {
        x_g,
        y_g,
        theta,
        scale,
        surface,
        bands: band_poses,
    })
}
