//! Multispectral raster storage and the sample-set view consumed by the
//! decomposition and descriptor stages.
//!
//! Supported containers: binary PGM (P5, one band), binary PPM (P6, three
//! bands) and a raw band-sequential format with a one-line text sidecar
//! `width height bands depth`.

use std::fs;
use std::path::Path;

use crate::error::{Result, VisemeError};

/// A multispectral raster: `bands` planes of `width`·`height` integer
/// samples, every sample in `[0, depth - 1]`. Immutable after load.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiImage {
    width: u32,
    height: u32,
    depth: u32,
    /// Band-sequential sample planes, row-major within each plane.
    planes: Vec<Vec<u8>>,
}

/// Format hint for `load_image` when the extension is ambiguous.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatHint {
    Pnm,
    Raw,
}

impl MultiImage {
    pub fn new(width: u32, height: u32, depth: u32, planes: Vec<Vec<u8>>) -> Result<Self> {
        if width == 0 || height == 0 || planes.is_empty() {
            return Err(VisemeError::InvalidArgument(
                "image must have at least one column, row and band".into(),
            ));
        }
        if depth < 2 || depth > 256 {
            return Err(VisemeError::InvalidArgument(format!(
                "depth {depth} outside supported range [2, 256]"
            )));
        }
        let expected = width as usize * height as usize;
        for plane in &planes {
            if plane.len() != expected {
                return Err(VisemeError::MalformedImage(format!(
                    "band has {} samples, expected {}",
                    plane.len(),
                    expected
                )));
            }
            if let Some(&v) = plane.iter().find(|&&v| v as u32 >= depth) {
                return Err(VisemeError::SampleOutOfDepth {
                    value: v as u32,
                    depth,
                });
            }
        }
        Ok(Self {
            width,
            height,
            depth,
            planes,
        })
    }

    /// Constant image, handy for synthesis targets and tests.
    pub fn filled(width: u32, height: u32, bands: usize, depth: u32, value: u8) -> Result<Self> {
        let plane = vec![value; width as usize * height as usize];
        Self::new(width, height, depth, vec![plane; bands])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.planes.len()
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn sample(&self, band: usize, x: u32, y: u32) -> u8 {
        self.planes[band][y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn sample_at(&self, band: usize, index: u32) -> u8 {
        self.planes[band][index as usize]
    }

    pub fn plane(&self, band: usize) -> &[u8] {
        &self.planes[band]
    }

    pub fn set_sample(&mut self, band: usize, x: u32, y: u32, value: u8) {
        self.planes[band][y as usize * self.width as usize + x as usize] = value;
    }

    /// Loads PGM/PPM or the raw+sidecar multiband format. Without a hint the
    /// format is chosen from the magic bytes, falling back to raw.
    pub fn load(path: &Path, hint: Option<FormatHint>) -> Result<Self> {
        let bytes = fs::read(path)?;
        let is_pnm = bytes.len() >= 2 && bytes[0] == b'P' && (bytes[1] == b'5' || bytes[1] == b'6');
        match hint {
            Some(FormatHint::Pnm) => decode_pnm(&bytes),
            Some(FormatHint::Raw) => load_raw(path, &bytes),
            None if is_pnm => decode_pnm(&bytes),
            None => load_raw(path, &bytes),
        }
    }

    /// Canonical lossless PNM encoding: P5 for one band, P6 for three.
    pub fn to_pnm(&self) -> Result<Vec<u8>> {
        let magic = match self.bands() {
            1 => "P5",
            3 => "P6",
            n => {
                return Err(VisemeError::UnsupportedFormat(format!(
                    "{n}-band image has no PNM container; use the raw format"
                )))
            }
        };
        let mut out = format!("{magic}\n{} {}\n{}\n", self.width, self.height, self.depth - 1)
            .into_bytes();
        match self.bands() {
            1 => out.extend_from_slice(&self.planes[0]),
            _ => {
                for i in 0..self.pixel_count() {
                    for plane in &self.planes {
                        out.push(plane[i]);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn save_pnm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_pnm()?)?;
        Ok(())
    }

    /// Raw band-sequential bytes plus `width height bands depth` sidecar at
    /// `path` + ".hdr".
    pub fn save_raw(&self, path: &Path) -> Result<()> {
        let mut data = Vec::with_capacity(self.pixel_count() * self.bands());
        for plane in &self.planes {
            data.extend_from_slice(plane);
        }
        fs::write(path, data)?;
        let sidecar = format!(
            "{} {} {} {}\n",
            self.width,
            self.height,
            self.bands(),
            self.depth
        );
        fs::write(sidecar_path(path), sidecar)?;
        Ok(())
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    std::path::PathBuf::from(s)
}

fn load_raw(path: &Path, bytes: &[u8]) -> Result<MultiImage> {
    let sidecar = fs::read_to_string(sidecar_path(path)).map_err(|_| {
        VisemeError::MalformedImage(format!(
            "raw image {} has no sidecar header",
            path.display()
        ))
    })?;
    let fields: Vec<u32> = sidecar
        .split_whitespace()
        .map(|t| t.parse::<u32>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| VisemeError::MalformedImage("sidecar fields must be integers".into()))?;
    if fields.len() != 4 {
        return Err(VisemeError::MalformedImage(
            "sidecar must read `width height bands depth`".into(),
        ));
    }
    let (w, h, bands, depth) = (fields[0], fields[1], fields[2] as usize, fields[3]);
    let plane_len = w as usize * h as usize;
    let expected = plane_len * bands;
    if bytes.len() != expected {
        return Err(VisemeError::TruncatedPayload {
            expected,
            found: bytes.len(),
        });
    }
    let planes = (0..bands)
        .map(|b| bytes[b * plane_len..(b + 1) * plane_len].to_vec())
        .collect();
    MultiImage::new(w, h, depth, planes)
}

fn decode_pnm(bytes: &[u8]) -> Result<MultiImage> {
    let mut cursor = 0usize;
    if bytes.len() < 2 {
        return Err(VisemeError::MalformedImage("file shorter than magic".into()));
    }
    let bands = match &bytes[0..2] {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(VisemeError::UnsupportedFormat(format!(
                "magic {:?} (only binary P5/P6 supported)",
                String::from_utf8_lossy(other)
            )))
        }
    };
    cursor += 2;
    let width = read_pnm_int(bytes, &mut cursor)?;
    let height = read_pnm_int(bytes, &mut cursor)?;
    let maxval = read_pnm_int(bytes, &mut cursor)?;
    if width == 0 || height == 0 {
        return Err(VisemeError::MalformedImage("zero image dimension".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(VisemeError::MalformedImage(format!(
            "maxval {maxval} outside the 8-bit range"
        )));
    }
    // Single whitespace byte separates the header from the payload.
    if cursor >= bytes.len() || !bytes[cursor].is_ascii_whitespace() {
        return Err(VisemeError::MalformedImage(
            "missing separator before payload".into(),
        ));
    }
    cursor += 1;
    let plane_len = width as usize * height as usize;
    let expected = plane_len * bands;
    let payload = &bytes[cursor..];
    if payload.len() < expected {
        return Err(VisemeError::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    let depth = maxval + 1;
    let mut planes = vec![Vec::with_capacity(plane_len); bands];
    for (i, &v) in payload[..expected].iter().enumerate() {
        if v as u32 > maxval {
            return Err(VisemeError::SampleOutOfDepth {
                value: v as u32,
                depth,
            });
        }
        planes[i % bands].push(v);
    }
    MultiImage::new(width, height, depth, planes)
}

fn read_pnm_int(bytes: &[u8], cursor: &mut usize) -> Result<u32> {
    // Skip whitespace and `#` comment lines.
    loop {
        while *cursor < bytes.len() && bytes[*cursor].is_ascii_whitespace() {
            *cursor += 1;
        }
        if *cursor < bytes.len() && bytes[*cursor] == b'#' {
            while *cursor < bytes.len() && bytes[*cursor] != b'\n' {
                *cursor += 1;
            }
        } else {
            break;
        }
    }
    let start = *cursor;
    while *cursor < bytes.len() && bytes[*cursor].is_ascii_digit() {
        *cursor += 1;
    }
    if start == *cursor {
        return Err(VisemeError::MalformedImage("expected integer in header".into()));
    }
    std::str::from_utf8(&bytes[start..*cursor])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| VisemeError::MalformedImage("unreadable header integer".into()))
}

/// Writes a region-id map as PGM. Ids above 255 switch to the 16-bit P5
/// variant (most significant byte first, as netpbm readers expect).
pub fn save_label_map(path: &Path, width: u32, height: u32, labels: &[u32]) -> Result<()> {
    if labels.len() != width as usize * height as usize {
        return Err(VisemeError::InvalidArgument(
            "label map size does not match dimensions".into(),
        ));
    }
    let max = labels.iter().copied().max().unwrap_or(0);
    if max > u16::MAX as u32 {
        return Err(VisemeError::InvalidArgument(format!(
            "{max} regions exceed the 16-bit label map"
        )));
    }
    let maxval = max.max(1);
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    if maxval > 255 {
        for &v in labels {
            out.extend_from_slice(&(v as u16).to_be_bytes());
        }
    } else {
        out.extend(labels.iter().map(|&v| v as u8));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads back a label map written by `save_label_map`.
pub fn load_label_map(path: &Path) -> Result<(u32, u32, Vec<u32>)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(VisemeError::MalformedImage("label map must be P5".into()));
    }
    let mut cursor = 2usize;
    let width = read_pnm_int(&bytes, &mut cursor)?;
    let height = read_pnm_int(&bytes, &mut cursor)?;
    let maxval = read_pnm_int(&bytes, &mut cursor)?;
    cursor += 1;
    let n = width as usize * height as usize;
    let payload = &bytes[cursor..];
    let labels = if maxval > 255 {
        if payload.len() < 2 * n {
            return Err(VisemeError::TruncatedPayload {
                expected: 2 * n,
                found: payload.len(),
            });
        }
        payload[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32)
            .collect()
    } else {
        if payload.len() < n {
            return Err(VisemeError::TruncatedPayload {
                expected: n,
                found: payload.len(),
            });
        }
        payload[..n].iter().map(|&v| v as u32).collect()
    };
    Ok((width, height, labels))
}

/// Read-only view of a pixel subset of one image: the points carry their
/// (x, y) grid coordinates and an `N_s`-vector of band values.
#[derive(Debug, Clone)]
pub struct SampleSet<'a> {
    img: &'a MultiImage,
    /// Raster indices `y * width + x`, kept sorted where construction allows.
    indices: Vec<u32>,
}

impl<'a> SampleSet<'a> {
    /// Every pixel of the image exactly once, in raster order.
    pub fn full(img: &'a MultiImage) -> Self {
        Self {
            img,
            indices: (0..img.pixel_count() as u32).collect(),
        }
    }

    pub fn from_indices(img: &'a MultiImage, indices: Vec<u32>) -> Result<Self> {
        if indices.is_empty() {
            return Err(VisemeError::Empty("sample set".into()));
        }
        let limit = img.pixel_count() as u32;
        if indices.iter().any(|&i| i >= limit) {
            return Err(VisemeError::InvalidArgument(
                "sample index outside the image rectangle".into(),
            ));
        }
        Ok(Self { img, indices })
    }

    /// Pixels carrying `region` in a label map of matching dimensions.
    pub fn from_label_map(img: &'a MultiImage, labels: &[u32], region: u32) -> Result<Self> {
        if labels.len() != img.pixel_count() {
            return Err(VisemeError::InvalidArgument(
                "label map size does not match image".into(),
            ));
        }
        let indices: Vec<u32> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == region)
            .map(|(i, _)| i as u32)
            .collect();
        Self::from_indices(img, indices)
    }

    pub fn image(&self) -> &'a MultiImage {
        self.img
    }

    pub fn card(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn into_indices(self) -> Vec<u32> {
        self.indices
    }

    #[inline]
    pub fn x(&self, i: usize) -> u32 {
        self.indices[i] % self.img.width()
    }

    #[inline]
    pub fn y(&self, i: usize) -> u32 {
        self.indices[i] / self.img.width()
    }

    #[inline]
    pub fn value(&self, band: usize, i: usize) -> f64 {
        self.img.sample_at(band, self.indices[i]) as f64
    }

    pub fn bands(&self) -> usize {
        self.img.bands()
    }

    /// (x, y) pixel coordinates as integer pairs.
    pub fn points(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        let w = self.img.width();
        self.indices
            .iter()
            .map(move |&i| ((i % w) as i64, (i / w) as i64))
    }
}
