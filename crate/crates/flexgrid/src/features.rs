//! Per-node patch features.
//!
//! Each lattice node contributes one fixed-size square patch, so the pixel
//! budget is node_count * side^2 regardless of source image size. Built-in
//! extractors are a joint RGB histogram and a HOG descriptor; externally
//! computed features enter through FGV1 files instead.

use crate::error::{Error, Result};
use crate::ingest::{Image, LUMA_WEIGHTS};

/// Square crop around a node, samples interleaved like [`Image`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pub side: u32,
    pub channels: u32,
    pub pixels: Vec<u8>,
}

/// Node-order feature rows, stored as binary32 so FGV1 files round-trip
/// bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchFeatureMatrix {
    pub n: usize,
    pub d: usize,
    data: Vec<f32>,
}

impl PatchFeatureMatrix {
    pub fn new(n: usize, d: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::Dimension(format!(
                "feature buffer length {} does not match {n}x{d}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dimension("feature matrix contains non-finite values".into()));
        }
        Ok(Self { n, d, data })
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// Crop the `side`-pixel window around `center`, clamped to stay inside the
/// image. The window covers [cx - side/2, cx + side/2) before clamping.
pub fn extract_patch(image: &Image, center: (f64, f64), side: u32) -> Result<Patch> {
    if side == 0 {
        return Err(Error::Config("patch side must be positive".into()));
    }
    if image.width < side || image.height < side {
        return Err(Error::Image(format!(
            "{}x{} image cannot hold a {side}x{side} patch",
            image.width, image.height
        )));
    }
    let anchor = |c: f64, limit: u32| -> u32 {
        let a = c.round() as i64 - side as i64 / 2;
        a.clamp(0, (limit - side) as i64) as u32
    };
    let x0 = anchor(center.0, image.width);
    let y0 = anchor(center.1, image.height);
    let c = image.channels as usize;
    let w = image.width as usize;
    let mut pixels = Vec::with_capacity(side as usize * side as usize * c);
    for y in y0..y0 + side {
        let start = (y as usize * w + x0 as usize) * c;
        pixels.extend_from_slice(&image.pixels[start..start + side as usize * c]);
    }
    Ok(Patch { side, channels: image.channels, pixels })
}

/// Joint RGB histogram with `bins` levels per channel, L1-normalized.
/// Output dimension is bins^3; the index is red-major.
pub fn color_histogram(patch: &Patch, bins: usize) -> Result<Vec<f64>> {
    if patch.channels != 3 {
        return Err(Error::Image(format!(
            "color histogram needs 3 channels, got {}",
            patch.channels
        )));
    }
    if bins == 0 || bins > 256 {
        return Err(Error::Config(format!("histogram bins {bins} outside 1..=256")));
    }
    let mut hist = vec![0.0f64; bins * bins * bins];
    let level = |v: u8| (v as usize * bins / 256).min(bins - 1);
    for px in patch.pixels.chunks_exact(3) {
        hist[(level(px[0]) * bins + level(px[1])) * bins + level(px[2])] += 1.0;
    }
    let total = (patch.side as f64).powi(2);
    for v in &mut hist {
        *v /= total;
    }
    Ok(hist)
}

fn patch_luminance(patch: &Patch) -> Vec<f64> {
    match patch.channels {
        1 => patch.pixels.iter().map(|&v| v as f64 / 255.0).collect(),
        _ => patch
            .pixels
            .chunks_exact(patch.channels as usize)
            .map(|px| {
                (LUMA_WEIGHTS[0] * px[0] as f64
                    + LUMA_WEIGHTS[1] * px[1] as f64
                    + LUMA_WEIGHTS[2] * px[2] as f64)
                    / 255.0
            })
            .collect(),
    }
}

/// Histogram-of-oriented-gradients descriptor over the patch luminance.
///
/// Central-difference gradients (borders clamp the sampling index), unsigned
/// orientations in [0, pi) with linear votes anchored at bin left edges, and
/// 2x2-cell blocks at one-cell stride, each L2-normalized with epsilon 1e-6
/// inside the square root. Dimension: (side/cell - 1)^2 * 4 * orientations.
pub fn hog(patch: &Patch, cell: u32, orientations: usize) -> Result<Vec<f64>> {
    if cell == 0 || patch.side % cell != 0 {
        return Err(Error::Config(format!(
            "patch side {} is not a multiple of cell {cell}",
            patch.side
        )));
    }
    if orientations == 0 {
        return Err(Error::Config("orientation bin count must be positive".into()));
    }
    let cells = (patch.side / cell) as usize;
    if cells < 2 {
        return Err(Error::Config(format!(
            "patch side {} spans fewer than 2x2 cells of size {cell}",
            patch.side
        )));
    }
    let lum = patch_luminance(patch);
    let s = patch.side as usize;
    let at = |x: usize, y: usize| lum[y * s + x];
    let mut cell_hists = vec![vec![0.0f64; orientations]; cells * cells];
    let bin_width = std::f64::consts::PI / orientations as f64;
    for y in 0..s {
        for x in 0..s {
            let gx = 0.5 * (at((x + 1).min(s - 1), y) - at(x.saturating_sub(1), y));
            let gy = 0.5 * (at(x, (y + 1).min(s - 1)) - at(x, y.saturating_sub(1)));
            let magnitude = (gx * gx + gy * gy).sqrt();
            if magnitude == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx);
            if angle < 0.0 {
                angle += std::f64::consts::PI;
            }
            if angle >= std::f64::consts::PI {
                angle = 0.0;
            }
            let pos = angle / bin_width;
            let lo = (pos as usize).min(orientations - 1);
            let frac = pos - lo as f64;
            let hist = &mut cell_hists[(y / cell as usize) * cells + x / cell as usize];
            hist[lo] += (1.0 - frac) * magnitude;
            hist[(lo + 1) % orientations] += frac * magnitude;
        }
    }
    let mut out = Vec::with_capacity((cells - 1) * (cells - 1) * 4 * orientations);
    for by in 0..cells - 1 {
        for bx in 0..cells - 1 {
            let mut block = Vec::with_capacity(4 * orientations);
            for cy in by..by + 2 {
                for cx in bx..bx + 2 {
                    block.extend_from_slice(&cell_hists[cy * cells + cx]);
                }
            }
            let norm = (block.iter().map(|v| v * v).sum::<f64>() + 1e-6).sqrt();
            out.extend(block.into_iter().map(|v| v / norm));
        }
    }
    Ok(out)
}

/// Feature extractor applied to every node patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extractor {
    ColorHistogram { bins: usize },
    Hog { cell: u32, orientations: usize },
}

impl Extractor {
    /// Output dimension for patches of the given side.
    pub fn dim(&self, side: u32) -> usize {
        match *self {
            Extractor::ColorHistogram { bins } => bins * bins * bins,
            Extractor::Hog { cell, orientations } => {
                let cells = (side / cell.max(1)) as usize;
                cells.saturating_sub(1).pow(2) * 4 * orientations
            }
        }
    }

    pub fn apply(&self, patch: &Patch) -> Result<Vec<f64>> {
        match *self {
            Extractor::ColorHistogram { bins } => color_histogram(patch, bins),
            Extractor::Hog { cell, orientations } => hog(patch, cell, orientations),
        }
    }
}

/// Describe one patch per node coordinate; row i belongs to node i.
pub fn feature_matrix(
    image: &Image,
    coords: &[(f64, f64)],
    side: u32,
    extractor: Extractor,
) -> Result<PatchFeatureMatrix> {
    if coords.is_empty() {
        return Err(Error::Dimension("feature matrix needs at least one node".into()));
    }
    let d = extractor.dim(side);
    let mut data = Vec::with_capacity(coords.len() * d);
    for &center in coords {
        let row = extractor.apply(&extract_patch(image, center, side)?)?;
        debug_assert_eq!(row.len(), d);
        data.extend(row.into_iter().map(|v| v as f32));
    }
    PatchFeatureMatrix::new(coords.len(), d, data)
}

const FGV1_MAGIC: &[u8; 4] = b"FGV1";

/// Encode a feature matrix: magic "FGV1", u32 LE n, u32 LE d, then n*d
/// binary32 LE values row-major.
pub fn write_feature_file(matrix: &PatchFeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * matrix.data.len());
    out.extend_from_slice(FGV1_MAGIC);
    out.extend_from_slice(&(matrix.n as u32).to_le_bytes());
    out.extend_from_slice(&(matrix.d as u32).to_le_bytes());
    for v in &matrix.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decode an FGV1 file; the exact inverse of [`write_feature_file`].
pub fn read_feature_file(bytes: &[u8]) -> Result<PatchFeatureMatrix> {
    if bytes.len() < 12 {
        return Err(Error::Decode(format!("FGV1 header needs 12 bytes, got {}", bytes.len())));
    }
    if &bytes[..4] != FGV1_MAGIC {
        return Err(Error::Decode("bad magic, expected FGV1".into()));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| c.checked_add(12))
        .ok_or_else(|| Error::Decode(format!("FGV1 dimensions {n}x{d} overflow")))?;
    if bytes.len() != expected {
        return Err(Error::Decode(format!(
            "FGV1 payload is {} bytes, expected {} for {n}x{d}",
            bytes.len() - 12,
            expected - 12
        )));
    }
    let data: Vec<f32> = bytes[12..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    PatchFeatureMatrix::new(n, d, data)
}
