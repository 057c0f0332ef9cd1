//! Raster image containers and bit-exact loaders.
//!
//! Supported inputs are binary PPM/PGM (maxval 255) and the CIFAR-10 binary
//! batch format. Compressed codecs are deliberately out of scope; convert
//! other formats externally.

use crate::error::{Error, Result};

/// 8-bit raster image, row-major interleaved samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    /// 1 (grayscale) or 3 (RGB).
    pub channels: u32,
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, channels: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Image("image dimensions must be at least 1x1".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Image(format!("unsupported channel count {channels}")));
        }
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(Error::Image(format!(
                "pixel buffer length {} does not match {}x{}x{}",
                pixels.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Self { width, height, channels, pixels })
    }

    /// Samples of the pixel at `(x, y)`; length equals `channels`.
    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.channels as usize;
        let idx = (y as usize * self.width as usize + x as usize) * c;
        &self.pixels[idx..idx + c]
    }
}

/// Luminance image with values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Image("image dimensions must be at least 1x1".into()));
        }
        if values.len() != width as usize * height as usize {
            return Err(Error::Image(format!(
                "value buffer length {} does not match {}x{}",
                values.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, values })
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }
}

fn parse_header_int(bytes: &[u8], pos: &mut usize, what: &str) -> Result<u32> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if *pos == start {
        return Err(Error::Decode(format!("malformed header: missing {what}")));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Decode(format!("malformed header: bad {what}")))
}

/// Decode a binary PPM (`P6`, RGB) or PGM (`P5`, gray) file with maxval 255.
///
/// Pixel order in the returned [`Image`] is identical to the file payload.
pub fn load_ppm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 {
        return Err(Error::Decode("malformed header: too short".into()));
    }
    let channels = match &bytes[..2] {
        b"P6" => 3u32,
        b"P5" => 1u32,
        _ => return Err(Error::Decode("malformed header: expected P5 or P6 magic".into())),
    };
    let mut pos = 2;
    let width = parse_header_int(bytes, &mut pos, "width")?;
    let height = parse_header_int(bytes, &mut pos, "height")?;
    let maxval = parse_header_int(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::Decode(format!("unsupported maxval {maxval}, expected 255")));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Decode("malformed header: missing payload separator".into()));
    }
    pos += 1;
    let expected = width as usize * height as usize * channels as usize;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::Decode(format!(
            "truncated payload: got {} bytes, need {}",
            payload.len(),
            expected
        )));
    }
    if payload.len() > expected {
        return Err(Error::Decode(format!(
            "trailing bytes after payload: got {} bytes, need {}",
            payload.len(),
            expected
        )));
    }
    Image::new(width, height, channels, payload.to_vec())
}

/// Encode an [`Image`] as canonical binary PPM/PGM: `P6\n{w} {h}\n255\n` + payload.
pub fn write_ppm(image: &Image) -> Vec<u8> {
    let magic = if image.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

/// Bytes per CIFAR-10 record: 1 label byte + 3 32x32 color planes.
pub const CIFAR_RECORD_LEN: usize = 3073;
const CIFAR_PLANE: usize = 1024;

/// Decode a CIFAR-10 binary batch into `(label, 32x32 RGB image)` records.
///
/// Each 3073-byte record holds one label byte followed by the R, G, and B
/// planes (1024 bytes each, row-major); the output is interleaved RGB.
pub fn load_cifar10_batch(bytes: &[u8]) -> Result<Vec<(u8, Image)>> {
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD_LEN != 0 {
        return Err(Error::Decode(format!(
            "batch length {} is not a positive multiple of {}",
            bytes.len(),
            CIFAR_RECORD_LEN
        )));
    }
    let mut records = Vec::with_capacity(bytes.len() / CIFAR_RECORD_LEN);
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
        let label = rec[0];
        if label > 9 {
            return Err(Error::Decode(format!("record {i}: label byte {label} > 9")));
        }
        let planes = &rec[1..];
        let mut pixels = vec![0u8; CIFAR_PLANE * 3];
        for p in 0..CIFAR_PLANE {
            pixels[p * 3] = planes[p];
            pixels[p * 3 + 1] = planes[CIFAR_PLANE + p];
            pixels[p * 3 + 2] = planes[2 * CIFAR_PLANE + p];
        }
        records.push((label, Image::new(32, 32, 3, pixels)?));
    }
    Ok(records)
}

/// Rec.601 luma weights for RGB-to-gray conversion.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Convert to luminance in `[0, 1]`.
///
/// Single-channel input is scaled by 1/255; RGB input is weighted with
/// Rec.601 luma coefficients first.
pub fn to_gray(image: &Image) -> Result<GrayImage> {
    let n = image.width as usize * image.height as usize;
    let values = match image.channels {
        1 => image.pixels.iter().map(|&v| v as f64 / 255.0).collect(),
        3 => {
            let mut values = Vec::with_capacity(n);
            for px in image.pixels.chunks_exact(3) {
                let y = LUMA_WEIGHTS[0] * px[0] as f64
                    + LUMA_WEIGHTS[1] * px[1] as f64
                    + LUMA_WEIGHTS[2] * px[2] as f64;
                values.push(y / 255.0);
            }
            values
        }
        c => return Err(Error::Image(format!("unsupported channel count {c}"))),
    };
    GrayImage::new(image.width, image.height, values)
}

/// Source coordinate for output index `i`: `(i + 0.5) * scale - 0.5`, clamped.
#[inline]
fn sample_axis(i: u32, scale: f64, src_len: u32) -> (usize, usize, f64) {
    let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let lo = s.floor() as usize;
    let hi = (lo + 1).min(src_len as usize - 1);
    (lo, hi, s - lo as f64)
}

/// Bilinear resize of a luminance image.
pub fn resize_bilinear_gray(image: &GrayImage, new_width: u32, new_height: u32) -> Result<GrayImage> {
    if new_width == 0 || new_height == 0 {
        return Err(Error::Image("target dimensions must be at least 1x1".into()));
    }
    let sx = image.width as f64 / new_width as f64;
    let sy = image.height as f64 / new_height as f64;
    let w = image.width as usize;
    let mut values = Vec::with_capacity(new_width as usize * new_height as usize);
    for j in 0..new_height {
        let (y0, y1, fy) = sample_axis(j, sy, image.height);
        for i in 0..new_width {
            let (x0, x1, fx) = sample_axis(i, sx, image.width);
            let top = image.values[y0 * w + x0] * (1.0 - fx) + image.values[y0 * w + x1] * fx;
            let bot = image.values[y1 * w + x0] * (1.0 - fx) + image.values[y1 * w + x1] * fx;
            values.push(top * (1.0 - fy) + bot * fy);
        }
    }
    GrayImage::new(new_width, new_height, values)
}

/// Bilinear resize of an 8-bit image; samples are interpolated per channel
/// and rounded to the nearest integer.
pub fn resize_bilinear(image: &Image, new_width: u32, new_height: u32) -> Result<Image> {
    if new_width == 0 || new_height == 0 {
        return Err(Error::Image("target dimensions must be at least 1x1".into()));
    }
    let sx = image.width as f64 / new_width as f64;
    let sy = image.height as f64 / new_height as f64;
    let c = image.channels as usize;
    let w = image.width as usize;
    let mut pixels = Vec::with_capacity(new_width as usize * new_height as usize * c);
    for j in 0..new_height {
        let (y0, y1, fy) = sample_axis(j, sy, image.height);
        for i in 0..new_width {
            let (x0, x1, fx) = sample_axis(i, sx, image.width);
            for ch in 0..c {
                let at = |y: usize, x: usize| image.pixels[(y * w + x) * c + ch] as f64;
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                let v = top * (1.0 - fy) + bot * fy;
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Image::new(new_width, new_height, image.channels, pixels)
}
