//! Corner keypoints on luminance images.
//!
//! Detection is the 16-pixel segment test on the Bresenham circle of radius
//! 3: a pixel is a corner when a long-enough contiguous arc of circle pixels
//! is uniformly brighter or darker than the center. Corner strength is the
//! arc's sum of absolute differences, a self-contained ranking rather than a
//! Harris response. Orientation comes from intensity-centroid moments over a
//! circular window.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::GrayImage;

/// Intensity moments of a circular patch, offsets measured from the center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub m00: f64,
    pub m10: f64,
    pub m01: f64,
    /// `m10 / m00`, or 0 for an all-dark patch.
    pub centroid_x: f64,
    /// `m01 / m00`, or 0 for an all-dark patch.
    pub centroid_y: f64,
}

/// A detected or fallback corner point.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyPoint {
    pub x: u32,
    pub y: u32,
    /// Segment-test strength; 0 only for random-fallback points.
    pub score: f64,
    /// Radians in (-pi, pi]; 0 when the patch moments vanish.
    pub orientation: f64,
}

/// Bresenham circle of radius 3, clockwise from 12 o'clock:
///
/// ```text
///         15 00 01
///      14          02
///   13                03
///   12       +       04
///   11                05
///      10          06
///         09 08 07
/// ```
const CIRCLE: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

/// Strength of the best qualifying arc, or 0 if no arc of length >= `arc`
/// is uniformly brighter than `center + threshold` or darker than
/// `center - threshold`. Runs are summed from their first element in circle
/// order.
fn segment_score(ring: &[f64; 16], center: f64, threshold: f64, arc: usize) -> f64 {
    let mut state = [0i8; 16];
    for (s, &v) in state.iter_mut().zip(ring.iter()) {
        *s = if v > center + threshold {
            1
        } else if v < center - threshold {
            -1
        } else {
            0
        };
    }
    if state.iter().all(|&s| s == state[0]) {
        // Uniform ring: a single circular run of length 16.
        if state[0] == 0 {
            return 0.0;
        }
        return ring.iter().map(|&v| (v - center).abs()).sum();
    }
    // Rotate the scan to a run boundary so every maximal run is contiguous.
    let start = (0..16).find(|&i| state[i] != state[(i + 15) % 16]).unwrap();
    let mut best = 0.0f64;
    let mut i = 0;
    while i < 16 {
        let s = state[(start + i) % 16];
        let mut len = 0;
        let mut sad = 0.0;
        while i < 16 && state[(start + i) % 16] == s {
            sad += (ring[(start + i) % 16] - center).abs();
            len += 1;
            i += 1;
        }
        if s != 0 && len >= arc && sad > best {
            best = sad;
        }
    }
    best
}

/// Detect segment-test corners. Returned points are unoriented (orientation
/// 0); callers attach orientation via [`patch_moments`] when they need it.
///
/// A 3-pixel border is excluded so the circle never leaves the image, then
/// 3x3 non-maximum suppression keeps local score maxima; equal neighboring
/// scores keep the raster-first pixel. Output is in raster order.
pub fn fast_detect(gray: &GrayImage, threshold: f64, arc: usize) -> Result<Vec<KeyPoint>> {
    if gray.width < 7 || gray.height < 7 {
        return Err(Error::Image(format!(
            "segment test needs at least a 7x7 image, got {}x{}",
            gray.width, gray.height
        )));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!(
            "detection threshold {threshold} outside (0, 1)"
        )));
    }
    if arc == 0 || arc > 16 {
        return Err(Error::Config(format!("arc length {arc} outside 1..=16")));
    }
    let (w, h) = (gray.width as usize, gray.height as usize);
    let mut scores = vec![0.0f64; w * h];
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            let c = gray.values[y * w + x];
            let mut ring = [0.0f64; 16];
            for (r, &(dx, dy)) in ring.iter_mut().zip(CIRCLE.iter()) {
                let sx = (x as i64 + dx as i64) as usize;
                let sy = (y as i64 + dy as i64) as usize;
                *r = gray.values[sy * w + sx];
            }
            scores[y * w + x] = segment_score(&ring, c, threshold, arc);
        }
    }
    let mut out = Vec::new();
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            let s = scores[y * w + x];
            if s <= 0.0 {
                continue;
            }
            let mut keep = true;
            'nms: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nx = (x as i64 + dx) as usize;
                    let ny = (y as i64 + dy) as usize;
                    let ns = scores[ny * w + nx];
                    if ns > s || (ns == s && (ny, nx) < (y, x)) {
                        keep = false;
                        break 'nms;
                    }
                }
            }
            if keep {
                out.push(KeyPoint { x: x as u32, y: y as u32, score: s, orientation: 0.0 });
            }
        }
    }
    Ok(out)
}

/// Intensity moments over the circular window of `radius` around `center`.
///
/// The first-order sums pair opposite offsets, so symmetric patches yield
/// exactly zero rather than accumulation dust.
pub fn patch_moments(gray: &GrayImage, center: (u32, u32), radius: u32) -> Result<Moments> {
    let (cx, cy) = center;
    let r = radius as i64;
    let (w, h) = (gray.width as i64, gray.height as i64);
    let (x, y) = (cx as i64, cy as i64);
    if x < r || y < r || x + r >= w || y + r >= h {
        return Err(Error::Image(format!(
            "moment window of radius {radius} at ({cx},{cy}) leaves the {w}x{h} image"
        )));
    }
    let r2 = r * r;
    let at = |dx: i64, dy: i64| gray.values[((y + dy) * w + (x + dx)) as usize];
    let mut m00 = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r2 {
                m00 += at(dx, dy);
            }
        }
    }
    let span = |k: i64| ((r2 - k * k) as f64).sqrt() as i64;
    let mut m10 = 0.0;
    for dy in -r..=r {
        for dx in 1..=span(dy) {
            m10 += dx as f64 * (at(dx, dy) - at(-dx, dy));
        }
    }
    let mut m01 = 0.0;
    for dx in -r..=r {
        for dy in 1..=span(dx) {
            m01 += dy as f64 * (at(dx, dy) - at(dx, -dy));
        }
    }
    let (centroid_x, centroid_y) = if m00 > 0.0 { (m10 / m00, m01 / m00) } else { (0.0, 0.0) };
    Ok(Moments { m00, m10, m01, centroid_x, centroid_y })
}

/// Intensity-centroid orientation, 0 when both first moments vanish.
pub fn orientation(m: &Moments) -> f64 {
    if m.m10 == 0.0 && m.m01 == 0.0 {
        0.0
    } else {
        m.m01.atan2(m.m10)
    }
}

/// Reduce or pad detections to exactly `target` points inside the margin.
///
/// Detections in the valid interior (`margin <= x < width - margin`, same
/// for y) are kept by descending score, ties broken by (y, x) ascending.
/// Missing points are drawn uniformly from the interior with the seeded
/// generator, never repeating a coordinate; fallback points carry score 0.
pub fn select_keypoints(
    detections: &[KeyPoint],
    target: usize,
    width: u32,
    height: u32,
    margin: u32,
    seed: u64,
) -> Result<Vec<KeyPoint>> {
    if width <= 2 * margin || height <= 2 * margin {
        return Err(Error::Image(format!(
            "margin {margin} leaves no valid interior in a {width}x{height} image"
        )));
    }
    let (x_lo, x_hi) = (margin, width - margin);
    let (y_lo, y_hi) = (margin, height - margin);
    let capacity = (x_hi - x_lo) as usize * (y_hi - y_lo) as usize;
    if capacity < target {
        return Err(Error::Image(format!(
            "interior region holds {capacity} pixels, fewer than the {target} requested key-points"
        )));
    }
    let mut chosen: Vec<KeyPoint> = detections
        .iter()
        .filter(|k| k.x >= x_lo && k.x < x_hi && k.y >= y_lo && k.y < y_hi)
        .cloned()
        .collect();
    chosen.sort_by(|a, b| {
        b.score.total_cmp(&a.score).then_with(|| (a.y, a.x).cmp(&(b.y, b.x)))
    });
    chosen.truncate(target);
    let mut taken: HashSet<(u32, u32)> = chosen.iter().map(|k| (k.x, k.y)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while chosen.len() < target {
        let x = rng.gen_range(x_lo..x_hi);
        let y = rng.gen_range(y_lo..y_hi);
        if taken.insert((x, y)) {
            chosen.push(KeyPoint { x, y, score: 0.0, orientation: 0.0 });
        }
    }
    Ok(chosen)
}
