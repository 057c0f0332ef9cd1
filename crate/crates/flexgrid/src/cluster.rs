//! K-means clustering and the keypoint-to-lattice projection.
//!
//! The projection runs two independent 1-D clusterings, one over keypoint
//! x-coordinates (k = columns) and one over y (k = rows); the sorted center
//! lists form the Cartesian product of lattice node coordinates. Clustering
//! x and y jointly in 2-D would yield k arbitrary points, not a lattice.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::keypoints::KeyPoint;

/// Output of one k-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub centers: Vec<Vec<f64>>,
    /// Input index to center index; every point maps to its nearest center,
    /// ties to the lowest index.
    pub assignment: Vec<usize>,
    /// Sum of squared point-to-center distances.
    pub inertia: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = dist2(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Sample initial centers with probability proportional to squared distance
/// from the nearest already-chosen center.
fn kmeans_pp_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // Every point coincides with a chosen center.
            rng.gen_range(0..points.len())
        };
        centers.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            let d = dist2(p, centers.last().unwrap());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centers
}

/// Lloyd's algorithm with k-means++ initialization.
///
/// An iteration that leaves a cluster empty repairs it by moving that center
/// onto the point currently farthest from its own center. Terminates when no
/// center moves by `tol` or more (L2), or after `max_iter` iterations.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterResult> {
    if points.is_empty() {
        return Err(Error::Config("kmeans needs at least one point".into()));
    }
    if k == 0 || k > points.len() {
        return Err(Error::Config(format!(
            "cluster count {k} outside 1..={}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Dimension("points must share one dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeans_pp_init(points, k, &mut rng);
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centers).0).collect();
    let mut inertia: f64 = points
        .iter()
        .zip(&assignment)
        .map(|(p, &j)| dist2(p, &centers[j]))
        .sum();
    for _ in 0..max_iter {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &j) in points.iter().zip(&assignment) {
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut new_centers = centers.clone();
        for j in 0..k {
            if counts[j] > 0 {
                for (c, s) in new_centers[j].iter_mut().zip(&sums[j]) {
                    *c = s / counts[j] as f64;
                }
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                let farthest = points
                    .iter()
                    .enumerate()
                    .max_by(|(_, a), (_, b)| {
                        let da = dist2(a, &new_centers[nearest(a, &new_centers).0]);
                        let db = dist2(b, &new_centers[nearest(b, &new_centers).0]);
                        da.total_cmp(&db)
                    })
                    .map(|(i, _)| i)
                    .unwrap();
                new_centers[j] = points[farthest].clone();
            }
        }
        let movement = centers
            .iter()
            .zip(&new_centers)
            .map(|(a, b)| dist2(a, b).sqrt())
            .fold(0.0f64, f64::max);
        centers = new_centers;
        assignment = points.iter().map(|p| nearest(p, &centers).0).collect();
        let new_inertia: f64 = points
            .iter()
            .zip(&assignment)
            .map(|(p, &j)| dist2(p, &centers[j]))
            .sum();
        debug_assert!(new_inertia <= inertia + 1e-9, "inertia rose: {inertia} -> {new_inertia}");
        inertia = new_inertia;
        if movement < tol {
            break;
        }
    }
    Ok(ClusterResult { centers, assignment, inertia })
}

/// Restarts per axis inside [`project_grid`]; the lowest-inertia run wins.
const GRID_RESTARTS: u64 = 4;

fn best_axis_centers(values: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<f64>> {
    let mut best: Option<ClusterResult> = None;
    for r in 0..GRID_RESTARTS {
        let run = kmeans(values, k, seed ^ r.wrapping_mul(0x9E37_79B9_7F4A_7C15), 100, 1e-6)?;
        if best.as_ref().map_or(true, |b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let mut centers: Vec<f64> = best.unwrap().centers.into_iter().map(|c| c[0]).collect();
    centers.sort_by(f64::total_cmp);
    Ok(centers)
}

/// Project keypoints onto a rows x cols lattice.
///
/// X-coordinates are clustered with k = cols and y-coordinates with k = rows;
/// node (r, c) sits at (x_center[c], y_center[r]). Output is row-major with
/// x ascending within a row and y ascending down rows.
pub fn project_grid(
    keypoints: &[KeyPoint],
    rows: usize,
    cols: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if rows == 0 || cols == 0 {
        return Err(Error::Config("grid must have at least one row and column".into()));
    }
    if keypoints.len() < rows.max(cols) {
        return Err(Error::Config(format!(
            "{} key-points cannot fill a {rows}x{cols} grid",
            keypoints.len()
        )));
    }
    let xs: Vec<Vec<f64>> = keypoints.iter().map(|k| vec![k.x as f64]).collect();
    let ys: Vec<Vec<f64>> = keypoints.iter().map(|k| vec![k.y as f64]).collect();
    let x_centers = best_axis_centers(&xs, cols, seed)?;
    let y_centers = best_axis_centers(&ys, rows, seed.wrapping_add(1))?;
    let mut coords = Vec::with_capacity(rows * cols);
    for &y in &y_centers {
        for &x in &x_centers {
            coords.push((x, y));
        }
    }
    Ok(coords)
}
