//! Dataset adapters, synthetic shape images, and the ablation harness.
//!
//! The synthetic generator exists so the full pipeline can be exercised in
//! seconds on one core: three shape classes (disk, square, stripes) with
//! class-correlated fill colors over a textured gray background. Adapters
//! cover CIFAR-10 binary batches and plain image directories with a
//! labels.csv sidecar.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::embed::{embed_image, Variant};
use crate::error::{Error, Result};
use crate::ingest::{load_cifar10_batch, load_ppm, write_ppm, Image};
use crate::learn::{evaluate, train, MlpModel, Sample};

/// Where a dataset's bytes came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetSource {
    Cifar10Binary,
    ImageDirectory,
    Synthetic,
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub name: String,
    pub source: DatasetSource,
    pub train_count: usize,
    pub test_count: usize,
    pub class_names: Vec<String>,
}

/// Labeled train/test splits plus their manifest. Labels index into
/// `manifest.class_names`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub train: Vec<(Image, usize)>,
    pub test: Vec<(Image, usize)>,
}

impl Dataset {
    pub fn new(
        name: &str,
        source: DatasetSource,
        class_names: Vec<String>,
        train: Vec<(Image, usize)>,
        test: Vec<(Image, usize)>,
    ) -> Result<Self> {
        if train.is_empty() || test.is_empty() {
            return Err(Error::Config("both dataset splits must be non-empty".into()));
        }
        let classes = class_names.len();
        for (_, label) in train.iter().chain(&test) {
            if *label >= classes {
                return Err(Error::Config(format!(
                    "label {label} outside the {classes} dataset classes"
                )));
            }
        }
        Ok(Self {
            manifest: DatasetManifest {
                name: name.to_string(),
                source,
                train_count: train.len(),
                test_count: test.len(),
                class_names,
            },
            train,
            test,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Disk,
    Square,
    Stripes,
}

impl Shape {
    pub fn name(self) -> &'static str {
        match self {
            Shape::Disk => "disk",
            Shape::Square => "square",
            Shape::Stripes => "stripes",
        }
    }
}

pub const ALL_SHAPES: [Shape; 3] = [Shape::Disk, Shape::Square, Shape::Stripes];

/// Minimum image side for the synthetic generator; shapes need room to
/// land at random positions without clipping.
pub const MIN_SYNTHETIC_SIDE: u32 = 64;

fn shape_fill(shape: Shape, rng: &mut ChaCha8Rng) -> [f64; 3] {
    // One dominant channel per class keeps classes separable under the
    // jitter below (dominant stays >= 175, the others <= 100).
    let base: [f64; 3] = match shape {
        Shape::Disk => [205.0, 70.0, 70.0],
        Shape::Square => [70.0, 205.0, 70.0],
        Shape::Stripes => [70.0, 70.0, 205.0],
    };
    let lightness = rng.gen_range(-20.0..20.0);
    let mut fill = [0.0; 3];
    for c in 0..3 {
        fill[c] = base[c] + lightness + rng.gen_range(-10.0..10.0);
    }
    fill
}

fn draw_shape_image(shape: Shape, side: u32, noise: f64, rng: &mut ChaCha8Rng) -> Image {
    let s = side as i64;
    let base = rng.gen_range(40.0..80.0);
    let gx = rng.gen_range(-25.0..25.0);
    let gy = rng.gen_range(-25.0..25.0);
    let fill = shape_fill(shape, rng);

    enum Mask {
        Disk { cx: i64, cy: i64, r2: f64 },
        Square { cx: i64, cy: i64, h: i64 },
        Stripes { x0: i64, x1: i64, y0: i64, y1: i64, period: i64, vertical: bool },
    }
    let centered = |extent: i64, rng: &mut ChaCha8Rng| rng.gen_range(extent + 2..s - extent - 2);
    let mask = match shape {
        Shape::Disk => {
            let r = rng.gen_range(side as f64 / 6.0..side as f64 / 4.0);
            let m = r.ceil() as i64;
            Mask::Disk { cx: centered(m, rng), cy: centered(m, rng), r2: r * r }
        }
        Shape::Square => {
            let h = rng.gen_range((side / 7) as i64..(side / 4) as i64);
            Mask::Square { cx: centered(h, rng), cy: centered(h, rng), h }
        }
        Shape::Stripes => {
            let hw = rng.gen_range((side / 5) as i64..(side / 3) as i64);
            let hh = rng.gen_range((side / 5) as i64..(side / 3) as i64);
            let cx = centered(hw, rng);
            let cy = centered(hh, rng);
            Mask::Stripes {
                x0: cx - hw,
                x1: cx + hw,
                y0: cy - hh,
                y1: cy + hh,
                period: rng.gen_range(3..8),
                vertical: rng.gen(),
            }
        }
    };
    let inside = |x: i64, y: i64| -> bool {
        match &mask {
            Mask::Disk { cx, cy, r2 } => {
                let (dx, dy) = ((x - cx) as f64, (y - cy) as f64);
                dx * dx + dy * dy <= *r2
            }
            Mask::Square { cx, cy, h } => (x - cx).abs() <= *h && (y - cy).abs() <= *h,
            Mask::Stripes { x0, x1, y0, y1, period, vertical } => {
                if x < *x0 || x > *x1 || y < *y0 || y > *y1 {
                    return false;
                }
                let along = if *vertical { x - x0 } else { y - y0 };
                (along / period) % 2 == 0
            }
        }
    };

    let mut pixels = Vec::with_capacity((side * side * 3) as usize);
    for y in 0..s {
        for x in 0..s {
            let bg = base + gx * x as f64 / s as f64 + gy * y as f64 / s as f64;
            let mut px = if inside(x, y) { fill } else { [bg, bg, bg] };
            if noise > 0.0 {
                for v in &mut px {
                    *v += noise * rng.gen_range(-45.0..45.0);
                }
            }
            for v in px {
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Image::new(side, side, 3, pixels).unwrap()
}

/// Labeled shape images, grouped by class in `shapes` order. Each image is
/// seeded independently from (seed, global index), so image k never
/// depends on how many others were generated.
pub fn make_synthetic_dataset(
    shapes: &[Shape],
    per_class: usize,
    side: u32,
    noise: f64,
    seed: u64,
) -> Result<Vec<(Image, usize)>> {
    if shapes.is_empty() || per_class == 0 {
        return Err(Error::Config("need at least one class and one image per class".into()));
    }
    if side < MIN_SYNTHETIC_SIDE {
        return Err(Error::Config(format!(
            "synthetic side {side} below the minimum {MIN_SYNTHETIC_SIDE}"
        )));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::Config(format!("noise level {noise} outside [0, 1]")));
    }
    let mut out = Vec::with_capacity(shapes.len() * per_class);
    for (label, &shape) in shapes.iter().enumerate() {
        for i in 0..per_class {
            let idx = (label * per_class + i) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed.wrapping_add((idx + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            );
            out.push((draw_shape_image(shape, side, noise, &mut rng), label));
        }
    }
    Ok(out)
}

/// Three-class synthetic dataset with disjoint seed streams for the two
/// splits.
pub fn synthetic_dataset(
    train_per_class: usize,
    test_per_class: usize,
    side: u32,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    let train = make_synthetic_dataset(&ALL_SHAPES, train_per_class, side, noise, seed)?;
    let test = make_synthetic_dataset(
        &ALL_SHAPES,
        test_per_class,
        side,
        noise,
        seed ^ 0xD1F3_5C0B_9E77_A241,
    )?;
    Dataset::new(
        "synthetic",
        DatasetSource::Synthetic,
        ALL_SHAPES.iter().map(|s| s.name().to_string()).collect(),
        train,
        test,
    )
}

pub const CIFAR10_CLASSES: [&str; 10] = [
    "airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck",
];

/// Decode CIFAR-10 binary batches into a dataset. `limit` truncates each
/// split after decoding (None keeps everything).
pub fn cifar_dataset(
    train_batches: &[&[u8]],
    test_batch: &[u8],
    limit_train: Option<usize>,
    limit_test: Option<usize>,
) -> Result<Dataset> {
    let mut train = Vec::new();
    for batch in train_batches {
        train.extend(load_cifar10_batch(batch)?.into_iter().map(|(l, img)| (img, l as usize)));
    }
    if let Some(limit) = limit_train {
        train.truncate(limit);
    }
    let mut test: Vec<(Image, usize)> = load_cifar10_batch(test_batch)?
        .into_iter()
        .map(|(l, img)| (img, l as usize))
        .collect();
    if let Some(limit) = limit_test {
        test.truncate(limit);
    }
    Dataset::new(
        "cifar10",
        DatasetSource::Cifar10Binary,
        CIFAR10_CLASSES.iter().map(|s| s.to_string()).collect(),
        train,
        test,
    )
}

/// Write images as PPM files plus a labels.csv ("path,label") sidecar.
pub fn write_image_directory(dir: &Path, images: &[(Image, usize)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut csv = String::from("path,label\n");
    for (i, (image, label)) in images.iter().enumerate() {
        let name = format!("img_{i:05}.ppm");
        std::fs::write(dir.join(&name), write_ppm(image))?;
        csv.push_str(&format!("{name},{label}\n"));
    }
    std::fs::write(dir.join("labels.csv"), csv)?;
    Ok(())
}

/// Load a directory written in the labels.csv layout. Row order is the
/// dataset order; paths are resolved relative to the directory. Each entry
/// carries the path column as written.
pub fn load_image_directory(dir: &Path) -> Result<Vec<(String, Image, usize)>> {
    let csv = std::fs::read_to_string(dir.join("labels.csv"))?;
    let mut out = Vec::new();
    for (lineno, line) in csv.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line == "path,label") {
            continue;
        }
        let (path, label) = line
            .split_once(',')
            .ok_or_else(|| Error::Decode(format!("labels.csv line {}: no comma", lineno + 1)))?;
        let label: usize = label.trim().parse().map_err(|_| {
            Error::Decode(format!("labels.csv line {}: bad label {label:?}", lineno + 1))
        })?;
        let path = path.trim();
        let bytes = std::fs::read(dir.join(path))?;
        out.push((path.to_string(), load_ppm(&bytes)?, label));
    }
    if out.is_empty() {
        return Err(Error::Decode("labels.csv lists no images".into()));
    }
    Ok(out)
}

/// Dataset from two labels.csv directories. Class names are generic
/// (`class0`..), sized by the largest label seen.
pub fn directory_dataset(train_dir: &Path, test_dir: &Path) -> Result<Dataset> {
    let strip = |rows: Vec<(String, Image, usize)>| -> Vec<(Image, usize)> {
        rows.into_iter().map(|(_, image, label)| (image, label)).collect()
    };
    let train = strip(load_image_directory(train_dir)?);
    let test = strip(load_image_directory(test_dir)?);
    let classes = train.iter().chain(&test).map(|(_, l)| l + 1).max().unwrap_or(0).max(2);
    Dataset::new(
        "directory",
        DatasetSource::ImageDirectory,
        (0..classes).map(|i| format!("class{i}")).collect(),
        train,
        test,
    )
}

/// Embed every image under one config, in parallel across images.
/// Returns (embedding, label) pairs in input order plus the mean wall
/// seconds spent per image inside the embedding stage.
pub fn embed_set(images: &[(Image, usize)], config: &Config) -> Result<(Vec<Sample>, f64)> {
    if images.is_empty() {
        return Err(Error::Config("no images to embed".into()));
    }
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(8);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<(Vec<f64>, f64)>>>> =
        Mutex::new((0..images.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= images.len() {
                    return;
                }
                let start = Instant::now();
                let embedded = embed_image(&images[i].0, config);
                let seconds = start.elapsed().as_secs_f64();
                slots.lock().unwrap()[i] = Some(embedded.map(|e| (e, seconds)));
            });
        }
    });
    let mut samples = Vec::with_capacity(images.len());
    let mut total_seconds = 0.0;
    for (slot, (_, label)) in slots.into_inner().unwrap().into_iter().zip(images) {
        let (embedding, seconds) = slot.expect("all slots filled by workers")?;
        total_seconds += seconds;
        samples.push((embedding, *label));
    }
    Ok((samples, total_seconds / images.len() as f64))
}

/// One ablation measurement.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub variant: Variant,
    pub patch_side: u32,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub dim: usize,
    pub test_acc: f64,
    pub test_loss: f64,
    pub sec_per_image: f64,
}

/// Run every variant x patch side x grid size cell on one dataset: embed
/// both splits, train the classifier head, evaluate. Rows come out in
/// config-grid order. Everything except `sec_per_image` is deterministic
/// per seed.
pub fn run_ablation(
    dataset: &Dataset,
    variants: &[Variant],
    patch_sides: &[u32],
    grids: &[(usize, usize)],
    base: &Config,
    seed: u64,
) -> Result<Vec<AblationRow>> {
    if variants.is_empty() || patch_sides.is_empty() || grids.is_empty() {
        return Err(Error::Config("ablation grid has an empty axis".into()));
    }
    let classes = dataset.manifest.class_names.len();
    let mut rows = Vec::new();
    for &variant in variants {
        for &patch_side in patch_sides {
            for &(grid_rows, grid_cols) in grids {
                let mut config = base.clone();
                config.seed = seed;
                config.embed.variant = variant;
                config.patch.side = patch_side;
                config.grid.rows = grid_rows;
                config.grid.cols = grid_cols;
                // Warm caches so the first timed image is not an outlier.
                embed_image(&dataset.train[0].0, &config)?;
                let (train_samples, train_secs) = embed_set(&dataset.train, &config)?;
                let (test_samples, test_secs) = embed_set(&dataset.test, &config)?;
                let dim = train_samples[0].0.len();
                let model = MlpModel::init(&[dim, config.train.hidden, classes], seed)?;
                let (model, _) = train(
                    model,
                    &train_samples,
                    &test_samples,
                    config.train.epochs,
                    config.train.batch,
                    config.train.lr,
                    seed,
                )?;
                let (test_acc, test_loss) = evaluate(&model, &test_samples)?;
                let n_total = (dataset.train.len() + dataset.test.len()) as f64;
                rows.push(AblationRow {
                    variant,
                    patch_side,
                    grid_rows,
                    grid_cols,
                    dim,
                    test_acc,
                    test_loss,
                    sec_per_image: (train_secs * dataset.train.len() as f64
                        + test_secs * dataset.test.len() as f64)
                        / n_total,
                });
            }
        }
    }
    Ok(rows)
}

/// Ablation CSV with a comment line pinning down what the time column
/// measures.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out =
        String::from("# sec_per_image: embedding stage only, decode and file I/O excluded\n");
    out.push_str("variant,patch,grid,dim,test_acc,test_loss,sec_per_image\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}x{},{},{},{},{}\n",
            r.variant, r.patch_side, r.grid_rows, r.grid_cols, r.dim, r.test_acc, r.test_loss,
            r.sec_per_image
        ));
    }
    out
}
