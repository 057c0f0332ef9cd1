//! Acceptance gate: ten numbered end-to-end criteria, one PASS/FAIL line
//! each (visible with --nocapture). Oracles here are coded from the
//! definitions, independently of the library internals they check.

use std::collections::HashSet;
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flexgrid::bench::{run_ablation, synthetic_dataset, embed_set};
use flexgrid::config::Config;
use flexgrid::embed::{
    embed_image, node_embeddings, EdgeWeighting, EmbedParams, ThetaMode, Variant, ALL_VARIANTS,
    MIN_EDGE_DISTANCE,
};
use flexgrid::features::{read_feature_file, write_feature_file, PatchFeatureMatrix};
use flexgrid::graph::{
    build_grid_graph, centrality_from_adjacency, eigenvector_centrality, CentralityVector,
    Connectivity, GridGraph, CENTRALITY_MAX_ITER, CENTRALITY_TOL,
};
use flexgrid::ingest::{load_cifar10_batch, Image};
use flexgrid::keypoints::{fast_detect, select_keypoints, KeyPoint};
use flexgrid::learn::{
    batch_gradients, evaluate, forward_loss, read_model, train, write_model, MlpModel, Sample,
};

/// Serializes the wall-clock-sensitive criteria so parallel test threads
/// cannot distort their timings.
static TIMING_GATE: Mutex<()> = Mutex::new(());

fn gate() -> std::sync::MutexGuard<'static, ()> {
    TIMING_GATE.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: usize, name: &str, ok: bool, detail: &str) {
    println!("criterion {n} ({name}): {} [{detail}]", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

fn noise_image(rng: &mut ChaCha8Rng, width: u32, height: u32) -> Image {
    let pixels = (0..(width * height * 3) as usize).map(|_| rng.gen()).collect();
    Image::new(width, height, 3, pixels).unwrap()
}

#[test]
fn criterion_01_pixel_budget() {
    let _g = gate();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let image = noise_image(&mut rng, 640, 438);
    let config = Config::default();
    let start = Instant::now();
    let embedding = embed_image(&image, &config).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    let patches = (config.grid.rows * config.grid.cols) as f64;
    let retained = patches * (config.patch.side * config.patch.side) as f64;
    let total = (image.width * image.height) as f64;
    let percent = 100.0 * retained / total;
    let ok = retained == 25_600.0
        && total == 280_320.0
        && (percent - 9.13).abs() < 0.005
        && embedding.len() == 512
        && elapsed < 1.0;
    report(
        1,
        "pixel budget",
        ok,
        &format!("{retained}/{total} pixels = {percent:.2}%, embed took {elapsed:.3}s"),
    );
}

#[test]
fn criterion_02_dimension_laws() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let image = noise_image(&mut rng, 128, 128);
    let config = Config::default();
    let sum_dim = embed_image(&image, &config).unwrap().len();
    let mut concat = config.clone();
    concat.embed.variant = Variant::Agg1;
    let concat_dim = embed_image(&image, &concat).unwrap().len();
    let ok = sum_dim == 512 && concat_dim == 12_800;
    report(2, "dimension laws", ok, &format!("Agg1R dim {sum_dim}, Agg1 dim {concat_dim}"));
}

/// Dense coefficient-matrix oracle: assemble the full n x n one- and
/// two-step coefficient matrices from the formulas, then multiply.
fn oracle_embeddings(
    x: &PatchFeatureMatrix,
    graph: &GridGraph,
    centrality: Option<&CentralityVector>,
    params: &EmbedParams,
) -> Vec<Vec<f64>> {
    let n = graph.n();
    let adj = |a: usize, b: usize| graph.adjacency[a * n + b] != 0;
    let degree = |a: usize| (0..n).filter(|&b| adj(a, b)).count() as f64;
    let theta = |a: usize| match params.theta_mode {
        ThetaMode::NeighborCount => degree(a),
        ThetaMode::Constant(c) => c,
    };
    let invdist = |a: usize, b: usize| {
        let dx = graph.nodes[a].x - graph.nodes[b].x;
        let dy = graph.nodes[a].y - graph.nodes[b].y;
        1.0 / (dx * dx + dy * dy).sqrt().max(MIN_EDGE_DISTANCE)
    };
    let weight = |a: usize, b: usize| match params.edge_weighting {
        EdgeWeighting::None => 1.0,
        EdgeWeighting::InverseDistance => {
            let total: f64 = (0..n).filter(|&u| adj(a, u)).map(|u| invdist(a, u)).sum();
            invdist(a, b) * degree(a) / total
        }
    };
    let evc = params.variant.uses_centrality();
    let score = |v: usize| centrality.map(|cv| cv.c[v]).unwrap_or(1.0);
    let mut coeff = vec![vec![0.0f64; n]; n];
    for v in 0..n {
        for u in 0..n {
            if !adj(v, u) {
                continue;
            }
            coeff[v][u] +=
                if evc { score(u) / theta(v) } else { weight(v, u) * params.gamma / theta(v) };
            if params.variant.two_step() {
                for z in 0..n {
                    if adj(u, z) && z != v {
                        coeff[v][z] += if evc {
                            score(z) / theta(u)
                        } else {
                            weight(u, z) * params.gamma / theta(u)
                        };
                    }
                }
            }
        }
    }
    (0..n)
        .map(|v| {
            (0..x.d)
                .map(|j| {
                    let own = if evc { score(v) } else { 1.0 } * x.row(v)[j] as f64;
                    own + (0..n).map(|u| coeff[v][u] * x.row(u)[j] as f64).sum::<f64>()
                })
                .collect()
        })
        .collect()
}

#[test]
fn criterion_03_aggregation_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut max_rel = 0.0f64;
    for _ in 0..200 {
        let rows = rng.gen_range(1..=3);
        let cols = rng.gen_range(1..=3);
        let n = rows * cols;
        let d = rng.gen_range(1..=7);
        let coords: Vec<(f64, f64)> =
            (0..n).map(|_| (rng.gen_range(0.0..40.0), rng.gen_range(0.0..40.0))).collect();
        let connectivity = if rng.gen() { Connectivity::Four } else { Connectivity::Eight };
        let graph = build_grid_graph(&coords, rows, cols, connectivity).unwrap();
        let data: Vec<f32> = (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x = PatchFeatureMatrix::new(n, d, data).unwrap();
        let centrality =
            Some(eigenvector_centrality(&graph, CENTRALITY_MAX_ITER, CENTRALITY_TOL).unwrap());
        let gamma = [1.0, 0.8, 1.3][rng.gen_range(0..3)];
        let theta_mode = if rng.gen() {
            ThetaMode::NeighborCount
        } else {
            ThetaMode::Constant(rng.gen_range(0.5..3.0))
        };
        let edge_weighting =
            if rng.gen() { EdgeWeighting::None } else { EdgeWeighting::InverseDistance };
        for variant in ALL_VARIANTS {
            let params = EmbedParams { variant, gamma, theta_mode, edge_weighting };
            let cv = variant.uses_centrality().then(|| centrality.clone().unwrap());
            let got = node_embeddings(&x, &graph, cv.as_ref(), &params).unwrap();
            let want = oracle_embeddings(&x, &graph, cv.as_ref(), &params);
            for (gr, wr) in got.iter().zip(&want) {
                for (g, w) in gr.iter().zip(wr) {
                    max_rel = max_rel.max((g - w).abs() / w.abs().max(1.0));
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = max_rel < 1e-12 && elapsed < 10.0;
    report(
        3,
        "aggregation oracle",
        ok,
        &format!("200 instances x 8 variants, max relative error {max_rel:.2e}, {elapsed:.2}s"),
    );
}

fn connected(adjacency: &[u8], n: usize) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for u in 0..n {
            if adjacency[v * n + u] != 0 && !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn dense_top_eigenvector(adjacency: &[u8], n: usize) -> Vec<f64> {
    let m = nalgebra::DMatrix::<f64>::from_fn(n, n, |r, c| adjacency[r * n + c] as f64);
    let eigen = nalgebra::SymmetricEigen::new(m);
    let top = (0..n)
        .max_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]))
        .unwrap();
    let mut v: Vec<f64> = eigen.eigenvectors.column(top).iter().cloned().collect();
    if v.iter().sum::<f64>() < 0.0 {
        for x in &mut v {
            *x = -*x;
        }
    }
    v
}

#[test]
fn criterion_04_centrality_oracle() {
    let start = Instant::now();
    let mut checked = 0usize;
    let mut max_err = 0.0f64;
    let mut check = |adjacency: &[u8], n: usize| {
        let cv = centrality_from_adjacency(adjacency, n, 50_000, CENTRALITY_TOL).unwrap();
        let dense = dense_top_eigenvector(adjacency, n);
        for (a, b) in cv.c.iter().zip(&dense) {
            max_err = max_err.max((a - b).abs());
        }
        let norm = cv.c.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-9, "norm {norm}");
        assert!(cv.c.iter().all(|&v| v > 0.0), "centrality must be positive");
        checked += 1;
    };
    for n in 1..=6usize {
        let pairs: Vec<(usize, usize)> =
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        for mask in 0u32..1 << pairs.len() {
            let mut adjacency = vec![0u8; n * n];
            for (bit, &(i, j)) in pairs.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    adjacency[i * n + j] = 1;
                    adjacency[j * n + i] = 1;
                }
            }
            if connected(&adjacency, n) {
                check(&adjacency, n);
            }
        }
    }
    for side in [3usize, 5] {
        let coords: Vec<(f64, f64)> = (0..side * side)
            .map(|i| ((i % side) as f64 * 7.0, (i / side) as f64 * 7.0))
            .collect();
        let graph = build_grid_graph(&coords, side, side, Connectivity::Four).unwrap();
        check(&graph.adjacency, graph.n());
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = max_err < 1e-6 && elapsed < 10.0;
    report(
        4,
        "centrality oracle",
        ok,
        &format!("{checked} connected graphs, max componentwise error {max_err:.2e}, {elapsed:.2}s"),
    );
}

mod detector_oracle {
    use flexgrid::ingest::GrayImage;
    use flexgrid::keypoints::KeyPoint;

    /// Ring offsets re-derived from the definition: lattice points at
    /// squared distance 8..=10, walked clockwise from 12 o'clock in image
    /// coordinates.
    fn ring_offsets() -> Vec<(i32, i32)> {
        let mut pts: Vec<(i32, i32)> = Vec::new();
        for dy in -3i32..=3 {
            for dx in -3i32..=3 {
                if (8..=10).contains(&(dx * dx + dy * dy)) {
                    pts.push((dx, dy));
                }
            }
        }
        let angle = |p: &(i32, i32)| -> f64 {
            let phi = (p.0 as f64).atan2(-(p.1 as f64));
            if phi < 0.0 {
                phi + 2.0 * std::f64::consts::PI
            } else {
                phi
            }
        };
        pts.sort_by(|a, b| angle(a).total_cmp(&angle(b)));
        assert_eq!(pts.len(), 16);
        pts
    }

    fn score(ring: &[f64], c: f64, t: f64, arc: usize) -> f64 {
        let mut best = 0.0f64;
        for sign in [1.0f64, -1.0] {
            let ok: Vec<bool> = ring
                .iter()
                .map(|&v| if sign > 0.0 { v > c + t } else { v < c - t })
                .collect();
            if ok.iter().all(|&b| b) {
                best = best.max(ring.iter().map(|&v| (v - c).abs()).sum());
                continue;
            }
            for start in 0..16 {
                if !ok[start] || ok[(start + 15) % 16] {
                    continue;
                }
                let mut len = 0;
                while len < 16 && ok[(start + len) % 16] {
                    len += 1;
                }
                if len >= arc {
                    let sad: f64 = (0..len).map(|i| (ring[(start + i) % 16] - c).abs()).sum();
                    best = best.max(sad);
                }
            }
        }
        best
    }

    pub fn detect(gray: &GrayImage, t: f64, arc: usize) -> Vec<KeyPoint> {
        let circle = ring_offsets();
        let (w, h) = (gray.width as usize, gray.height as usize);
        let mut scores = vec![0.0f64; w * h];
        for y in 3..h - 3 {
            for x in 3..w - 3 {
                let ring: Vec<f64> = circle
                    .iter()
                    .map(|&(dx, dy)| {
                        gray.get((x as i64 + dx as i64) as u32, (y as i64 + dy as i64) as u32)
                    })
                    .collect();
                scores[y * w + x] = score(&ring, gray.get(x as u32, y as u32), t, arc);
            }
        }
        let mut out = Vec::new();
        for y in 3..h - 3 {
            for x in 3..w - 3 {
                let s = scores[y * w + x];
                if s <= 0.0 {
                    continue;
                }
                let suppressed = (-1i64..=1).any(|dy| {
                    (-1i64..=1).any(|dx| {
                        if dx == 0 && dy == 0 {
                            return false;
                        }
                        let q = ((y as i64 + dy) as usize, (x as i64 + dx) as usize);
                        let ns = scores[q.0 * w + q.1];
                        ns > s || (ns == s && q < (y, x))
                    })
                });
                if !suppressed {
                    out.push(KeyPoint { x: x as u32, y: y as u32, score: s, orientation: 0.0 });
                }
            }
        }
        out
    }
}

#[test]
fn criterion_05_keypoint_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut matched = 0usize;
    for _ in 0..50 {
        let values: Vec<f64> =
            (0..24 * 24).map(|_| rng.gen_range(0..=255u32) as f64 / 255.0).collect();
        let gray = flexgrid::ingest::GrayImage::new(24, 24, values).unwrap();
        let got = fast_detect(&gray, 0.1, 9).unwrap();
        let want = detector_oracle::detect(&gray, 0.1, 9);
        assert_eq!(got, want);
        matched += 1;
    }
    // Constant image: the detector finds nothing, the selector must fill.
    let flat = flexgrid::ingest::GrayImage::new(64, 64, vec![0.3; 64 * 64]).unwrap();
    assert!(fast_detect(&flat, 0.1, 9).unwrap().is_empty());
    let filled: Vec<KeyPoint> = select_keypoints(&[], 250, 64, 64, 16, 7).unwrap();
    let distinct: HashSet<(u32, u32)> = filled.iter().map(|k| (k.x, k.y)).collect();
    let in_margin = filled
        .iter()
        .all(|k| (16..48).contains(&k.x) && (16..48).contains(&k.y));
    let ok = matched == 50 && filled.len() == 250 && distinct.len() == 250 && in_margin;
    report(
        5,
        "keypoint correctness",
        ok,
        &format!("{matched}/50 images match exactly; fallback filled {} margin-valid points", filled.len()),
    );
}

#[test]
fn criterion_06_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let model = MlpModel::init(&[8, 5, 3], 11).unwrap();
    let batch: Vec<Sample> = (0..6)
        .map(|_| ((0..8).map(|_| rng.gen_range(-1.0..1.0)).collect(), rng.gen_range(0..3)))
        .collect();
    let refs: Vec<&Sample> = batch.iter().collect();
    let (grad_w, grad_b, _) = batch_gradients(&model, &refs).unwrap();
    let eps = 1e-5;
    let probe = |layer: usize, bias: bool, i: usize, delta: f64| -> f64 {
        let mut weights = model.weights().to_vec();
        let mut biases = model.biases().to_vec();
        if bias {
            biases[layer][i] += delta;
        } else {
            weights[layer][i] += delta;
        }
        let m = MlpModel::from_parts(weights, biases, model.dims().to_vec()).unwrap();
        forward_loss(&m, &batch).unwrap().0
    };
    let mut max_rel = 0.0f64;
    for layer in 0..model.weights().len() {
        for (bias, grads) in [(false, &grad_w[layer]), (true, &grad_b[layer])] {
            for i in 0..grads.len() {
                let numeric = (probe(layer, bias, i, eps) - probe(layer, bias, i, -eps)) / (2.0 * eps);
                let denom = numeric.abs().max(grads[i].abs()).max(1e-8);
                max_rel = max_rel.max((numeric - grads[i]).abs() / denom);
            }
        }
    }
    let ok = max_rel < 1e-4;
    report(6, "gradient check", ok, &format!("max relative error {max_rel:.2e} on [8,5,3]"));
}

fn benchmark_run(config: &Config) -> (f64, f64) {
    let dataset = synthetic_dataset(100, 50, 96, 0.3, config.seed).unwrap();
    let (train_samples, _) = embed_set(&dataset.train, config).unwrap();
    let (test_samples, _) = embed_set(&dataset.test, config).unwrap();
    let dim = train_samples[0].0.len();
    let model = MlpModel::init(&[dim, config.train.hidden, 3], config.seed).unwrap();
    let (model, _) = train(
        model,
        &train_samples,
        &test_samples,
        config.train.epochs,
        config.train.batch,
        config.train.lr,
        config.seed,
    )
    .unwrap();
    evaluate(&model, &test_samples).unwrap()
}

#[test]
fn criterion_07_end_to_end_benchmark() {
    let _g = gate();
    let start = Instant::now();
    let config = Config::default();
    let (acc_a, loss_a) = benchmark_run(&config);
    let (acc_b, loss_b) = benchmark_run(&config);
    let elapsed = start.elapsed().as_secs_f64();
    let ok = acc_a >= 0.90 && acc_a == acc_b && loss_a == loss_b && elapsed < 120.0;
    report(
        7,
        "end-to-end benchmark",
        ok,
        &format!("test accuracy {acc_a:.4} (rerun {acc_b:.4}), 300 train / 150 test, both runs {elapsed:.1}s"),
    );
}

#[test]
fn criterion_08_throughput_informational() {
    let _g = gate();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let config = Config::default();
    let images: Vec<Image> = (0..8).map(|_| noise_image(&mut rng, 640, 438)).collect();
    embed_image(&images[0], &config).unwrap();
    let start = Instant::now();
    for image in &images {
        embed_image(image, &config).unwrap();
    }
    let rate = images.len() as f64 / start.elapsed().as_secs_f64();
    // Informational only: reported, never gating.
    println!(
        "criterion 8 (throughput): {} [{rate:.1} images/s at 640x438, threshold 10, informational only]",
        if rate >= 10.0 { "PASS" } else { "INFO" }
    );
}

#[test]
fn criterion_09_ablation_ordering() {
    let _g = gate();
    let dataset = synthetic_dataset(16, 8, 96, 0.3, 9).unwrap();
    let mut config = Config::default();
    config.patch.side = 16;
    config.train.epochs = 6;
    config.train.hidden = 16;
    // A dense 10x10 eight-connected grid makes the extra second-order
    // sweep of the 2-step variants cost milliseconds per image, well
    // above scheduler jitter, so the timing order is stable.
    config.grid.connectivity = Connectivity::Eight;
    let rows = run_ablation(&dataset, &ALL_VARIANTS, &[16], &[(10, 10)], &config, 9).unwrap();
    let time_of = |v: Variant| rows.iter().find(|r| r.variant == v).unwrap().sec_per_image;
    let sane = rows
        .iter()
        .all(|r| r.sec_per_image > 0.0 && (0.0..=1.0).contains(&r.test_acc) && r.test_loss.is_finite());
    let ok = rows.len() == 8 && sane && time_of(Variant::Agg2R) > time_of(Variant::Agg1R);
    report(
        9,
        "ablation ordering",
        ok,
        &format!(
            "{} rows; Agg1R {:.5}s/image vs Agg2R {:.5}s/image",
            rows.len(),
            time_of(Variant::Agg1R),
            time_of(Variant::Agg2R)
        ),
    );
}

#[test]
fn criterion_10_format_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    // Feature matrices: value -> bytes -> value and bytes -> value -> bytes.
    for _ in 0..100 {
        let n = rng.gen_range(1..=8);
        let d = rng.gen_range(1..=32);
        let data: Vec<f32> = (0..n * d).map(|_| rng.gen_range(-8.0..8.0)).collect();
        let x = PatchFeatureMatrix::new(n, d, data).unwrap();
        let bytes = write_feature_file(&x);
        let back = read_feature_file(&bytes).unwrap();
        assert_eq!((back.n, back.d), (x.n, x.d));
        assert_eq!(back.data(), x.data());
        assert_eq!(write_feature_file(&back), bytes);
    }
    // Checkpoints: binary32-valued models survive bit-exactly.
    for _ in 0..100 {
        let dims =
            vec![rng.gen_range(1..5usize), rng.gen_range(1..5usize), rng.gen_range(2..4usize)];
        let tensor = |len: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..len).map(|_| (rng.gen::<f32>() * 6.0 - 3.0) as f64).collect()
        };
        let model = MlpModel::from_parts(
            vec![tensor(dims[0] * dims[1], &mut rng), tensor(dims[1] * dims[2], &mut rng)],
            vec![tensor(dims[1], &mut rng), tensor(dims[2], &mut rng)],
            dims,
        )
        .unwrap();
        let bytes = write_model(&model);
        let back = read_model(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(write_model(&back), bytes);
    }
    // CIFAR-10 decode against plain byte slicing.
    let mut batch = Vec::new();
    for _ in 0..5 {
        batch.push(rng.gen_range(0..10u8));
        batch.extend((0..3072).map(|_| rng.gen::<u8>()));
    }
    let records = load_cifar10_batch(&batch).unwrap();
    assert_eq!(records.len(), 5);
    for (k, (label, image)) in records.iter().enumerate() {
        let base = k * 3073;
        assert_eq!(*label, batch[base]);
        for y in 0..32u32 {
            for x in 0..32u32 {
                let offset = base + 1 + (y * 32 + x) as usize;
                let want = [batch[offset], batch[offset + 1024], batch[offset + 2048]];
                assert_eq!(image.pixel(x, y), &want);
            }
        }
    }
    report(10, "format round-trips", true, "100 FGV1 + 100 FGM1 payloads, 5 CIFAR records");
}
