//! The two binary formats: FGV1 feature matrices and FGM1 model
//! checkpoints, both written and read back bit-exactly.

use flexgrid::bench::{make_synthetic_dataset, Shape};
use flexgrid::config::Config;
use flexgrid::embed::image_graph;
use flexgrid::features::{feature_matrix, read_feature_file, write_feature_file};
use flexgrid::learn::{read_model, write_model, MlpModel};

fn main() -> flexgrid::Result<()> {
    let (image, _) = make_synthetic_dataset(&[Shape::Disk], 1, 96, 0.2, 5)?.remove(0);
    let config = Config::default();

    // Node features for one image: one row per grid node.
    let graph = image_graph(&image, &config)?;
    let coords: Vec<(f64, f64)> = graph.nodes.iter().map(|n| (n.x, n.y)).collect();
    let matrix =
        feature_matrix(&image, &coords, config.patch.side, config.builtin_extractor()?)?;
    let bytes = write_feature_file(&matrix);
    println!(
        "FGV1: {} nodes x {} dims -> {} bytes (12-byte header + {}x4)",
        matrix.n,
        matrix.d,
        bytes.len(),
        matrix.n * matrix.d
    );
    let back = read_feature_file(&bytes)?;
    assert_eq!(back.data(), matrix.data());
    println!("FGV1 round trip: exact");

    let model = MlpModel::init(&[512, 32, 3], 9)?;
    let bytes = write_model(&model);
    println!(
        "FGM1: layers {:?}, {} parameters -> {} bytes",
        model.dims(),
        model.param_count(),
        bytes.len()
    );
    // Storage is binary32, so the first write quantizes; every trip after
    // that is bit-exact.
    let loaded = read_model(&bytes)?;
    let max_delta = model
        .weights()
        .iter()
        .flatten()
        .zip(loaded.weights().iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!("first write quantizes weights, max delta {max_delta:.2e}");
    assert_eq!(read_model(&write_model(&loaded))?, loaded);
    println!("FGM1 round trip after quantization: exact");
    Ok(())
}
