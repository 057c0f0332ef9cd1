//! Embed one image under all eight aggregation variants and compare the
//! readout dimensions: summed readouts stay at patch-feature size, while
//! concatenated readouts grow with the node count.

use flexgrid::bench::{make_synthetic_dataset, Shape};
use flexgrid::config::Config;
use flexgrid::embed::{embed_image, ALL_VARIANTS};

fn main() -> flexgrid::Result<()> {
    let (image, _) = make_synthetic_dataset(&[Shape::Stripes], 1, 128, 0.2, 11)?.remove(0);
    let mut config = Config::default();

    println!("variant  centrality  2-step  readout  dim     L2 norm");
    for variant in ALL_VARIANTS {
        config.embed.variant = variant;
        let embedding = embed_image(&image, &config)?;
        let norm = embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
        println!(
            "{:<8} {:<11} {:<7} {:<8} {:<7} {norm:.4}",
            variant.to_string(),
            if variant.uses_centrality() { "yes" } else { "no" },
            if variant.two_step() { "yes" } else { "no" },
            if variant.sum_readout() { "sum" } else { "concat" },
            embedding.len(),
        );
    }
    Ok(())
}
