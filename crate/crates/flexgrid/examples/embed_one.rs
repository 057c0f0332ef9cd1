//! Embed a single generated image with the default pipeline.

use flexgrid::bench::{make_synthetic_dataset, Shape};
use flexgrid::config::Config;
use flexgrid::embed::embed_image;

fn main() -> flexgrid::Result<()> {
    let (image, _) = make_synthetic_dataset(&[Shape::Disk], 1, 128, 0.2, 7)?.remove(0);
    let config = Config::default();
    let embedding = embed_image(&image, &config)?;

    let norm = embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
    println!("image: {}x{} RGB", image.width, image.height);
    println!(
        "grid: {}x{}, patch side {}, variant {}",
        config.grid.rows, config.grid.cols, config.patch.side, config.embed.variant
    );
    println!("embedding: {} dims, L2 norm {norm:.4}", embedding.len());
    let head: Vec<String> = embedding[..6].iter().map(|v| format!("{v:.4}")).collect();
    println!("first values: {}", head.join(", "));
    Ok(())
}
