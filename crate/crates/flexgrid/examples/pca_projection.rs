//! Project image embeddings onto their top two principal components and
//! show the classes separating, class means first.

use flexgrid::bench::{embed_set, synthetic_dataset};
use flexgrid::config::Config;
use flexgrid::learn::pca2;

fn main() -> flexgrid::Result<()> {
    let config = Config::default();
    let dataset = synthetic_dataset(10, 1, 96, 0.25, config.seed)?;
    let (samples, _) = embed_set(&dataset.train, &config)?;

    let vectors: Vec<Vec<f64>> = samples.iter().map(|(x, _)| x.clone()).collect();
    let projected = pca2(&vectors)?;

    println!("projected {} embeddings from {} dims to 2", vectors.len(), vectors[0].len());
    for (class, name) in dataset.manifest.class_names.iter().enumerate() {
        let points: Vec<(f64, f64)> = projected
            .iter()
            .zip(&samples)
            .filter(|(_, (_, label))| *label == class)
            .map(|(&p, _)| p)
            .collect();
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        println!("class {name:<8} mean ({mx:>8.4}, {my:>8.4})  first {:?}", {
            let (x, y) = points[0];
            (format!("{x:.3}"), format!("{y:.3}"))
        });
    }
    Ok(())
}
