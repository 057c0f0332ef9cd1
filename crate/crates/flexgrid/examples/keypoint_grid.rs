//! Walk the front half of the pipeline stage by stage: corner detection,
//! selection to a fixed budget, and clustering onto the grid lattice.

use flexgrid::bench::{make_synthetic_dataset, Shape};
use flexgrid::cluster::project_grid;
use flexgrid::config::Config;
use flexgrid::ingest::to_gray;
use flexgrid::keypoints::{fast_detect, select_keypoints};

fn main() -> flexgrid::Result<()> {
    let (image, _) = make_synthetic_dataset(&[Shape::Square], 1, 128, 0.1, 3)?.remove(0);
    let config = Config::default();

    let gray = to_gray(&image)?;
    let detections = fast_detect(&gray, config.keypoints.threshold, config.keypoints.arc)?;
    println!("detected {} corners above threshold", detections.len());
    if let Some(best) = detections.iter().max_by(|a, b| a.score.total_cmp(&b.score)) {
        println!(
            "strongest corner at ({}, {}), score {:.4}, orientation {:.3} rad",
            best.x, best.y, best.score, best.orientation
        );
    }

    let selected = select_keypoints(
        &detections,
        config.keypoints.target,
        image.width,
        image.height,
        config.margin(),
        config.seed,
    )?;
    println!(
        "selected {} points inside the {}px margin",
        selected.len(),
        config.margin()
    );

    let coords = project_grid(&selected, config.grid.rows, config.grid.cols, config.seed)?;
    println!("grid centers ({} rows x {} cols):", config.grid.rows, config.grid.cols);
    for r in 0..config.grid.rows {
        let row: Vec<String> = (0..config.grid.cols)
            .map(|c| {
                let (x, y) = coords[r * config.grid.cols + c];
                format!("({x:6.1},{y:6.1})")
            })
            .collect();
        println!("  {}", row.join(" "));
    }
    Ok(())
}
