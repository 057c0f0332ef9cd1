//! Eigenvector centrality on a regular lattice: centers outrank edges,
//! edges outrank corners, and diagonal links lift the dominant eigenvalue.

use flexgrid::graph::{
    build_grid_graph, eigenvector_centrality, Connectivity, CENTRALITY_MAX_ITER, CENTRALITY_TOL,
};

fn main() -> flexgrid::Result<()> {
    let side = 4usize;
    let coords: Vec<(f64, f64)> = (0..side * side)
        .map(|i| ((i % side) as f64 * 10.0, (i / side) as f64 * 10.0))
        .collect();

    for connectivity in [Connectivity::Four, Connectivity::Eight] {
        let graph = build_grid_graph(&coords, side, side, connectivity)?;
        let cv = eigenvector_centrality(&graph, CENTRALITY_MAX_ITER, CENTRALITY_TOL)?;
        println!(
            "{connectivity:?}-connected {side}x{side} grid, {} edges, dominant eigenvalue {:.4}:",
            graph.edges.len(),
            cv.eigenvalue
        );
        for r in 0..side {
            let row: Vec<String> =
                (0..side).map(|c| format!("{:.4}", cv.c[r * side + c])).collect();
            println!("  {}", row.join("  "));
        }
        let corner = cv.c[0];
        let edge = cv.c[1];
        let center = cv.c[side + 1];
        println!("  corner {corner:.4} < edge {edge:.4} < center {center:.4}\n");
        assert!(corner < edge && edge < center);
    }
    Ok(())
}
