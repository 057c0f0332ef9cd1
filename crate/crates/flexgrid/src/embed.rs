//! Node aggregation and image-level readout.
//!
//! Every variant computes one d-dimensional vector per node, then reduces
//! them to the image vector. Agg variants mix each node's own features with
//! degree-normalized neighbor sums; EVC variants weight every term by
//! eigenvector centrality instead (no gamma, no edge weights). The trailing
//! R selects sum readout (dimension d); its absence selects node-order
//! concatenation (dimension n*d).

use std::fmt;
use std::str::FromStr;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::features::{feature_matrix, PatchFeatureMatrix};
use crate::graph::{
    build_grid_graph, eigenvector_centrality, CentralityVector, GridGraph, CENTRALITY_MAX_ITER,
    CENTRALITY_TOL,
};
use crate::ingest::{to_gray, Image};
use crate::keypoints::{fast_detect, select_keypoints};
use crate::cluster::project_grid;

/// Aggregation variant. The digit picks the neighborhood depth (1 = direct
/// neighbors, 2 = adds two-step walks), the prefix picks plain vs
/// centrality-weighted sums, and R marks sum readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Agg1R,
    Agg1,
    Agg2R,
    Agg2,
    Evc1R,
    Evc1,
    Evc2R,
    Evc2,
}

/// All variants in ablation-table order.
pub const ALL_VARIANTS: [Variant; 8] = [
    Variant::Agg1R,
    Variant::Agg1,
    Variant::Agg2R,
    Variant::Agg2,
    Variant::Evc1R,
    Variant::Evc1,
    Variant::Evc2R,
    Variant::Evc2,
];

impl Variant {
    pub fn uses_centrality(self) -> bool {
        matches!(self, Variant::Evc1R | Variant::Evc1 | Variant::Evc2R | Variant::Evc2)
    }

    pub fn two_step(self) -> bool {
        matches!(self, Variant::Agg2R | Variant::Agg2 | Variant::Evc2R | Variant::Evc2)
    }

    pub fn sum_readout(self) -> bool {
        matches!(self, Variant::Agg1R | Variant::Agg2R | Variant::Evc1R | Variant::Evc2R)
    }

    /// Readout dimension for an n-node graph with d-dimensional features.
    pub fn readout_dim(self, n: usize, d: usize) -> usize {
        if self.sum_readout() {
            d
        } else {
            n * d
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Variant::Agg1R => "Agg1R",
            Variant::Agg1 => "Agg1",
            Variant::Agg2R => "Agg2R",
            Variant::Agg2 => "Agg2",
            Variant::Evc1R => "EVC1R",
            Variant::Evc1 => "EVC1",
            Variant::Evc2R => "EVC2R",
            Variant::Evc2 => "EVC2",
        };
        f.write_str(name)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "agg1r" => Ok(Variant::Agg1R),
            "agg1" => Ok(Variant::Agg1),
            "agg2r" => Ok(Variant::Agg2R),
            "agg2" => Ok(Variant::Agg2),
            "evc1r" => Ok(Variant::Evc1R),
            "evc1" => Ok(Variant::Evc1),
            "evc2r" => Ok(Variant::Evc2R),
            "evc2" => Ok(Variant::Evc2),
            _ => Err(Error::Config(format!(
                "unknown variant {s}, expected one of Agg1R Agg1 Agg2R Agg2 EVC1R EVC1 EVC2R EVC2"
            ))),
        }
    }
}

/// Normalization divisor for a node's neighbor sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaMode {
    /// Divide by the receiving node's degree (mean aggregation).
    NeighborCount,
    /// Divide by a fixed positive constant.
    Constant(f64),
}

/// Optional modulation of neighbor terms by edge length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeWeighting {
    #[default]
    None,
    /// Weight each neighbor by inverse edge distance, rescaled so a node's
    /// weights sum to its degree (weights become 1 at equal distances).
    InverseDistance,
}

/// Aggregation parameters. Gamma and edge weighting apply to Agg variants
/// only; EVC sums are weighted purely by centrality scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedParams {
    pub variant: Variant,
    pub gamma: f64,
    pub theta_mode: ThetaMode,
    pub edge_weighting: EdgeWeighting,
}

impl Default for EmbedParams {
    fn default() -> Self {
        Self {
            variant: Variant::Agg1R,
            gamma: 1.0,
            theta_mode: ThetaMode::NeighborCount,
            edge_weighting: EdgeWeighting::None,
        }
    }
}

/// Edges shorter than this are treated as this long when inverting
/// distances, so coincident nodes cannot produce infinite weights.
pub const MIN_EDGE_DISTANCE: f64 = 1e-12;

fn validate(params: &EmbedParams) -> Result<()> {
    if !params.gamma.is_finite() {
        return Err(Error::Config(format!("gamma {} is not finite", params.gamma)));
    }
    if let ThetaMode::Constant(t) = params.theta_mode {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Config(format!("constant theta {t} must be positive")));
        }
    }
    Ok(())
}

/// Per-node embeddings under the chosen variant. Row order matches the
/// graph's node order; every row keeps dimension d.
pub fn node_embeddings(
    x: &PatchFeatureMatrix,
    graph: &GridGraph,
    centrality: Option<&CentralityVector>,
    params: &EmbedParams,
) -> Result<Vec<Vec<f64>>> {
    validate(params)?;
    let n = graph.n();
    let d = x.d;
    if x.n != n {
        return Err(Error::Dimension(format!(
            "feature matrix has {} rows for a {n}-node graph",
            x.n
        )));
    }
    let scores = match (params.variant.uses_centrality(), centrality) {
        (true, Some(cv)) => {
            if cv.c.len() != n {
                return Err(Error::Dimension(format!(
                    "centrality has {} entries for a {n}-node graph",
                    cv.c.len()
                )));
            }
            Some(&cv.c)
        }
        (true, None) => {
            return Err(Error::Config(format!(
                "variant {} needs a centrality vector",
                params.variant
            )))
        }
        (false, Some(_)) => {
            return Err(Error::Config(format!(
                "variant {} takes no centrality vector",
                params.variant
            )))
        }
        (false, None) => None,
    };
    let theta = |v: usize| match params.theta_mode {
        ThetaMode::NeighborCount => graph.degree(v) as f64,
        ThetaMode::Constant(t) => t,
    };
    let weight = |a: usize, b: usize| match params.edge_weighting {
        EdgeWeighting::None => 1.0,
        EdgeWeighting::InverseDistance => {
            let inv = |p: usize, q: usize| 1.0 / graph.distance(p, q).max(MIN_EDGE_DISTANCE);
            let total: f64 = graph.neighbors(a).iter().map(|&q| inv(a, q)).sum();
            inv(a, b) * graph.degree(a) as f64 / total
        }
    };
    let feat = |i: usize| x.row(i).iter().map(|&v| v as f64);
    let mut out = Vec::with_capacity(n);
    for v in 0..n {
        let mut h: Vec<f64> = match scores {
            Some(c) => feat(v).map(|f| f * c[v]).collect(),
            None => feat(v).collect(),
        };
        for &u in graph.neighbors(v) {
            let scale = match scores {
                Some(c) => c[u] / theta(v),
                None => weight(v, u) * params.gamma / theta(v),
            };
            for (hi, f) in h.iter_mut().zip(feat(u)) {
                *hi += scale * f;
            }
        }
        if params.variant.two_step() {
            for (u, z) in graph.second_order(v) {
                let scale = match scores {
                    Some(c) => c[z] / theta(u),
                    None => weight(u, z) * params.gamma / theta(u),
                };
                for (hi, f) in h.iter_mut().zip(feat(z)) {
                    *hi += scale * f;
                }
            }
        }
        debug_assert_eq!(h.len(), d);
        out.push(h);
    }
    Ok(out)
}

/// Reduce node embeddings to the image vector: elementwise sum for R
/// variants, node-order concatenation otherwise.
pub fn readout(h: &[Vec<f64>], variant: Variant) -> Vec<f64> {
    if variant.sum_readout() {
        let mut sum = vec![0.0; h.first().map_or(0, Vec::len)];
        for row in h {
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
        }
        sum
    } else {
        h.iter().flatten().cloned().collect()
    }
}

/// Aggregate an existing feature matrix over a graph; computes centrality
/// itself when the variant calls for it.
pub fn embed_with_features(
    x: &PatchFeatureMatrix,
    graph: &GridGraph,
    params: &EmbedParams,
) -> Result<Vec<f64>> {
    let centrality = if params.variant.uses_centrality() {
        Some(eigenvector_centrality(graph, CENTRALITY_MAX_ITER, CENTRALITY_TOL)?)
    } else {
        None
    };
    let h = node_embeddings(x, graph, centrality.as_ref(), params)?;
    Ok(readout(&h, params.variant))
}

/// Keypoint detection through grid construction for one image.
pub fn image_graph(image: &Image, config: &Config) -> Result<GridGraph> {
    let gray = to_gray(image)?;
    let detections = fast_detect(&gray, config.keypoints.threshold, config.keypoints.arc)?;
    let margin = config.margin();
    let selected = select_keypoints(
        &detections,
        config.keypoints.target,
        image.width,
        image.height,
        margin,
        config.seed,
    )?;
    let coords = project_grid(&selected, config.grid.rows, config.grid.cols, config.seed)?;
    build_grid_graph(&coords, config.grid.rows, config.grid.cols, config.grid.connectivity)
}

/// Full pipeline: keypoints, grid projection, patch features, aggregation,
/// readout. Deterministic for a fixed (image, config) pair.
pub fn embed_image(image: &Image, config: &Config) -> Result<Vec<f64>> {
    let graph = image_graph(image, config)?;
    let extractor = config.builtin_extractor()?;
    let coords: Vec<(f64, f64)> = graph.nodes.iter().map(|n| (n.x, n.y)).collect();
    let x = feature_matrix(image, &coords, config.patch.side, extractor)?;
    embed_with_features(&x, &graph, &config.embed)
}
