//! Flexible grid-graph image embeddings.
//!
//! The pipeline turns an image into a small fixed-size vector in five steps:
//!
//! 1. detect corner keypoints on the luminance channel ([`keypoints`]),
//! 2. cluster keypoint coordinates onto a small lattice ([`cluster`]),
//! 3. connect lattice nodes into a 4-neighbor grid graph ([`graph`]),
//! 4. describe a patch around each node with a low-level feature vector
//!    ([`features`]),
//! 5. aggregate node features over the graph into one embedding ([`embed`]).
//!
//! [`learn`] adds a small MLP classifier and a 2-component PCA for working
//! with the resulting vectors; [`bench`] generates synthetic datasets and
//! runs the aggregation-variant ablation; [`cli`] wires everything into a
//! command-line tool.
//!
//! ```
//! use flexgrid::config::Config;
//! use flexgrid::embed::embed_image;
//! use flexgrid::ingest::Image;
//!
//! // A 96x96 RGB checkerboard has plenty of corners after thresholding.
//! let pixels: Vec<u8> = (0..96u32 * 96)
//!     .flat_map(|i| {
//!         let v = (((i % 96) / 12 + (i / 96) / 12) % 2 * 200) as u8;
//!         [v, v / 2, 255 - v]
//!     })
//!     .collect();
//! let image = Image::new(96, 96, 3, pixels).unwrap();
//! let embedding = embed_image(&image, &Config::default()).unwrap();
//! assert_eq!(embedding.len(), 512);
//! ```

pub mod bench;
pub mod cli;
pub mod cluster;
pub mod config;
pub mod embed;
pub mod error;
pub mod features;
pub mod graph;
pub mod ingest;
pub mod keypoints;
pub mod learn;

pub use error::{Error, Result};
