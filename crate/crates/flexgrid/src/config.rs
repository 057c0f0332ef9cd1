//! Pipeline configuration and its text-file format.
//!
//! The file is INI-style: `key = value` lines under `[section]` headers,
//! `#` starts a comment, blank lines ignored. Only `seed` may appear before
//! the first section. Unknown sections, unknown keys, and unparsable values
//! are errors naming the offender, so typos never pass silently.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::embed::{EdgeWeighting, EmbedParams, ThetaMode, Variant};
use crate::error::{Error, Result};
use crate::features::Extractor;
use crate::graph::Connectivity;

/// `[keypoints]` section.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointParams {
    /// Exact number of keypoints fed to the grid projection.
    pub target: usize,
    /// Luminance delta for the segment test, in (0, 1).
    pub threshold: f64,
    /// Contiguous circle-arc length that qualifies a corner.
    pub arc: usize,
    /// Border band excluded from selection; defaults to half the patch side.
    pub margin: Option<u32>,
}

/// `[grid]` section.
#[derive(Debug, Clone, PartialEq)]
pub struct GridParams {
    pub rows: usize,
    pub cols: usize,
    pub connectivity: Connectivity,
}

/// `[patch]` section.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchParams {
    pub side: u32,
}

/// Which feature source fills the per-node matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractorKind {
    Histogram,
    Hog,
    /// Features come from FGV1 files instead of being computed.
    Import,
}

/// `[extractor]` section. Parameter keys are always accepted; `kind`
/// decides which take effect.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorParams {
    pub kind: ExtractorKind,
    pub bins: usize,
    pub cell: u32,
    pub orientations: usize,
    /// FGV1 file or directory, required when kind = import.
    pub path: Option<PathBuf>,
}

impl ExtractorParams {
    /// The in-process extractor, or an error for import configurations.
    pub fn builtin(&self) -> Result<Extractor> {
        match self.kind {
            ExtractorKind::Histogram => Ok(Extractor::ColorHistogram { bins: self.bins }),
            ExtractorKind::Hog => {
                Ok(Extractor::Hog { cell: self.cell, orientations: self.orientations })
            }
            ExtractorKind::Import => Err(Error::Config(
                "extractor kind is import; features must come from FGV1 files".into(),
            )),
        }
    }
}

/// `[train]` section.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainParams {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
}

/// Everything the pipeline needs; one value per config key.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub keypoints: KeypointParams,
    pub grid: GridParams,
    pub patch: PatchParams,
    pub extractor: ExtractorParams,
    pub embed: EmbedParams,
    pub train: TrainParams,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            keypoints: KeypointParams {
                target: 250,
                threshold: 20.0 / 255.0,
                arc: 9,
                margin: None,
            },
            grid: GridParams { rows: 5, cols: 5, connectivity: Connectivity::Four },
            patch: PatchParams { side: 32 },
            extractor: ExtractorParams {
                kind: ExtractorKind::Histogram,
                bins: 8,
                cell: 8,
                orientations: 9,
                path: None,
            },
            embed: EmbedParams::default(),
            train: TrainParams { hidden: 128, epochs: 50, lr: 1e-3, batch: 32 },
        }
    }
}

impl Config {
    /// Selection margin: the explicit value, else half the patch side.
    pub fn margin(&self) -> u32 {
        self.keypoints.margin.unwrap_or(self.patch.side / 2)
    }

    pub fn builtin_extractor(&self) -> Result<Extractor> {
        self.extractor.builtin()
    }

    pub fn from_file(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        Config::parse(&text)
    }

    /// Apply one `section.key=value` override (bare `key=value` for
    /// top-level keys), with the same validation as the config file.
    pub fn set(&mut self, spec: &str) -> Result<()> {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
        let (section, key) = match key.trim().split_once('.') {
            Some((section, key)) => (section.trim(), key.trim()),
            None => ("", key.trim()),
        };
        match section {
            "" | "keypoints" | "grid" | "patch" | "extractor" | "embed" | "train" => {}
            _ => return Err(Error::Config(format!("unknown section [{section}]"))),
        }
        apply(self, section, key, value.trim())
    }

    pub fn parse(text: &str) -> Result<Config> {
        let mut config = Config::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| {
                        Error::Config(format!("line {}: unterminated section header", lineno + 1))
                    })?
                    .trim();
                match name {
                    "keypoints" | "grid" | "patch" | "extractor" | "embed" | "train" => {
                        section = name.to_string();
                    }
                    _ => return Err(Error::Config(format!("unknown section [{name}]"))),
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {line:?}", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            apply(&mut config, &section, key, value)?;
        }
        Ok(config)
    }
}

fn parse_value<T: FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| {
        Error::Config(format!("bad value {value:?} for {key} in [{section}]"))
    })
}

fn apply(config: &mut Config, section: &str, key: &str, value: &str) -> Result<()> {
    let unknown = || {
        Err(Error::Config(if section.is_empty() {
            format!("unknown top-level key {key}")
        } else {
            format!("unknown key {key} in [{section}]")
        }))
    };
    match section {
        "" => match key {
            "seed" => config.seed = parse_value(section, key, value)?,
            _ => return unknown(),
        },
        "keypoints" => match key {
            "target" => config.keypoints.target = parse_value(section, key, value)?,
            "threshold" => {
                let t: f64 = parse_value(section, key, value)?;
                if !(t > 0.0 && t < 1.0) {
                    return Err(Error::Config(format!(
                        "threshold {t} outside (0, 1) in [keypoints]"
                    )));
                }
                config.keypoints.threshold = t;
            }
            "arc" => config.keypoints.arc = parse_value(section, key, value)?,
            "margin" => config.keypoints.margin = Some(parse_value(section, key, value)?),
            _ => return unknown(),
        },
        "grid" => match key {
            "rows" => config.grid.rows = parse_value(section, key, value)?,
            "cols" => config.grid.cols = parse_value(section, key, value)?,
            "eight_connected" => {
                let eight: bool = parse_value(section, key, value)?;
                config.grid.connectivity =
                    if eight { Connectivity::Eight } else { Connectivity::Four };
            }
            _ => return unknown(),
        },
        "patch" => match key {
            "side" => {
                config.patch.side = parse_value(section, key, value)?;
                if config.patch.side == 0 {
                    return Err(Error::Config("patch side must be positive".into()));
                }
            }
            _ => return unknown(),
        },
        "extractor" => match key {
            "kind" => {
                config.extractor.kind = match value {
                    "histogram" => ExtractorKind::Histogram,
                    "hog" => ExtractorKind::Hog,
                    "import" => ExtractorKind::Import,
                    _ => {
                        return Err(Error::Config(format!(
                            "unknown extractor kind {value}, expected histogram, hog, or import"
                        )))
                    }
                };
            }
            "bins" => config.extractor.bins = parse_value(section, key, value)?,
            "cell" => config.extractor.cell = parse_value(section, key, value)?,
            "orientations" => config.extractor.orientations = parse_value(section, key, value)?,
            "path" => config.extractor.path = Some(PathBuf::from(value)),
            _ => return unknown(),
        },
        "embed" => match key {
            "variant" => config.embed.variant = Variant::from_str(value)?,
            "gamma" => config.embed.gamma = parse_value(section, key, value)?,
            "theta" => {
                config.embed.theta_mode = if value == "neighbors" {
                    ThetaMode::NeighborCount
                } else {
                    let t: f64 = parse_value(section, key, value)?;
                    if !(t > 0.0) {
                        return Err(Error::Config(format!(
                            "constant theta {t} must be positive in [embed]"
                        )));
                    }
                    ThetaMode::Constant(t)
                };
            }
            "edge_weighting" => {
                config.embed.edge_weighting = match value {
                    "none" => EdgeWeighting::None,
                    "inverse-distance" => EdgeWeighting::InverseDistance,
                    _ => {
                        return Err(Error::Config(format!(
                            "unknown edge_weighting {value}, expected none or inverse-distance"
                        )))
                    }
                };
            }
            _ => return unknown(),
        },
        "train" => match key {
            "hidden" => config.train.hidden = parse_value(section, key, value)?,
            "epochs" => config.train.epochs = parse_value(section, key, value)?,
            "lr" => config.train.lr = parse_value(section, key, value)?,
            "batch" => config.train.batch = parse_value(section, key, value)?,
            _ => return unknown(),
        },
        _ => unreachable!("section names are validated at the header"),
    }
    Ok(())
}
