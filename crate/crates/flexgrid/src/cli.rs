//! Command-line surface: one thin binary over the library pipeline.
//!
//! Exit codes: 0 success, 1 usage error (bad flags, bad config keys or
//! values), 2 data error (unreadable or malformed inputs, numeric
//! failures). Every command overwrites its outputs, so reruns with the
//! same inputs and seed produce identical bytes (wall-time CSV columns
//! excepted).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::bench::{
    ablation_csv, cifar_dataset, directory_dataset, embed_set, load_image_directory, run_ablation,
    synthetic_dataset, write_image_directory, Dataset,
};
use crate::config::{Config, ExtractorKind};
use crate::embed::{embed_with_features, image_graph, Variant, ALL_VARIANTS};
use crate::error::{Error, Result};
use crate::features::{read_feature_file, write_feature_file, PatchFeatureMatrix};
use crate::graph::{eigenvector_centrality, graph_json, CENTRALITY_MAX_ITER, CENTRALITY_TOL};
use crate::ingest::{load_ppm, resize_bilinear, Image};
use crate::learn::{evaluate, history_csv, pca2, read_model, train, write_model, MlpModel, Sample};

const CONFIG_HELP: &str = "\
Config file keys (INI-style `key = value` under `[section]`, `#` comments).
Defaults shown. `--set section.key=value` overrides file values; dedicated
flags win last.

  seed = 0                  # master RNG seed

  [keypoints]
  target = 250              # points kept per image
  threshold = 0.078431      # segment-test contrast (20/255), in (0,1)
  arc = 9                   # contiguous ring pixels required, 1..=16
  margin = <patch side / 2> # border exclusion in pixels

  [grid]
  rows = 5
  cols = 5
  eight_connected = false   # true adds diagonal lattice edges

  [patch]
  side = 32                 # square patch side in pixels

  [extractor]
  kind = histogram          # histogram | hog | import
  bins = 8                  # histogram bins per channel (dim = bins^3)
  cell = 8                  # hog cell side in pixels
  orientations = 9          # hog orientation bins
  path = <none>             # FGV1 node features when kind = import

  [embed]
  variant = Agg1R           # Agg1R Agg1 Agg2R Agg2 EVC1R EVC1 EVC2R EVC2
  gamma = 1                 # neighbor weight for Agg variants
  theta = neighbors         # neighbors | any positive constant
  edge_weighting = none     # none | inverse-distance

  [train]
  hidden = 128              # hidden layer width
  epochs = 50
  lr = 0.001
  batch = 32
";

#[derive(Parser)]
#[command(
    name = "flexgrid",
    version,
    about = "Flexible grid-graph image embeddings",
    after_help = CONFIG_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed images into one FGV1 matrix plus an index,label CSV
    #[command(after_help = CONFIG_HELP)]
    Embed(EmbedArgs),
    /// Train the classifier head on FGV1 embeddings
    #[command(after_help = CONFIG_HELP)]
    Train(TrainArgs),
    /// Evaluate an FGM1 checkpoint on FGV1 embeddings
    #[command(after_help = CONFIG_HELP)]
    Eval(EvalArgs),
    /// Run the variant/patch/grid ablation and write its CSV
    #[command(after_help = CONFIG_HELP)]
    Bench(BenchArgs),
    /// Dump per-image grid graphs as JSON
    #[command(after_help = CONFIG_HELP)]
    Graph(GraphArgs),
    /// Project FGV1 rows onto two principal components
    #[command(after_help = CONFIG_HELP)]
    Pca(PcaArgs),
    /// Generate or convert datasets into the PPM directory layout
    #[command(after_help = CONFIG_HELP)]
    Dataset(DatasetArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file path
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set embed.variant=EVC1R
    #[arg(long, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed (overrides the config value)
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn build(&self) -> Result<Config> {
        let mut config = match &self.config {
            Some(path) => Config::from_file(path)?,
            None => Config::default(),
        };
        for spec in &self.set {
            config.set(spec)?;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Image file, or directory of .ppm/.pgm images (labels.csv honored)
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Output FGV1 file; <out stem>.labels.csv lands next to it
    #[arg(long)]
    out: PathBuf,
    /// Resize images to WxH before the pipeline, e.g. 96x96
    #[arg(long, value_name = "WxH")]
    resize: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Training FGV1 file
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Training labels CSV (index,label)
    #[arg(long)]
    labels: PathBuf,
    /// Held-out FGV1 file (defaults to the training data)
    #[arg(long, requires = "test_labels")]
    test: Option<PathBuf>,
    /// Held-out labels CSV
    #[arg(long, requires = "test")]
    test_labels: Option<PathBuf>,
    /// Output FGM1 checkpoint
    #[arg(long)]
    out: PathBuf,
    /// Optional per-epoch history CSV
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// FGV1 file to score
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Labels CSV (index,label)
    #[arg(long)]
    labels: PathBuf,
    /// FGM1 checkpoint
    #[arg(long)]
    model: PathBuf,
    /// Optional metrics CSV (accuracy,loss)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Ablation CSV output
    #[arg(long)]
    out: PathBuf,
    /// Training split directory (labels.csv layout); needs --test-dir
    #[arg(long, requires = "test_dir")]
    train_dir: Option<PathBuf>,
    /// Test split directory (labels.csv layout)
    #[arg(long, requires = "train_dir")]
    test_dir: Option<PathBuf>,
    /// Synthetic data: training images per class
    #[arg(long, default_value_t = 20)]
    per_class: usize,
    /// Synthetic data: test images per class
    #[arg(long, default_value_t = 10)]
    test_per_class: usize,
    /// Synthetic data: image side
    #[arg(long, default_value_t = 96)]
    side: u32,
    /// Synthetic data: noise level in [0,1]
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    /// Comma list of variants (default: all eight)
    #[arg(long)]
    variants: Option<String>,
    /// Comma list of patch sides (default: the config patch side)
    #[arg(long)]
    patches: Option<String>,
    /// Comma list of RxC grids, e.g. 5x5,6x6 (default: the config grid)
    #[arg(long)]
    grids: Option<String>,
    /// Resize images to WxH before embedding
    #[arg(long, value_name = "WxH")]
    resize: Option<String>,
}

#[derive(Args)]
struct GraphArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Image file, or directory of .ppm/.pgm images
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// JSON file (file input) or directory of <stem>.json (directory input)
    #[arg(long)]
    out: PathBuf,
    /// Resize images to WxH before the pipeline
    #[arg(long, value_name = "WxH")]
    resize: Option<String>,
}

#[derive(Args)]
struct PcaArgs {
    /// FGV1 file to project
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Optional labels CSV; the label column defaults to 0
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output CSV, one "x,y,label" row per input row, no header
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DatasetArgs {
    #[command(subcommand)]
    source: DatasetCommand,
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Generate the three-class shape dataset as train/ and test/ PPM trees
    Synthetic(SyntheticArgs),
    /// Convert CIFAR-10 binary batches to train/ and test/ PPM trees
    Cifar10(CifarArgs),
}

#[derive(Args)]
struct SyntheticArgs {
    /// Output directory (train/ and test/ are created inside)
    #[arg(long)]
    out: PathBuf,
    /// Training images per class
    #[arg(long, default_value_t = 20)]
    per_class: usize,
    /// Test images per class
    #[arg(long, default_value_t = 10)]
    test_per_class: usize,
    /// Image side, at least 64
    #[arg(long, default_value_t = 96)]
    side: u32,
    /// Noise level in [0,1]
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    /// Generator seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CifarArgs {
    /// Comma-separated training batch files (data_batch_*.bin)
    #[arg(long = "in", value_name = "PATHS", value_delimiter = ',', required = true)]
    input: Vec<PathBuf>,
    /// Test batch file
    #[arg(long)]
    test: PathBuf,
    /// Output directory (train/ and test/ are created inside)
    #[arg(long)]
    out: PathBuf,
    /// Keep only the first N training records
    #[arg(long)]
    limit: Option<usize>,
    /// Keep only the first N test records
    #[arg(long)]
    limit_test: Option<usize>,
}

/// Parse and dispatch; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version render on stdout and are not failures.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Embed(args) => run_embed(args),
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::Bench(args) => run_bench(args),
        Command::Graph(args) => run_graph(args),
        Command::Pca(args) => run_pca(args),
        Command::Dataset(args) => match &args.source {
            DatasetCommand::Synthetic(args) => run_dataset_synthetic(args),
            DatasetCommand::Cifar10(args) => run_dataset_cifar(args),
        },
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 1,
                _ => 2,
            }
        }
    }
}

/// Rendered long help for one subcommand; lets tests check the config-key
/// listing without spawning a process.
pub fn subcommand_help(name: &str) -> Option<String> {
    let mut command = Cli::command();
    command.build();
    command.find_subcommand_mut(name).map(|sub| sub.render_long_help().to_string())
}

fn parse_pair(spec: &str, what: &str) -> Result<(u64, u64)> {
    let bad = || Error::Config(format!("{what} {spec:?} is not in WxH form"));
    let (a, b) = spec.split_once(['x', 'X']).ok_or_else(bad)?;
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    if a == 0 || b == 0 {
        return Err(Error::Config(format!("{what} {spec:?} must be positive")));
    }
    Ok((a, b))
}

fn apply_resize(images: &mut [(String, Image, usize)], spec: &Option<String>) -> Result<()> {
    if let Some(spec) = spec {
        let (w, h) = parse_pair(spec, "resize")?;
        for (_, image, _) in images.iter_mut() {
            *image = resize_bilinear(image, w as u32, h as u32)?;
        }
    }
    Ok(())
}

fn is_image_name(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    lower.ends_with(".ppm") || lower.ends_with(".pgm")
}

/// A single image file, or a directory (labels.csv order when present,
/// otherwise name-sorted with label 0).
fn load_inputs(path: &Path) -> Result<Vec<(String, Image, usize)>> {
    if path.is_dir() {
        if path.join("labels.csv").is_file() {
            return load_image_directory(path);
        }
        let mut names: Vec<String> = std::fs::read_dir(path)?
            .filter_map(|entry| entry.ok())
            .filter_map(|entry| entry.file_name().into_string().ok())
            .filter(|name| is_image_name(name))
            .collect();
        names.sort();
        if names.is_empty() {
            return Err(Error::Decode(format!(
                "directory {} holds no .ppm or .pgm images",
                path.display()
            )));
        }
        return names
            .into_iter()
            .map(|name| {
                let image = load_ppm(&std::fs::read(path.join(&name))?)?;
                Ok((name, image, 0))
            })
            .collect();
    }
    let image = load_ppm(&std::fs::read(path)?)?;
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".to_string());
    Ok(vec![(name, image, 0)])
}

fn stem_of(name: &str) -> String {
    Path::new(name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| name.to_string())
}

fn write_labels_sidecar(out: &Path, labels: &[usize]) -> Result<()> {
    let mut csv = String::from("index,label\n");
    for (i, label) in labels.iter().enumerate() {
        csv.push_str(&format!("{i},{label}\n"));
    }
    std::fs::write(out.with_extension("labels.csv"), csv)?;
    Ok(())
}

fn read_label_csv(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line == "index,label") {
            continue;
        }
        let bad = |what: &str| Error::Decode(format!("{}: line {}: {what}", path.display(), lineno + 1));
        let (index, label) = line.split_once(',').ok_or_else(|| bad("no comma"))?;
        let index: usize = index.trim().parse().map_err(|_| bad("bad index"))?;
        if index != out.len() {
            return Err(bad(&format!("expected index {}, got {index}", out.len())));
        }
        out.push(label.trim().parse().map_err(|_| bad("bad label"))?);
    }
    if out.is_empty() {
        return Err(Error::Decode(format!("{} lists no labels", path.display())));
    }
    Ok(out)
}

fn read_samples(fgv1: &Path, labels: &Path) -> Result<Vec<Sample>> {
    let matrix = read_feature_file(&std::fs::read(fgv1)?)?;
    let labels = read_label_csv(labels)?;
    if labels.len() != matrix.n {
        return Err(Error::Dimension(format!(
            "{} labels for {} feature rows",
            labels.len(),
            matrix.n
        )));
    }
    Ok(labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| (matrix.row(i).iter().map(|&v| v as f64).collect(), label))
        .collect())
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> Result<PatchFeatureMatrix> {
    let n = rows.len();
    let d = rows.first().map(Vec::len).unwrap_or(0);
    let data: Vec<f32> = rows.iter().flat_map(|r| r.iter().map(|&v| v as f32)).collect();
    PatchFeatureMatrix::new(n, d, data)
}

fn run_embed(args: &EmbedArgs) -> Result<()> {
    let config = args.config.build()?;
    let mut inputs = load_inputs(&args.input)?;
    apply_resize(&mut inputs, &args.resize)?;
    let rows: Vec<Vec<f64>> = if config.extractor.kind == ExtractorKind::Import {
        let path = config.extractor.path.as_ref().ok_or_else(|| {
            Error::Config("extractor kind import needs [extractor] path".into())
        })?;
        if inputs.len() != 1 {
            return Err(Error::Config(
                "the import extractor embeds exactly one image: its FGV1 rows are that image's node features".into(),
            ));
        }
        let x = read_feature_file(&std::fs::read(path)?)?;
        let graph = image_graph(&inputs[0].1, &config)?;
        if x.n != graph.n() {
            return Err(Error::Dimension(format!(
                "imported features hold {} rows but the graph has {} nodes",
                x.n,
                graph.n()
            )));
        }
        vec![embed_with_features(&x, &graph, &config.embed)?]
    } else {
        let pairs: Vec<(Image, usize)> =
            inputs.iter().map(|(_, image, label)| (image.clone(), *label)).collect();
        embed_set(&pairs, &config)?.0.into_iter().map(|(embedding, _)| embedding).collect()
    };
    std::fs::write(&args.out, write_feature_file(&matrix_from_rows(rows)?))?;
    let labels: Vec<usize> = inputs.iter().map(|(_, _, label)| *label).collect();
    write_labels_sidecar(&args.out, &labels)
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let config = args.config.build()?;
    let train_set = read_samples(&args.input, &args.labels)?;
    let test_set = match (&args.test, &args.test_labels) {
        (Some(fgv1), Some(labels)) => read_samples(fgv1, labels)?,
        _ => train_set.clone(),
    };
    let classes = train_set.iter().chain(&test_set).map(|(_, l)| l + 1).max().unwrap_or(0);
    if classes < 2 {
        return Err(Error::Config("training needs at least two classes".into()));
    }
    let dim = train_set[0].0.len();
    let model = MlpModel::init(&[dim, config.train.hidden, classes], config.seed)?;
    let (model, history) = train(
        model,
        &train_set,
        &test_set,
        config.train.epochs,
        config.train.batch,
        config.train.lr,
        config.seed,
    )?;
    std::fs::write(&args.out, write_model(&model))?;
    if let Some(path) = &args.history {
        std::fs::write(path, history_csv(&history))?;
    }
    if let Some(last) = history.last() {
        println!("epochs {} test_acc {} test_loss {}", history.len(), last.test_acc, last.test_loss);
    }
    Ok(())
}

fn run_eval(args: &EvalArgs) -> Result<()> {
    let model = read_model(&std::fs::read(&args.model)?)?;
    let set = read_samples(&args.input, &args.labels)?;
    let (accuracy, loss) = evaluate(&model, &set)?;
    println!("accuracy {accuracy}");
    println!("loss {loss}");
    if let Some(out) = &args.out {
        std::fs::write(out, format!("accuracy,loss\n{accuracy},{loss}\n"))?;
    }
    Ok(())
}

fn run_bench(args: &BenchArgs) -> Result<()> {
    let config = args.config.build()?;
    let mut dataset: Dataset = match (&args.train_dir, &args.test_dir) {
        (Some(train_dir), Some(test_dir)) => directory_dataset(train_dir, test_dir)?,
        _ => synthetic_dataset(
            args.per_class,
            args.test_per_class,
            args.side,
            args.noise,
            config.seed,
        )?,
    };
    if let Some(spec) = &args.resize {
        let (w, h) = parse_pair(spec, "resize")?;
        for (image, _) in dataset.train.iter_mut().chain(dataset.test.iter_mut()) {
            *image = resize_bilinear(image, w as u32, h as u32)?;
        }
    }
    let variants: Vec<Variant> = match &args.variants {
        None => ALL_VARIANTS.to_vec(),
        Some(spec) => spec
            .split(',')
            .map(|token| token.trim().parse())
            .collect::<Result<Vec<Variant>>>()?,
    };
    let patches: Vec<u32> = match &args.patches {
        None => vec![config.patch.side],
        Some(spec) => spec
            .split(',')
            .map(|token| {
                token.trim().parse().map_err(|_| {
                    Error::Config(format!("patch side {token:?} is not an integer"))
                })
            })
            .collect::<Result<Vec<u32>>>()?,
    };
    let grids: Vec<(usize, usize)> = match &args.grids {
        None => vec![(config.grid.rows, config.grid.cols)],
        Some(spec) => spec
            .split(',')
            .map(|token| {
                parse_pair(token.trim(), "grid").map(|(r, c)| (r as usize, c as usize))
            })
            .collect::<Result<Vec<(usize, usize)>>>()?,
    };
    let rows = run_ablation(&dataset, &variants, &patches, &grids, &config, config.seed)?;
    std::fs::write(&args.out, ablation_csv(&rows))?;
    Ok(())
}

fn run_graph(args: &GraphArgs) -> Result<()> {
    let config = args.config.build()?;
    let mut inputs = load_inputs(&args.input)?;
    apply_resize(&mut inputs, &args.resize)?;
    let render = |image: &Image| -> Result<String> {
        let graph = image_graph(image, &config)?;
        let centrality = eigenvector_centrality(&graph, CENTRALITY_MAX_ITER, CENTRALITY_TOL)?;
        Ok(graph_json(&graph, &centrality))
    };
    if args.input.is_dir() {
        std::fs::create_dir_all(&args.out)?;
        for (name, image, _) in &inputs {
            let json = render(image)?;
            std::fs::write(args.out.join(format!("{}.json", stem_of(name))), json)?;
        }
    } else {
        std::fs::write(&args.out, render(&inputs[0].1)?)?;
    }
    Ok(())
}

fn run_pca(args: &PcaArgs) -> Result<()> {
    let matrix = read_feature_file(&std::fs::read(&args.input)?)?;
    let rows: Vec<Vec<f64>> =
        (0..matrix.n).map(|i| matrix.row(i).iter().map(|&v| v as f64).collect()).collect();
    let labels = match &args.labels {
        Some(path) => {
            let labels = read_label_csv(path)?;
            if labels.len() != matrix.n {
                return Err(Error::Dimension(format!(
                    "{} labels for {} feature rows",
                    labels.len(),
                    matrix.n
                )));
            }
            labels
        }
        None => vec![0; matrix.n],
    };
    let projected = pca2(&rows)?;
    let mut csv = String::new();
    for ((x, y), label) in projected.iter().zip(&labels) {
        csv.push_str(&format!("{x},{y},{label}\n"));
    }
    std::fs::write(&args.out, csv)?;
    Ok(())
}

fn run_dataset_synthetic(args: &SyntheticArgs) -> Result<()> {
    let dataset = synthetic_dataset(
        args.per_class,
        args.test_per_class,
        args.side,
        args.noise,
        args.seed,
    )?;
    write_image_directory(&args.out.join("train"), &dataset.train)?;
    write_image_directory(&args.out.join("test"), &dataset.test)?;
    Ok(())
}

fn run_dataset_cifar(args: &CifarArgs) -> Result<()> {
    let batches: Vec<Vec<u8>> = args
        .input
        .iter()
        .map(|path| std::fs::read(path).map_err(Error::from))
        .collect::<Result<_>>()?;
    let refs: Vec<&[u8]> = batches.iter().map(Vec::as_slice).collect();
    let test = std::fs::read(&args.test)?;
    let dataset = cifar_dataset(&refs, &test, args.limit, args.limit_test)?;
    write_image_directory(&args.out.join("train"), &dataset.train)?;
    write_image_directory(&args.out.join("test"), &dataset.test)?;
    Ok(())
}
