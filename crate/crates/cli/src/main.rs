mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Learned geodesic embeddings: data generation, training, precomputation,
/// constant-time distance queries, evaluation and applications.
///
/// Meshes given on the command line are normalised on load (centred, longest
/// bounding-box side scaled to 2). Every random choice derives from --seed.
#[derive(Debug, Parser)]
#[command(name = "geoembed", version)]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Label random vertex pairs with oracle distances, one GSET file per mesh.
    GenData(GenDataArgs),
    /// Train a model on a data directory written by gen-data.
    Train(TrainArgs),
    /// Precompute the embedding table of a mesh (GEMB file).
    Embed(EmbedArgs),
    /// Print distances for vertex pairs, one per line.
    Query(QueryArgs),
    /// Mean relative error against an oracle, plus optional field and
    /// triangle-inequality exports.
    Eval(EvalArgs),
    /// Time precomputation and query throughput.
    Bench(BenchArgs),
    /// Trace a geodesic path and write it as an OBJ polyline.
    Trace(TraceArgs),
    /// Histogram of pairwise distances (shape distribution).
    ShapeHist(ShapeHistArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleKind {
    /// Dijkstra on the mesh edges.
    Graph,
    /// Dijkstra on the edge graph refined with Steiner points.
    Steiner,
    /// Truncated-spectrum biharmonic distance.
    Biharmonic,
}

#[derive(Debug, Args)]
struct OracleArgs {
    /// Distance oracle.
    #[arg(long, value_enum, default_value_t = OracleKind::Steiner)]
    oracle: OracleKind,

    /// Steiner points per edge for the steiner oracle.
    #[arg(long, default_value_t = 3)]
    steiner_points: usize,

    /// Laplacian eigenpairs kept by the biharmonic oracle.
    #[arg(long, default_value_t = 100)]
    modes: usize,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Input meshes (OBJ, OFF or PLY).
    #[arg(required = true)]
    meshes: Vec<PathBuf>,

    #[command(flatten)]
    oracle: OracleArgs,

    /// Source vertices per mesh.
    #[arg(long, default_value_t = 100)]
    sources: usize,

    /// Destinations per source.
    #[arg(long, default_value_t = 200)]
    dests: usize,

    /// Output directory; receives `<name>.gset` and the normalised `<name>.obj`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// TOML training config; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Directory written by gen-data.
    #[arg(long)]
    data: PathBuf,

    /// Output directory for checkpoints and `train_log.jsonl`.
    #[arg(long)]
    out: PathBuf,

    /// Overrides `epochs` from the config.
    #[arg(long)]
    epochs: Option<usize>,

    /// Overrides `steps_per_epoch` from the config.
    #[arg(long)]
    steps_per_epoch: Option<usize>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Checkpoint written by train.
    #[arg(long)]
    checkpoint: PathBuf,

    /// Mesh the queries refer to.
    #[arg(long)]
    mesh: PathBuf,

    /// Precomputed table; computed on the fly when omitted.
    #[arg(long)]
    embedding: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[arg(long)]
    checkpoint: PathBuf,

    #[arg(long)]
    mesh: PathBuf,

    /// Output GEMB file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct QueryArgs {
    /// GEMB file written by embed.
    #[arg(long)]
    embedding: PathBuf,

    #[arg(long)]
    checkpoint: PathBuf,

    /// Mesh to verify the table against.
    #[arg(long)]
    mesh: Option<PathBuf>,

    /// A pair as `i,j`; may be repeated.
    #[arg(long = "pair", value_parser = parse_pair)]
    pairs: Vec<(u32, u32)>,

    /// File with one `i j` pair per line.
    #[arg(long)]
    pairs_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Predictor {
    /// The trained model.
    Model,
    /// The reference oracle itself (a sanity check; MRE is zero).
    Oracle,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Required when the predictor is the model.
    #[arg(long)]
    checkpoint: Option<PathBuf>,

    #[arg(long)]
    mesh: PathBuf,

    #[arg(long)]
    embedding: Option<PathBuf>,

    #[command(flatten)]
    oracle: OracleArgs,

    #[arg(long, value_enum, default_value_t = Predictor::Model)]
    predictor: Predictor,

    /// Random source vertices; clamped to the vertex count.
    #[arg(long, default_value_t = 500)]
    sources: usize,

    #[arg(long, default_value_t = 0.001)]
    epsilon: f64,

    /// Writes the predicted field from this vertex as PLY vertex quality.
    #[arg(long, requires = "field_out")]
    field_source: Option<usize>,

    #[arg(long)]
    field_out: Option<PathBuf>,

    /// Triangle-inequality test for the pair `p,q`.
    #[arg(long, value_parser = parse_pair)]
    violations: Option<(u32, u32)>,

    /// PLY file marking violating vertices with quality 1.
    #[arg(long, requires = "violations")]
    violations_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    checkpoint: PathBuf,

    #[arg(long)]
    mesh: PathBuf,

    /// Comma-separated batch sizes.
    #[arg(long, value_delimiter = ',', default_value = "1,100,10000")]
    batch_sizes: Vec<usize>,

    /// Random pairs per timed run.
    #[arg(long, default_value_t = 1_000_000)]
    queries: usize,

    /// Timed runs per measurement; the median is reported.
    #[arg(long, default_value_t = 5)]
    repeats: usize,

    /// Line-delimited JSON report; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[command(flatten)]
    model: ModelArgs,

    #[arg(long)]
    source: usize,

    #[arg(long)]
    target: usize,

    #[arg(long, default_value_t = 10_000)]
    max_steps: usize,

    /// Output OBJ polyline; a partial path is still written.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ShapeHistArgs {
    #[command(flatten)]
    model: ModelArgs,

    #[arg(long, default_value_t = 100_000)]
    pairs: usize,

    #[arg(long, default_value_t = 64)]
    bins: usize,

    /// Two-column text output (bin centre, normalised count).
    #[arg(long)]
    out: PathBuf,

    /// Second mesh to compare against; prints the L1 histogram distance.
    #[arg(long)]
    compare: Option<PathBuf>,
}

fn parse_pair(text: &str) -> Result<(u32, u32), String> {
    let (i, j) = text
        .split_once(',')
        .ok_or_else(|| format!("expected `i,j`, got `{text}`"))?;
    let parse = |s: &str| s.trim().parse::<u32>().map_err(|e| format!("`{s}`: {e}"));
    Ok((parse(i)?, parse(j)?))
}

fn main() -> ExitCode {
    env_logger::Builder::new()
        .filter_level(log::LevelFilter::Info)
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
