//! `unionsearch`: build embedding stores and indices over a lake of CSV
//! tables, then search it for unionable tables.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "unionsearch", version, about = "Table union search over a data lake of CSV files")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// JSON file with default settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Embed every column of a lake into an SMBE store.
    Embed(EmbedArgs),
    /// Build an LSH or HNSW index over a store.
    Index(IndexArgs),
    /// Find the top-k unionable tables for query tables.
    Query(QueryArgs),
    /// Score search quality and speed against a ground truth.
    Bench(BenchArgs),
    /// Group similar columns into connected components.
    Cluster(ClusterArgs),
    /// Write a synthetic lake with ground truth and column labels.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Directory of CSV files.
    #[arg(long)]
    pub lake: PathBuf,
    /// Output store; `<out>.json` and `<out>.idf.json` are written beside it.
    #[arg(long)]
    pub out: PathBuf,
    /// Column sampling method.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Token budget per table, split evenly over its columns.
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// `lsh` or `hnsw`.
    #[arg(long = "type")]
    pub index_type: Option<String>,
    /// Manifest path; the index goes next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hyperplanes: Option<usize>,
    #[arg(long)]
    pub bands: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub ef_construction: Option<usize>,
    #[arg(long)]
    pub ef_search: Option<usize>,
}

/// Where the lake's vectors (and optionally an index) come from.
#[derive(Debug, Args)]
pub struct Source {
    /// Index manifest written by `index`.
    #[arg(long, conflicts_with = "store")]
    pub manifest: Option<PathBuf>,
    /// Store written by `embed` (linear search only).
    #[arg(long)]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Retrieval: `linear`, `lsh` or `hnsw`. Defaults to the manifest's
    /// index type, or linear for a bare store.
    #[arg(long)]
    pub mode: Option<String>,
    /// `off`, `fast` or `exact_equiv`.
    #[arg(long)]
    pub pruning: Option<String>,
    /// Nearest columns fetched per query column from HNSW.
    #[arg(long)]
    pub top_n: Option<usize>,
    /// Overrides the index's HNSW beam width.
    #[arg(long)]
    pub ef_search: Option<usize>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    pub source: Source,
    /// Query table CSV; embedded like the lake. Repeatable.
    #[arg(long = "query")]
    pub queries: Vec<PathBuf>,
    /// Lake table used as a query through its stored vectors. Repeatable.
    #[arg(long = "table")]
    pub tables: Vec<String>,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub source: Source,
    /// Ground truth CSV (`query_table,data_lake_table`).
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub theta: Option<f64>,
    /// `table_id,col_idx,label` CSV; adds a purity score.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Above this many columns, edges come from an HNSW index.
    #[arg(long)]
    pub exact_pair_limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory (gets `lake/`, `groundtruth.csv`, `labels.csv`).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub groups: Option<usize>,
    #[arg(long)]
    pub tables_per_group: Option<usize>,
    #[arg(long)]
    pub min_cols: Option<usize>,
    #[arg(long)]
    pub max_cols: Option<usize>,
    #[arg(long)]
    pub min_rows: Option<usize>,
    #[arg(long)]
    pub max_rows: Option<usize>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Failure classes, mapped to exit codes 2 and 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<unionsearch_core::Error> for CliError {
    fn from(e: unionsearch_core::Error) -> Self {
        use unionsearch_core::Error as E;
        match e {
            E::InvalidParam(_) | E::UnknownMethod(_) | E::MissingDir(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.into()),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let name = match &cli.command {
        Command::Embed(_) => "embed",
        Command::Index(_) => "index",
        Command::Query(_) => "query",
        Command::Bench(_) => "bench",
        Command::Cluster(_) => "cluster",
        Command::Synth(_) => "synth",
    };
    let cfg = FileConfig::load(cli.config.as_deref(), name)?;
    let workers: Option<usize> = match cli.workers {
        Some(n) => Some(n),
        None => cfg.get("workers")?,
    };
    if let Some(n) = workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.into()))?;
    }
    let out = commands::Output { json: cli.json };
    match cli.command {
        Command::Embed(a) => commands::embed(&a, &cfg, &out),
        Command::Index(a) => commands::index(&a, &cfg, &out),
        Command::Query(a) => commands::query(&a, &cfg, &out),
        Command::Bench(a) => commands::bench(&a, &cfg, &out),
        Command::Cluster(a) => commands::cluster(&a, &cfg, &out),
        Command::Synth(a) => commands::synth(&a, &cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
