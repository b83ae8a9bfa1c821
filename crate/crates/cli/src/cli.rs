use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "gensim",
    version,
    about = "Task DSL, verification pipeline and task library tools"
)]
pub struct Cli {
    /// Seed for scene sampling, demo episodes and generation batches.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[arg(long, global = true, value_enum, default_value_t = ProviderKind::Mock)]
    pub provider: ProviderKind,
    /// Task library directory.
    #[arg(long, global = true, env = "GENSIM_LIBRARY", default_value = "library")]
    pub library: PathBuf,
    /// Recorded transcripts replayed by the mock provider.
    #[arg(
        long,
        global = true,
        env = "GENSIM_TRANSCRIPTS",
        default_value = "fixtures/transcripts"
    )]
    pub transcripts: PathBuf,
    /// With the http provider, also write every exchange here as a transcript.
    #[arg(long, global = true)]
    pub record: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    /// Replay recorded transcripts; never touches the network.
    Mock,
    /// Chat-completions endpoint configured by GENSIM_ENDPOINT, GENSIM_MODEL
    /// and GENSIM_API_KEY_ENV.
    Http,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exploratory,
    GoalDirected,
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    /// Seeds tried per task.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..=1000))]
    pub n_seeds: u64,
    /// Successful episodes needed for the task-completed stage.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..=1000))]
    pub quorum: u64,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a task file through the syntax, runtime and completion stages.
    ///
    /// Exit status: 0 task-completed, 1 runtime-verified only, 2 syntax-correct only, 3 failed.
    Validate {
        file: PathBuf,
        #[command(flatten)]
        verify: VerifyArgs,
    },
    /// Run the oracle on a task for one seed and export the episode.
    ///
    /// Exit status: 0 success, 1 the oracle did not finish, 2 the task does not build.
    Demo {
        file: PathBuf,
        /// Directory for `<task>-<seed>.demo.jsonl`.
        #[arg(long, default_value = ".")]
        export: PathBuf,
        /// Also write the scene after every step as JSON frames.
        #[arg(long)]
        frames: bool,
    },
    /// Generate tasks with the provider and add the accepted ones to the library.
    Generate {
        #[arg(long, value_enum, default_value_t = Mode::Exploratory)]
        mode: Mode,
        /// Target task name for goal-directed mode.
        #[arg(long, required_if_eq("mode", "goal-directed"))]
        target: Option<String>,
        /// Number of attempts.
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        concurrency: usize,
        /// Let the model pick the implementation references.
        #[arg(long)]
        llm_pick_refs: bool,
    },
    /// Goal-directed evaluation over target names; the library is not modified.
    Bench {
        /// Comma-separated targets; defaults to the ten held-out tasks.
        #[arg(long, value_delimiter = ',')]
        targets: Vec<String>,
        #[arg(long, default_value_t = 3)]
        trials: usize,
        #[arg(long, default_value_t = 4)]
        concurrency: usize,
    },
    /// Inspect and maintain the task library.
    Library {
        #[command(subcommand)]
        command: LibraryCommand,
    },
    /// Write the non-rejected library entries as prompt/completion JSONL.
    ExportFinetune { out: PathBuf },
    /// Serve the HTTP API (and the review UI bundle, if given).
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Built review UI to serve at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        /// Origins allowed by CORS (repeatable).
        #[arg(long = "cors-origin", default_value = "http://localhost:5173")]
        cors_origins: Vec<String>,
    },
}

#[derive(Subcommand, Debug)]
pub enum LibraryCommand {
    /// Create a library holding the ten seed tasks.
    Init,
    /// List entries with cluster, stage and verdict.
    Ls,
    /// Show one entry and its task source.
    Show { name: String },
    /// Run k-means over the embeddings and store the assignment.
    Cluster {
        #[arg(long, default_value_t = 6)]
        k: usize,
    },
    /// 2-D projection of the library with clusters and verdicts.
    Map,
    /// Record a reviewer's verdict on an entry.
    Verdict {
        name: String,
        #[arg(long, conflicts_with = "reject", required_unless_present = "reject")]
        accept: bool,
        #[arg(long)]
        reject: bool,
        #[arg(long)]
        reviewer: String,
        /// Time spent reviewing.
        #[arg(long, default_value_t = 0.0)]
        seconds: f64,
    },
}
