mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fairscope::Error;

#[derive(Parser, Debug)]
#[command(
    name = "fairscope",
    version,
    about = "Fairness auditing and debiasing for binary text classifiers",
    after_help = "Exit codes: 0 success, 1 usage error, 2 invalid data, 3 numeric degeneracy, 4 I/O error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct SchemaArg {
    /// Schema file; the built-in gender/race/religion schema when unset
    #[arg(long, env = "FAIRSCOPE_SCHEMA", hide_env_values = true)]
    pub schema: Option<PathBuf>,
    /// Restrict to these attributes (repeatable)
    #[arg(long = "attribute", value_name = "NAME")]
    pub attributes: Vec<String>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Md,
    Csv,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuildMode {
    /// Balanced fairness set (documents without identities dropped)
    Fairness,
    /// Perturbed training set (documents without identities kept)
    Training,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitModeArg {
    Paired,
    Pooled,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dataset bias and, for scored corpora, group fairness
    Metrics {
        /// Corpus (JSON Lines or CSV)
        #[arg(long = "in", value_name = "CORPUS")]
        input: PathBuf,
        /// Scores as JSON Lines {"id", "score"}, overriding corpus scores
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        schema: SchemaArg,
        /// Decision threshold; a score at or above it predicts toxic
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Apply text cleaning on ingestion
        #[arg(long)]
        normalize: bool,
        /// Report file
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Build a balanced fairness set or a perturbed training set
    Perturb {
        #[arg(long = "in", value_name = "CORPUS")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        schema: SchemaArg,
        #[arg(long, value_enum, default_value_t = BuildMode::Fairness)]
        mode: BuildMode,
        #[arg(long)]
        normalize: bool,
    },
    /// Augment positives until every group reaches the target ratio
    Stratify {
        #[arg(long = "in", value_name = "CORPUS")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "FAIRSCOPE_SCHEMA", hide_env_values = true)]
        schema: Option<PathBuf>,
        /// Attribute whose groups are balanced
        #[arg(long)]
        attribute: String,
        #[arg(long, default_value_t = 0.5)]
        target_ratio: f64,
        /// Per-word substitution probability
        #[arg(long, default_value_t = 0.3)]
        rate: f64,
        /// Substitution provider: JSON mapping word to candidates (built-in table when unset)
        #[arg(long)]
        provider: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print the plan without writing a corpus
        #[arg(long)]
        plan_only: bool,
    },
    /// Fit or apply a bias subspace
    #[command(subcommand)]
    Subspace(SubspaceCommand),
    /// Counterfactual fairness of a scored balanced set
    Sensescore {
        #[arg(long = "in", value_name = "CORPUS")]
        input: PathBuf,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        schema: SchemaArg,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Correlate bias sources with fairness gaps across attributes
    Correlate {
        /// Dataset bias reports (a metrics report or a JSON array)
        #[arg(long)]
        bias: PathBuf,
        /// Fairness reports (a metrics report or a JSON array)
        #[arg(long)]
        fairness: PathBuf,
        /// Bias sources: selection, overamplification, external
        #[arg(long, value_delimiter = ',', default_value = "selection,overamplification")]
        sources: Vec<String>,
        /// External representation-bias scores: JSON object attribute -> score
        #[arg(long)]
        external: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Delta table of a treated model against a baseline
    Report {
        /// Baseline fairness (a metrics report, a report array or a single report)
        #[arg(long)]
        baseline: PathBuf,
        /// Treated fairness, in any of the baseline's shapes
        #[arg(long)]
        treated: PathBuf,
        #[arg(long, default_value = "baseline")]
        baseline_label: String,
        #[arg(long, default_value = "+ treated")]
        treated_label: String,
        /// Also write the report here
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Generate a synthetic corpus with injected bias
    Synth {
        /// Synthetic spec; the built-in civil-comments shaped spec when unset
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec's seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the full audit workflow and write a report bundle
    Audit {
        /// Workflow config (JSON)
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Overrides the config's seed
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Subcommand, Debug)]
enum SubspaceCommand {
    /// Fit the top-k bias directions
    Fit {
        /// Embeddings (JSON Lines or binary); factual side in paired mode
        #[arg(long = "in", value_name = "EMBEDDINGS")]
        input: PathBuf,
        /// Counterfactual embeddings, row-aligned with --in (paired mode)
        #[arg(long)]
        counterfactual: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FitModeArg::Paired)]
        mode: FitModeArg,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value = "unspecified")]
        attribute: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project the subspace out of embeddings
    Apply {
        #[arg(long)]
        subspace: PathBuf,
        #[arg(long = "in", value_name = "EMBEDDINGS")]
        input: PathBuf,
        /// Output; binary when it ends in .bin or --binary is set
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        binary: bool,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => 1,
        Error::Io { .. } => 4,
        Error::EmptyGroup { .. }
        | Error::DegenerateMetric { .. }
        | Error::EmptyInput(_)
        | Error::ZeroVariance(_)
        | Error::RankDeficient { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
