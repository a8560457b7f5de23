//! `codeprov` command-line interface.
//!
//! Exit codes: 0 success, 2 one or more inputs failed, 64 usage error,
//! 65 malformed dataset (over 1% bad lines), 69 scorer or perturber
//! endpoint unreachable.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{EXIT_UNAVAILABLE, EXIT_USAGE};

#[derive(Parser)]
#[command(
    name = "codeprov",
    version,
    about = "Zero-shot machine-generated code detection and code stylometry",
    after_help = "Environment: CODEPROV_SCORER_URL (default scorer endpoint), \
                  CODEPROV_SCORER_TIMEOUT_MS (request timeout)."
)]
struct Cli {
    #[command(flatten)]
    common: config::CommonArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score files (or stdin) with one detection method, JSONL to stdout
    Detect {
        /// Input files; "-" or nothing reads stdin
        paths: Vec<PathBuf>,
    },
    /// Emit stylized whitespace perturbation variants as JSONL
    Perturb {
        /// Input file; "-" or nothing reads stdin
        path: Option<PathBuf>,
    },
    /// Stylometry report over one corpus, or machine-vs-human over two
    Analyze {
        /// One or two corpus paths (directory of .py files, or a JSONL
        /// dataset); with two, the first is the machine side
        corpora: Vec<PathBuf>,
        /// Directory for CSV output (--format csv)
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Rows in the token frequency table
        #[arg(long, default_value_t = 50)]
        top_tokens: usize,
    },
    /// Run detection methods over a labelled dataset and report AUROC
    Evaluate {
        /// JSONL dataset of labelled samples
        dataset: PathBuf,
        /// Directory for report.json and report.csv
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Score cache location (default: <dataset>.scores.jsonl)
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Build a balanced human/machine benchmark dataset
    BuildBenchmark {
        /// Human corpus (directory of .py files, or a JSONL dataset)
        corpus: PathBuf,
        /// Generator: endpoint URL or surrogate:<model path>
        #[arg(long)]
        generator: String,
        #[arg(long = "n-pairs", default_value_t = 200)]
        n_pairs: usize,
        #[arg(long, default_value_t = 0.2)]
        temperature: f64,
        #[arg(long = "top-p", default_value_t = 0.95)]
        top_p: f64,
        /// Output dataset path (JSONL)
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the byte n-gram surrogate scorer on a corpus
    TrainSurrogate {
        /// Corpus (directory of .py files, or a JSONL dataset)
        corpus: PathBuf,
        /// Output model path
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = codeprov::surrogate::DEFAULT_ORDER)]
        order: usize,
        #[arg(long, default_value_t = codeprov::surrogate::DEFAULT_SMOOTHING)]
        smoothing: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(error) => {
            let code = match error.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = error.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(error) => {
            eprintln!("error: {error:#}");
            let code = if commands::is_usage(&error) {
                EXIT_USAGE
            } else if commands::is_unavailable(&error) {
                EXIT_UNAVAILABLE
            } else {
                1
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let config = config::resolve(&cli.common)?;
    if let Some(workers) = config.workers {
        // ignore the error when a pool already exists (tests, reentry)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    let uses_randomness = matches!(
        cli.command,
        Command::Detect { .. }
            | Command::Perturb { .. }
            | Command::Evaluate { .. }
            | Command::BuildBenchmark { .. }
    );
    if config.seed_was_drawn && uses_randomness {
        eprintln!(
            "seed: {} (drawn from system entropy; pass --seed {} to reproduce)",
            config.perturb.seed, config.perturb.seed
        );
    }
    match &cli.command {
        Command::Detect { paths } => commands::cmd_detect(paths, &config),
        Command::Perturb { path } => commands::cmd_perturb(path.as_deref(), &config),
        Command::Analyze { corpora, out, top_tokens } => {
            commands::cmd_analyze(corpora, out, *top_tokens, &config)
        }
        Command::Evaluate { dataset, out, cache } => {
            commands::cmd_evaluate(dataset, out, cache.as_deref(), &config)
        }
        Command::BuildBenchmark { corpus, generator, n_pairs, temperature, top_p, out } => {
            commands::cmd_build_benchmark(
                corpus,
                generator,
                *n_pairs,
                *temperature,
                *top_p,
                out,
                &config,
            )
        }
        Command::TrainSurrogate { corpus, out, order, smoothing } => {
            commands::cmd_train_surrogate(corpus, out, *order, *smoothing)
        }
    }
}
