//! `ganmt`: preprocessing, alignment, bootstrapping, training, adaptation,
//! translation, evaluation and topic-embedding export as one binary.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use ganmt_core::error::Error;

#[derive(Parser)]
#[command(name = "ganmt", version, about = "Guided-alignment neural machine translation toolkit")]
struct Cli {
    /// Worker thread cap (overrides the GANMT_THREADS environment variable).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize, lowercase and substitute placeholders.
    Preprocess(commands::PreprocessArgs),
    /// Train IBM Model 1 and write pharaoh alignments.
    Align(commands::AlignArgs),
    /// Extract sub-sentence units and merge them into the corpus.
    Bootstrap(commands::BootstrapArgs),
    /// Train a model.
    Train(commands::TrainArgs),
    /// Continue training a checkpoint under an in-domain vocabulary.
    Adapt(commands::AdaptArgs),
    /// Beam-search translate a token file.
    Translate(commands::TranslateArgs),
    /// Score hypotheses against references with BLEU and TER.
    Evaluate(commands::EvaluateArgs),
    /// Export the topic-embedding cosine distance matrix.
    Topicdist(commands::TopicdistArgs),
}

fn init_threads(flag: Option<usize>) {
    let count = flag.or_else(|| {
        std::env::var("GANMT_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = count {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn main() {
    let cli = Cli::parse();
    init_threads(cli.threads);
    let outcome = match cli.command {
        Command::Preprocess(args) => commands::preprocess(args),
        Command::Align(args) => commands::align(args),
        Command::Bootstrap(args) => commands::bootstrap(args),
        Command::Train(args) => commands::train(args),
        Command::Adapt(args) => commands::adapt(args),
        Command::Translate(args) => commands::translate(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Topicdist(args) => commands::topicdist(args),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        let code = match e {
            Error::LineCountMismatch(_) => 2,
            _ => 1,
        };
        std::process::exit(code);
    }
}
