//! BLEU/TER scoring.

use std::path::PathBuf;

use clap::Args;
use ganmt_core::data::read_token_lines;
use ganmt_core::error::Result;
use ganmt_core::evaluation::score;

#[derive(Args)]
pub struct EvaluateArgs {
    /// Hypothesis token file.
    #[arg(long)]
    hyp: PathBuf,
    /// Reference token file.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Also write the full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let hyps = read_token_lines(&args.hyp)?;
    let refs = read_token_lines(&args.reference)?;
    let report = score(&hyps, &refs)?;
    println!(
        "BLEU = {:.2}  TER = {:.2}",
        100.0 * report.bleu.bleu,
        100.0 * report.ter.ter
    );
    if let Some(path) = &args.json {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}
