//! Corpus-side subcommands: preprocess, align, bootstrap.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use ganmt_core::data::{
    bootstrap_merge, extract_subsentence_units, ibm1_align, ingest_alignment, pair_corpus,
    preprocess as preprocess_line, read_token_lines, ExtractConfig, PlaceholderRules, Sidecar,
    SidecarLine,
};
use ganmt_core::error::{Error, Result};

#[derive(Args)]
pub struct PreprocessArgs {
    /// Raw UTF-8 text, one sentence per line.
    #[arg(long)]
    input: PathBuf,
    /// Output token file.
    #[arg(long)]
    output: PathBuf,
    /// Placeholder sidecar (JSON lines). Omit to discard placeholder
    /// contents.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Placeholder rule file (`$class pattern` per line). Omit to disable
    /// substitution.
    #[arg(long)]
    rules: Option<PathBuf>,
}

pub fn preprocess(args: PreprocessArgs) -> Result<()> {
    let rules = match &args.rules {
        Some(path) => PlaceholderRules::read_file(path)?,
        None => PlaceholderRules::empty(),
    };
    let input = File::open(&args.input)
        .map_err(|e| Error::usage(format!("cannot open {}: {e}", args.input.display())))?;
    let mut out = BufWriter::new(File::create(&args.output)?);
    let mut sidecar = Sidecar::default();
    for (line_no, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let (tokens, items) = preprocess_line(&line, &rules);
        writeln!(out, "{}", tokens.join(" "))?;
        sidecar.lines.push(SidecarLine { line: line_no, ph: items });
    }
    out.flush()?;
    if let Some(path) = &args.sidecar {
        sidecar.write_file(path)?;
    }
    Ok(())
}

#[derive(Args)]
pub struct AlignArgs {
    /// Source token file.
    #[arg(long)]
    src: PathBuf,
    /// Target token file.
    #[arg(long)]
    tgt: PathBuf,
    /// Output pharaoh alignment file.
    #[arg(long)]
    output: PathBuf,
    /// EM iterations.
    #[arg(long, default_value_t = 5)]
    iterations: usize,
}

pub fn align(args: AlignArgs) -> Result<()> {
    let src = read_token_lines(&args.src)?;
    let tgt = read_token_lines(&args.tgt)?;
    let pairs = pair_corpus(src, tgt)?;
    let nonempty: Vec<_> =
        pairs.iter().filter(|p| !p.source.is_empty() && !p.target.is_empty()).cloned().collect();
    if nonempty.len() != pairs.len() {
        return Err(Error::usage("align requires nonempty sentences on both sides"));
    }
    let lines = ibm1_align(&nonempty, args.iterations)?;
    let mut out = BufWriter::new(File::create(&args.output)?);
    for line in lines {
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Args)]
pub struct BootstrapArgs {
    /// Source token file.
    #[arg(long)]
    src: PathBuf,
    /// Target token file.
    #[arg(long)]
    tgt: PathBuf,
    /// Pharaoh alignment file, one line per pair.
    #[arg(long)]
    align: PathBuf,
    /// Bootstrapped source output (originals plus extracted units).
    #[arg(long)]
    out_src: PathBuf,
    /// Bootstrapped target output.
    #[arg(long)]
    out_tgt: PathBuf,
    /// Minimum source span length of a unit.
    #[arg(long, default_value_t = 8)]
    min_len: usize,
    /// Maximum source span length of a unit.
    #[arg(long, default_value_t = 30)]
    max_len: usize,
}

pub fn bootstrap(args: BootstrapArgs) -> Result<()> {
    let src = read_token_lines(&args.src)?;
    let tgt = read_token_lines(&args.tgt)?;
    let pairs = pair_corpus(src, tgt)?;
    let align_lines: Vec<String> = std::fs::read_to_string(&args.align)
        .map_err(|e| Error::usage(format!("cannot read {}: {e}", args.align.display())))?
        .lines()
        .map(str::to_string)
        .collect();
    if align_lines.len() != pairs.len() {
        return Err(Error::LineCountMismatch(format!(
            "{} corpus pairs but {} alignment lines (first bad line {})",
            pairs.len(),
            align_lines.len(),
            pairs.len().min(align_lines.len())
        )));
    }

    let config = ExtractConfig {
        min_src_len: args.min_len,
        max_src_len: args.max_len,
        ..ExtractConfig::default()
    };
    let mut units = Vec::new();
    for (pair, line) in pairs.iter().zip(&align_lines) {
        let matrix = ingest_alignment(line, pair.target.len(), pair.source.len(), pair.line_id)?;
        units.extend(extract_subsentence_units(pair, &matrix, &config)?);
    }
    let merged = bootstrap_merge(&pairs, &units);

    let mut out_src = BufWriter::new(File::create(&args.out_src)?);
    let mut out_tgt = BufWriter::new(File::create(&args.out_tgt)?);
    for pair in &merged {
        writeln!(out_src, "{}", pair.source.join(" "))?;
        writeln!(out_tgt, "{}", pair.target.join(" "))?;
    }
    out_src.flush()?;
    out_tgt.flush()?;
    eprintln!("bootstrap: {} originals + {} units", pairs.len(), units.len());
    Ok(())
}
