//! File-based pipeline over the toolkit: document positions and relations,
//! hierarchy linearization, task encoding, training, decoding, evaluation,
//! alignment, filtering, and bias-table dumps.
//!
//! Every run resolves its configuration, writes `manifest.json` into the
//! output directory first, then writes its outputs. Diagnostics go to
//! stderr; outputs go to files (or stdout where noted).

mod commands;
mod io;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "treebias", version, about = "document-structure biases, QS hierarchies, and their evaluation")]
struct Cli {
    /// Directory for outputs and the run manifest.
    #[arg(long, global = true, default_value = "out")]
    out_dir: std::path::PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tree-relative positions for section pairs of a document.
    Positions(commands::PositionsArgs),
    /// Relation-kind histogram over all ordered section pairs.
    Relations(commands::RelationsArgs),
    /// Insert section marker tokens (`[SEC]` or `[SEC-L<k>]`).
    Sectok(commands::SectokArgs),
    /// Flatten a QS hierarchy to its marker token line.
    Linearize(commands::LinearizeArgs),
    /// Parse a linearized line back into a hierarchy.
    Parse(commands::ParseArgs),
    /// Build task samples from a document and a hierarchy.
    EncodeTask(commands::EncodeTaskArgs),
    /// Train a model on task samples.
    Train(commands::TrainArgs),
    /// Decode task samples with a trained checkpoint.
    Decode(commands::DecodeArgs),
    /// Score generated hierarchies against references.
    Eval(commands::EvalArgs),
    /// Align summary sentences to document paragraphs.
    Align(commands::AlignArgs),
    /// Apply the summary-paragraph selection filters.
    Filter(commands::FilterArgs),
    /// Dump the head-averaged bias grid of a checkpoint.
    DumpBias(commands::DumpBiasArgs),
    /// Train the structure probe across placements and print its table.
    Probe(commands::ProbeArgs),
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    std::fs::create_dir_all(&cli.out_dir)?;
    match cli.command {
        Command::Positions(args) => commands::positions(&cli.out_dir, args),
        Command::Relations(args) => commands::relations(&cli.out_dir, args),
        Command::Sectok(args) => commands::sectok(&cli.out_dir, args),
        Command::Linearize(args) => commands::linearize(&cli.out_dir, args),
        Command::Parse(args) => commands::parse(&cli.out_dir, args),
        Command::EncodeTask(args) => commands::encode_task(&cli.out_dir, args),
        Command::Train(args) => commands::train(&cli.out_dir, args),
        Command::Decode(args) => commands::decode(&cli.out_dir, args),
        Command::Eval(args) => commands::eval(&cli.out_dir, args),
        Command::Align(args) => commands::align(&cli.out_dir, args),
        Command::Filter(args) => commands::filter(&cli.out_dir, args),
        Command::DumpBias(args) => commands::dump_bias(&cli.out_dir, args),
        Command::Probe(args) => commands::probe(&cli.out_dir, args),
    }
}
