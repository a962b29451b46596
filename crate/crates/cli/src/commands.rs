//! Subcommand implementations.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::{Deserialize, Serialize};

use treebias::align::{
    align_sentence, select_paragraphs, AlignmentConfig, CorpusRecord, SelectionConfig, TfCosine,
};
use treebias::doc::{DocumentRecord, MarkerMode, RelationKind, StructureTree};
use treebias::metrics::evaluate_run;
use treebias::model::{
    bias_grid_csv, bias_kind, build_pos_index, checkpoint, dump_bias_grid,
    probe::{run_structure_probe, ProbeConfig},
    train as train_loop, DecodeConfig, Model, ModelConfig, Placement, PreparedSample, Vocab, EOS,
};
use treebias::qs::{
    self, child_q_samples, encode_task as encode_one, HierarchyMode, ParseMode, QsHierarchy,
    TaskKind, TaskSample,
};

use crate::io::{read_jsonl, write_jsonl, write_manifest, write_output};

fn load_document(path: &Path) -> anyhow::Result<StructureTree> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let record = DocumentRecord::from_json(&text)
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(StructureTree::from_record(&record))
}

fn load_hierarchy(path: &Path) -> anyhow::Result<QsHierarchy> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(QsHierarchy::from_json(&text)?)
}

// ---------------------------------------------------------------------------
// positions / relations / sectok

#[derive(Debug, Args, Serialize)]
pub struct PositionsArgs {
    /// Document file (JSON).
    pub doc: PathBuf,
    /// Optional pair list, one "src dst" per line; all ordered pairs when
    /// absent.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
}

pub fn positions(out_dir: &Path, args: PositionsArgs) -> anyhow::Result<()> {
    write_manifest(out_dir, "positions", &args)?;
    let tree = load_document(&args.doc)?;
    let pairs: Vec<(usize, usize)> = match &args.pairs {
        Some(path) => std::fs::read_to_string(path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let mut it = l.split_whitespace();
                let src = it.next().and_then(|v| v.parse().ok());
                let dst = it.next().and_then(|v| v.parse().ok());
                src.zip(dst).ok_or_else(|| anyhow::anyhow!("bad pair line {l:?}"))
            })
            .collect::<anyhow::Result<_>>()?,
        None => {
            let n = tree.num_sections();
            (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).collect()
        }
    };
    let mut csv = String::from("src,dst,path_len,lvl_diff,relation\n");
    for (src, dst) in pairs {
        let pos = tree.tree_position(src, dst)?;
        let kind = tree.classify_relation(src, dst)?;
        csv.push_str(&format!(
            "{src},{dst},{},{},{}\n",
            pos.path_len,
            pos.lvl_diff,
            kind.name()
        ));
    }
    write_output(out_dir, "positions.csv", &csv)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct RelationsArgs {
    pub doc: PathBuf,
    /// Count the virtual root in the pair enumeration.
    #[arg(long)]
    pub include_root: bool,
}

pub fn relations(out_dir: &Path, args: RelationsArgs) -> anyhow::Result<()> {
    write_manifest(out_dir, "relations", &args)?;
    let tree = load_document(&args.doc)?;
    let stats = tree.relation_stats(args.include_root)?;
    let mut csv = String::from("relation,section_pairs,section_fraction,token_pairs,token_fraction\n");
    let token_total = stats.token_total().max(1);
    for ((kind, sec), (_, tok)) in stats.section_pairs.iter().zip(&stats.token_pairs) {
        csv.push_str(&format!(
            "{},{sec},{:.6},{tok},{:.6}\n",
            kind.name(),
            stats.section_fraction(*kind),
            *tok as f64 / token_total as f64,
        ));
    }
    csv.push_str(&format!(
        "selected_total,,{:.6},,{:.6}\n",
        stats.selected_section_fraction(),
        1.0 - stats
            .token_pairs
            .iter()
            .find(|(k, _)| *k == RelationKind::Other)
            .map_or(0.0, |(_, c)| *c as f64 / token_total as f64),
    ));
    write_output(out_dir, "relations.csv", &csv)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct SectokArgs {
    pub doc: PathBuf,
    /// uniform (`[SEC]`) or leveled (`[SEC-L<k>]`).
    #[arg(long, default_value = "uniform")]
    pub mode: String,
}

pub fn sectok(out_dir: &Path, args: SectokArgs) -> anyhow::Result<()> {
    write_manifest(out_dir, "sectok", &args)?;
    let tree = load_document(&args.doc)?;
    let mode = match args.mode.as_str() {
        "uniform" => MarkerMode::Uniform,
        "leveled" => MarkerMode::Leveled,
        other => anyhow::bail!("unknown marker mode {other:?} (uniform|leveled)"),
    };
    let marked = tree.insert_section_tokens(mode);
    write_output(out_dir, "tokens.txt", &(marked.tokens().join(" ") + "\n"))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// linearize / parse / encode-task

#[derive(Debug, Args, Serialize)]
pub struct LinearizeArgs {
    pub hierarchy: PathBuf,
    /// Treat the first root's question as externally given.
    #[arg(long)]
    pub rooted: bool,
}

pub fn linearize(out_dir: &Path, args: LinearizeArgs) -> anyhow::Result<()> {
    write_manifest(out_dir, "linearize", &args)?;
    let mut h = load_hierarchy(&args.hierarchy)?;
    if h.roots.is_empty() {
        anyhow::bail!("hierarchy has no roots");
    }
    if args.rooted {
        h.mode = HierarchyMode::Rooted;
    }
    write_output(out_dir, "linearized.txt", &(qs::linearize(&h).join(" ") + "\n"))?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct ParseArgs {
    pub text: PathBuf,
    /// Reject ill-formed sequences instead of repairing them.
    #[arg(long, conflicts_with = "lenient")]
    pub strict: bool,
    #[arg(long)]
    pub lenient: bool,
    #[arg(long)]
    pub rooted: bool,
}

pub fn parse(out_dir: &Path, args: ParseArgs) -> anyhow::Result<()> {
    write_manifest(out_dir, "parse", &args)?;
    let text = std::fs::read_to_string(&args.text)?;
    let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    let mode = if args.rooted { HierarchyMode::Rooted } else { HierarchyMode::Full };
    let parse_mode = if args.lenient { ParseMode::Lenient } else { ParseMode::Strict };
    let h = qs::parse_linearized(&tokens, mode, parse_mode)?;
    write_output(out_dir, "hierarchy.json", &serde_json::to_string_pretty(&h)?)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct EncodeTaskArgs {
    pub doc: PathBuf,
    pub hierarchy: PathBuf,
    /// hier (full hierarchy from the root question) or childq.
    #[arg(long, default_value = "hier")]
    pub task: String,
    /// Parent path for childq, e.g. "0.1" for the second child of the first
    /// root; all parents when omitted.
    #[arg(long)]
    pub parent: Option<String>,
    #[arg(long)]
    pub lenient: bool,
}

pub fn encode_task(out_dir: &Path, args: EncodeTaskArgs) -> anyhow::Result<()> {
    write_manifest(out_dir, "encode-task", &args)?;
    let tree = load_document(&args.doc)?;
    let h = load_hierarchy(&args.hierarchy)?;
    let samples: Vec<TaskSample> = match args.task.as_str() {
        "hier" => vec![encode_one(&tree, &h, &TaskKind::QsGenHier, !args.lenient)?],
        "childq" => match &args.parent {
            Some(spec) => {
                let parent: Vec<usize> = spec
                    .split('.')
                    .map(|p| p.parse().map_err(|_| anyhow::anyhow!("bad parent path {spec:?}")))
                    .collect::<anyhow::Result<_>>()?;
                vec![encode_one(&tree, &h, &TaskKind::QsGenChildQ { parent }, !args.lenient)?]
            }
            None => child_q_samples(&tree, &h)?,
        },
        other => anyhow::bail!("unknown task {other:?} (hier|childq)"),
    };
    write_jsonl(out_dir, "samples.jsonl", &samples)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// train / decode

#[derive(Debug, Args, Serialize, Clone)]
pub struct TrainArgs {
    /// Task samples (JSONL from encode-task).
    pub corpus: PathBuf,
    #[arg(long, default_value = "none")]
    pub placement: String,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON file with a full ModelConfig; CLI flags override its placement
    /// and seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 2)]
    pub enc_layers: usize,
    #[arg(long, default_value_t = 2)]
    pub dec_layers: usize,
    #[arg(long, default_value_t = 128)]
    pub ff: usize,
}

fn prepare_samples(
    samples: &[TaskSample],
    vocab: &Vocab,
    config: &ModelConfig,
) -> anyhow::Result<Vec<PreparedSample>> {
    samples
        .iter()
        .map(|sample| {
            let src = vocab.encode(&sample.source_tokens);
            let mut tgt = vocab.encode(&sample.target_tokens);
            tgt.push(EOS);
            let index = match bias_kind(config.placement) {
                Some(kind) => {
                    Some(build_pos_index(&sample.tree, kind, &config.clip, src.len())?)
                }
                None => None,
            };
            Ok(PreparedSample { src, tgt, index })
        })
        .collect()
}

fn resolve_config(args: &TrainArgs, vocab_size: usize) -> anyhow::Result<ModelConfig> {
    let placement = Placement::parse(&args.placement)?;
    let mut config = match &args.config {
        Some(path) => serde_json::from_str::<ModelConfig>(&std::fs::read_to_string(path)?)?,
        None => ModelConfig {
            vocab_size,
            d_model: args.width,
            n_heads: args.heads,
            enc_layers: args.enc_layers,
            dec_layers: args.dec_layers,
            d_ff: args.ff,
            clip: Default::default(),
            placement,
            seed: args.seed,
        },
    };
    config.vocab_size = vocab_size;
    config.placement = placement;
    config.seed = args.seed;
    Ok(config)
}

pub fn train(out_dir: &Path, args: TrainArgs) -> anyhow::Result<()> {
    let samples: Vec<TaskSample> = read_jsonl(&args.corpus)?;
    if samples.is_empty() {
        anyhow::bail!("empty corpus");
    }
    let mut tokens: Vec<&str> = Vec::new();
    for s in &samples {
        tokens.extend(s.source_tokens.iter().map(String::as_str));
        tokens.extend(s.target_tokens.iter().map(String::as_str));
    }
    let vocab = Vocab::build(tokens);
    let config = resolve_config(&args, vocab.len())?;
    let manifest = serde_json::json!({ "args": &args, "resolved_config": &config });
    write_manifest(out_dir, "train", &manifest)?;

    let prepared = prepare_samples(&samples, &vocab, &config)?;
    let mut model = Model::new(config)?;
    let trace = train_loop(&mut model, &prepared, args.steps, args.lr)?;
    let accuracy = model.token_accuracy(&prepared)?;
    eprintln!(
        "final loss {:.6}, token accuracy {:.4}",
        trace.last().copied().unwrap_or(f64::NAN),
        accuracy
    );

    let mut trace_csv = String::from("step,loss\n");
    for (i, loss) in trace.iter().enumerate() {
        trace_csv.push_str(&format!("{i},{loss}\n"));
    }
    checkpoint::save(&model, &vocab, &out_dir.join("checkpoint.json"))?;
    eprintln!("wrote {}", out_dir.join("checkpoint.json").display());
    write_output(out_dir, "loss_trace.csv", &trace_csv)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct DecodeArgs {
    pub checkpoint: PathBuf,
    /// Task samples whose sources are decoded.
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub beam: usize,
    #[arg(long, default_value_t = 64)]
    pub max_len: usize,
    #[arg(long, default_value_t = 5)]
    pub no_repeat_ngram: usize,
}

pub fn decode(out_dir: &Path, args: DecodeArgs) -> anyhow::Result<()> {
    write_manifest(out_dir, "decode", &args)?;
    let (model, vocab) = checkpoint::load(&args.checkpoint)?;
    let samples: Vec<TaskSample> = read_jsonl(&args.corpus)?;
    let cfg = DecodeConfig {
        beam: args.beam,
        max_len: args.max_len,
        no_repeat_ngram: args.no_repeat_ngram,
    };
    let mut lines = String::new();
    for sample in &samples {
        let src = vocab.encode(&sample.source_tokens);
        let index = match bias_kind(model.config.placement) {
            Some(kind) => Some(build_pos_index(&sample.tree, kind, &model.config.clip, src.len())?),
            None => None,
        };
        let result = model.decode(&src, index.as_ref(), &cfg)?;
        lines.push_str(&vocab.decode(&result.tokens).join(" "));
        lines.push('\n');
    }
    write_output(out_dir, "generations.txt", &lines)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

/// One line of a hierarchy set file.
#[derive(Debug, Serialize, Deserialize)]
struct NamedHierarchy {
    id: String,
    #[serde(flatten)]
    hierarchy: QsHierarchy,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    pub generated: PathBuf,
    pub reference: PathBuf,
    /// Human-corrected hierarchies; enables the edit-count column.
    #[arg(long)]
    pub corrected: Option<PathBuf>,
}

pub fn eval(out_dir: &Path, args: EvalArgs) -> anyhow::Result<()> {
    write_manifest(out_dir, "eval", &args)?;
    let load = |path: &Path| -> anyhow::Result<Vec<(String, QsHierarchy)>> {
        Ok(read_jsonl::<NamedHierarchy>(path)?
            .into_iter()
            .map(|n| (n.id, n.hierarchy))
            .collect())
    };
    let generated = load(&args.generated)?;
    let reference = load(&args.reference)?;
    let corrected = args.corrected.as_deref().map(load).transpose()?;
    let report = evaluate_run(&generated, &reference, corrected.as_deref())?;
    write_output(out_dir, "report.json", &serde_json::to_string_pretty(&report)?)?;
    write_output(out_dir, "report.txt", &report.to_table())?;
    write_output(out_dir, "report.csv", &report.to_csv())?;
    println!("{}", report.to_table());
    Ok(())
}

// ---------------------------------------------------------------------------
// align / filter

#[derive(Debug, Args, Serialize)]
pub struct AlignArgs {
    /// Corpus record (document plus summary_paragraphs).
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 0.4)]
    pub w_embed: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w_bigram: f64,
    #[arg(long, default_value_t = 0.2)]
    pub w_entity: f64,
}

pub fn align(out_dir: &Path, args: AlignArgs) -> anyhow::Result<()> {
    write_manifest(out_dir, "align", &args)?;
    let record = CorpusRecord::from_json(&std::fs::read_to_string(&args.corpus)?)?;
    let cfg = AlignmentConfig {
        w_embed: args.w_embed,
        w_bigram: args.w_bigram,
        w_entity: args.w_entity,
    };
    let tree = StructureTree::from_record(&record.doc);
    let paragraphs = tree.paragraphs();
    let texts: Vec<&str> = paragraphs.iter().map(|(_, t)| *t).collect();
    if texts.is_empty() {
        anyhow::bail!("document has no paragraphs to align against");
    }
    let provider = TfCosine;
    let mut out = Vec::new();
    for (p_idx, sentences) in record.summary_paragraphs.iter().enumerate() {
        for (s_idx, sentence) in sentences.iter().enumerate() {
            let score = align_sentence(sentence, &texts, &cfg, &provider);
            out.push(serde_json::json!({
                "summary_paragraph": p_idx,
                "sentence": s_idx,
                "paragraph": score.paragraph,
                "section": paragraphs[score.paragraph].0,
                "embed": score.embed,
                "bigram": score.bigram,
                "entity": score.entity,
                "combined": score.combined,
            }));
        }
    }
    write_output(out_dir, "alignment.json", &serde_json::to_string_pretty(&out)?)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct FilterArgs {
    /// A corpus record or a JSON array of them.
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub min_sentences: usize,
    #[arg(long, default_value_t = 70)]
    pub min_words: usize,
    #[arg(long, default_value_t = 0.15)]
    pub max_normalized_density: f64,
    #[arg(long, default_value_t = 3)]
    pub min_doc_sections: usize,
    #[arg(long, default_value_t = 5.0)]
    pub min_avg_paragraphs_per_section: f64,
    #[arg(long, default_value_t = 3)]
    pub min_summary_paragraphs: usize,
}

pub fn filter(out_dir: &Path, args: FilterArgs) -> anyhow::Result<()> {
    write_manifest(out_dir, "filter", &args)?;
    let text = std::fs::read_to_string(&args.corpus)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let corpus: Vec<CorpusRecord> = match value {
        serde_json::Value::Array(items) => items
            .into_iter()
            .map(|v| Ok(CorpusRecord::from_json(&serde_json::to_string(&v)?)?))
            .collect::<anyhow::Result<_>>()?,
        _ => vec![CorpusRecord::from_json(&text)?],
    };
    let cfg = SelectionConfig {
        min_sentences: args.min_sentences,
        min_words: args.min_words,
        max_normalized_density: args.max_normalized_density,
        min_doc_sections: args.min_doc_sections,
        min_avg_paragraphs_per_section: args.min_avg_paragraphs_per_section,
        min_summary_paragraphs: args.min_summary_paragraphs,
    };
    let report = select_paragraphs(&corpus, &cfg);
    write_output(out_dir, "accepted.json", &serde_json::to_string_pretty(&report)?)?;
    write_output(out_dir, "rejections.csv", &report.histogram_csv())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// dump-bias / probe

#[derive(Debug, Args, Serialize)]
pub struct DumpBiasArgs {
    pub checkpoint: PathBuf,
    pub doc: PathBuf,
}

pub fn dump_bias(out_dir: &Path, args: DumpBiasArgs) -> anyhow::Result<()> {
    write_manifest(out_dir, "dump-bias", &args)?;
    let (model, _) = checkpoint::load(&args.checkpoint)?;
    let table = model
        .bias_table()
        .ok_or_else(|| anyhow::anyhow!("checkpoint has no bias table (placement none)"))?;
    let tree = load_document(&args.doc)?;
    let grid = dump_bias_grid(&table, &tree)?;
    write_output(out_dir, "bias_grid.csv", &bias_grid_csv(&grid))?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct ProbeArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 150)]
    pub steps: usize,
    #[arg(long, default_value_t = 24)]
    pub train_samples: usize,
    #[arg(long, default_value_t = 12)]
    pub eval_samples: usize,
}

pub fn probe(out_dir: &Path, args: ProbeArgs) -> anyhow::Result<()> {
    write_manifest(out_dir, "probe", &args)?;
    let cfg = ProbeConfig {
        seed: args.seed,
        steps: args.steps,
        train_samples: args.train_samples,
        eval_samples: args.eval_samples,
        ..Default::default()
    };
    let report = run_structure_probe(&cfg)?;
    write_output(out_dir, "probe.txt", &report.to_table())?;
    println!("{}", report.to_table());
    Ok(())
}
