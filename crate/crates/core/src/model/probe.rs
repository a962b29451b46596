//! Synthetic structure probe: the target is the title of the parent section
//! of a marked token, so solving it requires relating a token to its
//! position in the section tree. The harness trains the same data under
//! several placements with identical seeds and reports an accuracy table; it
//! makes no claim about which placement wins at this scale.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bias::build_pos_index;
use super::config::{ModelConfig, Placement};
use super::net::{bias_kind, Model, PreparedSample};
use super::train::train;
use super::vocab::{Vocab, EOS};
use crate::doc::{synth, StructureTree};
use crate::error::Result;

const MARK: &str = "xmarkx";

#[derive(Debug, Clone)]
pub struct ProbeConfig {
    pub seed: u64,
    pub train_samples: usize,
    pub eval_samples: usize,
    pub steps: usize,
    pub lr: f64,
    pub placements: Vec<Placement>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            seed: 7,
            train_samples: 24,
            eval_samples: 12,
            steps: 150,
            lr: 0.1,
            placements: vec![Placement::None, Placement::Enc, Placement::TokLinear],
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProbeRow {
    pub placement: Placement,
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub eval_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub rows: Vec<ProbeRow>,
}

impl ProbeReport {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<14} {:>10} {:>10} {:>10}\n",
            "placement", "loss", "train_acc", "eval_acc"
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{:<14} {:>10.4} {:>10.4} {:>10.4}\n",
                row.placement.name(),
                row.final_loss,
                row.train_accuracy,
                row.eval_accuracy
            ));
        }
        out
    }
}

/// One raw probe sample: a marked document and the marked section's parent
/// title as the target phrase.
fn probe_sample<R: Rng>(rng: &mut R) -> (StructureTree, Vec<String>) {
    loop {
        let doc = synth::random_document(rng, 6, 3);
        let tree = StructureTree::from_record(&doc);
        // Candidate sections: non-root with a non-empty paragraph.
        let candidates: Vec<usize> = tree
            .nodes()
            .iter()
            .filter(|n| n.id != 0 && !n.paragraphs.is_empty())
            .map(|n| n.id)
            .collect();
        let Some(&target) = candidates.get(rng.gen_range(0..candidates.len().max(1))) else {
            continue;
        };
        // Re-build the document with the mark inserted into one paragraph of
        // the chosen section, then the tree stays self-consistent.
        let mut doc = doc;
        if !mark_section(&mut doc.sections, target, &mut 1, rng) {
            continue;
        }
        let marked = StructureTree::from_record(&doc);
        let parent = marked.nodes()[target].parent.expect("non-root");
        let title = crate::text::tokenize(&marked.nodes()[parent].title);
        return (marked, title);
    }
}

fn mark_section<R: Rng>(
    sections: &mut [crate::doc::SectionRecord],
    target: usize,
    next_id: &mut usize,
    rng: &mut R,
) -> bool {
    for section in sections {
        let id = *next_id;
        *next_id += 1;
        if id == target {
            if section.paragraphs.is_empty() {
                return false;
            }
            let p = rng.gen_range(0..section.paragraphs.len());
            let mut words: Vec<&str> = section.paragraphs[p].split(' ').collect();
            let pos = rng.gen_range(0..=words.len());
            words.insert(pos, MARK);
            section.paragraphs[p] = words.join(" ");
            return true;
        }
        if mark_section(&mut section.subsections, target, next_id, rng) {
            return true;
        }
    }
    false
}

fn prepare(
    raw: &[(StructureTree, Vec<String>)],
    vocab: &Vocab,
    config: &ModelConfig,
) -> Result<Vec<PreparedSample>> {
    raw.iter()
        .map(|(tree, title)| {
            let src = vocab.encode(tree.tokens());
            let mut tgt = vocab.encode(title);
            tgt.push(EOS);
            let index = match bias_kind(config.placement) {
                Some(kind) => Some(build_pos_index(tree, kind, &config.clip, src.len())?),
                None => None,
            };
            Ok(PreparedSample { src, tgt, index })
        })
        .collect()
}

/// Train every placement on the same probe data and seeds; returns the
/// accuracy table.
pub fn run_structure_probe(cfg: &ProbeConfig) -> Result<ProbeReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train_raw: Vec<_> = (0..cfg.train_samples).map(|_| probe_sample(&mut rng)).collect();
    let eval_raw: Vec<_> = (0..cfg.eval_samples).map(|_| probe_sample(&mut rng)).collect();

    let mut tokens: Vec<&str> = Vec::new();
    for (tree, title) in train_raw.iter().chain(&eval_raw) {
        tokens.extend(tree.tokens().iter().map(String::as_str));
        tokens.extend(title.iter().map(String::as_str));
    }
    let vocab = Vocab::build(tokens);

    let mut rows = Vec::new();
    for &placement in &cfg.placements {
        let config = ModelConfig {
            vocab_size: vocab.len(),
            d_model: 32,
            n_heads: 2,
            enc_layers: 1,
            dec_layers: 1,
            d_ff: 64,
            clip: Default::default(),
            placement,
            seed: cfg.seed,
        };
        let train_set = prepare(&train_raw, &vocab, &config)?;
        let eval_set = prepare(&eval_raw, &vocab, &config)?;
        let mut model = Model::new(config)?;
        let trace = train(&mut model, &train_set, cfg.steps, cfg.lr)?;
        rows.push(ProbeRow {
            placement,
            final_loss: *trace.last().unwrap(),
            train_accuracy: model.token_accuracy(&train_set)?,
            eval_accuracy: model.token_accuracy(&eval_set)?,
        });
    }
    Ok(ProbeReport { rows })
}
