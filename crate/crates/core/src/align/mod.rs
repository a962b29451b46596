//! Dataset-construction procedures: summary-sentence to document-paragraph
//! alignment and summary-paragraph selection filters.
//!
//! Alignment combines three similarity components with fixed weights
//! (embedding 0.4, bigram overlap 1.0, entity overlap 0.2). The embedding
//! component is a pluggable provider; the default is a term-frequency cosine
//! over the shared tokenizer. The entity component uses a surrogate instead
//! of a named-entity model: maximal runs of capitalized or numeric words.

mod density;
mod filter;
mod input;

pub use density::{extractive_density, DensityScores};
pub use filter::{
    select_paragraphs, CorpusRecord, FilterOutcome, SelectionConfig, SelectionReport,
};
pub use input::build_task_input;

use serde::{Deserialize, Serialize};

use crate::text::{ngram_counts, raw_words, tokenize};

/// Sentence-to-paragraph similarity provider in `[0, 1]`.
pub trait SimilarityProvider {
    fn similarity(&self, sentence: &str, paragraph: &str) -> f64;
}

/// Term-frequency cosine over the shared tokenizer; the default embedding
/// stand-in.
#[derive(Debug, Default, Clone, Copy)]
pub struct TfCosine;

impl SimilarityProvider for TfCosine {
    fn similarity(&self, sentence: &str, paragraph: &str) -> f64 {
        let a = tokenize(sentence);
        let b = tokenize(paragraph);
        let ca = ngram_counts(&a, 1);
        let cb = ngram_counts(&b, 1);
        let dot: f64 = ca
            .iter()
            .map(|(g, x)| (*x as f64) * cb.get(g).copied().unwrap_or(0) as f64)
            .sum();
        let na: f64 = ca.values().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = cb.values().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            (dot / (na * nb)).clamp(0.0, 1.0)
        }
    }
}

/// Combination weights for the three similarity components.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AlignmentConfig {
    pub w_embed: f64,
    pub w_bigram: f64,
    pub w_entity: f64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig { w_embed: 0.4, w_bigram: 1.0, w_entity: 0.2 }
    }
}

/// Fraction of the sentence's unique bigrams that occur in the paragraph.
/// Sentences with fewer than two tokens score zero.
pub fn bigram_overlap(sentence: &str, paragraph: &str) -> f64 {
    let s = tokenize(sentence);
    let p = tokenize(paragraph);
    if s.len() < 2 {
        return 0.0;
    }
    let sentence_bigrams: std::collections::HashSet<&[String]> =
        s.windows(2).collect();
    let paragraph_bigrams: std::collections::HashSet<&[String]> =
        p.windows(2).collect();
    let hits = sentence_bigrams
        .iter()
        .filter(|b| paragraph_bigrams.contains(*b))
        .count();
    hits as f64 / sentence_bigrams.len() as f64
}

/// Surrogate entities: maximal runs of words that are capitalized or contain
/// a digit, compared case-insensitively.
fn surrogate_entities(text: &str) -> std::collections::HashSet<String> {
    let mut entities = std::collections::HashSet::new();
    let mut run: Vec<String> = Vec::new();
    let is_entity_word = |w: &str| {
        let stripped = w.trim_matches(|c: char| c.is_ascii_punctuation());
        !stripped.is_empty()
            && (stripped.chars().next().is_some_and(|c| c.is_uppercase())
                || stripped.chars().any(|c| c.is_ascii_digit()))
    };
    for word in raw_words(text) {
        if is_entity_word(word) {
            run.push(
                word.trim_matches(|c: char| c.is_ascii_punctuation())
                    .to_lowercase(),
            );
        } else if !run.is_empty() {
            entities.insert(run.join(" "));
            run.clear();
        }
    }
    if !run.is_empty() {
        entities.insert(run.join(" "));
    }
    entities
}

/// Fraction of the sentence's surrogate entities found in the paragraph.
/// A sentence without entities scores zero.
pub fn entity_overlap(sentence: &str, paragraph: &str) -> f64 {
    let sent_entities = surrogate_entities(sentence);
    if sent_entities.is_empty() {
        return 0.0;
    }
    let para_tokens = tokenize(paragraph);
    let hits = sent_entities
        .iter()
        .filter(|e| {
            let entity_tokens = tokenize(e);
            !entity_tokens.is_empty()
                && para_tokens
                    .windows(entity_tokens.len())
                    .any(|w| w == entity_tokens.as_slice())
        })
        .count();
    hits as f64 / sent_entities.len() as f64
}

/// Per-paragraph component scores for one sentence.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AlignmentScore {
    pub paragraph: usize,
    pub embed: f64,
    pub bigram: f64,
    pub entity: f64,
    pub combined: f64,
}

/// Map a sentence to the paragraph with the highest combined similarity;
/// ties go to the smallest paragraph index.
pub fn align_sentence<P: SimilarityProvider>(
    sentence: &str,
    paragraphs: &[&str],
    cfg: &AlignmentConfig,
    provider: &P,
) -> AlignmentScore {
    let mut best: Option<AlignmentScore> = None;
    for (i, para) in paragraphs.iter().enumerate() {
        let embed = provider.similarity(sentence, para).clamp(0.0, 1.0);
        let bigram = bigram_overlap(sentence, para);
        let entity = entity_overlap(sentence, para);
        let combined = cfg.w_embed * embed + cfg.w_bigram * bigram + cfg.w_entity * entity;
        let candidate = AlignmentScore { paragraph: i, embed, bigram, entity, combined };
        if best.as_ref().is_none_or(|b| candidate.combined > b.combined) {
            best = Some(candidate);
        }
    }
    best.expect("at least one paragraph required")
}
