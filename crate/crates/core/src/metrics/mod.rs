//! Evaluation metrics: ROUGE-1/2/L, BLEU-4, attachment-style hierarchy F1,
//! and the reattachment edit count.
//!
//! All text runs through the shared tokenizer (case-folded); no stemming or
//! stopword removal.

mod edit;
mod hier;
mod report;

pub use edit::{edit_count, EditCount};
pub use hier::{hierarchy_f1, hierarchy_match, HierMatch, HierScore};
pub use report::{evaluate_run, EvalReport, SampleScores};

use serde::{Deserialize, Serialize};

use crate::text::{ngram_counts, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RougeVariant {
    R1,
    R2,
    RL,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_counts(matched: f64, cand_total: f64, ref_total: f64) -> RougeScore {
        if cand_total == 0.0 || ref_total == 0.0 {
            return RougeScore::default();
        }
        let precision = matched / cand_total;
        let recall = matched / ref_total;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        RougeScore { precision, recall, f1 }
    }
}

/// ROUGE-1/2 as clipped n-gram overlap F-measure, ROUGE-L as longest common
/// subsequence F-measure. Empty texts score zero.
pub fn rouge(candidate: &str, reference: &str, variant: RougeVariant) -> RougeScore {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    rouge_tokens(&cand, &refr, variant)
}

pub(crate) fn rouge_tokens(cand: &[String], refr: &[String], variant: RougeVariant) -> RougeScore {
    match variant {
        RougeVariant::R1 => ngram_rouge(cand, refr, 1),
        RougeVariant::R2 => ngram_rouge(cand, refr, 2),
        RougeVariant::RL => {
            let lcs = lcs_len(cand, refr) as f64;
            RougeScore::from_counts(lcs, cand.len() as f64, refr.len() as f64)
        }
    }
}

fn ngram_rouge(cand: &[String], refr: &[String], n: usize) -> RougeScore {
    let cand_counts = ngram_counts(cand, n);
    let ref_counts = ngram_counts(refr, n);
    let matched: usize = cand_counts
        .iter()
        .map(|(gram, c)| (*c).min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    let cand_total: usize = cand_counts.values().sum();
    let ref_total: usize = ref_counts.values().sum();
    RougeScore::from_counts(matched as f64, cand_total as f64, ref_total as f64)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

const BLEU_EPS: f64 = 1e-9;

/// BLEU with up to 4-gram precisions: geometric mean of clipped precisions
/// times the brevity penalty. A zero n-gram precision is replaced by a small
/// epsilon so the geometric mean stays defined.
pub fn bleu4(candidate: &str, reference: &str) -> f64 {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    bleu4_tokens(&cand, &refr)
}

pub(crate) fn bleu4_tokens(cand: &[String], refr: &[String]) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand_counts = ngram_counts(cand, n);
        let ref_counts = ngram_counts(refr, n);
        let matched: usize = cand_counts
            .iter()
            .map(|(gram, c)| (*c).min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        let total: usize = cand_counts.values().sum();
        let p = if total == 0 || matched == 0 {
            BLEU_EPS
        } else {
            matched as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let c = cand.len() as f64;
    let r = refr.len() as f64;
    let brevity = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    brevity * (log_sum / 4.0).exp()
}
