//! Attachment-style F1 for question-summary hierarchies.
//!
//! Each generated pair is mapped to the reference pair whose summary has the
//! highest ROUGE-1 + ROUGE-2 score against its own (ties go to the smallest
//! reference pre-order id). A generated parent-child edge is a match when the
//! mapped parent is a proper ancestor of the mapped child in the reference
//! hierarchy; the match weight averages the four summary ROUGE scores
//! (parent R1, parent R2, child R1, child R2), so a perfect reproduction
//! weighs exactly 1.
//!
//! Weighted precision sums match weights over generated edges. Weighted
//! recall runs over reference edges: an edge is covered when some matched
//! generated edge maps onto exactly its endpoints, and contributes its best
//! match weight. If neither side has edges the score is perfect; if exactly
//! one side is edge-free it is zero.

use serde::{Deserialize, Serialize};

use super::{rouge_tokens, RougeVariant};
use crate::qs::QsHierarchy;
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// The mapping and matched edges behind a hierarchy F1 score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HierMatch {
    /// Generated pair id (depth-first order) -> reference pair id.
    pub mapping: Vec<usize>,
    /// Matched generated edges as (parent id, child id, weight).
    pub matched_edges: Vec<(usize, usize, f64)>,
}

struct Pairs {
    summaries: Vec<Vec<String>>,
    parents: Vec<Option<usize>>,
    edges: Vec<(usize, usize)>,
}

fn pairs_of(h: &QsHierarchy) -> Pairs {
    let units = h.units();
    let summaries = units.iter().map(|(_, n)| tokenize(&n.summary)).collect();
    let edges = h.edges();
    let mut parents = vec![None; units.len()];
    for &(p, c) in &edges {
        parents[c] = Some(p);
    }
    Pairs { summaries, parents, edges }
}

fn is_proper_ancestor(parents: &[Option<usize>], anc: usize, mut node: usize) -> bool {
    while let Some(p) = parents[node] {
        if p == anc {
            return true;
        }
        node = p;
    }
    false
}

/// Compute the generated-to-reference mapping and the matched edge set.
pub fn hierarchy_match(generated: &QsHierarchy, reference: &QsHierarchy) -> HierMatch {
    let gen = pairs_of(generated);
    let refr = pairs_of(reference);
    if refr.summaries.is_empty() {
        return HierMatch { mapping: Vec::new(), matched_edges: Vec::new() };
    }

    // Pairwise summary similarity: ROUGE-1 f + ROUGE-2 f.
    let sim = |g: usize, r: usize| -> f64 {
        rouge_tokens(&gen.summaries[g], &refr.summaries[r], RougeVariant::R1).f1
            + rouge_tokens(&gen.summaries[g], &refr.summaries[r], RougeVariant::R2).f1
    };

    let mut mapping = Vec::with_capacity(gen.summaries.len());
    for g in 0..gen.summaries.len() {
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for r in 0..refr.summaries.len() {
            let score = sim(g, r);
            if score > best_score {
                best_score = score;
                best = r;
            }
        }
        mapping.push(best);
    }

    let mut matched_edges = Vec::new();
    for &(p, c) in &gen.edges {
        let (mp, mc) = (mapping[p], mapping[c]);
        if is_proper_ancestor(&refr.parents, mp, mc) {
            let weight = (sim(p, mp) + sim(c, mc)) / 4.0;
            matched_edges.push((p, c, weight));
        }
    }
    HierMatch { mapping, matched_edges }
}

/// Weighted precision, recall and F1 of a generated hierarchy against a
/// reference.
pub fn hierarchy_f1(generated: &QsHierarchy, reference: &QsHierarchy) -> HierScore {
    let gen_edges = generated.edges();
    let ref_edges = reference.edges();
    match (gen_edges.is_empty(), ref_edges.is_empty()) {
        (true, true) => return HierScore { precision: 1.0, recall: 1.0, f1: 1.0 },
        (true, false) | (false, true) => {
            return HierScore { precision: 0.0, recall: 0.0, f1: 0.0 }
        }
        _ => {}
    }
    if reference.num_pairs() == 0 {
        return HierScore { precision: 0.0, recall: 0.0, f1: 0.0 };
    }

    let matched = hierarchy_match(generated, reference);
    let precision: f64 = matched.matched_edges.iter().map(|(_, _, w)| w).sum::<f64>()
        / gen_edges.len() as f64;

    let mut recall_sum = 0.0;
    for &(rp, rc) in &ref_edges {
        let best = matched
            .matched_edges
            .iter()
            .filter(|&&(p, c, _)| matched.mapping[p] == rp && matched.mapping[c] == rc)
            .map(|&(_, _, w)| w)
            .fold(f64::NEG_INFINITY, f64::max);
        if best.is_finite() {
            recall_sum += best;
        }
    }
    let recall = recall_sum / ref_edges.len() as f64;

    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    HierScore { precision, recall, f1 }
}
