//! Extractive-fragment coverage and density.
//!
//! Greedy decomposition: walking the summary left to right, take the longest
//! token run at the current position that occurs anywhere in the document;
//! if none, advance one token. Coverage sums fragment lengths, density sums
//! their squares, both over summary length; the normalized density divides
//! by summary length once more, bounding it in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityScores {
    pub coverage: f64,
    pub density: f64,
    pub normalized_density: f64,
}

pub fn extractive_density(summary: &str, document: &str) -> DensityScores {
    let s = tokenize(summary);
    let d = tokenize(document);
    let fragments = greedy_fragments(&s, &d);
    let len = s.len() as f64;
    if s.is_empty() {
        return DensityScores { coverage: 0.0, density: 0.0, normalized_density: 0.0 };
    }
    let total: usize = fragments.iter().sum();
    let squares: usize = fragments.iter().map(|f| f * f).sum();
    let density = squares as f64 / len;
    DensityScores {
        coverage: total as f64 / len,
        density,
        normalized_density: density / len,
    }
}

/// Lengths of the greedy shared fragments.
fn greedy_fragments(summary: &[String], document: &[String]) -> Vec<usize> {
    let mut fragments = Vec::new();
    let mut i = 0;
    while i < summary.len() {
        let mut best = 0;
        for start in 0..document.len() {
            if document[start] != summary[i] {
                continue;
            }
            let mut len = 0;
            while i + len < summary.len()
                && start + len < document.len()
                && summary[i + len] == document[start + len]
            {
                len += 1;
            }
            best = best.max(len);
        }
        if best > 0 {
            fragments.push(best);
            i += best;
        } else {
            i += 1;
        }
    }
    fragments
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verbatim_copy_has_normalized_density_one() {
        let text = "the agency reported rising costs in march";
        let scores = extractive_density(text, &format!("intro. {text} outro."));
        assert!((scores.normalized_density - 1.0).abs() < 1e-12);
        assert!((scores.coverage - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_texts_score_zero() {
        let scores = extractive_density("alpha beta", "gamma delta epsilon");
        assert_eq!(scores, DensityScores { coverage: 0.0, density: 0.0, normalized_density: 0.0 });
    }

    #[test]
    fn hand_computed_fragments() {
        // Summary of 10 tokens sharing fragments of length 3 and 2:
        // density (9 + 4) / 10 = 1.3, normalized 0.13.
        let summary = "one two three x y four five x x x";
        let document = "one two three gap gap four five end";
        let scores = extractive_density(summary, document);
        assert!((scores.density - 1.3).abs() < 1e-12, "{scores:?}");
        assert!((scores.normalized_density - 0.13).abs() < 1e-12);
        assert!((scores.coverage - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_summary() {
        let scores = extractive_density("", "whatever");
        assert_eq!(scores.normalized_density, 0.0);
    }

    /// Quadratic brute force: best fragment at each position by direct
    /// enumeration of all (start, length) document windows.
    fn brute_fragments(summary: &[String], document: &[String]) -> Vec<usize> {
        let mut fragments = Vec::new();
        let mut i = 0;
        while i < summary.len() {
            let mut best = 0;
            for len in (1..=summary.len() - i).rev() {
                let target = &summary[i..i + len];
                let found = (0..document.len().saturating_sub(len - 1))
                    .any(|s| &document[s..s + len] == target);
                if found {
                    best = len;
                    break;
                }
            }
            if best > 0 {
                fragments.push(best);
                i += best;
            } else {
                i += 1;
            }
        }
        fragments
    }

    #[test]
    fn greedy_matches_bruteforce_on_random_strings() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let alphabet = ["a", "b", "c"];
        for _ in 0..200 {
            let s: Vec<String> = (0..rng.gen_range(0..30))
                .map(|_| alphabet[rng.gen_range(0..3)].to_string())
                .collect();
            let d: Vec<String> = (0..rng.gen_range(0..30))
                .map(|_| alphabet[rng.gen_range(0..3)].to_string())
                .collect();
            assert_eq!(greedy_fragments(&s, &d), brute_fragments(&s, &d));
            let scores = extractive_density(&s.join(" "), &d.join(" "));
            assert!(scores.normalized_density <= 1.0 + 1e-12);
            assert!(scores.coverage <= 1.0 + 1e-12);
            assert!(scores.normalized_density <= scores.coverage + 1e-12);
        }
    }
}
