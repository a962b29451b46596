//! Seeded random structured documents for harnesses and property tests.

use rand::Rng;

use super::{DocumentRecord, SectionRecord};

const WORDS: &[&str] = &[
    "budget", "report", "agency", "program", "review", "policy", "energy", "water", "safety",
    "grant", "audit", "state", "federal", "plan", "cost", "fund", "risk", "data", "rule", "law",
];

/// Generate a random document with at most `max_sections` sections (not
/// counting the virtual root) and nesting depth at most `max_depth`.
pub fn random_document<R: Rng>(rng: &mut R, max_sections: usize, max_depth: usize) -> DocumentRecord {
    let mut remaining = rng.gen_range(1..=max_sections.max(1));
    let mut sections = Vec::new();
    while remaining > 0 {
        let section = random_section(rng, &mut remaining, 1, max_depth);
        sections.push(section);
    }
    let front_len = rng.gen_range(3..8);
    DocumentRecord {
        title: random_phrase(rng, 2),
        front: vec![random_phrase(rng, front_len)],
        sections,
    }
}

fn random_section<R: Rng>(
    rng: &mut R,
    remaining: &mut usize,
    depth: usize,
    max_depth: usize,
) -> SectionRecord {
    *remaining -= 1;
    let n_paras = rng.gen_range(0..3);
    let mut paragraphs = Vec::with_capacity(n_paras);
    for _ in 0..n_paras {
        let len = rng.gen_range(3..10);
        paragraphs.push(random_phrase(rng, len));
    }
    let title_len = rng.gen_range(1..4);
    let title = random_phrase(rng, title_len);
    let mut subsections = Vec::new();
    if depth < max_depth {
        while *remaining > 0 && rng.gen_bool(0.45) {
            subsections.push(random_section(rng, remaining, depth + 1, max_depth));
        }
    }
    SectionRecord { title, paragraphs, subsections }
}

fn random_phrase<R: Rng>(rng: &mut R, words: usize) -> String {
    (0..words)
        .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}
