//! Shared tokenization used by every stage.
//!
//! The tokenizer is deliberately simple and fully deterministic: lowercase the
//! input, split on whitespace, then peel leading and trailing ASCII
//! punctuation off each word into tokens of their own. Interior punctuation
//! (hyphens, apostrophes, decimal points) stays attached, so `well-known`,
//! `don't` and `3.5` each stay one token.

/// Tokenize `text`: lowercase, whitespace split, leading/trailing punctuation
/// split into separate tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut tokens = Vec::new();
    for word in lowered.split_whitespace() {
        push_word(word, &mut tokens);
    }
    tokens
}

fn push_word(word: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = word.chars().collect();
    let mut start = 0;
    let mut end = chars.len();
    while start < end && chars[start].is_ascii_punctuation() {
        start += 1;
    }
    while end > start && chars[end - 1].is_ascii_punctuation() {
        end -= 1;
    }
    for &c in &chars[..start] {
        out.push(c.to_string());
    }
    if start < end {
        out.push(chars[start..end].iter().collect());
    }
    for &c in &chars[end..] {
        out.push(c.to_string());
    }
}

/// Split raw text on whitespace without case folding or punctuation
/// stripping. Used where the original casing matters (entity surrogates).
pub fn raw_words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Split `text` into sentences: a sentence ends at `.`, `!` or `?` followed
/// by whitespace (or end of input). No abbreviation handling.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        current.push(c);
        if matches!(c, '.' | '!' | '?') {
            let at_end = i + 1 == chars.len();
            let before_space = chars.get(i + 1).is_some_and(|n| n.is_whitespace());
            if at_end || before_space {
                let trimmed = current.trim();
                if !trimmed.is_empty() {
                    sentences.push(trimmed.to_string());
                }
                current.clear();
            }
        }
        i += 1;
    }
    let trimmed = current.trim();
    if !trimmed.is_empty() {
        sentences.push(trimmed.to_string());
    }
    sentences
}

/// Count n-grams of `tokens` keyed by the window itself.
pub fn ngram_counts(tokens: &[String], n: usize) -> std::collections::HashMap<&[String], usize> {
    let mut counts = std::collections::HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for window in tokens.windows(n) {
        *counts.entry(window).or_insert(0) += 1;
    }
    counts
}
