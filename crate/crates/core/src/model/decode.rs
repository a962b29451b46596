//! Beam-search decoding with repeated-n-gram blocking.
//!
//! Beam 1 is greedy. Hypotheses are ranked by length-normalized
//! log-probability; a token that would complete an n-gram already present in
//! the hypothesis is banned outright, so emitted sequences can never contain
//! a repeated n-gram of the configured size. EOS is never banned, so every
//! hypothesis can terminate.

use super::bias::PosIndex;
use super::net::Model;
use super::vocab::{BOS, EOS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct DecodeConfig {
    pub beam: usize,
    pub max_len: usize,
    /// 0 disables blocking.
    pub no_repeat_ngram: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig { beam: 4, max_len: 64, no_repeat_ngram: 5 }
    }
}

#[derive(Debug, Clone)]
pub struct DecodeResult {
    /// Generated content tokens (no BOS/EOS).
    pub tokens: Vec<usize>,
    /// Total log-probability including the EOS step when finished.
    pub logprob: f64,
    /// Log-probability divided by the number of generated steps.
    pub normalized: f64,
}

#[derive(Debug, Clone)]
struct Hypothesis {
    /// Decoder input so far: BOS followed by content tokens.
    seq: Vec<usize>,
    logprob: f64,
}

impl Hypothesis {
    fn content(&self) -> &[usize] {
        &self.seq[1..]
    }
}

/// Tokens that would complete an n-gram already present in `content`.
fn banned_tokens(content: &[usize], n: usize) -> Vec<usize> {
    if n == 0 || content.len() + 1 < n {
        return Vec::new();
    }
    let prefix = &content[content.len() + 1 - n..];
    let mut banned = Vec::new();
    for start in 0..content.len() + 1 - n {
        if &content[start..start + n - 1] == prefix {
            banned.push(content[start + n - 1]);
        }
    }
    banned
}

impl Model {
    pub fn decode(
        &self,
        src: &[usize],
        index: Option<&PosIndex>,
        cfg: &DecodeConfig,
    ) -> Result<DecodeResult> {
        if cfg.beam == 0 {
            return Err(Error::Config("beam must be at least 1".into()));
        }
        let mut live = vec![Hypothesis { seq: vec![BOS], logprob: 0.0 }];
        let mut finished: Vec<DecodeResult> = Vec::new();

        for _step in 0..cfg.max_len {
            // (candidate logprob, hyp index, token)
            let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
            for (h, hyp) in live.iter().enumerate() {
                let pass = self.forward(src, index, &hyp.seq)?;
                let row = pass.logits.row(pass.logits.nrows() - 1);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let log_z = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
                let banned = banned_tokens(hyp.content(), cfg.no_repeat_ngram);
                for (token, &logit) in row.iter().enumerate() {
                    if token == BOS || banned.contains(&token) {
                        continue;
                    }
                    candidates.push((hyp.logprob + logit - log_z, h, token));
                }
            }
            // Deterministic order: score desc, then token and source hyp asc.
            candidates.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap()
                    .then(a.2.cmp(&b.2))
                    .then(a.1.cmp(&b.1))
            });
            let mut next_live = Vec::with_capacity(cfg.beam);
            let steps_done = live[0].seq.len(); // generated tokens after this step
            for (logprob, h, token) in candidates.into_iter().take(cfg.beam) {
                if token == EOS {
                    finished.push(DecodeResult {
                        tokens: live[h].content().to_vec(),
                        logprob,
                        normalized: logprob / steps_done as f64,
                    });
                } else {
                    let mut seq = live[h].seq.clone();
                    seq.push(token);
                    next_live.push(Hypothesis { seq, logprob });
                }
            }
            live = next_live;
            if live.is_empty() {
                break;
            }
        }

        // Unfinished hypotheses compete with their current score.
        for hyp in live {
            let steps = hyp.content().len().max(1);
            finished.push(DecodeResult {
                tokens: hyp.content().to_vec(),
                logprob: hyp.logprob,
                normalized: hyp.logprob / steps as f64,
            });
        }
        finished
            .into_iter()
            .max_by(|a, b| a.normalized.partial_cmp(&b.normalized).unwrap())
            .ok_or_else(|| Error::Config("no hypothesis produced".into()))
    }
}

/// Scan a sequence for a repeated n-gram; returns the first duplicate found.
pub fn find_repeated_ngram(tokens: &[usize], n: usize) -> Option<Vec<usize>> {
    if n == 0 || tokens.len() < n {
        return None;
    }
    let mut seen = std::collections::HashSet::new();
    for window in tokens.windows(n) {
        if !seen.insert(window) {
            return Some(window.to_vec());
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn banned_token_detection() {
        // content: a b c a b -> with n=3, prefix (a b) seen before "c":
        // ban c.
        let content = [10, 11, 12, 10, 11];
        assert_eq!(banned_tokens(&content, 3), vec![12]);
        assert!(banned_tokens(&content, 0).is_empty());
        assert!(banned_tokens(&content, 6).is_empty());
        // n=1: every previous token is banned.
        let mut ones = banned_tokens(&content, 1);
        ones.sort_unstable();
        ones.dedup();
        assert_eq!(ones, vec![10, 11, 12]);
    }

    #[test]
    fn repeat_scanner() {
        assert!(find_repeated_ngram(&[1, 2, 3, 1, 2, 3], 3).is_some());
        assert!(find_repeated_ngram(&[1, 2, 3, 1, 2, 4], 3).is_none());
        assert!(find_repeated_ngram(&[], 5).is_none());
    }
}
