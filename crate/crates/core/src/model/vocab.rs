//! Deterministic token vocabulary: fixed specials, then the corpus tokens in
//! sorted order.

use serde::{Deserialize, Serialize};

pub const BOS: usize = 0;
pub const EOS: usize = 1;
pub const UNK: usize = 2;
pub const NUM_SPECIALS: usize = 3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
}

impl Vocab {
    /// Build from token streams; ids are stable across runs because the
    /// token list is sorted and deduplicated.
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(tokens: I) -> Vocab {
        let mut uniq: Vec<&str> = tokens.into_iter().collect();
        uniq.sort_unstable();
        uniq.dedup();
        let mut all = vec!["<bos>".to_string(), "<eos>".to_string(), "<unk>".to_string()];
        all.extend(uniq.into_iter().map(str::to_string));
        Vocab { tokens: all }
    }

    pub fn from_tokens(tokens: Vec<String>) -> Vocab {
        Vocab { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.tokens[NUM_SPECIALS..]
            .binary_search_by(|t| t.as_str().cmp(token))
            .map(|i| i + NUM_SPECIALS)
            .unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or("<unk>", |t| t.as_str())
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_ids_and_unk() {
        let v = Vocab::build(["beta", "alpha", "beta"]);
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("alpha"), 3);
        assert_eq!(v.id("beta"), 4);
        assert_eq!(v.id("missing"), UNK);
        assert_eq!(v.token(3), "alpha");
    }
}
