//! Model configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where (and in what form) hierarchical biases enter attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Plain transformer, no bias table.
    None,
    /// Full (path length, level difference) table in encoder self-attention.
    Enc,
    /// Full table in the decoder's last-layer cross-attention, weighted by
    /// the second-to-last layer's alignment.
    Dec,
    /// Selected-relation table in encoder self-attention.
    EncSelected,
    /// Selected-relation table in decoder cross-attention.
    DecSelected,
    /// Token-level linear distance table in encoder self-attention.
    TokLinear,
    /// Section-level linear distance table in encoder self-attention.
    SecLinear,
}

impl Placement {
    pub const ALL: [Placement; 7] = [
        Placement::None,
        Placement::Enc,
        Placement::Dec,
        Placement::EncSelected,
        Placement::DecSelected,
        Placement::TokLinear,
        Placement::SecLinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Placement::None => "none",
            Placement::Enc => "enc",
            Placement::Dec => "dec",
            Placement::EncSelected => "enc-selected",
            Placement::DecSelected => "dec-selected",
            Placement::TokLinear => "tok-linear",
            Placement::SecLinear => "sec-linear",
        }
    }

    pub fn parse(s: &str) -> Result<Placement> {
        Placement::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown placement {s:?}")))
    }

    /// Bias applied to encoder self-attention.
    pub fn on_encoder(self) -> bool {
        matches!(
            self,
            Placement::Enc | Placement::EncSelected | Placement::TokLinear | Placement::SecLinear
        )
    }

    /// Bias applied to the decoder's last-layer cross-attention.
    pub fn on_decoder(self) -> bool {
        matches!(self, Placement::Dec | Placement::DecSelected)
    }
}

/// Clipping bounds for table indices; out-of-range positions clamp to the
/// boundary bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipBounds {
    pub path: i64,
    pub lvl: i64,
    pub linear: i64,
}

impl Default for ClipBounds {
    fn default() -> Self {
        ClipBounds { path: 16, lvl: 8, linear: 128 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub d_ff: usize,
    #[serde(default)]
    pub clip: ClipBounds,
    pub placement: Placement,
    pub seed: u64,
}

impl ModelConfig {
    /// Small default used by harnesses: width 64, 2+2 layers, 4 heads.
    pub fn toy(vocab_size: usize, placement: Placement, seed: u64) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d_model: 64,
            n_heads: 4,
            enc_layers: 2,
            dec_layers: 2,
            d_ff: 128,
            clip: ClipBounds::default(),
            placement,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "width {} must be a positive multiple of head count {}",
                self.d_model, self.n_heads
            )));
        }
        if self.enc_layers == 0 || self.dec_layers == 0 {
            return Err(Error::Config("need at least one encoder and decoder layer".into()));
        }
        if self.placement.on_decoder() && self.dec_layers < 2 {
            return Err(Error::Config(
                "decoder bias placement needs at least 2 decoder layers \
                 (the alignment comes from the second-to-last layer)"
                    .into(),
            ));
        }
        if self.vocab_size < crate::model::vocab::NUM_SPECIALS {
            return Err(Error::Config("vocabulary too small".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}
