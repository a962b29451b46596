//! Attention bias tables and the small encoder-decoder around them.

pub mod bias;
pub mod checkpoint;
mod config;
mod decode;
mod net;
mod params;
pub mod probe;
mod train;
pub mod vocab;

pub use bias::{
    bias_grid_csv, bias_matrix_enc, bias_vector_dec, build_pos_index, dump_bias_grid, BiasKind,
    BiasTable, PosIndex,
};
pub use config::{ClipBounds, ModelConfig, Placement};
pub use decode::{find_repeated_ngram, DecodeConfig, DecodeResult};
pub use net::{attend_biased, bias_kind, ForwardPass, Model, PreparedSample};
pub use params::{Gradients, ParamStore, Tensor};
pub use train::{decoder_input, train};
pub use vocab::{Vocab, BOS, EOS, UNK};

#[cfg(test)]
mod tests;
