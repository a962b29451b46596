//! Structure-aware sequence modeling toolkit.
//!
//! The crate is organized around a document structure tree ([`doc`]), learnable
//! attention bias tables injected into a small encoder-decoder ([`model`]),
//! question-summary hierarchies with a reversible linearization ([`qs`]),
//! summarization metrics ([`metrics`]), and dataset alignment / filtering
//! procedures ([`align`]). Everything is deterministic under a fixed seed and
//! computed in double precision.

pub mod align;
pub mod doc;
pub mod error;
pub mod metrics;
pub mod model;
pub mod qs;
pub mod text;

pub use error::{Error, Result};
