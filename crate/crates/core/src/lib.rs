//! Compression and encryption of Markov symbol streams.
//!
//! A Huffman code built for the stationary distribution σ of a chain implies
//! a dyadic distribution π. Each source symbol is randomly moved by a
//! transformation matrix `B` so that the symbols seen by the coder are
//! distributed as π, which makes the coded bit stream close to uniform. The
//! side information needed to undo the transformation is encrypted and
//! interleaved with the coded stream.

pub mod analyze;
pub mod bits;
pub mod cli;
pub mod dist;
pub mod error;
pub mod huffman;
pub mod interleave;
pub mod markov;
pub mod model;
pub mod pipeline;
pub mod prob;
pub mod recon;
pub mod transform;

pub use dist::{Distribution, ExactDistribution, SymbolDistribution};
pub use error::{Error, Result};
pub use huffman::HuffmanCode;
pub use markov::MarkovModel;
pub use prob::{Prob, Rational};
pub use transform::{BuilderKind, EntropySource, TransformMatrix};
pub use interleave::InterleavePlan;
pub use model::ModelFile;
pub use pipeline::{decode, decode_frame, encode, EncodeOptions, EncodeStats, Encore};
pub use recon::{Cipher, CipherRegistry, NullCipher, TestCipher};
