//! Tokenization, vocabulary construction and vocabulary expansion.
//!
//! [`toylm`] holds a minimal softmax language model over an embedding matrix.
//! It is not trained; it exists to measure how much appending a new token row
//! perturbs the output distribution over the existing vocabulary.

mod expansion;
mod tokenize;
pub mod toylm;
mod vocab;

pub use expansion::{
    expand_vocab, initializers, moment_stats, ExpansionError, ExpansionInit, GaussianSample,
    MeanExact, NewRowInitializer,
};
pub use tokenize::tokenize;
pub use toylm::{kl_bound, softmax, ToySoftmaxLM};
pub use vocab::{build_vocab, Vocabulary, VocabError, UNK_TOKEN};
