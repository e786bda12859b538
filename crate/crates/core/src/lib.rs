//! Tabular embedding model (TEM) retrieval engine.
//!
//! Tables are never chunked or embedded row by row. Each table is represented
//! by a descriptor (name, description, column definitions); a small encoder is
//! fine-tuned on question → relevant-files pairs with an in-batch negatives
//! loss, the descriptors are indexed, and questions are answered with the
//! top-k most similar files.
//!
//! Module map:
//!
//! - [`corpus`]: descriptor corpus and question dataset (JSONL).
//! - [`textenc`]: tokenizer, vocabulary, vocabulary expansion and the toy
//!   softmax LM used to check the expansion KL bound.
//! - [`encoder`]: mean-pooled token embeddings, projection, L2 normalization.
//! - [`trainer`]: multiple-negatives ranking loss, AdamW, warmup/decay schedule.
//! - [`retrieval`]: exhaustive cosine top-k over the descriptor index.
//! - [`evaluator`]: precision/recall/hit-rate at k and report emitters.
//! - [`datagen`]: role-play prompt templating, LLM clients, synthetic corpora.
//!
//! Interchangeable strategies (expansion initializers, report formats, LLM
//! clients) are looked up by name through [`registry::Registry`].

pub mod binfmt;
pub mod config;
pub mod corpus;
pub mod datagen;
pub mod encoder;
pub mod evaluator;
pub mod registry;
pub mod retrieval;
pub mod tensor;
pub mod textenc;
pub mod trainer;

pub use corpus::{Column, Corpus, QuerySample, TableDescriptor};
pub use encoder::{EmbeddingVector, EncoderModel};
pub use evaluator::EvalReport;
pub use retrieval::{DescriptorIndex, Retrieval};
pub use tensor::Matrix;
pub use textenc::Vocabulary;
pub use trainer::TrainConfig;
