//! Sequence-labeling question answering: an LSTM question encoder, a stacked
//! LSTM evidence encoder and a CRF (or softmax) label decoder that tags the
//! answer span inside an evidence passage.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod evidence;
pub mod lstm;
pub mod model;
pub mod numeric;
mod parallel;
pub mod question;
pub mod synthetic;
pub mod train;
mod reference;

pub use config::{EmbeddingTraining, TrainConfig};
pub use decoder::{DecoderKind, Label, LabelSequence};
pub use error::{Error, Result};
pub use evidence::{EvidenceEncoder, EvidenceStates, FeatureIds};
pub use lstm::CandidateActivation;
pub use numeric::{Matrix, ParamStore, Rng};
pub use question::{PoolingMode, QuestionEncoder};
