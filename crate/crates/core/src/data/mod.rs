//! Corpus ingestion, vocabulary and embeddings, golden-label generation,
//! common-word features, evidence sampling and character mode.

pub mod charmode;
pub mod corpus;
pub mod features;
pub mod labels;
pub mod sampling;
pub mod synonyms;
pub mod vocab;

pub use charmode::to_char_mode;
pub use corpus::{load_corpus, parse_corpus, write_corpus, Evidence, LineError, LoadReport, Polarity, QaInstance};
pub use features::compute_common_word_features;
pub use labels::{answer_forms, find_first_occurrence, generate_labels, LabelOutcome};
pub use sampling::{
    draw_slot_kind, sample_companion_evidence, sample_other, BatchSampler, NoiseConfig, SlotKind, TrainingPool,
    TrainingSample,
};
pub use synonyms::SynonymDict;
pub use vocab::{build_vocab_and_embeddings, load_embedding_file, EmbeddingTable, Vocab, UNK_TOKEN};
