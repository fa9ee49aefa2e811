//! Embedding sets, the plain-text file formats and the synthetic corpus.
//!
//! Vectors: one utterance per line, `utt_id v1 … vd`, values written with
//! 17 significant digits and lines sorted by id. Speaker map (`utt2spk`):
//! `utt_id spk_id`. Trials: `enroll_id test_id target|nontarget`.

mod embeddings;
mod synth;
mod trials;

pub use embeddings::{
    format_embeddings, format_utt2spk, format_value, parse_embeddings, parse_utt2spk,
    read_embeddings, write_embeddings, Domain, EmbeddingSet, SpeakerLabels,
};
pub use synth::{
    generate_synthetic, random_orthogonal, Rotation, SyntheticCorpus, SyntheticSpec,
};
pub use trials::{
    format_scores, format_trials, parse_scores, parse_trials, read_scores, read_trials,
    write_scores, write_trials,
};
