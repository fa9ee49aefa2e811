//! Source pretraining, adversarial discriminative adaptation (ADDA),
//! domain-adversarial training with gradient reversal (DAT), and encoding
//! embeddings through the trained encoders.

mod config;
mod models;
mod train;

pub use config::{LossTrace, TrainConfig};
pub use models::{encode, AddaModel, DatModel, EncodeMode, Encoder, SourceModel};
pub use train::{adapt_adda, train_dat, train_source, Trained};
