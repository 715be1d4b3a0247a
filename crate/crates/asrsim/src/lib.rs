//! Measures ASR transcription errors against written references, learns a
//! per-token confusion model from those errors, and reproducibly injects the
//! same error pattern into written task-oriented-dialogue corpora. Also scores
//! transcriptions (WER/SER) and dialogue-state predictions (JGA).

pub mod align;
pub mod confusion;
pub mod corpus;
pub mod dsteval;
pub mod inject;
pub mod metrics;
pub mod textnorm;

mod error;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
