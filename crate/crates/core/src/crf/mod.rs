//! Linear-chain conditional random field.
//!
//! A model scores a label sequence as the sum of emission weights for the
//! active features at each position, transition weights between consecutive
//! labels, and begin/end weights for the first and last label. Inference
//! (partition function, marginals, Viterbi) runs in log space; training is
//! mini-batch gradient descent on the L2-regularized negative log
//! likelihood, with gradients from forward-backward.

mod inference;
mod io;
mod model;
mod train;

pub use inference::{
    log_partition, nll_gradient, nll_objective, sequence_score, viterbi_decode,
    viterbi_decode_masked, DecodeMask,
};
pub use io::{load_model, save_model, MODEL_FORMAT, MODEL_VERSION};
pub use model::{CrfGradient, CrfModel};
pub use train::{train, TrainConfig, TrainingSequence};

pub(crate) use io::CrfModelDto;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CrfError {
    #[error("empty sequence")]
    EmptySequence,
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("no training data")]
    EmptyData,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("sequence has {features} feature sets but {labels} labels")]
    SequenceLengthMismatch { features: usize, labels: usize },
    #[error("inconsistent model dimensions: {0}")]
    DimensionMismatch(String),
    #[error("non-finite weight in model")]
    NonFiniteWeight,
    #[error("labels are not all BIO tags: `{0}`")]
    NotBioLabels(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Serde {
        path: std::path::PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: expected format `{expected}`, found `{found}`")]
    BadFormat {
        path: std::path::PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: unsupported model version {found}")]
    BadVersion {
        path: std::path::PathBuf,
        found: u32,
    },
}
