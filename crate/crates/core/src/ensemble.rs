//! Hard voting and the three-stage blending pipeline over base taggers.
//!
//! Hard voting picks, per token, the tag with the highest score
//! `W(y, x) = sum_i T_i(y, x)` where `T_i` is 1 when base tagger `i`
//! predicted `y`; ties go to the tag predicted by the earliest base in the
//! caller's priority order. Blending trains k meta-CRFs on the base taggers'
//! held-out predictions (one categorical feature per base, per token) under
//! k-fold cross-validation, then hard-votes the k meta models' outputs.

use crate::corpus::{split_folds, CorpusError};
use crate::crf::{self, CrfError, CrfModel, TrainConfig, TrainingSequence};
use crate::features::{featurize_sentence, FeatureSet, PosTag};
use crate::tagscheme::Tag;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("no base predictions supplied")]
    EmptyPredictions,
    #[error("base `{base}` predicts {got} tags where {expected} are expected")]
    LengthMismatch {
        base: String,
        expected: usize,
        got: usize,
    },
    #[error("base `{0}` is missing from the priority order")]
    MissingPriority(String),
    #[error("duplicate base name `{0}`")]
    DuplicateBase(String),
    #[error("base set mismatch: model was trained on {expected:?}, got {got:?}")]
    BaseOrderMismatch {
        expected: Vec<String>,
        got: Vec<String>,
    },
    #[error("blending needs at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("record `{id}`: {reason}")]
    BadRecord { id: String, reason: String },
    #[error("word features requested but tokens/POS not supplied")]
    MissingWordFeatures,
    #[error(transparent)]
    Fold(#[from] CorpusError),
    #[error(transparent)]
    Crf(#[from] CrfError),
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
}

/// Per-token vote counts across base taggers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VoteTally {
    counts: BTreeMap<Tag, usize>,
}

impl VoteTally {
    /// Tallies the tags predicted for one token position.
    pub fn from_column(predictions: &[&[Tag]], position: usize) -> VoteTally {
        let mut counts = BTreeMap::new();
        for seq in predictions {
            *counts.entry(seq[position]).or_insert(0) += 1;
        }
        VoteTally { counts }
    }

    /// The score `W(y, x)` for one tag.
    pub fn score(&self, tag: Tag) -> usize {
        self.counts.get(&tag).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    fn max_score(&self) -> usize {
        self.counts.values().copied().max().unwrap_or(0)
    }
}

fn check_aligned(predictions: &[(String, Vec<Tag>)]) -> Result<usize, EnsembleError> {
    let first = predictions.first().ok_or(EnsembleError::EmptyPredictions)?;
    let len = first.1.len();
    for (base, seq) in predictions {
        if seq.len() != len {
            return Err(EnsembleError::LengthMismatch {
                base: base.clone(),
                expected: len,
                got: seq.len(),
            });
        }
    }
    Ok(len)
}

/// Per-token majority vote over named base predictions.
///
/// `priority` must cover every base; among tied tags the winner is the tag
/// predicted by the earliest base in `priority`.
pub fn hard_vote(
    predictions: &[(String, Vec<Tag>)],
    priority: &[String],
) -> Result<Vec<Tag>, EnsembleError> {
    let len = check_aligned(predictions)?;
    let mut by_priority = Vec::with_capacity(predictions.len());
    for name in priority {
        if by_priority.iter().any(|(n, _)| *n == name) {
            return Err(EnsembleError::DuplicateBase(name.clone()));
        }
        if let Some((_, seq)) = predictions.iter().find(|(n, _)| n == name) {
            by_priority.push((name, seq));
        }
    }
    for (name, _) in predictions {
        if !priority.contains(name) {
            return Err(EnsembleError::MissingPriority(name.clone()));
        }
    }

    let columns: Vec<&[Tag]> = predictions.iter().map(|(_, seq)| seq.as_slice()).collect();
    let mut out = Vec::with_capacity(len);
    for position in 0..len {
        let tally = VoteTally::from_column(&columns, position);
        let max = tally.max_score();
        let winner = by_priority
            .iter()
            .map(|(_, seq)| seq[position])
            .find(|tag| tally.score(*tag) == max)
            .expect("some base attains the maximal vote count");
        out.push(winner);
    }
    Ok(out)
}

/// One categorical feature per base tagger: `base:<name>=<tag>`.
pub fn blend_features(
    base_predictions: &[(String, Vec<Tag>)],
) -> Result<Vec<FeatureSet>, EnsembleError> {
    let len = check_aligned(base_predictions)?;
    let mut out = vec![FeatureSet::new(); len];
    for (name, seq) in base_predictions {
        for (t, tag) in seq.iter().enumerate() {
            out[t].insert(format!("base:{name}={tag}"));
        }
    }
    Ok(out)
}

/// One sentence of blending data: aligned base predictions plus gold tags.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub pos: Option<Vec<PosTag>>,
    pub base_predictions: Vec<(String, Vec<Tag>)>,
    pub gold: Vec<Tag>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BlendOptions {
    /// Mix the word-level features into the meta-CRF input alongside the
    /// base predictions.
    pub include_word_features: bool,
}

/// The k meta models of a trained blend, voted at prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendModel {
    pub base_order: Vec<String>,
    pub include_word_features: bool,
    pub meta_models: Vec<CrfModel>,
}

/// Training report for one blending fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlendFoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub eval_size: usize,
    /// Span macro F1 of the fold's meta model on its held-out fold.
    pub heldout_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlendTrainOutcome {
    pub model: BlendModel,
    pub folds: Vec<BlendFoldReport>,
}

fn record_features(
    record: &BlendRecord,
    include_word_features: bool,
) -> Result<Vec<FeatureSet>, EnsembleError> {
    let mut features = blend_features(&record.base_predictions)?;
    if features.len() != record.tokens.len() {
        return Err(EnsembleError::BadRecord {
            id: record.id.clone(),
            reason: format!(
                "{} tokens but {} predicted tags",
                record.tokens.len(),
                features.len()
            ),
        });
    }
    if include_word_features {
        let pos = match &record.pos {
            Some(pos) => pos.clone(),
            None => crate::features::pos_tag(&record.tokens),
        };
        let word_features =
            featurize_sentence(&record.tokens, &pos).map_err(|e| EnsembleError::BadRecord {
                id: record.id.clone(),
                reason: e.to_string(),
            })?;
        for (fs, wf) in features.iter_mut().zip(word_features) {
            fs.extend(wf);
        }
    }
    Ok(features)
}

fn base_names(record: &BlendRecord) -> Vec<String> {
    record
        .base_predictions
        .iter()
        .map(|(n, _)| n.clone())
        .collect()
}

/// Trains k meta-CRFs on base predictions under k-fold cross-validation.
pub fn blend_train(
    records: &[BlendRecord],
    k: usize,
    config: &TrainConfig,
    options: BlendOptions,
) -> Result<BlendTrainOutcome, EnsembleError> {
    if k < 2 {
        return Err(EnsembleError::TooFewFolds(k));
    }
    let first = records.first().ok_or(EnsembleError::EmptyPredictions)?;
    let base_order = base_names(first);
    for record in records {
        if base_names(record) != base_order {
            return Err(EnsembleError::BaseOrderMismatch {
                expected: base_order.clone(),
                got: base_names(record),
            });
        }
        if record.gold.len() != record.tokens.len() {
            return Err(EnsembleError::BadRecord {
                id: record.id.clone(),
                reason: format!(
                    "{} tokens but {} gold tags",
                    record.tokens.len(),
                    record.gold.len()
                ),
            });
        }
    }

    let sequences: Vec<TrainingSequence> = records
        .iter()
        .map(|r| {
            Ok(TrainingSequence {
                features: record_features(r, options.include_word_features)?,
                labels: r.gold.iter().map(|t| t.to_string()).collect(),
            })
        })
        .collect::<Result<_, EnsembleError>>()?;

    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let assignment = split_folds(&ids, k, None, config.seed)?;

    let mut meta_models = Vec::with_capacity(k);
    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        let mut train_set = Vec::new();
        let mut eval_set = Vec::new();
        for (seq, id) in sequences.iter().zip(&ids) {
            if assignment.fold_of(id) == Some(fold) {
                eval_set.push(seq.clone());
            } else {
                train_set.push(seq.clone());
            }
        }
        let model = crf::train(&train_set, config, Some(&eval_set))?;

        let gold: Vec<Vec<Tag>> = eval_set
            .iter()
            .map(|s| s.labels.iter().map(|l| l.parse().unwrap()).collect())
            .collect();
        let pred: Vec<Vec<Tag>> = eval_set
            .iter()
            .map(|s| {
                crf::viterbi_decode(&model, &s.features)
                    .map(|tags| tags.iter().map(|t| t.parse().unwrap()).collect())
            })
            .collect::<Result<_, _>>()?;
        let metrics = crate::eval::evaluate_ai_tags(&gold, &pred)
            .expect("decode output is aligned with gold");
        folds.push(BlendFoldReport {
            fold,
            train_size: train_set.len(),
            eval_size: eval_set.len(),
            heldout_macro_f1: metrics.macro_f1,
        });
        meta_models.push(model);
    }

    Ok(BlendTrainOutcome {
        model: BlendModel {
            base_order,
            include_word_features: options.include_word_features,
            meta_models,
        },
        folds,
    })
}

/// Decodes a sentence with every meta model and hard-votes the results.
/// Vote ties break toward the earliest fold.
pub fn blend_predict(
    model: &BlendModel,
    tokens: &[String],
    pos: Option<&[PosTag]>,
    base_predictions: &[(String, Vec<Tag>)],
) -> Result<Vec<Tag>, EnsembleError> {
    let mut got: Vec<String> = base_predictions.iter().map(|(n, _)| n.clone()).collect();
    got.sort();
    let mut expected = model.base_order.clone();
    expected.sort();
    if got != expected {
        return Err(EnsembleError::BaseOrderMismatch {
            expected: model.base_order.clone(),
            got: base_predictions.iter().map(|(n, _)| n.clone()).collect(),
        });
    }
    // Reorder to the trained base order; features are name-keyed, so this
    // only normalizes validation, not semantics.
    let ordered: Vec<(String, Vec<Tag>)> = model
        .base_order
        .iter()
        .map(|name| {
            let (_, seq) = base_predictions.iter().find(|(n, _)| n == name).unwrap();
            (name.clone(), seq.clone())
        })
        .collect();

    let record = BlendRecord {
        id: String::new(),
        tokens: tokens.to_vec(),
        pos: pos.map(|p| p.to_vec()),
        base_predictions: ordered,
        gold: Vec::new(),
    };
    if model.include_word_features && tokens.is_empty() {
        return Err(EnsembleError::MissingWordFeatures);
    }
    let features = record_features(&record, model.include_word_features)?;

    let mut votes: Vec<(String, Vec<Tag>)> = Vec::with_capacity(model.meta_models.len());
    for (i, meta) in model.meta_models.iter().enumerate() {
        let decoded = crf::viterbi_decode(meta, &features)?;
        let tags: Vec<Tag> = decoded
            .iter()
            .map(|l| {
                l.parse().map_err(|_| EnsembleError::BadRecord {
                    id: String::new(),
                    reason: format!("meta model emitted non-tag label `{l}`"),
                })
            })
            .collect::<Result<_, _>>()?;
        votes.push((format!("fold{i}"), tags));
    }
    let priority: Vec<String> = votes.iter().map(|(n, _)| n.clone()).collect();
    hard_vote(&votes, &priority)
}

const BLEND_FORMAT: &str = "blend-model";
const BLEND_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct BlendModelDto {
    format: String,
    version: u32,
    base_order: Vec<String>,
    include_word_features: bool,
    meta_models: Vec<crate::crf::CrfModelDto>,
}

/// Writes a blend model as a single version-stamped JSON file.
pub fn save_blend_model(path: &Path, model: &BlendModel) -> Result<(), EnsembleError> {
    let dto = BlendModelDto {
        format: BLEND_FORMAT.to_string(),
        version: BLEND_VERSION,
        base_order: model.base_order.clone(),
        include_word_features: model.include_word_features,
        meta_models: model
            .meta_models
            .iter()
            .map(|m| crate::crf::CrfModelDto::from_model(m, None))
            .collect(),
    };
    let json = serde_json::to_string(&dto).map_err(|source| EnsembleError::Serde {
        path: path.to_path_buf(),
        source,
    })?;
    std::fs::write(path, json).map_err(|source| EnsembleError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a blend model file.
pub fn load_blend_model(path: &Path) -> Result<BlendModel, EnsembleError> {
    let text = std::fs::read_to_string(path).map_err(|source| EnsembleError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let dto: BlendModelDto = serde_json::from_str(&text).map_err(|source| EnsembleError::Serde {
        path: path.to_path_buf(),
        source,
    })?;
    if dto.format != BLEND_FORMAT {
        return Err(EnsembleError::BadFormat {
            path: path.to_path_buf(),
            expected: BLEND_FORMAT.to_string(),
            found: dto.format,
        });
    }
    let meta_models = dto
        .meta_models
        .into_iter()
        .map(|m| m.into_model(path).map(|(model, _)| model))
        .collect::<Result<_, _>>()?;
    Ok(BlendModel {
        base_order: dto.base_order,
        include_word_features: dto.include_word_features,
        meta_models,
    })
}
