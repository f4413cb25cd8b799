//! Span-level macro P/R/F1 for identification, per-expansion macro F1 for
//! disambiguation, and a cross-validation driver.

use crate::corpus::{split_folds, CorpusError};
use crate::tagscheme::{extract_mentions, MentionClass, Tag, TaggedSentence};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold has {gold} sentences but predictions have {pred}")]
    CountMismatch { gold: usize, pred: usize },
    #[error("sentence {index}: gold id `{gold}` but predicted id `{pred}`")]
    IdMismatch {
        index: usize,
        gold: String,
        pred: String,
    },
    #[error("sentence {index}: gold has {gold} tags but prediction has {pred}")]
    LengthMismatch {
        index: usize,
        gold: usize,
        pred: usize,
    },
    #[error("no prediction for id `{0}`")]
    MissingPrediction(String),
    #[error(transparent)]
    Fold(#[from] CorpusError),
    #[error("fold {fold} failed: {source}")]
    FoldRun {
        fold: usize,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

/// Precision/recall/F1 with the underlying counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct PrfCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrfCounts {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> PrfCounts {
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        PrfCounts {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

/// Identification metrics: per-class and macro-averaged over {short, long}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AiMetrics {
    pub short: PrfCounts,
    pub long: PrfCounts,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

/// Span-level evaluation over positionally aligned tag sequences.
///
/// A predicted mention is a true positive only when class, start, and end
/// all match a gold mention. Extraction is lenient, so imperfect prediction
/// files still evaluate.
pub fn evaluate_ai_tags(gold: &[Vec<Tag>], pred: &[Vec<Tag>]) -> Result<AiMetrics, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::CountMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let mut tp = [0usize; 2];
    let mut fp = [0usize; 2];
    let mut fn_ = [0usize; 2];
    for (index, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(EvalError::LengthMismatch {
                index,
                gold: g.len(),
                pred: p.len(),
            });
        }
        let gold_mentions: HashSet<_> = extract_mentions(g).mentions.into_iter().collect();
        let pred_mentions: HashSet<_> = extract_mentions(p).mentions.into_iter().collect();
        for m in &pred_mentions {
            let class = class_index(m.class);
            if gold_mentions.contains(m) {
                tp[class] += 1;
            } else {
                fp[class] += 1;
            }
        }
        for m in &gold_mentions {
            if !pred_mentions.contains(m) {
                fn_[class_index(m.class)] += 1;
            }
        }
    }
    let short = PrfCounts::from_counts(tp[0], fp[0], fn_[0]);
    let long = PrfCounts::from_counts(tp[1], fp[1], fn_[1]);
    Ok(AiMetrics {
        short,
        long,
        macro_precision: (short.precision + long.precision) / 2.0,
        macro_recall: (short.recall + long.recall) / 2.0,
        macro_f1: (short.f1 + long.f1) / 2.0,
    })
}

fn class_index(class: MentionClass) -> usize {
    match class {
        MentionClass::Short => 0,
        MentionClass::Long => 1,
    }
}

/// Id-checked wrapper over [`evaluate_ai_tags`]: every gold sentence must be
/// matched by a prediction with the same id, in the same order.
pub fn evaluate_ai(
    gold: &[TaggedSentence],
    pred: &[TaggedSentence],
) -> Result<AiMetrics, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::CountMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    for (index, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.id != p.id {
            return Err(EvalError::IdMismatch {
                index,
                gold: g.id.clone(),
                pred: p.id.clone(),
            });
        }
    }
    let gold_tags: Vec<Vec<Tag>> = gold.iter().map(|s| s.tags.clone()).collect();
    let pred_tags: Vec<Vec<Tag>> = pred.iter().map(|s| s.tags.clone()).collect();
    evaluate_ai_tags(&gold_tags, &pred_tags)
}

/// Disambiguation metrics: per-expansion P/R/F1 and their unweighted mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdMetrics {
    /// Sorted by expansion string.
    pub per_expansion: Vec<(String, PrfCounts)>,
    pub macro_f1: f64,
}

/// Macro F1 over the expansion labels present in gold or predictions.
/// Every gold id must be predicted; extra predictions are ignored.
pub fn evaluate_ad(
    gold: &BTreeMap<String, String>,
    pred: &BTreeMap<String, String>,
) -> Result<AdMetrics, EvalError> {
    let mut labels: BTreeSet<&str> = BTreeSet::new();
    let mut pairs = Vec::with_capacity(gold.len());
    for (id, gold_label) in gold {
        let pred_label = pred
            .get(id)
            .ok_or_else(|| EvalError::MissingPrediction(id.clone()))?;
        labels.insert(gold_label);
        labels.insert(pred_label);
        pairs.push((gold_label.as_str(), pred_label.as_str()));
    }
    let mut per_expansion = Vec::with_capacity(labels.len());
    let mut f1_sum = 0.0;
    for label in &labels {
        let tp = pairs.iter().filter(|(g, p)| g == label && p == label).count();
        let fp = pairs.iter().filter(|(g, p)| g != label && p == label).count();
        let fn_ = pairs.iter().filter(|(g, p)| g == label && p != label).count();
        let counts = PrfCounts::from_counts(tp, fp, fn_);
        f1_sum += counts.f1;
        per_expansion.push((label.to_string(), counts));
    }
    let macro_f1 = if per_expansion.is_empty() {
        0.0
    } else {
        f1_sum / per_expansion.len() as f64
    };
    Ok(AdMetrics {
        per_expansion,
        macro_f1,
    })
}

/// One fold's outcome in a cross-validation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FoldScore {
    pub fold: usize,
    pub train_size: usize,
    pub eval_size: usize,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub folds: Vec<FoldScore>,
    pub mean_macro_f1: f64,
}

/// K-fold cross-validation driver.
///
/// Folds come from [`split_folds`] (stratified when `strata` is given);
/// `run_fold` trains on the k-1 retained folds and returns macro F1 on the
/// held-out fold. Deterministic for a given seed.
pub fn cross_validate<T, F>(
    items: &[T],
    id_of: impl Fn(&T) -> &str,
    strata: Option<&BTreeMap<String, String>>,
    k: usize,
    seed: u64,
    mut run_fold: F,
) -> Result<CvReport, EvalError>
where
    F: FnMut(&[&T], &[&T]) -> Result<f64, Box<dyn std::error::Error + Send + Sync>>,
{
    let ids: Vec<String> = items.iter().map(|t| id_of(t).to_string()).collect();
    let assignment = split_folds(&ids, k, strata, seed)?;
    let mut folds = Vec::with_capacity(k);
    let mut sum = 0.0;
    for fold in 0..k {
        let mut train: Vec<&T> = Vec::new();
        let mut eval: Vec<&T> = Vec::new();
        for (item, id) in items.iter().zip(&ids) {
            if assignment.fold_of(id) == Some(fold) {
                eval.push(item);
            } else {
                train.push(item);
            }
        }
        let macro_f1 =
            run_fold(&train, &eval).map_err(|source| EvalError::FoldRun { fold, source })?;
        sum += macro_f1;
        folds.push(FoldScore {
            fold,
            train_size: train.len(),
            eval_size: eval.len(),
            macro_f1,
        });
    }
    Ok(CvReport {
        mean_macro_f1: sum / k as f64,
        folds,
    })
}
