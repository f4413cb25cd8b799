//! Maximum-likelihood training with mini-batch gradient descent.

use super::inference::accumulate_sequence_gradient;
use super::model::{CrfGradient, CrfModel};
use super::CrfError;
use crate::features::FeatureSet;
use crate::tagscheme::Tag;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// Training hyperparameters. All randomness flows from `seed`; training with
/// identical data and config reproduces the exact same weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Consecutive epochs without a dev improvement tolerated before
    /// stopping. Only applies when a dev set is supplied.
    pub patience: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 20,
            patience: 10,
            learning_rate: 0.1,
            l2: 1e-4,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), CrfError> {
        if self.epochs < 1 {
            return Err(CrfError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(CrfError::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.l2 < 0.0 || !self.l2.is_finite() {
            return Err(CrfError::InvalidConfig("l2 must be >= 0".into()));
        }
        if self.batch_size < 1 {
            return Err(CrfError::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One training example: per-token feature sets with aligned gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSequence {
    pub features: Vec<FeatureSet>,
    pub labels: Vec<String>,
}

struct IndexedSequence {
    active: Vec<Vec<usize>>,
    gold: Vec<usize>,
}

/// Trains a CRF from zero-initialized weights.
///
/// Labels and features are indexed in first-seen order over `data`. When a
/// dev set is given, the dev metric is evaluated after every epoch and the
/// best-scoring weights are returned; training stops once `patience`
/// consecutive epochs fail to improve. The dev metric is span-level macro F1
/// when every label parses as a tag, and token accuracy otherwise.
pub fn train(
    data: &[TrainingSequence],
    config: &TrainConfig,
    dev: Option<&[TrainingSequence]>,
) -> Result<CrfModel, CrfError> {
    config.validate()?;
    if data.is_empty() {
        return Err(CrfError::EmptyData);
    }

    let mut labels: Vec<String> = Vec::new();
    let mut label_ids: HashMap<&str, usize> = HashMap::new();
    let mut features: Vec<String> = Vec::new();
    let mut feature_ids: HashMap<&str, usize> = HashMap::new();
    for seq in data {
        if seq.features.len() != seq.labels.len() {
            return Err(CrfError::SequenceLengthMismatch {
                features: seq.features.len(),
                labels: seq.labels.len(),
            });
        }
        if seq.features.is_empty() {
            return Err(CrfError::EmptySequence);
        }
        for label in &seq.labels {
            if !label_ids.contains_key(label.as_str()) {
                label_ids.insert(label.as_str(), labels.len());
                labels.push(label.clone());
            }
        }
        for fs in &seq.features {
            for key in fs {
                if !feature_ids.contains_key(key.as_str()) {
                    feature_ids.insert(key.as_str(), features.len());
                    features.push(key.clone());
                }
            }
        }
    }

    let indexed: Vec<IndexedSequence> = data
        .iter()
        .map(|seq| IndexedSequence {
            active: seq
                .features
                .iter()
                .map(|fs| fs.iter().map(|k| feature_ids[k.as_str()]).collect())
                .collect(),
            gold: seq.labels.iter().map(|l| label_ids[l.as_str()]).collect(),
        })
        .collect();

    let mut model = CrfModel::zeros(labels, features)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..indexed.len()).collect();

    let mut best: Option<(f64, CrfModel)> = None;
    let mut stale_epochs = 0;

    for _epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let mut grad = CrfGradient::zeros(&model);
            for &i in chunk {
                accumulate_sequence_gradient(
                    &model,
                    &indexed[i].active,
                    &indexed[i].gold,
                    &mut grad,
                )?;
            }
            grad.add_l2(&model, config.l2);
            model.apply_gradient(&grad, config.learning_rate);
        }

        if let Some(dev) = dev {
            let score = dev_metric(&model, dev)?;
            let improved = best.as_ref().map_or(true, |(b, _)| score > *b);
            if improved {
                best = Some((score, model.clone()));
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
                if stale_epochs > config.patience {
                    break;
                }
            }
        }
    }

    Ok(match best {
        Some((_, model)) => model,
        None => model,
    })
}

fn dev_metric(model: &CrfModel, dev: &[TrainingSequence]) -> Result<f64, CrfError> {
    let mut gold_tags: Vec<Vec<Tag>> = Vec::with_capacity(dev.len());
    let mut pred_tags: Vec<Vec<Tag>> = Vec::with_capacity(dev.len());
    let mut all_tags = true;
    let mut correct = 0usize;
    let mut total = 0usize;
    for seq in dev {
        let decoded = super::inference::viterbi_decode(model, &seq.features)?;
        total += seq.labels.len();
        correct += decoded
            .iter()
            .zip(&seq.labels)
            .filter(|(a, b)| a == b)
            .count();
        if all_tags {
            let g: Result<Vec<Tag>, _> = seq.labels.iter().map(|l| l.parse()).collect();
            let p: Result<Vec<Tag>, _> = decoded.iter().map(|l| l.parse()).collect();
            match (g, p) {
                (Ok(g), Ok(p)) => {
                    gold_tags.push(g);
                    pred_tags.push(p);
                }
                _ => all_tags = false,
            }
        }
    }
    if all_tags && !gold_tags.is_empty() {
        let metrics = crate::eval::evaluate_ai_tags(&gold_tags, &pred_tags)
            .expect("aligned by construction");
        Ok(metrics.macro_f1)
    } else if total > 0 {
        Ok(correct as f64 / total as f64)
    } else {
        Ok(0.0)
    }
}
