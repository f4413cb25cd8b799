//! Model parameters and their gradient.

use super::CrfError;
use crate::features::FeatureSet;
use std::collections::HashMap;

/// Parameters of a linear-chain CRF over string labels and string-keyed
/// features.
///
/// Layout: `emission[f * K + l]` is the weight of feature `f` for label `l`;
/// `transition[a * K + b]` the weight of the label bigram `a -> b`; `begin`
/// and `end` hold per-label boundary weights. Features unknown to the model
/// are ignored at inference time.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    labels: Vec<String>,
    features: Vec<String>,
    label_ids: HashMap<String, usize>,
    feature_ids: HashMap<String, usize>,
    pub(crate) emission: Vec<f64>,
    pub(crate) transition: Vec<f64>,
    pub(crate) begin: Vec<f64>,
    pub(crate) end: Vec<f64>,
}

impl CrfModel {
    /// Builds a model from explicit parts, validating dimensions and
    /// finiteness.
    pub fn from_parts(
        labels: Vec<String>,
        features: Vec<String>,
        emission: Vec<f64>,
        transition: Vec<f64>,
        begin: Vec<f64>,
        end: Vec<f64>,
    ) -> Result<CrfModel, CrfError> {
        let k = labels.len();
        let f = features.len();
        if k == 0 {
            return Err(CrfError::DimensionMismatch("no labels".into()));
        }
        if emission.len() != f * k {
            return Err(CrfError::DimensionMismatch(format!(
                "emission has {} weights, expected {}x{}",
                emission.len(),
                f,
                k
            )));
        }
        if transition.len() != k * k {
            return Err(CrfError::DimensionMismatch(format!(
                "transition has {} weights, expected {}x{}",
                transition.len(),
                k,
                k
            )));
        }
        if begin.len() != k || end.len() != k {
            return Err(CrfError::DimensionMismatch(
                "begin/end vectors must have one weight per label".into(),
            ));
        }
        if emission
            .iter()
            .chain(&transition)
            .chain(&begin)
            .chain(&end)
            .any(|w| !w.is_finite())
        {
            return Err(CrfError::NonFiniteWeight);
        }
        let label_ids: HashMap<String, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        if label_ids.len() != k {
            return Err(CrfError::DimensionMismatch("duplicate label".into()));
        }
        let feature_ids: HashMap<String, usize> = features
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i))
            .collect();
        if feature_ids.len() != f {
            return Err(CrfError::DimensionMismatch("duplicate feature".into()));
        }
        Ok(CrfModel {
            labels,
            features,
            label_ids,
            feature_ids,
            emission,
            transition,
            begin,
            end,
        })
    }

    /// Zero-initialized model over the given label and feature vocabularies.
    pub fn zeros(labels: Vec<String>, features: Vec<String>) -> Result<CrfModel, CrfError> {
        let k = labels.len();
        let f = features.len();
        CrfModel::from_parts(
            labels,
            features,
            vec![0.0; f * k],
            vec![0.0; k * k],
            vec![0.0; k],
            vec![0.0; k],
        )
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.label_ids.get(label).copied()
    }

    pub fn feature_id(&self, feature: &str) -> Option<usize> {
        self.feature_ids.get(feature).copied()
    }

    pub fn emission_weight(&self, feature: usize, label: usize) -> f64 {
        self.emission[feature * self.num_labels() + label]
    }

    pub fn transition_weight(&self, from: usize, to: usize) -> f64 {
        self.transition[from * self.num_labels() + to]
    }

    pub fn begin_weight(&self, label: usize) -> f64 {
        self.begin[label]
    }

    pub fn end_weight(&self, label: usize) -> f64 {
        self.end[label]
    }

    /// Ids of the model-known features in a set, in key order.
    pub(crate) fn active_ids(&self, features: &FeatureSet) -> Vec<usize> {
        features
            .iter()
            .filter_map(|k| self.feature_id(k))
            .collect()
    }

    /// Sum of emission weights of the given active features for `label`.
    pub(crate) fn emission_sum(&self, active: &[usize], label: usize) -> f64 {
        let k = self.num_labels();
        active.iter().map(|f| self.emission[f * k + label]).sum()
    }

    pub(crate) fn apply_gradient(&mut self, gradient: &CrfGradient, learning_rate: f64) {
        for (w, g) in self.emission.iter_mut().zip(&gradient.emission) {
            *w -= learning_rate * g;
        }
        for (w, g) in self.transition.iter_mut().zip(&gradient.transition) {
            *w -= learning_rate * g;
        }
        for (w, g) in self.begin.iter_mut().zip(&gradient.begin) {
            *w -= learning_rate * g;
        }
        for (w, g) in self.end.iter_mut().zip(&gradient.end) {
            *w -= learning_rate * g;
        }
    }

    /// Squared L2 norm over all weights.
    pub(crate) fn squared_norm(&self) -> f64 {
        self.emission
            .iter()
            .chain(&self.transition)
            .chain(&self.begin)
            .chain(&self.end)
            .map(|w| w * w)
            .sum()
    }
}

/// Gradient with the same shape as the model weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfGradient {
    pub emission: Vec<f64>,
    pub transition: Vec<f64>,
    pub begin: Vec<f64>,
    pub end: Vec<f64>,
}

impl CrfGradient {
    pub(crate) fn zeros(model: &CrfModel) -> CrfGradient {
        CrfGradient {
            emission: vec![0.0; model.emission.len()],
            transition: vec![0.0; model.transition.len()],
            begin: vec![0.0; model.begin.len()],
            end: vec![0.0; model.end.len()],
        }
    }

    /// Adds `l2 * w` for every weight.
    pub(crate) fn add_l2(&mut self, model: &CrfModel, l2: f64) {
        if l2 == 0.0 {
            return;
        }
        for (g, w) in self.emission.iter_mut().zip(&model.emission) {
            *g += l2 * w;
        }
        for (g, w) in self.transition.iter_mut().zip(&model.transition) {
            *g += l2 * w;
        }
        for (g, w) in self.begin.iter_mut().zip(&model.begin) {
            *g += l2 * w;
        }
        for (g, w) in self.end.iter_mut().zip(&model.end) {
            *g += l2 * w;
        }
    }
}
