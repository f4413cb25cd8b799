//! Scoring, partition function, Viterbi decoding, and the NLL gradient.

use super::model::{CrfGradient, CrfModel};
use super::CrfError;
use crate::features::FeatureSet;
use crate::tagscheme::Tag;

fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.collect();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn label_ids<S: AsRef<str>>(model: &CrfModel, labels: &[S]) -> Result<Vec<usize>, CrfError> {
    labels
        .iter()
        .map(|l| {
            model
                .label_id(l.as_ref())
                .ok_or_else(|| CrfError::UnknownLabel(l.as_ref().to_string()))
        })
        .collect()
}

/// Emission score matrix, `L x K` flattened.
fn emission_matrix(model: &CrfModel, active: &[Vec<usize>]) -> Vec<f64> {
    let k = model.num_labels();
    let mut em = vec![0.0; active.len() * k];
    for (t, feats) in active.iter().enumerate() {
        for l in 0..k {
            em[t * k + l] = model.emission_sum(feats, l);
        }
    }
    em
}

/// Sum of the potentials of one labelled path: per-position emission weights
/// of the active features, transitions between consecutive labels, and the
/// begin/end weights.
pub fn sequence_score<S: AsRef<str>>(
    model: &CrfModel,
    features: &[FeatureSet],
    labels: &[S],
) -> Result<f64, CrfError> {
    if features.len() != labels.len() {
        return Err(CrfError::SequenceLengthMismatch {
            features: features.len(),
            labels: labels.len(),
        });
    }
    if features.is_empty() {
        return Err(CrfError::EmptySequence);
    }
    let ids = label_ids(model, labels)?;
    let mut score = model.begin_weight(ids[0]) + model.end_weight(*ids.last().unwrap());
    for (t, feats) in features.iter().enumerate() {
        let active = model.active_ids(feats);
        score += model.emission_sum(&active, ids[t]);
        if t > 0 {
            score += model.transition_weight(ids[t - 1], ids[t]);
        }
    }
    Ok(score)
}

/// Log of the summed exponentiated scores over all label sequences, by the
/// forward algorithm in log space.
pub fn log_partition(model: &CrfModel, features: &[FeatureSet]) -> Result<f64, CrfError> {
    if features.is_empty() {
        return Err(CrfError::EmptySequence);
    }
    let active: Vec<Vec<usize>> = features.iter().map(|f| model.active_ids(f)).collect();
    let em = emission_matrix(model, &active);
    let (_, log_z) = forward(model, &em, features.len());
    Ok(log_z)
}

/// Forward pass; returns the full `L x K` log-alpha table and `log Z`.
fn forward(model: &CrfModel, em: &[f64], len: usize) -> (Vec<f64>, f64) {
    let k = model.num_labels();
    let mut alpha = vec![f64::NEG_INFINITY; len * k];
    for l in 0..k {
        alpha[l] = model.begin_weight(l) + em[l];
    }
    for t in 1..len {
        for l in 0..k {
            alpha[t * k + l] = em[t * k + l]
                + log_sum_exp(
                    (0..k).map(|p| alpha[(t - 1) * k + p] + model.transition_weight(p, l)),
                );
        }
    }
    let log_z = log_sum_exp((0..k).map(|l| alpha[(len - 1) * k + l] + model.end_weight(l)));
    (alpha, log_z)
}

/// Backward pass; `L x K` log-beta table.
fn backward(model: &CrfModel, em: &[f64], len: usize) -> Vec<f64> {
    let k = model.num_labels();
    let mut beta = vec![f64::NEG_INFINITY; len * k];
    for l in 0..k {
        beta[(len - 1) * k + l] = model.end_weight(l);
    }
    for t in (0..len - 1).rev() {
        for l in 0..k {
            beta[t * k + l] = log_sum_exp((0..k).map(|n| {
                model.transition_weight(l, n) + em[(t + 1) * k + n] + beta[(t + 1) * k + n]
            }));
        }
    }
    beta
}

/// Transition restrictions applied during decoding.
///
/// Disallowed moves score negative infinity; since `O` is always reachable
/// the lattice never becomes empty.
#[derive(Debug, Clone)]
pub struct DecodeMask {
    allow_begin: Vec<bool>,
    allow_transition: Vec<bool>,
}

impl DecodeMask {
    /// BIO validity mask: `I-x` may only start after `B-x` or `I-x`, and
    /// never begins a sequence. Fails when a model label is not a tag.
    pub fn bio(labels: &[String]) -> Result<DecodeMask, CrfError> {
        let tags: Vec<Tag> = labels
            .iter()
            .map(|l| l.parse().map_err(|_| CrfError::NotBioLabels(l.clone())))
            .collect::<Result<_, _>>()?;
        let k = tags.len();
        let allow_begin = tags.iter().map(|t| !t.is_inside()).collect();
        let mut allow_transition = vec![true; k * k];
        for (from, ft) in tags.iter().enumerate() {
            for (to, tt) in tags.iter().enumerate() {
                if tt.is_inside() && ft.class() != tt.class() {
                    allow_transition[from * k + to] = false;
                }
            }
        }
        Ok(DecodeMask {
            allow_begin,
            allow_transition,
        })
    }

    fn begin_ok(&self, label: usize) -> bool {
        self.allow_begin[label]
    }

    fn transition_ok(&self, from: usize, to: usize, k: usize) -> bool {
        self.allow_transition[from * k + to]
    }
}

/// A label sequence maximizing [`sequence_score`]. Ties break toward the
/// earlier label in model order, applied left to right.
pub fn viterbi_decode(model: &CrfModel, features: &[FeatureSet]) -> Result<Vec<String>, CrfError> {
    viterbi_impl(model, features, None)
}

/// Viterbi decoding under a transition mask.
pub fn viterbi_decode_masked(
    model: &CrfModel,
    features: &[FeatureSet],
    mask: &DecodeMask,
) -> Result<Vec<String>, CrfError> {
    viterbi_impl(model, features, Some(mask))
}

fn viterbi_impl(
    model: &CrfModel,
    features: &[FeatureSet],
    mask: Option<&DecodeMask>,
) -> Result<Vec<String>, CrfError> {
    if features.is_empty() {
        return Err(CrfError::EmptySequence);
    }
    let len = features.len();
    let k = model.num_labels();
    let active: Vec<Vec<usize>> = features.iter().map(|f| model.active_ids(f)).collect();
    let em = emission_matrix(model, &active);

    // `best[t][l]`: the best score of any suffix starting at position t with
    // label l. Computing suffix scores lets the path be chosen greedily left
    // to right, which makes the earliest-label tie-break apply in sequence
    // order rather than at the final position.
    let mut best = vec![f64::NEG_INFINITY; len * k];
    for l in 0..k {
        best[(len - 1) * k + l] = em[(len - 1) * k + l] + model.end_weight(l);
    }
    for t in (0..len - 1).rev() {
        for l in 0..k {
            let mut max = f64::NEG_INFINITY;
            for n in 0..k {
                if let Some(m) = mask {
                    if !m.transition_ok(l, n, k) {
                        continue;
                    }
                }
                let cand = model.transition_weight(l, n) + best[(t + 1) * k + n];
                if cand > max {
                    max = cand;
                }
            }
            best[t * k + l] = em[t * k + l] + max;
        }
    }

    let mut path = Vec::with_capacity(len);
    let mut current = 0;
    let mut max = f64::NEG_INFINITY;
    for l in 0..k {
        if let Some(m) = mask {
            if !m.begin_ok(l) {
                continue;
            }
        }
        let cand = model.begin_weight(l) + best[l];
        if cand > max {
            max = cand;
            current = l;
        }
    }
    path.push(current);
    for t in 1..len {
        let mut next = 0;
        let mut max = f64::NEG_INFINITY;
        for n in 0..k {
            if let Some(m) = mask {
                if !m.transition_ok(current, n, k) {
                    continue;
                }
            }
            let cand = model.transition_weight(current, n) + best[t * k + n];
            if cand > max {
                max = cand;
                next = n;
            }
        }
        path.push(next);
        current = next;
    }
    Ok(path
        .into_iter()
        .map(|l| model.labels()[l].clone())
        .collect())
}

/// Gradient of `sum(log_partition - sequence_score) + l2 * weights` over a
/// batch: expected minus empirical feature counts via forward-backward, plus
/// the regularization term once per call.
pub fn nll_gradient<S: AsRef<str>>(
    model: &CrfModel,
    batch: &[(&[FeatureSet], &[S])],
    l2: f64,
) -> Result<CrfGradient, CrfError> {
    let mut grad = CrfGradient::zeros(model);
    for (features, labels) in batch {
        let active: Vec<Vec<usize>> = features.iter().map(|f| model.active_ids(f)).collect();
        let gold = label_ids(model, labels)?;
        accumulate_sequence_gradient(model, &active, &gold, &mut grad)?;
    }
    grad.add_l2(model, l2);
    Ok(grad)
}

/// The regularized batch objective that [`nll_gradient`] differentiates.
pub fn nll_objective<S: AsRef<str>>(
    model: &CrfModel,
    batch: &[(&[FeatureSet], &[S])],
    l2: f64,
) -> Result<f64, CrfError> {
    let mut total = 0.0;
    for (features, labels) in batch {
        total += log_partition(model, features)? - sequence_score(model, features, labels)?;
    }
    Ok(total + 0.5 * l2 * model.squared_norm())
}

pub(crate) fn accumulate_sequence_gradient(
    model: &CrfModel,
    active: &[Vec<usize>],
    gold: &[usize],
    grad: &mut CrfGradient,
) -> Result<(), CrfError> {
    if active.is_empty() {
        return Err(CrfError::EmptySequence);
    }
    if active.len() != gold.len() {
        return Err(CrfError::SequenceLengthMismatch {
            features: active.len(),
            labels: gold.len(),
        });
    }
    let len = active.len();
    let k = model.num_labels();
    let em = emission_matrix(model, active);
    let (alpha, log_z) = forward(model, &em, len);
    let beta = backward(model, &em, len);

    for t in 0..len {
        for l in 0..k {
            let posterior = (alpha[t * k + l] + beta[t * k + l] - log_z).exp();
            if posterior != 0.0 {
                for f in &active[t] {
                    grad.emission[f * k + l] += posterior;
                }
            }
            if t == 0 {
                grad.begin[l] += posterior;
            }
            if t == len - 1 {
                grad.end[l] += posterior;
            }
        }
        for f in &active[t] {
            grad.emission[f * k + gold[t]] -= 1.0;
        }
    }
    for t in 0..len - 1 {
        for a in 0..k {
            for b in 0..k {
                let posterior = (alpha[t * k + a]
                    + model.transition_weight(a, b)
                    + em[(t + 1) * k + b]
                    + beta[(t + 1) * k + b]
                    - log_z)
                    .exp();
                grad.transition[a * k + b] += posterior;
            }
        }
        grad.transition[gold[t] * k + gold[t + 1]] -= 1.0;
    }
    grad.begin[gold[0]] -= 1.0;
    grad.end[gold[len - 1]] -= 1.0;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fs(keys: &[&str]) -> FeatureSet {
        keys.iter().map(|k| k.to_string()).collect()
    }

    fn zero_model(k: usize, features: &[&str]) -> CrfModel {
        CrfModel::zeros(
            (0..k).map(|i| format!("L{i}")).collect(),
            features.iter().map(|f| f.to_string()).collect(),
        )
        .unwrap()
    }

    /// Random model plus a random sentence of active feature sets.
    fn random_case(
        rng: &mut ChaCha8Rng,
        max_len: usize,
        max_k: usize,
    ) -> (CrfModel, Vec<FeatureSet>) {
        let k = rng.gen_range(1..=max_k);
        let f = rng.gen_range(1..=5);
        let len = rng.gen_range(1..=max_len);
        let labels = (0..k).map(|i| format!("L{i}")).collect();
        let features: Vec<String> = (0..f).map(|i| format!("f{i}")).collect();
        let rand_vec = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
        };
        let model = CrfModel::from_parts(
            labels,
            features.clone(),
            rand_vec(rng, f * k),
            rand_vec(rng, k * k),
            rand_vec(rng, k),
            rand_vec(rng, k),
        )
        .unwrap();
        let sentence = (0..len)
            .map(|_| {
                features
                    .iter()
                    .filter(|_| rng.gen_bool(0.6))
                    .cloned()
                    .collect()
            })
            .collect();
        (model, sentence)
    }

    /// Independent score: re-sums potentials straight off the weight tables.
    fn oracle_score(model: &CrfModel, sentence: &[FeatureSet], path: &[usize]) -> f64 {
        let k = model.num_labels();
        let mut score = model.begin_weight(path[0]) + model.end_weight(*path.last().unwrap());
        for (t, feats) in sentence.iter().enumerate() {
            for key in feats.iter() {
                if let Some(f) = model.feature_id(key) {
                    score += model.emission[f * k + path[t]];
                }
            }
            if t > 0 {
                score += model.transition[path[t - 1] * k + path[t]];
            }
        }
        score
    }

    fn all_paths(k: usize, len: usize) -> Vec<Vec<usize>> {
        let mut paths = vec![vec![]];
        for _ in 0..len {
            paths = paths
                .into_iter()
                .flat_map(|p| {
                    (0..k).map(move |l| {
                        let mut q = p.clone();
                        q.push(l);
                        q
                    })
                })
                .collect();
        }
        paths
    }

    #[test]
    fn zero_model_scores_zero() {
        let model = zero_model(3, &["f0"]);
        let sentence = vec![fs(&["f0"]), fs(&["f0"])];
        let score = sequence_score(&model, &sentence, &["L0", "L2"]).unwrap();
        assert_eq!(score, 0.0);
    }

    #[test]
    fn single_active_feature_definitional_sum() {
        let mut model = zero_model(2, &["f0"]);
        model.emission[0 * 2 + 1] = 1.3;
        let score = sequence_score(&model, &[fs(&["f0"])], &["L1"]).unwrap();
        assert!((score - 1.3).abs() < 1e-15);
    }

    #[test]
    fn score_matches_resummation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let (model, sentence) = random_case(&mut rng, 5, 4);
            let k = model.num_labels();
            let path: Vec<usize> = (0..sentence.len()).map(|_| rng.gen_range(0..k)).collect();
            let labels: Vec<&str> = path.iter().map(|l| model.labels()[*l].as_str()).collect();
            let got = sequence_score(&model, &sentence, &labels).unwrap();
            let want = oracle_score(&model, &sentence, &path);
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn unknown_label_rejected() {
        let model = zero_model(2, &["f0"]);
        let err = sequence_score(&model, &[fs(&["f0"])], &["nope"]).unwrap_err();
        assert!(matches!(err, CrfError::UnknownLabel(l) if l == "nope"));
    }

    #[test]
    fn zero_model_partition_is_l_log_k() {
        let model = zero_model(4, &["f0"]);
        let sentence = vec![fs(&["f0"]); 3];
        let got = log_partition(&model, &sentence).unwrap();
        assert!((got - 3.0 * 4.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_token_partition_is_logsumexp() {
        let mut model = zero_model(3, &["f0"]);
        model.emission.copy_from_slice(&[0.5, -1.0, 2.0]);
        let got = log_partition(&model, &[fs(&["f0"])]).unwrap();
        let want = (0.5_f64.exp() + (-1.0_f64).exp() + 2.0_f64.exp()).ln();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn partition_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let (model, sentence) = random_case(&mut rng, 5, 4);
            let k = model.num_labels();
            let want = log_sum_exp(
                all_paths(k, sentence.len())
                    .iter()
                    .map(|p| oracle_score(&model, &sentence, p)),
            );
            let got = log_partition(&model, &sentence).unwrap();
            assert!((got - want).abs() < 1e-8, "got {got}, want {want}");
        }
    }

    #[test]
    fn path_probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let (model, sentence) = random_case(&mut rng, 6, 4);
            let log_z = log_partition(&model, &sentence).unwrap();
            let total: f64 = all_paths(model.num_labels(), sentence.len())
                .iter()
                .map(|p| (oracle_score(&model, &sentence, p) - log_z).exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_model_decodes_first_label_everywhere() {
        let model = zero_model(4, &["f0"]);
        let got = viterbi_decode(&model, &vec![fs(&["f0"]); 5]).unwrap();
        assert_eq!(got, vec!["L0"; 5]);
    }

    #[test]
    fn dominant_label_wins_everywhere() {
        let mut model = zero_model(3, &["f0"]);
        // Big weight for L2 whenever f0 is active.
        model.emission[0 * 3 + 2] = 10.0;
        let got = viterbi_decode(&model, &vec![fs(&["f0"]); 4]).unwrap();
        assert_eq!(got, vec!["L2"; 4]);
    }

    #[test]
    fn viterbi_matches_enumeration_with_tie_break() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..30 {
            let (model, sentence) = random_case(&mut rng, 5, 4);
            let k = model.num_labels();
            // Enumerate in lexicographic order, keep the first strict max:
            // that is exactly the earliest-label, left-to-right tie-break.
            let mut best_path = None;
            let mut best = f64::NEG_INFINITY;
            for p in all_paths(k, sentence.len()) {
                let s = oracle_score(&model, &sentence, &p);
                if s > best {
                    best = s;
                    best_path = Some(p);
                }
            }
            let want: Vec<String> = best_path
                .unwrap()
                .into_iter()
                .map(|l| model.labels()[l].clone())
                .collect();
            assert_eq!(viterbi_decode(&model, &sentence).unwrap(), want);
        }
    }

    #[test]
    fn viterbi_beats_random_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (model, sentence) = random_case(&mut rng, 6, 4);
        let decoded = viterbi_decode(&model, &sentence).unwrap();
        let decoded_score = sequence_score(&model, &sentence, &decoded).unwrap();
        let k = model.num_labels();
        for _ in 0..1000 {
            let path: Vec<usize> = (0..sentence.len()).map(|_| rng.gen_range(0..k)).collect();
            assert!(decoded_score >= oracle_score(&model, &sentence, &path) - 1e-12);
        }
    }

    #[test]
    fn empty_sequence_rejected() {
        let model = zero_model(2, &["f0"]);
        assert!(matches!(
            log_partition(&model, &[]),
            Err(CrfError::EmptySequence)
        ));
        assert!(matches!(
            viterbi_decode(&model, &[]),
            Err(CrfError::EmptySequence)
        ));
    }

    #[test]
    fn bio_mask_blocks_invalid_transitions() {
        let labels: Vec<String> = ["O", "B-short", "I-short", "B-long", "I-long"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut model = CrfModel::zeros(labels.clone(), vec!["f0".into()]).unwrap();
        // Push hard toward I-short everywhere; the mask must still forbid
        // starting with it or entering it from O.
        let i_short = 2;
        for f in 0..1 {
            model.emission[f * 5 + i_short] = 50.0;
        }
        let mask = DecodeMask::bio(&labels).unwrap();
        let got = viterbi_decode_masked(&model, &vec![fs(&["f0"]); 3], &mask).unwrap();
        let tags: Vec<Tag> = got.iter().map(|t| t.parse().unwrap()).collect();
        assert!(crate::tagscheme::validate_bio(&tags).is_empty(), "{got:?}");
        // Unmasked decoding happily produces the invalid sequence.
        let raw = viterbi_decode(&model, &vec![fs(&["f0"]); 3]).unwrap();
        assert_eq!(raw, vec!["I-short"; 3]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let (model, sentence) = random_case(&mut rng, 5, 3);
        let k = model.num_labels();
        let gold: Vec<String> = (0..sentence.len())
            .map(|_| model.labels()[rng.gen_range(0..k)].clone())
            .collect();
        let batch = [(sentence.as_slice(), gold.as_slice())];
        let l2 = 0.1;
        let grad = nll_gradient(&model, &batch, l2).unwrap();

        let h = 1e-5;
        for _ in 0..10 {
            let coord = rng.gen_range(0..model.emission.len());
            let mut plus = model.clone();
            plus.emission[coord] += h;
            let mut minus = model.clone();
            minus.emission[coord] -= h;
            let fd = (nll_objective(&plus, &batch, l2).unwrap()
                - nll_objective(&minus, &batch, l2).unwrap())
                / (2.0 * h);
            let g = grad.emission[coord];
            let rel = (fd - g).abs() / f64::max(1e-8, f64::max(fd.abs(), g.abs()));
            assert!(rel <= 1e-4, "coord {coord}: fd {fd} vs grad {g}");
        }
    }

    #[test]
    fn zero_model_transition_gradient_is_uniform_minus_empirical() {
        let k = 3;
        let model = zero_model(k, &["f0"]);
        let sentence = vec![fs(&["f0"]), fs(&["f0"])];
        let gold = ["L1", "L2"];
        let batch = [(sentence.as_slice(), gold.as_slice())];
        let grad = nll_gradient(&model, &batch, 0.0).unwrap();
        // All K^2 paths are equally likely, so each expected transition
        // count is 1/K^2; the gold bigram subtracts 1.
        let uniform = 1.0 / (k * k) as f64;
        for a in 0..k {
            for b in 0..k {
                let want = if (a, b) == (1, 2) {
                    uniform - 1.0
                } else {
                    uniform
                };
                assert!((grad.transition[a * k + b] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn duplicated_batch_doubles_data_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (model, sentence) = random_case(&mut rng, 4, 3);
        let gold: Vec<String> = (0..sentence.len())
            .map(|_| model.labels()[rng.gen_range(0..model.num_labels())].clone())
            .collect();
        let single = [(sentence.as_slice(), gold.as_slice())];
        let double = [
            (sentence.as_slice(), gold.as_slice()),
            (sentence.as_slice(), gold.as_slice()),
        ];
        let g1 = nll_gradient(&model, &single, 0.0).unwrap();
        let g2 = nll_gradient(&model, &double, 0.0).unwrap();
        for (a, b) in g1.emission.iter().zip(&g2.emission) {
            assert!((2.0 * a - b).abs() < 1e-10);
        }
        for (a, b) in g1.transition.iter().zip(&g2.transition) {
            assert!((2.0 * a - b).abs() < 1e-10);
        }
    }
}
