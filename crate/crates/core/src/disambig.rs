//! Acronym disambiguation as span selection.
//!
//! For each instance the input is a pair of sequences: the first is the
//! acronym followed by every candidate expansion concatenated in dictionary
//! order (with the candidates' token ranges tracked structurally), the
//! second a context window of up to `n/2` tokens on each side of the
//! acronym. A scorer produces start/end probability vectors over the first
//! sequence; the best-scoring span inside the candidate region is matched
//! back to a dictionary candidate by Jaccard score over word sets.
//!
//! Scorers: a lexical-overlap baseline built in, and external score files
//! for models trained elsewhere. Multiple score files are combined by
//! probability averaging. A post-processing rule overrides the prediction
//! when the acronym is parenthesized and a candidate appears verbatim in the
//! sentence.

use crate::corpus::{AdInstance, ExpansionDictionary};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DisambigError {
    #[error("instance `{id}`: acronym `{acronym}` not in dictionary")]
    AcronymNotInDictionary { id: String, acronym: String },
    #[error("window size must be even and >= 2, got {0}")]
    BadWindow(usize),
    #[error("score vectors must be non-empty, equal-length and non-negative")]
    MalformedScores,
    #[error("score vector sums to {sum}, outside tolerance {tolerance} of 1")]
    NotNormalizable { sum: f64, tolerance: f64 },
    #[error("cannot average an empty score list")]
    EmptyAverage,
    #[error("score length {got} does not match {expected}")]
    ScoreLengthMismatch { expected: usize, got: usize },
    #[error("candidate region is empty")]
    EmptyCandidateRegion,
    #[error("no candidates to match")]
    NoCandidates,
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
    #[error("{path}: score file built for window {file_n}, inputs use {expected_n}")]
    WindowMismatch {
        path: std::path::PathBuf,
        file_n: usize,
        expected_n: usize,
    },
    #[error("{path}: record `{id}`: {reason}")]
    BadScoreRecord {
        path: std::path::PathBuf,
        id: String,
        reason: String,
    },
    #[error("{path}: no scores for instance `{id}`")]
    MissingScores {
        path: std::path::PathBuf,
        id: String,
    },
    #[error("no scores supplied for instance `{0}`")]
    NoScoresForInstance(String),
}

/// Token range of one candidate inside `sequence_a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandidateSpan {
    pub candidate: usize,
    pub start: usize,
    pub end: usize,
}

/// The constructed input for one disambiguation instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdInput {
    pub id: String,
    /// `[acronym]` then all candidate expansions' tokens, dictionary order.
    pub sequence_a: Vec<String>,
    /// Context window: up to `n/2` tokens each side plus the acronym.
    pub sequence_b: Vec<String>,
    /// The normalized candidates, dictionary order.
    pub candidates: Vec<String>,
    /// Candidate token ranges tiling `sequence_a[1..]`.
    pub candidate_spans: Vec<CandidateSpan>,
    /// Position of the acronym token inside `sequence_b`.
    pub acronym_pos_in_b: usize,
    pub window: usize,
}

/// Builds the two-sequence input for one instance.
///
/// The window clips at sentence boundaries without compensating on the
/// other side.
pub fn build_input(
    instance: &AdInstance,
    dict: &ExpansionDictionary,
    n: usize,
) -> Result<AdInput, DisambigError> {
    if n < 2 || n % 2 != 0 {
        return Err(DisambigError::BadWindow(n));
    }
    let acronym = instance.acronym();
    let candidates = dict.candidates(acronym).ok_or_else(|| {
        DisambigError::AcronymNotInDictionary {
            id: instance.id.clone(),
            acronym: acronym.to_string(),
        }
    })?;

    let mut sequence_a = vec![acronym.to_string()];
    let mut candidate_spans = Vec::with_capacity(candidates.len());
    for (i, candidate) in candidates.iter().enumerate() {
        let start = sequence_a.len();
        sequence_a.extend(candidate.split_whitespace().map(str::to_string));
        candidate_spans.push(CandidateSpan {
            candidate: i,
            start,
            end: sequence_a.len(),
        });
    }

    let half = n / 2;
    let left = instance.acronym_index.saturating_sub(half);
    let right = usize::min(instance.tokens.len(), instance.acronym_index + half + 1);
    let sequence_b = instance.tokens[left..right].to_vec();

    Ok(AdInput {
        id: instance.id.clone(),
        sequence_a,
        sequence_b,
        candidates: candidates.to_vec(),
        candidate_spans,
        acronym_pos_in_b: instance.acronym_index - left,
        window: n,
    })
}

/// Start/end probability vectors over `sequence_a` positions.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanScores {
    start: Vec<f64>,
    end: Vec<f64>,
}

impl SpanScores {
    /// Validates non-negativity, equal lengths, and unit sums (1e-6).
    pub fn new(start: Vec<f64>, end: Vec<f64>) -> Result<SpanScores, DisambigError> {
        SpanScores::normalized(start, end, 1e-6)
    }

    /// Like [`SpanScores::new`] but renormalizes sums within `tolerance`.
    pub fn normalized(
        mut start: Vec<f64>,
        mut end: Vec<f64>,
        tolerance: f64,
    ) -> Result<SpanScores, DisambigError> {
        if start.is_empty() || start.len() != end.len() {
            return Err(DisambigError::MalformedScores);
        }
        for v in [&mut start, &mut end] {
            if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(DisambigError::MalformedScores);
            }
            let sum: f64 = v.iter().sum();
            if (sum - 1.0).abs() > tolerance {
                return Err(DisambigError::NotNormalizable { sum, tolerance });
            }
            if sum != 1.0 {
                for x in v.iter_mut() {
                    *x /= sum;
                }
            }
        }
        Ok(SpanScores { start, end })
    }

    pub fn len(&self) -> usize {
        self.start.len()
    }

    pub fn is_empty(&self) -> bool {
        self.start.is_empty()
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn end(&self) -> &[f64] {
        &self.end
    }
}

/// Element-wise arithmetic mean of start vectors and of end vectors.
///
/// All inputs must come from the same input construction; vectors over
/// different tokenizations cannot be averaged.
pub fn average_scores(scores: &[SpanScores]) -> Result<SpanScores, DisambigError> {
    let first = scores.first().ok_or(DisambigError::EmptyAverage)?;
    let len = first.len();
    for s in scores {
        if s.len() != len {
            return Err(DisambigError::ScoreLengthMismatch {
                expected: len,
                got: s.len(),
            });
        }
    }
    let k = scores.len() as f64;
    let mut start = vec![0.0; len];
    let mut end = vec![0.0; len];
    for s in scores {
        for (acc, v) in start.iter_mut().zip(&s.start) {
            *acc += v / k;
        }
        for (acc, v) in end.iter_mut().zip(&s.end) {
            *acc += v / k;
        }
    }
    SpanScores::normalized(start, end, 1e-6)
}

/// Lexical-overlap baseline: per candidate, the fraction of its words that
/// appear in the context window (acronym token excluded).
pub fn lexical_score(input: &AdInput) -> Vec<f64> {
    let context: BTreeSet<String> = input
        .sequence_b
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != input.acronym_pos_in_b)
        .map(|(_, t)| t.to_lowercase())
        .collect();
    input
        .candidates
        .iter()
        .map(|candidate| {
            let words: BTreeSet<String> =
                candidate.split_whitespace().map(str::to_lowercase).collect();
            if words.is_empty() {
                return 0.0;
            }
            let hits = words.iter().filter(|w| context.contains(*w)).count();
            hits as f64 / words.len() as f64
        })
        .collect()
}

/// Argmax over span pairs `(s, e)` with `s <= e` inside the candidate region
/// of `sequence_a`, maximizing `start[s] * end[e]`. Ties break toward the
/// smaller `s`, then the smaller `e`. The returned range is inclusive.
pub fn extract_span(
    scores: &SpanScores,
    input: &AdInput,
) -> Result<(usize, usize), DisambigError> {
    if scores.len() != input.sequence_a.len() {
        return Err(DisambigError::ScoreLengthMismatch {
            expected: input.sequence_a.len(),
            got: scores.len(),
        });
    }
    let region_start = 1;
    let region_end = input.sequence_a.len(); // exclusive
    if region_start >= region_end {
        return Err(DisambigError::EmptyCandidateRegion);
    }
    let mut best = (region_start, region_start);
    let mut best_score = f64::NEG_INFINITY;
    for s in region_start..region_end {
        for e in s..region_end {
            let score = scores.start[s] * scores.end[e];
            if score > best_score {
                best_score = score;
                best = (s, e);
            }
        }
    }
    Ok(best)
}

/// Jaccard similarity of lowercase whitespace-token sets. Two empty sets
/// score 1.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let set_a: BTreeSet<String> = a.split_whitespace().map(str::to_lowercase).collect();
    let set_b: BTreeSet<String> = b.split_whitespace().map(str::to_lowercase).collect();
    if set_a.is_empty() && set_b.is_empty() {
        return 1.0;
    }
    let intersection = set_a.intersection(&set_b).count();
    let union = set_a.union(&set_b).count();
    intersection as f64 / union as f64
}

/// The candidate maximizing the Jaccard score against the span text.
/// Ties break toward the earliest candidate in dictionary order.
pub fn match_candidate<S: AsRef<str>>(
    span_text: &str,
    candidates: &[S],
) -> Result<(usize, f64), DisambigError> {
    if candidates.is_empty() {
        return Err(DisambigError::NoCandidates);
    }
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, candidate) in candidates.iter().enumerate() {
        let score = jaccard(span_text, candidate.as_ref());
        if score > best_score {
            best_score = score;
            best = i;
        }
    }
    Ok((best, best_score))
}

/// Where a prediction came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionSource {
    Lexical,
    External,
    Ensemble,
    Postprocess,
}

impl fmt::Display for PredictionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictionSource::Lexical => write!(f, "lexical"),
            PredictionSource::External => write!(f, "external"),
            PredictionSource::Ensemble => write!(f, "ensemble"),
            PredictionSource::Postprocess => write!(f, "postprocess"),
        }
    }
}

/// One disambiguation prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdPrediction {
    pub id: String,
    /// The chosen candidate, always a member of the dictionary entry.
    pub expansion: String,
    /// Raw text of the selected span.
    pub span: String,
    pub jaccard: f64,
    pub source: PredictionSource,
}

/// Parenthesis post-processing: when the acronym sits between `(` and `)`
/// and at least one candidate occurs as a contiguous token subsequence of
/// the lowercased sentence, the longest such candidate (ties toward
/// dictionary order) overrides the prediction.
pub fn postprocess(
    instance: &AdInstance,
    dict: &ExpansionDictionary,
    prediction: AdPrediction,
) -> AdPrediction {
    let i = instance.acronym_index;
    let parenthesized = i > 0
        && i + 1 < instance.tokens.len()
        && instance.tokens[i - 1] == "("
        && instance.tokens[i + 1] == ")";
    if !parenthesized {
        return prediction;
    }
    let Some(candidates) = dict.candidates(instance.acronym()) else {
        return prediction;
    };
    let sentence: Vec<String> = instance.tokens.iter().map(|t| t.to_lowercase()).collect();
    let mut best: Option<(usize, &String)> = None; // (token count, candidate)
    for candidate in candidates {
        let words: Vec<&str> = candidate.split_whitespace().collect();
        if words.is_empty() || !contains_subsequence(&sentence, &words) {
            continue;
        }
        // Strictly longer wins; dictionary order keeps the first on ties.
        if best.map_or(true, |(len, _)| words.len() > len) {
            best = Some((words.len(), candidate));
        }
    }
    match best {
        Some((_, candidate)) => AdPrediction {
            expansion: candidate.clone(),
            span: candidate.clone(),
            jaccard: 1.0,
            source: PredictionSource::Postprocess,
            ..prediction
        },
        None => prediction,
    }
}

fn contains_subsequence(haystack: &[String], needle: &[&str]) -> bool {
    if needle.len() > haystack.len() {
        return false;
    }
    haystack
        .windows(needle.len())
        .any(|w| w.iter().map(String::as_str).eq(needle.iter().copied()))
}

const SCORES_FORMAT: &str = "ad-scores";
const SCORES_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ScoreRecordDto {
    id: String,
    start: Vec<f64>,
    end: Vec<f64>,
}

/// External score file: header stamps the format version and the window
/// size of the input construction the vectors are aligned to.
#[derive(Serialize, Deserialize)]
struct ScoreFileDto {
    format: String,
    version: u32,
    n: usize,
    records: Vec<ScoreRecordDto>,
}

/// Serializes scores for the given inputs into the external file format.
pub fn write_external_scores(
    path: &Path,
    n: usize,
    records: &[(String, SpanScores)],
) -> Result<(), DisambigError> {
    let dto = ScoreFileDto {
        format: SCORES_FORMAT.to_string(),
        version: SCORES_VERSION,
        n,
        records: records
            .iter()
            .map(|(id, s)| ScoreRecordDto {
                id: id.clone(),
                start: s.start.clone(),
                end: s.end.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_string(&dto).map_err(|source| DisambigError::Serde {
        path: path.to_path_buf(),
        source,
    })?;
    std::fs::write(path, json).map_err(|source| DisambigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads an external score file and validates it against the constructed
/// inputs: every input id must be covered, vector lengths must equal the
/// input's `sequence_a` length, and each vector must sum to 1 within 1e-3
/// (renormalized exactly on load). Records for unknown ids are ignored.
pub fn load_external_scores(
    path: &Path,
    inputs: &[AdInput],
) -> Result<BTreeMap<String, SpanScores>, DisambigError> {
    let text = std::fs::read_to_string(path).map_err(|source| DisambigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let dto: ScoreFileDto = serde_json::from_str(&text).map_err(|source| DisambigError::Serde {
        path: path.to_path_buf(),
        source,
    })?;
    if dto.format != SCORES_FORMAT {
        return Err(DisambigError::BadFormat {
            path: path.to_path_buf(),
            expected: SCORES_FORMAT.to_string(),
            found: dto.format,
        });
    }
    let expected_n = match inputs.first() {
        Some(input) => input.window,
        None => dto.n,
    };
    if dto.n != expected_n {
        return Err(DisambigError::WindowMismatch {
            path: path.to_path_buf(),
            file_n: dto.n,
            expected_n,
        });
    }

    let mut by_id: BTreeMap<String, ScoreRecordDto> = BTreeMap::new();
    for record in dto.records {
        by_id.insert(record.id.clone(), record);
    }
    let mut out = BTreeMap::new();
    for input in inputs {
        let record = by_id
            .remove(&input.id)
            .ok_or_else(|| DisambigError::MissingScores {
                path: path.to_path_buf(),
                id: input.id.clone(),
            })?;
        if record.start.len() != input.sequence_a.len() {
            return Err(DisambigError::BadScoreRecord {
                path: path.to_path_buf(),
                id: input.id.clone(),
                reason: format!(
                    "vector length {} but sequence_a has {} tokens",
                    record.start.len(),
                    input.sequence_a.len()
                ),
            });
        }
        let scores = SpanScores::normalized(record.start, record.end, 1e-3).map_err(|e| {
            DisambigError::BadScoreRecord {
                path: path.to_path_buf(),
                id: input.id.clone(),
                reason: e.to_string(),
            }
        })?;
        out.insert(input.id.clone(), scores);
    }
    Ok(out)
}

/// Scorer selection for [`predict`].
pub enum ScorerConfig<'a> {
    /// Built-in lexical overlap baseline.
    Lexical,
    /// One or more external score maps; more than one is averaged.
    External(&'a [BTreeMap<String, SpanScores>]),
}

#[derive(Debug, Clone, Copy)]
pub struct PredictOptions {
    pub n: usize,
    pub postprocess: bool,
}

impl Default for PredictOptions {
    fn default() -> PredictOptions {
        PredictOptions {
            n: 120,
            postprocess: false,
        }
    }
}

/// A per-instance failure; the rest of the run continues.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InstanceFailure {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct PredictReport {
    pub predictions: Vec<AdPrediction>,
    pub failures: Vec<InstanceFailure>,
}

/// Runs the full disambiguation pipeline over a corpus.
///
/// Per instance: build the input, score it, select the span (span scorers)
/// or the argmax candidate (lexical), match back to the dictionary, and
/// optionally post-process. Instances that fail (for example, acronym
/// missing from the dictionary) are recorded and skipped.
pub fn predict(
    instances: &[AdInstance],
    dict: &ExpansionDictionary,
    scorer: ScorerConfig<'_>,
    options: PredictOptions,
) -> PredictReport {
    let mut report = PredictReport::default();
    for instance in instances {
        match predict_one(instance, dict, &scorer, options) {
            Ok(prediction) => report.predictions.push(prediction),
            Err(e) => report.failures.push(InstanceFailure {
                id: instance.id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    report
}

fn predict_one(
    instance: &AdInstance,
    dict: &ExpansionDictionary,
    scorer: &ScorerConfig<'_>,
    options: PredictOptions,
) -> Result<AdPrediction, DisambigError> {
    let input = build_input(instance, dict, options.n)?;
    let prediction = match scorer {
        ScorerConfig::Lexical => {
            let scores = lexical_score(&input);
            // Argmax candidate; ties toward dictionary order.
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for (i, s) in scores.iter().enumerate() {
                if *s > best_score {
                    best_score = *s;
                    best = i;
                }
            }
            let expansion = input.candidates[best].clone();
            AdPrediction {
                id: input.id.clone(),
                span: expansion.clone(),
                jaccard: 1.0,
                expansion,
                source: PredictionSource::Lexical,
            }
        }
        ScorerConfig::External(score_sets) => {
            let mut collected = Vec::with_capacity(score_sets.len());
            for set in score_sets.iter() {
                let scores = set
                    .get(&input.id)
                    .ok_or_else(|| DisambigError::NoScoresForInstance(input.id.clone()))?;
                collected.push(scores.clone());
            }
            let combined = average_scores(&collected)?;
            let (s, e) = extract_span(&combined, &input)?;
            let span = input.sequence_a[s..=e].join(" ");
            let (candidate, score) = match_candidate(&span, &input.candidates)?;
            AdPrediction {
                id: input.id.clone(),
                expansion: input.candidates[candidate].clone(),
                span,
                jaccard: score,
                source: if collected.len() > 1 {
                    PredictionSource::Ensemble
                } else {
                    PredictionSource::External
                },
            }
        }
    };
    Ok(if options.postprocess {
        postprocess(instance, dict, prediction)
    } else {
        prediction
    })
}
