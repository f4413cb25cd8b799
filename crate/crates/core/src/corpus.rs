//! Corpus and dictionary loading, validation, and fold splitting.
//!
//! File formats (UTF-8 JSON):
//!
//! * identification corpus — array of `{id, tokens, labels?, pos?}`;
//!   `labels` are tag strings aligned with `tokens`, `pos` optional
//!   precomputed POS tags;
//! * disambiguation corpus — array of `{id, tokens, acronym, expansion?}`
//!   where `acronym` is the token index of the acronym;
//! * expansion dictionary — object mapping acronym string to an ordered
//!   array of candidate long forms.
//!
//! Candidate long forms are normalized on load: lowercased, whitespace runs
//! collapsed, duplicates removed keeping the first occurrence. Source order
//! is preserved because downstream tie-breaking depends on it.

use crate::features::PosTag;
use crate::tagscheme::Tag;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: record {index} (id `{id}`): {reason}")]
    MalformedRecord {
        path: PathBuf,
        index: usize,
        id: String,
        reason: String,
    },
    #[error("{path}: dictionary entry `{acronym}` has an empty candidate list")]
    EmptyCandidates { path: PathBuf, acronym: String },
    #[error("cannot split {n} ids into {k} folds (need 2 <= k <= n)")]
    BadFoldCount { n: usize, k: usize },
    #[error("duplicate id `{id}` in fold input")]
    DuplicateId { id: String },
    #[error("id `{id}` has no stratum assigned")]
    MissingStratum { id: String },
}

/// A tokenized sentence with optional gold BIO tags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AiInstance {
    pub id: String,
    pub tokens: Vec<String>,
    pub tags: Option<Vec<Tag>>,
    /// Precomputed POS tags, when the source file carries them.
    pub pos: Option<Vec<PosTag>>,
}

/// A tokenized sentence with the acronym's token index and optional gold
/// expansion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdInstance {
    pub id: String,
    pub tokens: Vec<String>,
    pub acronym_index: usize,
    pub expansion: Option<String>,
}

impl AdInstance {
    /// The acronym's surface form.
    pub fn acronym(&self) -> &str {
        &self.tokens[self.acronym_index]
    }
}

/// Mapping from acronym to its ordered, normalized candidate long forms.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExpansionDictionary {
    entries: BTreeMap<String, Vec<String>>,
}

impl ExpansionDictionary {
    /// Builds a dictionary from raw entries, normalizing candidates.
    /// Empty candidate lists are rejected by the loader; here they panic in
    /// debug builds only, since programmatic construction controls its input.
    pub fn from_entries<I, C>(entries: I) -> ExpansionDictionary
    where
        I: IntoIterator<Item = (String, C)>,
        C: IntoIterator<Item = String>,
    {
        let mut out = BTreeMap::new();
        for (acronym, candidates) in entries {
            let normalized = normalize_candidates(candidates);
            debug_assert!(!normalized.is_empty(), "empty candidate list for {acronym}");
            out.insert(acronym, normalized);
        }
        ExpansionDictionary { entries: out }
    }

    pub fn candidates(&self, acronym: &str) -> Option<&[String]> {
        self.entries.get(acronym).map(Vec::as_slice)
    }

    pub fn contains(&self, acronym: &str) -> bool {
        self.entries.contains_key(acronym)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<String>)> {
        self.entries.iter()
    }
}

/// Lowercases and collapses whitespace runs to single spaces.
pub fn normalize_expansion(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn normalize_candidates<C: IntoIterator<Item = String>>(candidates: C) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for c in candidates {
        let n = normalize_expansion(&c);
        if seen.insert(n.clone()) {
            out.push(n);
        }
    }
    out
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CorpusError::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Deserialize)]
struct AiRecordDto {
    id: String,
    tokens: Vec<String>,
    #[serde(default)]
    labels: Option<Vec<String>>,
    #[serde(default)]
    pos: Option<Vec<String>>,
}

#[derive(Deserialize)]
struct AdRecordDto {
    id: String,
    tokens: Vec<String>,
    acronym: usize,
    #[serde(default)]
    expansion: Option<String>,
}

fn malformed(path: &Path, index: usize, id: &str, reason: impl fmt::Display) -> CorpusError {
    CorpusError::MalformedRecord {
        path: path.to_path_buf(),
        index,
        id: id.to_string(),
        reason: reason.to_string(),
    }
}

/// Loads an identification corpus, validating token/label alignment.
pub fn load_ai_corpus(path: &Path) -> Result<Vec<AiInstance>, CorpusError> {
    let records: Vec<AiRecordDto> = read_json(path)?;
    let mut out = Vec::with_capacity(records.len());
    for (index, rec) in records.into_iter().enumerate() {
        if rec.tokens.is_empty() {
            return Err(malformed(path, index, &rec.id, "empty token list"));
        }
        let tags = match rec.labels {
            None => None,
            Some(labels) => {
                if labels.len() != rec.tokens.len() {
                    return Err(malformed(
                        path,
                        index,
                        &rec.id,
                        format!("{} tokens but {} labels", rec.tokens.len(), labels.len()),
                    ));
                }
                let parsed: Result<Vec<Tag>, _> = labels.iter().map(|l| l.parse()).collect();
                Some(parsed.map_err(|e| malformed(path, index, &rec.id, e))?)
            }
        };
        let pos = match rec.pos {
            None => None,
            Some(pos) => {
                if pos.len() != rec.tokens.len() {
                    return Err(malformed(
                        path,
                        index,
                        &rec.id,
                        format!("{} tokens but {} POS tags", rec.tokens.len(), pos.len()),
                    ));
                }
                let parsed: Result<Vec<PosTag>, _> = pos.iter().map(|p| p.parse()).collect();
                Some(parsed.map_err(|e| malformed(path, index, &rec.id, e))?)
            }
        };
        out.push(AiInstance {
            id: rec.id,
            tokens: rec.tokens,
            tags,
            pos,
        });
    }
    Ok(out)
}

/// Loads a disambiguation corpus, validating the acronym index.
pub fn load_ad_corpus(path: &Path) -> Result<Vec<AdInstance>, CorpusError> {
    let records: Vec<AdRecordDto> = read_json(path)?;
    let mut out = Vec::with_capacity(records.len());
    for (index, rec) in records.into_iter().enumerate() {
        if rec.tokens.is_empty() {
            return Err(malformed(path, index, &rec.id, "empty token list"));
        }
        if rec.acronym >= rec.tokens.len() {
            return Err(malformed(
                path,
                index,
                &rec.id,
                format!(
                    "acronym index {} out of range for {} tokens",
                    rec.acronym,
                    rec.tokens.len()
                ),
            ));
        }
        out.push(AdInstance {
            id: rec.id,
            tokens: rec.tokens,
            acronym_index: rec.acronym,
            expansion: rec.expansion,
        });
    }
    Ok(out)
}

/// Loads the expansion dictionary, normalizing candidates.
pub fn load_dictionary(path: &Path) -> Result<ExpansionDictionary, CorpusError> {
    // serde_json preserves array order; key order is irrelevant downstream.
    let raw: BTreeMap<String, Vec<String>> = read_json(path)?;
    let mut entries = BTreeMap::new();
    for (acronym, candidates) in raw {
        if candidates.is_empty() {
            return Err(CorpusError::EmptyCandidates {
                path: path.to_path_buf(),
                acronym,
            });
        }
        entries.insert(acronym, normalize_candidates(candidates));
    }
    Ok(ExpansionDictionary { entries })
}

/// A consistency problem between a loaded instance and the dictionary.
/// Reported, never silently dropped; prediction rejects the instance later.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DictionaryIssue {
    AcronymMissing { id: String, acronym: String },
    ExpansionNotListed { id: String, expansion: String },
}

impl fmt::Display for DictionaryIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DictionaryIssue::AcronymMissing { id, acronym } => {
                write!(f, "instance `{id}`: acronym `{acronym}` not in dictionary")
            }
            DictionaryIssue::ExpansionNotListed { id, expansion } => {
                write!(f, "instance `{id}`: expansion `{expansion}` not a listed candidate")
            }
        }
    }
}

/// Flags instances whose acronym is absent from the dictionary or whose gold
/// expansion is not among the entry's candidates (after normalization).
pub fn check_against_dictionary(
    instances: &[AdInstance],
    dict: &ExpansionDictionary,
) -> Vec<DictionaryIssue> {
    let mut issues = Vec::new();
    for inst in instances {
        match dict.candidates(inst.acronym()) {
            None => issues.push(DictionaryIssue::AcronymMissing {
                id: inst.id.clone(),
                acronym: inst.acronym().to_string(),
            }),
            Some(candidates) => {
                if let Some(expansion) = &inst.expansion {
                    let normalized = normalize_expansion(expansion);
                    if !candidates.contains(&normalized) {
                        issues.push(DictionaryIssue::ExpansionNotListed {
                            id: inst.id.clone(),
                            expansion: expansion.clone(),
                        });
                    }
                }
            }
        }
    }
    issues
}

/// Assignment of instance ids to folds `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of: BTreeMap<String, usize>,
    k: usize,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.fold_of.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }

    /// Ids assigned to `fold`, in id order.
    pub fn ids_in_fold(&self, fold: usize) -> Vec<&str> {
        self.fold_of
            .iter()
            .filter(|(_, f)| **f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for f in self.fold_of.values() {
            sizes[*f] += 1;
        }
        sizes
    }
}

/// Splits ids into `k` folds, deterministically for a given seed.
///
/// With `strata`, ids sharing a stratum key are spread across folds as
/// evenly as the arithmetic allows; fold sizes always differ by at most one.
pub fn split_folds(
    ids: &[String],
    k: usize,
    strata: Option<&BTreeMap<String, String>>,
    seed: u64,
) -> Result<FoldAssignment, CorpusError> {
    if k < 2 || k > ids.len() {
        return Err(CorpusError::BadFoldCount { n: ids.len(), k });
    }
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(CorpusError::DuplicateId { id: id.clone() });
        }
    }

    // Group ids by stratum (a single group when unstratified), shuffle each
    // group, then deal round-robin with a counter running across groups so
    // overall fold sizes stay balanced.
    let mut groups: BTreeMap<&str, Vec<&String>> = BTreeMap::new();
    match strata {
        None => {
            groups.insert("", ids.iter().collect());
        }
        Some(strata) => {
            for id in ids {
                let key = strata
                    .get(id)
                    .ok_or_else(|| CorpusError::MissingStratum { id: id.clone() })?;
                groups.entry(key).or_default().push(id);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = BTreeMap::new();
    let mut next_fold = 0;
    for (_, mut group) in groups {
        group.shuffle(&mut rng);
        for id in group {
            fold_of.insert(id.clone(), next_fold);
            next_fold = (next_fold + 1) % k;
        }
    }
    Ok(FoldAssignment { fold_of, k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;
    use tempfile::NamedTempFile;

    fn write_file(contents: &str) -> NamedTempFile {
        let mut f = NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_ai_parses_records() {
        let f = write_file(
            r#"[{"id": "s1", "tokens": ["Hidden", "Markov", "Models"],
                 "labels": ["B-long", "I-long", "I-long"]},
                {"id": "s2", "tokens": ["no", "tags", "here"]}]"#,
        );
        let got = load_ai_corpus(f.path()).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].id, "s1");
        assert_eq!(
            got[0].tags,
            Some(vec![Tag::BLong, Tag::ILong, Tag::ILong])
        );
        assert_eq!(got[1].tags, None);
    }

    #[test]
    fn load_ai_empty_list() {
        let f = write_file("[]");
        assert!(load_ai_corpus(f.path()).unwrap().is_empty());
    }

    #[test]
    fn load_ai_rejects_length_mismatch_naming_record() {
        let f = write_file(
            r#"[{"id": "bad-1", "tokens": ["a", "b", "c", "d", "e"],
                 "labels": ["O", "O", "O", "O"]}]"#,
        );
        let err = load_ai_corpus(f.path()).unwrap_err().to_string();
        assert!(err.contains("bad-1"), "missing id in: {err}");
        assert!(err.contains("5 tokens but 4 labels"), "bad reason: {err}");
    }

    #[test]
    fn load_ai_rejects_unknown_tag() {
        let f = write_file(r#"[{"id": "x", "tokens": ["a"], "labels": ["B-Short"]}]"#);
        let err = load_ai_corpus(f.path()).unwrap_err().to_string();
        assert!(err.contains("unknown tag"));
    }

    #[test]
    fn load_ai_missing_file() {
        let err = load_ai_corpus(Path::new("/nonexistent/sciai.json")).unwrap_err();
        assert!(matches!(err, CorpusError::Io { .. }));
    }

    #[test]
    fn loaders_are_pure() {
        let f = write_file(r#"[{"id": "s1", "tokens": ["a", "b"], "labels": ["O", "O"]}]"#);
        assert_eq!(
            load_ai_corpus(f.path()).unwrap(),
            load_ai_corpus(f.path()).unwrap()
        );
    }

    #[test]
    fn load_ad_parses_records() {
        let f = write_file(
            r#"[{"id": "t1", "tokens": ["the", "HMM", "model"], "acronym": 1,
                 "expansion": "hidden markov models"}]"#,
        );
        let got = load_ad_corpus(f.path()).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].acronym(), "HMM");
        assert_eq!(got[0].expansion.as_deref(), Some("hidden markov models"));
    }

    #[test]
    fn load_ad_empty_list() {
        let f = write_file("[]");
        assert!(load_ad_corpus(f.path()).unwrap().is_empty());
    }

    #[test]
    fn load_ad_rejects_out_of_range_index() {
        let f = write_file(r#"[{"id": "t9", "tokens": ["a", "b", "c", "d", "e"], "acronym": 7}]"#);
        let err = load_ad_corpus(f.path()).unwrap_err().to_string();
        assert!(err.contains("t9"));
        assert!(err.contains("acronym index 7"));
    }

    #[test]
    fn dictionary_candidates_lowercased_in_order() {
        let f = write_file(
            r#"{"LPP": ["Locality Preserving Projections", "Load Planning Problem"],
                "HMM": ["Hidden Markov Models"]}"#,
        );
        let dict = load_dictionary(f.path()).unwrap();
        assert_eq!(
            dict.candidates("LPP").unwrap(),
            ["locality preserving projections", "load planning problem"]
        );
        assert_eq!(dict.candidates("HMM").unwrap(), ["hidden markov models"]);
    }

    #[test]
    fn dictionary_dedups_after_lowercasing() {
        let f = write_file(r#"{"FM": ["fm", "FM", "feature map"]}"#);
        let dict = load_dictionary(f.path()).unwrap();
        assert_eq!(dict.candidates("FM").unwrap(), ["fm", "feature map"]);
    }

    #[test]
    fn dictionary_rejects_empty_candidate_list() {
        let f = write_file(r#"{"XX": []}"#);
        let err = load_dictionary(f.path()).unwrap_err();
        assert!(matches!(err, CorpusError::EmptyCandidates { acronym, .. } if acronym == "XX"));
    }

    #[test]
    fn dictionary_collapses_whitespace() {
        let f = write_file(r#"{"FM": ["feature   map"]}"#);
        let dict = load_dictionary(f.path()).unwrap();
        assert_eq!(dict.candidates("FM").unwrap(), ["feature map"]);
    }

    #[test]
    fn check_reports_membership_issues() {
        let dict = ExpansionDictionary::from_entries([(
            "FM".to_string(),
            vec!["feature map".to_string()],
        )]);
        let instances = vec![
            AdInstance {
                id: "ok".into(),
                tokens: vec!["FM".into()],
                acronym_index: 0,
                expansion: Some("Feature  Map".into()),
            },
            AdInstance {
                id: "bad-exp".into(),
                tokens: vec!["FM".into()],
                acronym_index: 0,
                expansion: Some("fuzzy measure".into()),
            },
            AdInstance {
                id: "bad-acro".into(),
                tokens: vec!["ZZ".into()],
                acronym_index: 0,
                expansion: None,
            },
        ];
        let issues = check_against_dictionary(&instances, &dict);
        assert_eq!(issues.len(), 2);
        assert!(matches!(
            &issues[0],
            DictionaryIssue::ExpansionNotListed { id, .. } if id == "bad-exp"
        ));
        assert!(matches!(
            &issues[1],
            DictionaryIssue::AcronymMissing { id, .. } if id == "bad-acro"
        ));
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("id-{i}")).collect()
    }

    #[test]
    fn split_even_division() {
        let assignment = split_folds(&ids(10), 5, None, 7).unwrap();
        assert_eq!(assignment.fold_sizes(), vec![2; 5]);
    }

    #[test]
    fn split_stratified_forced_layout() {
        let all: Vec<String> = (0..10).map(|i| format!("id-{i}")).collect();
        let strata: BTreeMap<String, String> = all
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), if i < 5 { "A".into() } else { "B".into() }))
            .collect();
        let assignment = split_folds(&all, 5, Some(&strata), 3).unwrap();
        for fold in 0..5 {
            let in_fold = assignment.ids_in_fold(fold);
            assert_eq!(in_fold.len(), 2);
            let a = in_fold.iter().filter(|id| strata[**id] == "A").count();
            assert_eq!(a, 1, "fold {fold} should hold one A and one B");
        }
    }

    #[test]
    fn split_rejects_bad_k() {
        assert!(matches!(
            split_folds(&ids(3), 5, None, 0),
            Err(CorpusError::BadFoldCount { n: 3, k: 5 })
        ));
        assert!(matches!(
            split_folds(&ids(3), 1, None, 0),
            Err(CorpusError::BadFoldCount { n: 3, k: 1 })
        ));
    }

    #[test]
    fn split_rejects_duplicates() {
        let mut input = ids(4);
        input.push("id-0".to_string());
        assert!(matches!(
            split_folds(&input, 2, None, 0),
            Err(CorpusError::DuplicateId { .. })
        ));
    }

    #[test]
    fn split_is_deterministic() {
        let input = ids(23);
        let a = split_folds(&input, 5, None, 42).unwrap();
        let b = split_folds(&input, 5, None, 42).unwrap();
        assert_eq!(a, b);
        let c = split_folds(&input, 5, None, 43).unwrap();
        assert_ne!(a, c, "different seeds should shuffle differently");
    }

    proptest! {
        #[test]
        fn split_partitions_ids_evenly(n in 2usize..40, k in 2usize..8, seed in 0u64..100) {
            prop_assume!(k <= n);
            let input = ids(n);
            let assignment = split_folds(&input, k, None, seed).unwrap();
            prop_assert_eq!(assignment.len(), n);
            for id in &input {
                prop_assert!(assignment.fold_of(id).is_some());
            }
            let sizes = assignment.fold_sizes();
            let min = sizes.iter().min().unwrap();
            let max = sizes.iter().max().unwrap();
            prop_assert!(max - min <= 1);
        }
    }
}
