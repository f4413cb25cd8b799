//! Token-level feature extraction for the CRF tagger.
//!
//! Per token the extractor emits, for the current word: its lowercase form,
//! its last three letters, an all-uppercase flag, a title-case flag, its POS
//! tag, the first two characters of the POS tag, and a flag set when at
//! least 60% of the word is uppercase. For each neighbour at distance one it
//! emits the lowercase form, title-case flag, all-uppercase flag, POS tag,
//! and two-character POS prefix; `BOS`/`EOS` markers stand in for missing
//! neighbours.
//!
//! Feature keys are stable `attr=value` strings (`w.lower=models`,
//! `-1:istitle=true`, ...). Trained models index these strings directly, so
//! the vocabulary below is frozen.

use serde::{Deserialize, Serialize};
use std::collections::btree_set;
use std::collections::BTreeSet;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;
use thiserror::Error;

/// Coarse part-of-speech tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PosTag {
    #[serde(rename = "NOUN")]
    Noun,
    #[serde(rename = "VERB")]
    Verb,
    #[serde(rename = "ADJ")]
    Adj,
    #[serde(rename = "ADV")]
    Adv,
    #[serde(rename = "DET")]
    Det,
    #[serde(rename = "ADP")]
    Adp,
    #[serde(rename = "NUM")]
    Num,
    #[serde(rename = "PUNCT")]
    Punct,
    #[serde(rename = "X")]
    X,
}

impl PosTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            PosTag::Noun => "NOUN",
            PosTag::Verb => "VERB",
            PosTag::Adj => "ADJ",
            PosTag::Adv => "ADV",
            PosTag::Det => "DET",
            PosTag::Adp => "ADP",
            PosTag::Num => "NUM",
            PosTag::Punct => "PUNCT",
            PosTag::X => "X",
        }
    }

    /// First two characters of the tag string (the whole tag for `X`).
    pub fn prefix2(&self) -> &'static str {
        let s = self.as_str();
        &s[..s.len().min(2)]
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PosTag {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "NOUN" => Ok(PosTag::Noun),
            "VERB" => Ok(PosTag::Verb),
            "ADJ" => Ok(PosTag::Adj),
            "ADV" => Ok(PosTag::Adv),
            "DET" => Ok(PosTag::Det),
            "ADP" => Ok(PosTag::Adp),
            "NUM" => Ok(PosTag::Num),
            "PUNCT" => Ok(PosTag::Punct),
            "X" => Ok(PosTag::X),
            other => Err(FeatureError::UnknownPosTag(other.to_string())),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("unknown POS tag `{0}`")]
    UnknownPosTag(String),
    #[error("token index {index} out of range for sentence of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("length mismatch: {tokens} tokens but {pos} POS tags")]
    LengthMismatch { tokens: usize, pos: usize },
}

/// A set of categorical, presence-valued feature keys for one token.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureSet(BTreeSet<String>);

impl FeatureSet {
    pub fn new() -> FeatureSet {
        FeatureSet::default()
    }

    pub fn insert(&mut self, key: impl Into<String>) {
        self.0.insert(key.into());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.0.contains(key)
    }

    pub fn iter(&self) -> btree_set::Iter<'_, String> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Union with another set, consuming it.
    pub fn extend(&mut self, other: FeatureSet) {
        self.0.extend(other.0);
    }
}

impl FromIterator<String> for FeatureSet {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> FeatureSet {
        FeatureSet(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a FeatureSet {
    type Item = &'a String;
    type IntoIter = btree_set::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

// Closed-class function words. Anything outside this lexicon falls through
// to the punctuation/number checks, then suffix rules, then NOUN.
static LEXICON: LazyLock<HashMap<&'static str, PosTag>> = LazyLock::new(|| {
    let mut m = HashMap::new();
    for w in [
        "the", "a", "an", "this", "that", "these", "those", "each", "every", "some", "any", "no",
        "all", "both", "such", "another",
    ] {
        m.insert(w, PosTag::Det);
    }
    for w in [
        "of", "in", "on", "at", "by", "for", "with", "from", "to", "into", "onto", "over",
        "under", "between", "through", "during", "without", "within", "about", "against",
        "among", "across", "after", "before", "as", "via", "per", "until", "upon", "toward",
        "towards",
    ] {
        m.insert(w, PosTag::Adp);
    }
    for w in [
        "is", "are", "was", "were", "be", "been", "being", "am", "has", "have", "had", "having",
        "do", "does", "did", "done", "can", "could", "will", "would", "shall", "should", "may",
        "might", "must",
    ] {
        m.insert(w, PosTag::Verb);
    }
    for w in [
        "not", "very", "also", "however", "thus", "then", "only", "more", "most", "well",
        "often", "never", "always", "moreover", "therefore", "hence", "further",
    ] {
        m.insert(w, PosTag::Adv);
    }
    for w in [
        "and", "or", "but", "nor", "if", "while", "because", "although", "it", "its", "we",
        "our", "they", "their", "he", "she", "his", "her", "i", "you", "your", "which", "who",
        "whose", "what", "there", "where", "when", "how",
    ] {
        m.insert(w, PosTag::X);
    }
    m
});

const VERB_SUFFIXES: [&str; 5] = ["ing", "ed", "ize", "ise", "ify"];
const ADJ_SUFFIXES: [&str; 9] = [
    "able", "ible", "ical", "ous", "ful", "ive", "less", "al", "ic",
];

fn tag_word(word: &str) -> PosTag {
    if word.is_empty() {
        return PosTag::X;
    }
    let lower = word.to_lowercase();
    if let Some(tag) = LEXICON.get(lower.as_str()) {
        return *tag;
    }
    if word.chars().all(|c| !c.is_alphanumeric()) {
        return PosTag::Punct;
    }
    if word.chars().any(|c| c.is_ascii_digit())
        && word
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | ',' | '-' | '/' | '%'))
    {
        return PosTag::Num;
    }
    if lower.len() > 4 && lower.ends_with("ly") {
        return PosTag::Adv;
    }
    if VERB_SUFFIXES.iter().any(|s| lower.len() > s.len() + 1 && lower.ends_with(s)) {
        return PosTag::Verb;
    }
    if ADJ_SUFFIXES.iter().any(|s| lower.len() > s.len() + 1 && lower.ends_with(s)) {
        return PosTag::Adj;
    }
    PosTag::Noun
}

/// Deterministic heuristic POS tagger: closed-class lexicon, then
/// punctuation/number shape, then suffix rules, then NOUN.
///
/// A stand-in for a real tagger; callers may instead supply precomputed tags
/// to [`extract_features`].
pub fn pos_tag<S: AsRef<str>>(tokens: &[S]) -> Vec<PosTag> {
    tokens.iter().map(|t| tag_word(t.as_ref())).collect()
}

fn is_all_upper(word: &str) -> bool {
    let mut has_alpha = false;
    for c in word.chars() {
        if c.is_alphabetic() {
            has_alpha = true;
            if !c.is_uppercase() {
                return false;
            }
        }
    }
    has_alpha
}

fn is_title_case(word: &str) -> bool {
    let mut alpha = word.chars().filter(|c| c.is_alphabetic());
    match alpha.next() {
        Some(first) if first.is_uppercase() => alpha.all(|c| c.is_lowercase()),
        _ => false,
    }
}

/// True when at least 60% of the word's characters are uppercase.
/// Exact rational comparison, all characters counted.
pub fn is_upper60(word: &str) -> bool {
    let total = word.chars().count();
    if total == 0 {
        return false;
    }
    let upper = word.chars().filter(|c| c.is_uppercase()).count();
    5 * upper >= 3 * total
}

fn last3(word: &str) -> String {
    let chars: Vec<char> = word.chars().collect();
    let start = chars.len().saturating_sub(3);
    chars[start..].iter().collect()
}

fn bool_str(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

fn neighbour_features(out: &mut FeatureSet, prefix: &str, word: &str, pos: PosTag) {
    out.insert(format!("{prefix}:lower={}", word.to_lowercase()));
    out.insert(format!("{prefix}:istitle={}", bool_str(is_title_case(word))));
    out.insert(format!("{prefix}:isupper={}", bool_str(is_all_upper(word))));
    out.insert(format!("{prefix}:pos={pos}"));
    out.insert(format!("{prefix}:pos2={}", pos.prefix2()));
}

/// Feature set for the token at `index`.
pub fn extract_features<S: AsRef<str>>(
    tokens: &[S],
    pos: &[PosTag],
    index: usize,
) -> Result<FeatureSet, FeatureError> {
    if tokens.len() != pos.len() {
        return Err(FeatureError::LengthMismatch {
            tokens: tokens.len(),
            pos: pos.len(),
        });
    }
    if index >= tokens.len() {
        return Err(FeatureError::IndexOutOfRange {
            index,
            len: tokens.len(),
        });
    }

    let word = tokens[index].as_ref();
    let mut out = FeatureSet::new();
    out.insert(format!("w.lower={}", word.to_lowercase()));
    out.insert(format!("w.last3={}", last3(word)));
    out.insert(format!("w.isupper={}", bool_str(is_all_upper(word))));
    out.insert(format!("w.istitle={}", bool_str(is_title_case(word))));
    out.insert(format!("w.pos={}", pos[index]));
    out.insert(format!("w.pos2={}", pos[index].prefix2()));
    out.insert(format!("w.upper60={}", bool_str(is_upper60(word))));

    if index == 0 {
        out.insert("BOS");
    } else {
        neighbour_features(&mut out, "-1", tokens[index - 1].as_ref(), pos[index - 1]);
    }
    if index + 1 == tokens.len() {
        out.insert("EOS");
    } else {
        neighbour_features(&mut out, "+1", tokens[index + 1].as_ref(), pos[index + 1]);
    }
    Ok(out)
}

/// One feature set per token.
pub fn featurize_sentence<S: AsRef<str>>(
    tokens: &[S],
    pos: &[PosTag],
) -> Result<Vec<FeatureSet>, FeatureError> {
    if tokens.len() != pos.len() {
        return Err(FeatureError::LengthMismatch {
            tokens: tokens.len(),
            pos: pos.len(),
        });
    }
    (0..tokens.len())
        .map(|i| extract_features(tokens, pos, i))
        .collect()
}
