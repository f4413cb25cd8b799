//! BIO tag validation, BIO/BIOless conversion, and mention extraction.
//!
//! The full tag set is `B-short`, `I-short`, `B-long`, `I-long`, `O`. The
//! reduced BIOless scheme keeps only `B-short`, `B-long`, `O`: every tag of
//! a class becomes the `B-` tag of that class, and the original BIO tags are
//! reconstructed afterwards by splitting each maximal run of identical
//! non-`O` tags into one `B-` tag followed by `I-` tags.
//!
//! Reconstruction cannot distinguish two same-class mentions that touch, so
//! [`to_bioless`] counts the boundaries which would be lost; callers can
//! surface that as a corpus statistic.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Mention class: `short` is the acronym, `long` its expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MentionClass {
    Short,
    Long,
}

impl fmt::Display for MentionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MentionClass::Short => write!(f, "short"),
            MentionClass::Long => write!(f, "long"),
        }
    }
}

/// A token-level tag. Serializes as its literal string (`"B-short"`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tag {
    #[serde(rename = "O")]
    O,
    #[serde(rename = "B-short")]
    BShort,
    #[serde(rename = "I-short")]
    IShort,
    #[serde(rename = "B-long")]
    BLong,
    #[serde(rename = "I-long")]
    ILong,
}

impl Tag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Tag::O => "O",
            Tag::BShort => "B-short",
            Tag::IShort => "I-short",
            Tag::BLong => "B-long",
            Tag::ILong => "I-long",
        }
    }

    /// Class of a non-`O` tag.
    pub fn class(&self) -> Option<MentionClass> {
        match self {
            Tag::O => None,
            Tag::BShort | Tag::IShort => Some(MentionClass::Short),
            Tag::BLong | Tag::ILong => Some(MentionClass::Long),
        }
    }

    pub fn is_begin(&self) -> bool {
        matches!(self, Tag::BShort | Tag::BLong)
    }

    pub fn is_inside(&self) -> bool {
        matches!(self, Tag::IShort | Tag::ILong)
    }

    fn begin_of(class: MentionClass) -> Tag {
        match class {
            MentionClass::Short => Tag::BShort,
            MentionClass::Long => Tag::BLong,
        }
    }

    fn inside_of(class: MentionClass) -> Tag {
        match class {
            MentionClass::Short => Tag::IShort,
            MentionClass::Long => Tag::ILong,
        }
    }

    /// All five BIO tags, in a fixed order.
    pub fn bio_alphabet() -> [Tag; 5] {
        [Tag::O, Tag::BShort, Tag::IShort, Tag::BLong, Tag::ILong]
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = TagSchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "O" => Ok(Tag::O),
            "B-short" => Ok(Tag::BShort),
            "I-short" => Ok(Tag::IShort),
            "B-long" => Ok(Tag::BLong),
            "I-long" => Ok(Tag::ILong),
            other => Err(TagSchemeError::UnknownTag(other.to_string())),
        }
    }
}

/// Tagging scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TagScheme {
    #[serde(rename = "bio")]
    Bio,
    #[serde(rename = "bioless")]
    Bioless,
}

impl fmt::Display for TagScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TagScheme::Bio => write!(f, "bio"),
            TagScheme::Bioless => write!(f, "bioless"),
        }
    }
}

impl FromStr for TagScheme {
    type Err = TagSchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bio" => Ok(TagScheme::Bio),
            "bioless" => Ok(TagScheme::Bioless),
            other => Err(TagSchemeError::UnknownScheme(other.to_string())),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TagSchemeError {
    #[error("unknown tag `{0}`")]
    UnknownTag(String),
    #[error("unknown tag scheme `{0}` (expected `bio` or `bioless`)")]
    UnknownScheme(String),
    #[error("not a valid BIO sequence: I-tag without same-class predecessor at index {index}")]
    NotBio { index: usize },
    #[error("not a BIOless sequence: `{tag}` at index {index}")]
    NotBioless { index: usize, tag: Tag },
}

/// A contiguous tagged span; `start` inclusive, `end` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mention {
    pub class: MentionClass,
    pub start: usize,
    pub end: usize,
}

impl Mention {
    pub fn new(class: MentionClass, start: usize, end: usize) -> Mention {
        debug_assert!(start < end);
        Mention { class, start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &Mention) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// One BIO violation: an I-tag whose predecessor is not a B- or I-tag of the
/// same class (or which starts the sequence).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BioViolation {
    pub index: usize,
    pub tag: Tag,
}

/// Reports every I-tag not preceded by a B- or I-tag of the same class.
pub fn validate_bio(tags: &[Tag]) -> Vec<BioViolation> {
    let mut violations = Vec::new();
    for (i, tag) in tags.iter().enumerate() {
        if tag.is_inside() {
            let ok = i > 0 && tags[i - 1].class() == tag.class();
            if !ok {
                violations.push(BioViolation { index: i, tag: *tag });
            }
        }
    }
    violations
}

/// Result of a BIO → BIOless conversion.
///
/// `collapsed_boundaries` counts pairs of adjacent same-class mentions whose
/// boundary the BIOless form can no longer represent; reconstruction will
/// merge each such pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiolessConversion {
    pub tags: Vec<Tag>,
    pub collapsed_boundaries: usize,
}

/// Converts a valid BIO sequence to the BIOless scheme.
///
/// `B-short`/`I-short` become `B-short`, `B-long`/`I-long` become `B-long`,
/// `O` is unchanged.
pub fn to_bioless(tags: &[Tag]) -> Result<BiolessConversion, TagSchemeError> {
    if let Some(v) = validate_bio(tags).first() {
        return Err(TagSchemeError::NotBio { index: v.index });
    }
    let converted = tags
        .iter()
        .map(|t| match t.class() {
            Some(c) => Tag::begin_of(c),
            None => Tag::O,
        })
        .collect();
    let mentions = extract_mentions(tags).mentions;
    let collapsed = mentions
        .windows(2)
        .filter(|w| w[0].class == w[1].class && w[0].end == w[1].start)
        .count();
    Ok(BiolessConversion {
        tags: converted,
        collapsed_boundaries: collapsed,
    })
}

/// Reconstructs BIO tags from a BIOless sequence: in each maximal run of
/// identical non-`O` tags the first becomes `B-*` and the rest `I-*`.
pub fn from_bioless(tags: &[Tag]) -> Result<Vec<Tag>, TagSchemeError> {
    if let Some((index, tag)) = tags.iter().enumerate().find(|(_, t)| t.is_inside()) {
        return Err(TagSchemeError::NotBioless { index, tag: *tag });
    }
    let mut out = Vec::with_capacity(tags.len());
    let mut prev: Option<MentionClass> = None;
    for tag in tags {
        match tag.class() {
            None => {
                out.push(Tag::O);
                prev = None;
            }
            Some(c) => {
                if prev == Some(c) {
                    out.push(Tag::inside_of(c));
                } else {
                    out.push(Tag::begin_of(c));
                }
                prev = Some(c);
            }
        }
    }
    Ok(out)
}

/// A lenient-extraction repair: an I-tag that had to open a mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Repair {
    pub index: usize,
    pub tag: Tag,
}

/// Mentions recovered from a tag sequence, plus any repairs that lenient
/// extraction applied.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MentionExtraction {
    pub mentions: Vec<Mention>,
    pub repairs: Vec<Repair>,
}

/// Extracts maximal, non-overlapping mentions ordered by start position.
///
/// Lenient: a dangling I-tag (no same-class predecessor) opens a new mention
/// and is recorded as a repair, so imperfect model output still evaluates.
pub fn extract_mentions(tags: &[Tag]) -> MentionExtraction {
    let mut out = MentionExtraction::default();
    let mut open: Option<Mention> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            Tag::O => {
                if let Some(m) = open.take() {
                    out.mentions.push(m);
                }
            }
            t if t.is_begin() => {
                if let Some(m) = open.take() {
                    out.mentions.push(m);
                }
                open = Some(Mention::new(t.class().unwrap(), i, i + 1));
            }
            t => {
                let class = t.class().unwrap();
                match open.as_mut() {
                    Some(m) if m.class == class => m.end = i + 1,
                    _ => {
                        if let Some(m) = open.take() {
                            out.mentions.push(m);
                        }
                        open = Some(Mention::new(class, i, i + 1));
                        out.repairs.push(Repair { index: i, tag: *t });
                    }
                }
            }
        }
    }
    if let Some(m) = open {
        out.mentions.push(m);
    }
    out
}

/// A sentence id paired with its tags; the record type of prediction files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub id: String,
    pub tags: Vec<Tag>,
}
