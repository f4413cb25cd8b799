//! Rule-based acronym/long-form pair extraction.
//!
//! Finds tokens that look like acronyms sitting alone between parentheses
//! and pairs each with a long form recovered from the preceding tokens by
//! right-to-left character matching: every acronym character must appear in
//! order in the window text (case-insensitive), and the acronym's first
//! character must match the first character of a window word. The shortest
//! window suffix satisfying the match becomes the long form.
//!
//! The reverse pattern `SHORT ( long form )` is available behind
//! [`ExtractOptions::reverse_pattern`].

use crate::tagscheme::{validate_bio, Mention, MentionClass, Tag};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuleError {
    #[error("overlapping pairs: mentions at {0}..{1} and {2}..{3}")]
    OverlappingPairs(usize, usize, usize, usize),
    #[error("mention at {start}..{end} out of range for {len} tokens")]
    MentionOutOfRange { start: usize, end: usize, len: usize },
}

/// An extracted (short, long) pair; both mentions in sentence coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCandidate {
    pub short: Mention,
    pub long: Mention,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractOptions {
    /// Also accept `SHORT ( long form )`.
    pub reverse_pattern: bool,
}

/// Acronym shape test: 2-10 characters, first character alphanumeric, and
/// at least 60% of the alphabetic characters uppercase.
pub fn is_acronym_form(token: &str) -> bool {
    let len = token.chars().count();
    if !(2..=10).contains(&len) {
        return false;
    }
    match token.chars().next() {
        Some(c) if c.is_alphanumeric() => {}
        _ => return false,
    }
    let alphabetic = token.chars().filter(|c| c.is_alphabetic()).count();
    if alphabetic == 0 {
        return false;
    }
    let upper = token
        .chars()
        .filter(|c| c.is_alphabetic() && c.is_uppercase())
        .count();
    5 * upper >= 3 * alphabetic
}

/// Number of window tokens searched for a long form.
pub fn window_cap(acronym: &str) -> usize {
    let len = acronym.chars().count();
    usize::min(len + 5, 2 * len)
}

/// Searches `window` (the tokens preceding the parenthesized acronym) for
/// the long form. Returns a [`Mention`] in window coordinates covering a
/// contiguous suffix of the window, or `None`.
pub fn best_long_form<S: AsRef<str>>(acronym: &str, window: &[S]) -> Option<Mention> {
    if window.is_empty() || acronym.is_empty() {
        return None;
    }
    // Work on the space-joined window text, keeping a char -> token map.
    let mut text: Vec<char> = Vec::new();
    let mut token_of: Vec<usize> = Vec::new();
    for (i, tok) in window.iter().enumerate() {
        if i > 0 {
            text.push(' ');
            token_of.push(i); // a space belongs to the following token
        }
        for c in tok.as_ref().chars() {
            text.push(c.to_ascii_lowercase());
            token_of.push(i);
        }
    }

    let short: Vec<char> = acronym.chars().map(|c| c.to_ascii_lowercase()).collect();
    let mut s_index = short.len() as isize - 1;
    let mut l_index = text.len() as isize - 1;
    while s_index >= 0 {
        let c = short[s_index as usize];
        if !c.is_alphanumeric() {
            s_index -= 1;
            continue;
        }
        loop {
            if l_index < 0 {
                return None;
            }
            let li = l_index as usize;
            let char_matches = text[li] == c;
            // The acronym's first character must sit at the start of a word.
            let word_start_needed = s_index == 0;
            let at_word_start = li == 0 || !text[li - 1].is_alphanumeric();
            if char_matches && (!word_start_needed || at_word_start) {
                break;
            }
            l_index -= 1;
        }
        l_index -= 1;
        s_index -= 1;
    }

    let match_pos = (l_index + 1) as usize;
    let start_token = token_of[match_pos];
    Some(Mention::new(MentionClass::Long, start_token, window.len()))
}

/// Clamps a window so it never contains a parenthesis token.
fn paren_free_start<S: AsRef<str>>(tokens: &[S], start: usize, end: usize) -> usize {
    let mut s = start;
    for i in start..end {
        let t = tokens[i].as_ref();
        if t == "(" || t == ")" {
            s = i + 1;
        }
    }
    s
}

/// Extracts acronym/long-form pairs from one tokenized sentence.
///
/// The primary pattern is `long form ( SHORT )`: a single acronym-shaped
/// token enclosed in parentheses, with the long form searched in the capped
/// window before the opening parenthesis. Windows never reach across a
/// previously extracted pair or a parenthesis token, so output mentions
/// cannot overlap and never cover parentheses.
pub fn extract_pairs<S: AsRef<str>>(tokens: &[S], options: ExtractOptions) -> Vec<PairCandidate> {
    let mut pairs: Vec<PairCandidate> = Vec::new();
    // First sentence position the next window may use.
    let mut frontier = 0;
    let mut i = 0;
    while i < tokens.len() {
        let tok = tokens[i].as_ref();
        if !is_acronym_form(tok) {
            i += 1;
            continue;
        }
        let preceded_by_paren = i > 0 && tokens[i - 1].as_ref() == "(";
        let followed_by_paren = i + 1 < tokens.len() && tokens[i + 1].as_ref() == ")";
        if preceded_by_paren && followed_by_paren {
            let cap = window_cap(tok);
            let end = i - 1; // exclusive: stop before "("
            let start = usize::max(frontier, end.saturating_sub(cap));
            let start = paren_free_start(tokens, start, end);
            if let Some(m) = best_long_form(tok, &tokens[start..end]) {
                let long = Mention::new(MentionClass::Long, start + m.start, start + m.end);
                let short = Mention::new(MentionClass::Short, i, i + 1);
                pairs.push(PairCandidate { short, long });
                frontier = i + 2; // past the closing parenthesis
                i += 2;
                continue;
            }
        } else if options.reverse_pattern
            && i + 1 < tokens.len()
            && tokens[i + 1].as_ref() == "("
        {
            // SHORT ( long form ): search inside the parentheses.
            if let Some(close) = (i + 2..tokens.len()).find(|&j| tokens[j].as_ref() == ")") {
                let cap = window_cap(tok);
                let start = i + 2;
                let end = usize::min(close, start + cap);
                // `close` is the first ")", so only a nested "(" can sit in
                // the window; the suffix-shaped long form must not cover it.
                let end = (start..end)
                    .find(|&j| tokens[j].as_ref() == "(")
                    .unwrap_or(end);
                if start < end {
                    if let Some(m) = best_long_form(tok, &tokens[start..end]) {
                        let long =
                            Mention::new(MentionClass::Long, start + m.start, start + m.end);
                        let short = Mention::new(MentionClass::Short, i, i + 1);
                        pairs.push(PairCandidate { short, long });
                        frontier = close + 1;
                        i = close + 1;
                        continue;
                    }
                }
            }
        }
        i += 1;
    }
    pairs
}

/// Converts non-overlapping pairs to a BIO tag sequence.
pub fn pairs_to_tags<S>(tokens: &[S], pairs: &[PairCandidate]) -> Result<Vec<Tag>, RuleError> {
    let len = tokens.len();
    let mut mentions: Vec<Mention> = pairs
        .iter()
        .flat_map(|p| [p.short, p.long])
        .collect();
    mentions.sort_by_key(|m| (m.start, m.end));
    for m in &mentions {
        if m.end > len {
            return Err(RuleError::MentionOutOfRange {
                start: m.start,
                end: m.end,
                len,
            });
        }
    }
    for w in mentions.windows(2) {
        if w[0].overlaps(&w[1]) {
            return Err(RuleError::OverlappingPairs(
                w[0].start, w[0].end, w[1].start, w[1].end,
            ));
        }
    }
    let mut tags = vec![Tag::O; len];
    for m in &mentions {
        for (offset, t) in tags[m.start..m.end].iter_mut().enumerate() {
            *t = match (m.class, offset) {
                (MentionClass::Short, 0) => Tag::BShort,
                (MentionClass::Short, _) => Tag::IShort,
                (MentionClass::Long, 0) => Tag::BLong,
                (MentionClass::Long, _) => Tag::ILong,
            };
        }
    }
    debug_assert!(validate_bio(&tags).is_empty());
    Ok(tags)
}

/// Convenience: extract pairs and tag the sentence in one step.
pub fn tag_sentence<S: AsRef<str>>(tokens: &[S], options: ExtractOptions) -> Vec<Tag> {
    let pairs = extract_pairs(tokens, options);
    pairs_to_tags(tokens, &pairs).expect("extracted pairs never overlap")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(sentence: &str) -> Vec<&str> {
        sentence.split_whitespace().collect()
    }

    #[test]
    fn acronym_shapes() {
        assert!(is_acronym_form("HMM"));
        assert!(is_acronym_form("CNNs")); // 3 of 4 alphabetic uppercase
        assert!(is_acronym_form("3G"));
        assert!(!is_acronym_form("the"));
        // 2 of 4 alphabetic characters uppercase is 50%, below the bar.
        assert!(!is_acronym_form("WiFi"));
        assert!(!is_acronym_form("A")); // too short
        assert!(!is_acronym_form("ABCDEFGHIJK")); // too long
        assert!(!is_acronym_form("(A)")); // first char not alphanumeric
        assert!(!is_acronym_form("42")); // no alphabetic characters
    }

    #[test]
    fn long_form_direct_match() {
        let window = toks("Hidden Markov Models");
        let m = best_long_form("HMM", &window).unwrap();
        assert_eq!((m.start, m.end), (0, 3));
    }

    #[test]
    fn long_form_algorithmic_false_positive() {
        // The matcher happily accepts this; it has no notion of phrasehood.
        let window = toks("complicated neural network");
        let m = best_long_form("CNN", &window).unwrap();
        assert_eq!((m.start, m.end), (0, 3));
    }

    #[test]
    fn long_form_no_alignment() {
        assert_eq!(best_long_form("XYZ", &toks("hidden markov models")), None);
    }

    #[test]
    fn long_form_is_shortest_suffix() {
        let window = toks("we trained Hidden Markov Models");
        let m = best_long_form("HMM", &window).unwrap();
        assert_eq!((m.start, m.end), (2, 5));
    }

    #[test]
    fn long_form_first_char_must_start_a_word() {
        // "chm" contains h and m but no word starts with h except nothing;
        // first acronym char must align with a word start.
        assert_eq!(best_long_form("HM", &toks("chm model")), None);
        let m = best_long_form("HM", &toks("hidden model")).unwrap();
        assert_eq!((m.start, m.end), (0, 2));
    }

    #[test]
    fn extract_canonical_pattern() {
        let tokens = toks("We use Hidden Markov Models ( HMM ) here");
        let pairs = extract_pairs(&tokens, ExtractOptions::default());
        assert_eq!(pairs.len(), 1);
        assert_eq!(
            pairs[0].long,
            Mention::new(MentionClass::Long, 2, 5)
        );
        assert_eq!(
            pairs[0].short,
            Mention::new(MentionClass::Short, 6, 7)
        );
    }

    #[test]
    fn extract_nothing_without_window() {
        let tokens = toks("( HMM ) is used");
        assert!(extract_pairs(&tokens, ExtractOptions::default()).is_empty());
    }

    #[test]
    fn extract_two_pairs_without_overlap() {
        let tokens =
            toks("Hidden Markov Models ( HMM ) and Conditional Random Fields ( CRF ) work");
        let pairs = extract_pairs(&tokens, ExtractOptions::default());
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].long, Mention::new(MentionClass::Long, 0, 3));
        assert_eq!(pairs[1].long, Mention::new(MentionClass::Long, 7, 10));
        let mut mentions: Vec<Mention> =
            pairs.iter().flat_map(|p| [p.short, p.long]).collect();
        mentions.sort();
        for w in mentions.windows(2) {
            assert!(!w[0].overlaps(&w[1]));
        }
    }

    #[test]
    fn window_never_reaches_into_previous_pair() {
        // Without the frontier, the second window would include the earlier
        // "( MN )" and the matcher would claim a long form overlapping it.
        let tokens = toks("Magnetic Noise ( MN ) Xx ( MN )");
        let pairs = extract_pairs(&tokens, ExtractOptions::default());
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].long, Mention::new(MentionClass::Long, 0, 2));
    }

    #[test]
    fn reverse_pattern_behind_flag() {
        let tokens = toks("HMM ( Hidden Markov Models ) performed well");
        assert!(extract_pairs(&tokens, ExtractOptions::default()).is_empty());
        let pairs = extract_pairs(
            &tokens,
            ExtractOptions {
                reverse_pattern: true,
            },
        );
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].short, Mention::new(MentionClass::Short, 0, 1));
        assert_eq!(pairs[0].long, Mention::new(MentionClass::Long, 2, 5));
    }

    #[test]
    fn tags_for_canonical_pattern() {
        use Tag::*;
        let tokens = toks("We use Hidden Markov Models ( HMM ) here");
        let tags = tag_sentence(&tokens, ExtractOptions::default());
        assert_eq!(
            tags,
            vec![O, O, BLong, ILong, ILong, O, BShort, O, O]
        );
    }

    #[test]
    fn no_pairs_all_o() {
        let tokens = toks("plain words only");
        assert_eq!(
            tag_sentence(&tokens, ExtractOptions::default()),
            vec![Tag::O; 3]
        );
    }

    #[test]
    fn overlapping_pairs_rejected() {
        let tokens = toks("a b c d");
        let pairs = vec![
            PairCandidate {
                short: Mention::new(MentionClass::Short, 0, 1),
                long: Mention::new(MentionClass::Long, 1, 3),
            },
            PairCandidate {
                short: Mention::new(MentionClass::Short, 2, 3),
                long: Mention::new(MentionClass::Long, 3, 4),
            },
        ];
        assert!(matches!(
            pairs_to_tags(&tokens, &pairs),
            Err(RuleError::OverlappingPairs(..))
        ));
    }

    fn arb_sentence() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(
            prop_oneof![
                Just("(".to_string()),
                Just(")".to_string()),
                Just("HMM".to_string()),
                Just("CRF".to_string()),
                Just("Hidden".to_string()),
                Just("Markov".to_string()),
                Just("Models".to_string()),
                Just("Conditional".to_string()),
                Just("Random".to_string()),
                Just("Fields".to_string()),
                Just("the".to_string()),
                Just("of".to_string()),
            ],
            0..14,
        )
    }

    proptest! {
        #[test]
        fn extracted_mentions_never_overlap_or_cover_parens(tokens in arb_sentence()) {
            let pairs = extract_pairs(&tokens, ExtractOptions { reverse_pattern: true });
            let mut mentions: Vec<Mention> =
                pairs.iter().flat_map(|p| [p.short, p.long]).collect();
            mentions.sort();
            for w in mentions.windows(2) {
                prop_assert!(!w[0].overlaps(&w[1]));
            }
            for m in &mentions {
                for t in &tokens[m.start..m.end] {
                    prop_assert!(t != "(" && t != ")");
                }
            }
        }

        #[test]
        fn long_forms_are_window_suffixes(tokens in arb_sentence()) {
            // Forward pattern: the long form must end right before "(".
            let pairs = extract_pairs(&tokens, ExtractOptions::default());
            for p in pairs {
                prop_assert_eq!(tokens[p.long.end].as_str(), "(");
            }
        }

        #[test]
        fn rule_tags_are_always_valid_bio(tokens in arb_sentence()) {
            let tags = tag_sentence(&tokens, ExtractOptions { reverse_pattern: true });
            prop_assert!(validate_bio(&tags).is_empty());
        }
    }
}
