//! Suffix segmentation and syllabification.
//!
//! Morphology is deliberately flat: one longest-match suffix per word from
//! the shipped lexicon, remainder is the root. Syllables are built by onset
//! maximization over the parsed phonemes — every vowel opens a nucleus
//! (adjacent identical vowels merge into a long nucleus), the consonant
//! directly before a nucleus becomes its onset, all other consonants close
//! the preceding syllable.

use super::g2p::{G2pTable, ParsedPhoneme};
use super::{MorphemeKind, Span, VowelClass};

/// Split a romanized word at the longest lexicon suffix.
///
/// Returns `(root, Some(suffix))` or `(word, None)`. A match is rejected if
/// it would leave an empty root, so a word that *is* a suffix stays a root.
pub fn split_suffix<'a>(word: &'a str, suffixes: &[String]) -> (&'a str, Option<&'a str>) {
    let mut best: Option<&str> = None;
    for s in suffixes {
        if word.len() > s.len() && word.ends_with(s.as_str()) {
            if best.is_none_or(|b| s.len() > b.len()) {
                best = Some(s);
            }
        }
    }
    match best {
        Some(s) => (&word[..word.len() - s.len()], Some(&word[word.len() - s.len()..])),
        None => (word, None),
    }
}

/// Morpheme spans (in word-local phoneme indices) for a parsed word.
///
/// The suffix boundary must coincide with a phoneme span start; if the
/// romanized split falls inside a digraph the whole word is kept as a root.
pub fn morpheme_spans(
    word: &str,
    parsed: &[ParsedPhoneme],
    suffixes: &[String],
) -> Vec<(Span, MorphemeKind)> {
    if parsed.is_empty() {
        return vec![];
    }
    let word_base = parsed[0].byte_start;
    let (root, suffix) = split_suffix(word, suffixes);
    if let Some(_sfx) = suffix {
        let boundary = word_base + root.len();
        if let Some(idx) = parsed.iter().position(|p| p.byte_start == boundary) {
            if idx > 0 {
                return vec![
                    (Span::new(0, idx), MorphemeKind::Root),
                    (Span::new(idx, parsed.len()), MorphemeKind::Suffix),
                ];
            }
        }
    }
    vec![(Span::new(0, parsed.len()), MorphemeKind::Root)]
}

/// Syllable spans (word-local phoneme indices) by onset maximization.
pub fn syllabify(parsed: &[ParsedPhoneme], table: &G2pTable) -> Vec<Span> {
    let n = parsed.len();
    if n == 0 {
        return vec![];
    }
    let is_vowel: Vec<bool> = parsed
        .iter()
        .map(|p| table.info(p.id).class != VowelClass::Consonant)
        .collect();

    // nuclei: maximal runs of vowels with the same id
    let mut nuclei: Vec<Span> = Vec::new();
    let mut i = 0;
    while i < n {
        if is_vowel[i] {
            let mut j = i + 1;
            while j < n && is_vowel[j] && parsed[j].id == parsed[i].id {
                j += 1;
            }
            nuclei.push(Span::new(i, j));
            i = j;
        } else {
            i += 1;
        }
    }
    if nuclei.is_empty() {
        return vec![Span::new(0, n)];
    }

    // onset starts: the first syllable swallows any word-initial cluster,
    // later syllables take exactly one preceding consonant
    let mut starts: Vec<usize> = Vec::with_capacity(nuclei.len());
    for (k, nuc) in nuclei.iter().enumerate() {
        if k == 0 {
            starts.push(0);
        } else {
            let prev_end = nuclei[k - 1].end;
            let onset = if nuc.start > prev_end { nuc.start - 1 } else { nuc.start };
            starts.push(onset);
        }
    }
    let mut spans = Vec::with_capacity(nuclei.len());
    for k in 0..starts.len() {
        let end = if k + 1 < starts.len() { starts[k + 1] } else { n };
        spans.push(Span::new(starts[k], end));
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::Frontend;

    #[test]
    fn longest_suffix_wins() {
        let fe = Frontend::builtin();
        // "-mbi" beats "-i"
        let (root, sfx) = split_suffix("genembi", fe.suffixes());
        assert_eq!((root, sfx), ("gene", Some("mbi")));
    }

    #[test]
    fn sunggira_splits_at_ra() {
        let fe = Frontend::builtin();
        let (root, sfx) = split_suffix("šunggira", fe.suffixes());
        assert_eq!((root, sfx), ("šunggi", Some("ra")));
    }

    #[test]
    fn booi_splits_at_genitive_i() {
        let fe = Frontend::builtin();
        let (root, sfx) = split_suffix("booi", fe.suffixes());
        assert_eq!((root, sfx), ("boo", Some("i")));
    }

    #[test]
    fn word_without_suffix_is_bare_root() {
        let fe = Frontend::builtin();
        assert_eq!(split_suffix("ama", fe.suffixes()), ("ama", None));
        // a word equal to a suffix stays a root
        assert_eq!(split_suffix("i", fe.suffixes()), ("i", None));
    }

    #[test]
    fn ama_has_two_syllables() {
        let fe = Frontend::builtin();
        let parsed = fe.g2p().parse_word("ama", 0).unwrap();
        let syl = syllabify(&parsed, fe.g2p());
        assert_eq!(syl, vec![Span::new(0, 1), Span::new(1, 3)]);
    }

    #[test]
    fn sunggi_syllabifies_as_shung_gi() {
        let fe = Frontend::builtin();
        let parsed = fe.g2p().parse_word("šunggi", 0).unwrap();
        let syl = syllabify(&parsed, fe.g2p());
        // ʃ u n k | k i
        assert_eq!(syl, vec![Span::new(0, 4), Span::new(4, 6)]);
    }

    #[test]
    fn long_vowel_merges_into_one_nucleus() {
        let fe = Frontend::builtin();
        let parsed = fe.g2p().parse_word("boo", 0).unwrap();
        let syl = syllabify(&parsed, fe.g2p());
        assert_eq!(syl, vec![Span::new(0, 3)]);
        // but "booi": the different trailing vowel starts its own syllable
        let parsed = fe.g2p().parse_word("booi", 0).unwrap();
        let syl = syllabify(&parsed, fe.g2p());
        assert_eq!(syl, vec![Span::new(0, 3), Span::new(3, 4)]);
    }
}
