//! Three-tier Manchu text frontend.
//!
//! Converts romanized (Möllendorff-style) text into the condition bundle
//! used by the synthesizer: phoneme ids with vowel classes, syllable and
//! root/suffix structure, and sentence-level prosody. All rules live in
//! shipped data files (`data/g2p.tsv`, `data/suffixes.txt`,
//! `data/particles.txt`); the tables are documented stand-ins, since no
//! authoritative inventory exists for this task.

pub mod g2p;
pub mod morphology;
pub mod prosody;

use std::fmt::Write as _;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use g2p::{G2pTable, ParsedPhoneme};
pub use prosody::{BoundaryStrength, ProsodyAnnotation, SentenceType};

pub const SENTENCE_PUNCTUATION: [char; 3] = ['.', '?', '!'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VowelClass {
    Back,
    Front,
    Neutral,
    Consonant,
}

impl VowelClass {
    pub fn name(self) -> &'static str {
        match self {
            VowelClass::Back => "back",
            VowelClass::Front => "front",
            VowelClass::Neutral => "neutral",
            VowelClass::Consonant => "consonant",
        }
    }
}

/// Half-open phoneme index range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, i: usize) -> bool {
        i >= self.start && i < self.end
    }

    fn shifted(self, by: usize) -> Span {
        Span::new(self.start + by, self.end + by)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorphemeKind {
    Root,
    Suffix,
}

/// Phoneme tier: inventory ids plus per-phoneme metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhonemeSeq {
    pub ids: Vec<u32>,
    /// IPA symbol per phoneme (denormalized from the inventory for display).
    pub ipa: Vec<String>,
    /// Romanized span that produced each phoneme; concatenating a word's
    /// spans reproduces the word.
    pub roman: Vec<String>,
    pub classes: Vec<VowelClass>,
}

impl PhonemeSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Syllable tier: syllable spans, morpheme spans, word ends.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SyllableStructure {
    pub syllables: Vec<Span>,
    pub morphemes: Vec<(Span, MorphemeKind)>,
    /// End index (exclusive) of each word in phoneme coordinates.
    pub word_boundaries: Vec<usize>,
}

/// The full condition bundle for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalText {
    pub phon: PhonemeSeq,
    pub syll: SyllableStructure,
    pub pros: ProsodyAnnotation,
    pub source: String,
    /// Vowel-harmony findings (never fatal; loanwords exist).
    pub harmony_warnings: Vec<String>,
}

impl HierarchicalText {
    /// Word index for each phoneme, derived from `word_boundaries`.
    pub fn word_of_phoneme(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.phon.len());
        let mut w = 0usize;
        for i in 0..self.phon.len() {
            while w < self.syll.word_boundaries.len() && i >= self.syll.word_boundaries[w] {
                w += 1;
            }
            out.push(w);
        }
        out
    }
}

/// Loaded rule tables plus the operations over them.
#[derive(Debug, Clone)]
pub struct Frontend {
    table: G2pTable,
    suffixes: Vec<String>,
    particles: Vec<String>,
}

fn parse_word_list(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| l.to_string())
        .collect()
}

static BUILTIN: OnceLock<Frontend> = OnceLock::new();

impl Frontend {
    /// Frontend over the tables compiled into the binary.
    pub fn builtin() -> &'static Frontend {
        BUILTIN.get_or_init(|| {
            Frontend::from_table_text(
                include_str!("../../data/g2p.tsv"),
                include_str!("../../data/suffixes.txt"),
                include_str!("../../data/particles.txt"),
            )
            .expect("builtin tables parse")
        })
    }

    pub fn from_table_text(g2p: &str, suffixes: &str, particles: &str) -> Result<Frontend> {
        Ok(Frontend {
            table: G2pTable::parse(g2p)?,
            suffixes: parse_word_list(suffixes),
            particles: parse_word_list(particles),
        })
    }

    pub fn g2p(&self) -> &G2pTable {
        &self.table
    }

    pub fn suffixes(&self) -> &[String] {
        &self.suffixes
    }

    pub fn particles(&self) -> &[String] {
        &self.particles
    }

    pub fn vocab_size(&self) -> usize {
        self.table.inventory().len()
    }

    fn seq_from_parsed(&self, parsed: &[ParsedPhoneme]) -> PhonemeSeq {
        let mut seq = PhonemeSeq::default();
        for p in parsed {
            let info = self.table.info(p.id);
            seq.ids.push(p.id);
            seq.ipa.push(info.ipa.clone());
            seq.roman.push(p.roman.clone());
            seq.classes.push(info.class);
        }
        seq
    }

    /// Deterministic longest-match transduction of romanized text. Spaces
    /// and sentence punctuation are consumed silently; anything else
    /// outside the table is an error naming its byte offset.
    pub fn romanize_to_phonemes(&self, text: &str) -> Result<PhonemeSeq> {
        let mut parsed = Vec::new();
        for (offset, word) in split_words(text) {
            parsed.extend(self.table.parse_word(word, offset)?);
        }
        Ok(self.seq_from_parsed(&parsed))
    }

    /// Morphological and syllabic structure of a single word.
    pub fn decompose_morphology(&self, word: &str) -> Result<SyllableStructure> {
        let parsed = self.table.parse_word(word, 0)?;
        Ok(SyllableStructure {
            syllables: morphology::syllabify(&parsed, &self.table),
            morphemes: morphology::morpheme_spans(word, &parsed, &self.suffixes),
            word_boundaries: vec![parsed.len()],
        })
    }

    /// Sentence type, per-word prominence and boundary strengths.
    pub fn analyze_prosody(&self, sentence: &str) -> Result<ProsodyAnnotation> {
        let (body, terminal) = split_terminal(sentence.trim());
        let words: Vec<&str> = split_words(body).map(|(_, w)| w).collect();
        let sentence_type = prosody::sentence_type(&words, terminal, &self.suffixes);
        let (prominence, boundaries) = prosody::word_prosody(&words, &self.particles);
        Ok(ProsodyAnnotation {
            sentence_type,
            prominence,
            boundaries,
        })
    }

    /// Compose all three tiers and cross-validate their indices.
    pub fn build_hierarchical_representation(&self, text: &str) -> Result<HierarchicalText> {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(Error::EmptyInput(
                "text is empty after trimming".to_string(),
            ));
        }
        let (body, terminal) = split_terminal(trimmed);
        let words: Vec<(usize, &str)> = split_words(body).collect();
        if words.is_empty() {
            return Err(Error::EmptyInput(format!(
                "no words in {trimmed:?}"
            )));
        }

        let mut parsed_all: Vec<ParsedPhoneme> = Vec::new();
        let mut syll = SyllableStructure::default();
        let mut harmony_warnings = Vec::new();
        for &(offset, word) in &words {
            let parsed = self.table.parse_word(word, offset)?;
            let base = parsed_all.len();
            for span in morphology::syllabify(&parsed, &self.table) {
                syll.syllables.push(span.shifted(base));
            }
            for (span, kind) in morphology::morpheme_spans(word, &parsed, &self.suffixes) {
                if kind == MorphemeKind::Root {
                    if let Some(w) = harmony_violation(&parsed[span.start..span.end], &self.table) {
                        harmony_warnings.push(format!("word {word:?}: {w}"));
                    }
                }
                syll.morphemes.push((span.shifted(base), kind));
            }
            parsed_all.extend(parsed);
            syll.word_boundaries.push(parsed_all.len());
        }

        let word_strs: Vec<&str> = words.iter().map(|&(_, w)| w).collect();
        let sentence_type = prosody::sentence_type(&word_strs, terminal, &self.suffixes);
        let (prominence, boundaries) = prosody::word_prosody(&word_strs, &self.particles);

        let ht = HierarchicalText {
            phon: self.seq_from_parsed(&parsed_all),
            syll,
            pros: ProsodyAnnotation {
                sentence_type,
                prominence,
                boundaries,
            },
            source: trimmed.to_string(),
            harmony_warnings,
        };
        validate_tiers(&ht)?;
        Ok(ht)
    }

    /// Deterministic JSON-like dump of all three tiers (CLI `frontend`).
    pub fn dump(&self, ht: &HierarchicalText) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{{");
        let _ = writeln!(out, "  \"text\": {:?},", ht.source);
        let _ = writeln!(out, "  \"phonemes\": [");
        for i in 0..ht.phon.len() {
            let _ = writeln!(
                out,
                "    {{\"id\": {}, \"ipa\": {:?}, \"roman\": {:?}, \"class\": \"{}\"}}{}",
                ht.phon.ids[i],
                ht.phon.ipa[i],
                ht.phon.roman[i],
                ht.phon.classes[i].name(),
                if i + 1 < ht.phon.len() { "," } else { "" }
            );
        }
        let _ = writeln!(out, "  ],");
        let syl: Vec<String> = ht
            .syll
            .syllables
            .iter()
            .map(|s| format!("[{}, {}]", s.start, s.end))
            .collect();
        let _ = writeln!(out, "  \"syllables\": [{}],", syl.join(", "));
        let mor: Vec<String> = ht
            .syll
            .morphemes
            .iter()
            .map(|(s, k)| {
                format!(
                    "{{\"span\": [{}, {}], \"kind\": \"{}\"}}",
                    s.start,
                    s.end,
                    match k {
                        MorphemeKind::Root => "root",
                        MorphemeKind::Suffix => "suffix",
                    }
                )
            })
            .collect();
        let _ = writeln!(out, "  \"morphemes\": [{}],", mor.join(", "));
        let wb: Vec<String> = ht.syll.word_boundaries.iter().map(|b| b.to_string()).collect();
        let _ = writeln!(out, "  \"word_boundaries\": [{}],", wb.join(", "));
        let _ = writeln!(
            out,
            "  \"sentence_type\": \"{}\",",
            ht.pros.sentence_type.name()
        );
        let prom: Vec<String> = ht.pros.prominence.iter().map(|p| format!("{p:.2}")).collect();
        let _ = writeln!(out, "  \"prominence\": [{}],", prom.join(", "));
        let bnd: Vec<String> = ht
            .pros
            .boundaries
            .iter()
            .map(|b| {
                format!(
                    "\"{}\"",
                    match b {
                        BoundaryStrength::None => "none",
                        BoundaryStrength::Minor => "minor",
                        BoundaryStrength::Major => "major",
                    }
                )
            })
            .collect();
        let _ = writeln!(out, "  \"boundaries\": [{}],", bnd.join(", "));
        let warn: Vec<String> = ht.harmony_warnings.iter().map(|w| format!("{w:?}")).collect();
        let _ = writeln!(out, "  \"harmony_warnings\": [{}]", warn.join(", "));
        let _ = write!(out, "}}");
        out
    }
}

/// Words with their byte offsets; punctuation is dropped.
fn split_words(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split_whitespace().filter_map(move |w| {
        let trimmed = w.trim_matches(|c| SENTENCE_PUNCTUATION.contains(&c));
        if trimmed.is_empty() {
            None
        } else {
            // offset of the trimmed word within the original text
            let base = w.as_ptr() as usize - text.as_ptr() as usize;
            let inner = trimmed.as_ptr() as usize - w.as_ptr() as usize;
            Some((base + inner, trimmed))
        }
    })
}

fn split_terminal(text: &str) -> (&str, Option<char>) {
    match text.chars().last() {
        Some(c) if SENTENCE_PUNCTUATION.contains(&c) => {
            (&text[..text.len() - c.len_utf8()], Some(c))
        }
        _ => (text, None),
    }
}

/// Back and front vowels may not share a root.
fn harmony_violation(parsed: &[ParsedPhoneme], table: &G2pTable) -> Option<String> {
    let mut has_back = false;
    let mut has_front = false;
    for p in parsed {
        match table.info(p.id).class {
            VowelClass::Back => has_back = true,
            VowelClass::Front => has_front = true,
            _ => {}
        }
    }
    if has_back && has_front {
        Some("back and front vowels co-occur in root".to_string())
    } else {
        None
    }
}

/// Tier invariants: syllables and morphemes partition the phoneme sequence,
/// word boundaries are increasing, suffixes follow roots, prosody vectors
/// are word-aligned.
pub fn validate_tiers(ht: &HierarchicalText) -> Result<()> {
    let n = ht.phon.len();
    let check_partition = |spans: &[Span], what: &str| -> Result<()> {
        let mut cursor = 0usize;
        for s in spans {
            if s.start != cursor || s.is_empty() {
                return Err(Error::contract(
                    "frontend",
                    format!("{what} spans do not partition phonemes: {spans:?}"),
                ));
            }
            cursor = s.end;
        }
        if cursor != n {
            return Err(Error::contract(
                "frontend",
                format!("{what} spans cover {cursor} of {n} phonemes"),
            ));
        }
        Ok(())
    };
    check_partition(&ht.syll.syllables, "syllable")?;
    let morph_spans: Vec<Span> = ht.syll.morphemes.iter().map(|(s, _)| *s).collect();
    check_partition(&morph_spans, "morpheme")?;
    for w in ht.syll.word_boundaries.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::contract(
                "frontend",
                "word boundaries not increasing".to_string(),
            ));
        }
    }
    if ht.syll.word_boundaries.last() != Some(&n) {
        return Err(Error::contract(
            "frontend",
            "last word boundary must equal phoneme count".to_string(),
        ));
    }
    // a suffix must directly follow a root within the same word
    for (i, (span, kind)) in ht.syll.morphemes.iter().enumerate() {
        if *kind == MorphemeKind::Suffix {
            let ok = i > 0
                && ht.syll.morphemes[i - 1].1 == MorphemeKind::Root
                && ht.syll.morphemes[i - 1].0.end == span.start
                && !ht.syll.word_boundaries.contains(&span.start);
            if !ok {
                return Err(Error::contract(
                    "frontend",
                    format!("suffix span at {} does not follow a root", span.start),
                ));
            }
        }
    }
    let words = ht.syll.word_boundaries.len();
    if ht.pros.prominence.len() != words || ht.pros.boundaries.len() != words {
        return Err(Error::contract(
            "frontend",
            "prosody vectors are not word-aligned".to_string(),
        ));
    }
    for &p in &ht.pros.prominence {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::contract(
                "frontend",
                format!("prominence {p} out of range"),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ama_three_phonemes_with_classes() {
        let fe = Frontend::builtin();
        let seq = fe.romanize_to_phonemes("ama").unwrap();
        assert_eq!(seq.ipa, vec!["a", "m", "a"]);
        assert_eq!(
            seq.classes,
            vec![VowelClass::Back, VowelClass::Consonant, VowelClass::Back]
        );
    }

    #[test]
    fn empty_text_gives_empty_sequence() {
        let fe = Frontend::builtin();
        let seq = fe.romanize_to_phonemes("").unwrap();
        assert!(seq.is_empty());
    }

    #[test]
    fn build_fails_on_empty_input() {
        let fe = Frontend::builtin();
        assert!(matches!(
            fe.build_hierarchical_representation("   "),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn sunggira_question_three_consistent_tiers() {
        let fe = Frontend::builtin();
        let ht = fe.build_hierarchical_representation("šunggira?").unwrap();
        assert_eq!(ht.pros.sentence_type, SentenceType::Interrogative);
        assert_eq!(ht.phon.len(), 8); // ʃ u n k k i r a
        let (root, kind) = ht.syll.morphemes[0];
        assert_eq!((root.start, root.end, kind), (0, 6, MorphemeKind::Root));
        let (sfx, kind) = ht.syll.morphemes[1];
        assert_eq!((sfx.start, sfx.end, kind), (6, 8, MorphemeKind::Suffix));
        validate_tiers(&ht).unwrap();
    }

    #[test]
    fn single_word_defaults() {
        let fe = Frontend::builtin();
        let ht = fe.build_hierarchical_representation("ama").unwrap();
        assert_eq!(ht.syll.word_boundaries, vec![3]);
        assert_eq!(ht.syll.syllables.len(), 2);
        assert_eq!(ht.pros.sentence_type, SentenceType::Declarative);
        assert_eq!(ht.pros.boundaries, vec![BoundaryStrength::Major]);
    }

    #[test]
    fn determinism_bit_identical() {
        let fe = Frontend::builtin();
        let a = fe.build_hierarchical_representation("boo i ama jihe?").unwrap();
        let b = fe.build_hierarchical_representation("boo i ama jihe?").unwrap();
        assert_eq!(a, b);
        assert_eq!(fe.dump(&a), fe.dump(&b));
    }

    #[test]
    fn roundtrip_roman_spans_rebuild_words() {
        let fe = Frontend::builtin();
        let ht = fe.build_hierarchical_representation("šunggira booi amba").unwrap();
        let words: Vec<&str> = ht.source.split_whitespace().collect();
        let mut start = 0usize;
        for (w, &end) in words.iter().zip(&ht.syll.word_boundaries) {
            let rebuilt: String = ht.phon.roman[start..end].concat();
            assert_eq!(&rebuilt, w);
            start = end;
        }
    }

    #[test]
    fn harmony_violation_is_warning_not_error() {
        let fe = Frontend::builtin();
        // "tale" mixes back a and front e in one root ("le" is no suffix)
        let ht = fe.build_hierarchical_representation("tale").unwrap();
        assert_eq!(ht.harmony_warnings.len(), 1);
        // harmonic roots carry no warning
        let ht = fe.build_hierarchical_representation("ama boode").unwrap();
        assert!(ht.harmony_warnings.is_empty());
    }

    #[test]
    fn word_of_phoneme_tracks_boundaries() {
        let fe = Frontend::builtin();
        let ht = fe.build_hierarchical_representation("boo i").unwrap();
        assert_eq!(ht.word_of_phoneme(), vec![0, 0, 0, 1]);
    }

    #[test]
    fn dump_shape_is_stable() {
        let fe = Frontend::builtin();
        let ht = fe.build_hierarchical_representation("ama jihe.").unwrap();
        let d = fe.dump(&ht);
        assert!(d.starts_with('{') && d.ends_with('}'));
        assert!(d.contains("\"sentence_type\": \"declarative\""));
        assert!(d.contains("\"phonemes\""));
    }
}
