//! Sentence-type, prominence and boundary rules.
//!
//! The paper-side taxonomy names six intonation types without listing them;
//! the enum below is a documented stand-in. Type detection is rule-based:
//! terminal punctuation first, then particle/suffix heuristics.

use super::morphology::split_suffix;

pub const PROMINENCE_FUNCTION_WORD: f32 = 0.2;
pub const PROMINENCE_CONTENT_WORD: f32 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SentenceType {
    Declarative,
    Interrogative,
    Imperative,
    Exclamative,
    Continuative,
    Emphatic,
}

impl SentenceType {
    pub const ALL: [SentenceType; 6] = [
        SentenceType::Declarative,
        SentenceType::Interrogative,
        SentenceType::Imperative,
        SentenceType::Exclamative,
        SentenceType::Continuative,
        SentenceType::Emphatic,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&t| t == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            SentenceType::Declarative => "declarative",
            SentenceType::Interrogative => "interrogative",
            SentenceType::Imperative => "imperative",
            SentenceType::Exclamative => "exclamative",
            SentenceType::Continuative => "continuative",
            SentenceType::Emphatic => "emphatic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryStrength {
    None,
    Minor,
    Major,
}

impl BoundaryStrength {
    pub fn as_f32(self) -> f32 {
        match self {
            BoundaryStrength::None => 0.0,
            BoundaryStrength::Minor => 0.5,
            BoundaryStrength::Major => 1.0,
        }
    }
}

/// Global intonation plus per-word prominence and boundary strength.
#[derive(Debug, Clone, PartialEq)]
pub struct ProsodyAnnotation {
    pub sentence_type: SentenceType,
    /// One value in [0,1] per word.
    pub prominence: Vec<f32>,
    /// Strength of the boundary after each word.
    pub boundaries: Vec<BoundaryStrength>,
}

/// Decide the sentence type from terminal punctuation and final-word cues.
///
/// Order: final particle "ni"/"o" forces interrogative and "kai" emphatic
/// regardless of punctuation; then `?` → interrogative; `!` → imperative
/// when the last word carries the optative "-ki", exclamative otherwise;
/// `.`/none → continuative when the last word ends in a converb
/// ("-me"/"-fi"), declarative otherwise.
pub fn sentence_type(words: &[&str], terminal: Option<char>, suffixes: &[String]) -> SentenceType {
    let last = words.last().copied().unwrap_or("");
    if last == "ni" || last == "o" {
        return SentenceType::Interrogative;
    }
    if last == "kai" {
        return SentenceType::Emphatic;
    }
    let last_suffix = split_suffix(last, suffixes).1;
    match terminal {
        Some('?') => SentenceType::Interrogative,
        Some('!') => {
            if last_suffix == Some("ki") {
                SentenceType::Imperative
            } else {
                SentenceType::Exclamative
            }
        }
        _ => match last_suffix {
            Some("me") | Some("fi") => SentenceType::Continuative,
            _ => SentenceType::Declarative,
        },
    }
}

/// Per-word prominence and boundary strengths.
///
/// Particle (function) words are weakened; the final word closes a major
/// boundary, particles close minor ones, everything else none.
pub fn word_prosody(
    words: &[&str],
    particles: &[String],
) -> (Vec<f32>, Vec<BoundaryStrength>) {
    let n = words.len();
    let mut prominence = Vec::with_capacity(n);
    let mut boundaries = Vec::with_capacity(n);
    for (i, w) in words.iter().enumerate() {
        let is_particle = particles.iter().any(|p| p == w);
        prominence.push(if is_particle {
            PROMINENCE_FUNCTION_WORD
        } else {
            PROMINENCE_CONTENT_WORD
        });
        boundaries.push(if i + 1 == n {
            BoundaryStrength::Major
        } else if is_particle {
            BoundaryStrength::Minor
        } else {
            BoundaryStrength::None
        });
    }
    (prominence, boundaries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::Frontend;

    #[test]
    fn punctuation_forced_types() {
        let fe = Frontend::builtin();
        let s = fe.suffixes();
        assert_eq!(sentence_type(&["ama", "jihe"], Some('.'), s), SentenceType::Declarative);
        assert_eq!(sentence_type(&["ama", "jihe"], Some('?'), s), SentenceType::Interrogative);
        assert_eq!(sentence_type(&["ama", "jihe"], Some('!'), s), SentenceType::Exclamative);
        assert_eq!(sentence_type(&["ama", "jihe"], None, s), SentenceType::Declarative);
    }

    #[test]
    fn particle_and_suffix_cues() {
        let fe = Frontend::builtin();
        let s = fe.suffixes();
        assert_eq!(sentence_type(&["ama", "ni"], Some('.'), s), SentenceType::Interrogative);
        assert_eq!(sentence_type(&["ama", "kai"], Some('.'), s), SentenceType::Emphatic);
        assert_eq!(sentence_type(&["geneki"], Some('!'), s), SentenceType::Imperative);
        assert_eq!(sentence_type(&["geneme"], Some('.'), s), SentenceType::Continuative);
        assert_eq!(sentence_type(&["genefi"], None, s), SentenceType::Continuative);
    }

    #[test]
    fn function_words_are_weakened() {
        let fe = Frontend::builtin();
        let (prom, bnd) = word_prosody(&["boo", "i", "ama"], fe.particles());
        assert!(prom[0] >= 0.5 && prom[2] >= 0.5);
        assert!(prom[1] <= 0.3);
        assert_eq!(bnd[1], BoundaryStrength::Minor);
        assert_eq!(bnd[2], BoundaryStrength::Major);
        assert_eq!(bnd[0], BoundaryStrength::None);
    }
}
