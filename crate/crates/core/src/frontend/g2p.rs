//! Romanization → IPA transduction over a shipped, editable table.

use std::collections::HashMap;

use super::VowelClass;
use crate::error::{Error, Result};

/// One inventory symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeInfo {
    pub ipa: String,
    pub class: VowelClass,
}

/// Longest-match grapheme-to-phoneme table.
#[derive(Debug, Clone)]
pub struct G2pTable {
    /// romanized key → inventory id
    keys: HashMap<String, u32>,
    /// longest key length in chars, for the match window
    max_key_chars: usize,
    inventory: Vec<PhonemeInfo>,
}

/// A phoneme occurrence inside one parsed word.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedPhoneme {
    pub id: u32,
    /// Romanized span that produced this phoneme.
    pub roman: String,
    /// Byte offset of `roman` within the parsed string.
    pub byte_start: usize,
}

impl G2pTable {
    /// Parse the `romanized<TAB>ipa[<TAB>class]` table format.
    pub fn parse(text: &str) -> Result<G2pTable> {
        let mut keys = HashMap::new();
        let mut inventory: Vec<PhonemeInfo> = Vec::new();
        let mut max_key_chars = 1;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim_end();
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 2 || fields.len() > 3 {
                return Err(Error::Config(format!(
                    "g2p table line {}: expected 2 or 3 tab-separated fields",
                    lineno + 1
                )));
            }
            let roman = fields[0].trim().to_string();
            let ipa = fields[1].trim().to_string();
            let class = match fields.get(2).map(|c| c.trim()) {
                None | Some("") => VowelClass::Consonant,
                Some("back") => VowelClass::Back,
                Some("front") => VowelClass::Front,
                Some("neutral") => VowelClass::Neutral,
                Some(other) => {
                    return Err(Error::Config(format!(
                        "g2p table line {}: unknown vowel class {other:?}",
                        lineno + 1
                    )))
                }
            };
            if roman.is_empty() || ipa.is_empty() {
                return Err(Error::Config(format!(
                    "g2p table line {}: empty field",
                    lineno + 1
                )));
            }
            let id = match inventory.iter().position(|p| p.ipa == ipa) {
                Some(pos) => {
                    if inventory[pos].class != class {
                        return Err(Error::Config(format!(
                            "g2p table line {}: ipa {ipa:?} re-declared with a different class",
                            lineno + 1
                        )));
                    }
                    pos as u32
                }
                None => {
                    inventory.push(PhonemeInfo { ipa, class });
                    (inventory.len() - 1) as u32
                }
            };
            if keys.insert(roman.clone(), id).is_some() {
                return Err(Error::Config(format!(
                    "g2p table line {}: duplicate romanization {roman:?}",
                    lineno + 1
                )));
            }
            max_key_chars = max_key_chars.max(roman.chars().count());
        }
        if inventory.is_empty() {
            return Err(Error::Config("g2p table is empty".to_string()));
        }
        if inventory.len() > 1024 {
            return Err(Error::Config(format!(
                "g2p inventory has {} symbols, limit is 1024",
                inventory.len()
            )));
        }
        Ok(G2pTable {
            keys,
            max_key_chars,
            inventory,
        })
    }

    pub fn inventory(&self) -> &[PhonemeInfo] {
        &self.inventory
    }

    pub fn info(&self, id: u32) -> &PhonemeInfo {
        &self.inventory[id as usize]
    }

    /// Transduce one contiguous romanized word (no spaces or punctuation).
    /// Digraphs win over single letters via longest-match. `base_offset`
    /// shifts reported byte offsets so errors point into the original text.
    pub fn parse_word(&self, word: &str, base_offset: usize) -> Result<Vec<ParsedPhoneme>> {
        let mut out = Vec::new();
        let mut byte = 0usize;
        while byte < word.len() {
            let rest = &word[byte..];
            let window: Vec<(usize, char)> = rest.char_indices().take(self.max_key_chars).collect();
            let mut matched = None;
            for take in (1..=window.len()).rev() {
                let end = window[take - 1].0 + window[take - 1].1.len_utf8();
                let cand = &rest[..end];
                if let Some(&id) = self.keys.get(cand) {
                    matched = Some((id, cand.to_string(), end));
                    break;
                }
            }
            match matched {
                Some((id, roman, len)) => {
                    out.push(ParsedPhoneme {
                        id,
                        roman,
                        byte_start: base_offset + byte,
                    });
                    byte += len;
                }
                None => {
                    let ch = rest.chars().next().unwrap();
                    return Err(Error::UnknownCharacter {
                        ch,
                        offset: base_offset + byte,
                    });
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::Frontend;

    #[test]
    fn digraph_resolved_before_single_letters() {
        let fe = Frontend::builtin();
        let parsed = fe.g2p().parse_word("sha", 0).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(fe.g2p().info(parsed[0].id).ipa, "ʃ");
        // the caron spelling maps to the same inventory id
        let caron = fe.g2p().parse_word("ša", 0).unwrap();
        assert_eq!(caron[0].id, parsed[0].id);
    }

    #[test]
    fn unknown_character_reports_byte_offset() {
        let fe = Frontend::builtin();
        let err = fe.g2p().parse_word("amq", 10).unwrap_err();
        match err {
            Error::UnknownCharacter { ch, offset } => {
                assert_eq!(ch, 'q');
                assert_eq!(offset, 12);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn sunggi_has_six_segments() {
        let fe = Frontend::builtin();
        let parsed = fe.g2p().parse_word("šunggi", 0).unwrap();
        assert_eq!(parsed.len(), 6);
        let ipa: Vec<&str> = parsed
            .iter()
            .map(|p| fe.g2p().info(p.id).ipa.as_str())
            .collect();
        assert_eq!(ipa, vec!["ʃ", "u", "n", "k", "k", "i"]);
    }
}
