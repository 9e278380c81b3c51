//! Deterministic synthetic corpus.
//!
//! Texts come from a small pseudo-Manchu grammar (20 roots × 8 suffixes ×
//! 6 sentence types plus detached particles); targets are painted by rules
//! in which each condition tier carries information the lower tiers cannot
//! supply:
//!   * every phoneme paints a Gaussian band at a phoneme-hashed mel bin for
//!     4 frames (phoneme tier);
//!   * syllable-initial phonemes get ×1.2 energy and suffix spans ×0.8
//!     (syllable tier — "morin de." and "morinde." share a phoneme string
//!     but differ here);
//!   * each sentence type adds its own global contour (prosody tier —
//!     "ama jihe." and "ama jihe?" differ only here).
//!
//! Values are mapped through a fixed affine so targets sit in a roughly
//! unit range for flow training. Regenerating with the same seed is
//! bit-identical.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::frontend::{Frontend, HierarchicalText, MorphemeKind, SentenceType};
use crate::metrics::wav::{read_raw_f32, write_raw_f32};

pub const RULE_VERSION: u32 = 1;
pub const FRAMES_PER_PHONEME: usize = 4;
/// Speakers cycle over item index; must not exceed the model speaker count.
pub const CORPUS_SPEAKERS: usize = 4;

const ROOTS: [&str; 20] = [
    "ama", "eme", "boo", "morin", "muke", "aga", "edun", "gisun", "bithe", "moo", "usin", "tugi",
    "alin", "šun", "dobori", "jugūn", "ilha", "wehe", "birgan", "tala",
];

const VERB_SUFFIXES: [&str; 5] = ["ra", "re", "ha", "he", "mbi"];
const CASE_SUFFIXES: [&str; 3] = ["i", "be", "de"];

#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub text: String,
    pub ht: HierarchicalText,
    /// Row-major frames × bins target.
    pub mel: Vec<f32>,
    pub frames: usize,
    pub speaker: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub items: Vec<CorpusItem>,
    pub seed: u64,
    pub rule_version: u32,
    pub mel_bins: usize,
}

fn sample_text(rng: &mut ChaCha8Rng, sentence_type: SentenceType) -> String {
    let root = |rng: &mut ChaCha8Rng| ROOTS.choose(rng).unwrap().to_string();
    // a noun phrase: bare root, root+case suffix, or root + detached particle
    let noun = |rng: &mut ChaCha8Rng| -> String {
        let r = root(rng);
        match rng.random_range(0..4) {
            0 => r,
            1 => format!("{r}{}", CASE_SUFFIXES.choose(rng).unwrap()),
            2 => format!("{r} {}", CASE_SUFFIXES.choose(rng).unwrap()),
            _ => root(rng),
        }
    };
    let verb = |rng: &mut ChaCha8Rng| -> String {
        format!("{}{}", root(rng), VERB_SUFFIXES.choose(rng).unwrap())
    };
    match sentence_type {
        SentenceType::Declarative => format!("{} {}.", noun(rng), verb(rng)),
        SentenceType::Interrogative => {
            if rng.random_bool(0.5) {
                format!("{} {}?", noun(rng), verb(rng))
            } else {
                format!("{} {} ni?", noun(rng), verb(rng))
            }
        }
        SentenceType::Imperative => format!("{} {}ki!", noun(rng), root(rng)),
        SentenceType::Exclamative => format!("{} {}!", noun(rng), verb(rng)),
        SentenceType::Continuative => {
            let conv = if rng.random_bool(0.5) { "me" } else { "fi" };
            format!("{} {}{conv}.", noun(rng), root(rng))
        }
        SentenceType::Emphatic => format!("{} {} kai.", noun(rng), verb(rng)),
    }
}

fn contour(sentence_type: SentenceType, u: f64) -> f64 {
    match sentence_type {
        SentenceType::Declarative => -0.4 * u,
        SentenceType::Interrogative => 0.8 * u * u,
        SentenceType::Imperative => 0.6 * (1.0 - u) * (1.0 - u),
        SentenceType::Exclamative => 0.3 + 0.3 * (std::f64::consts::PI * u).sin(),
        SentenceType::Continuative => 0.4 * (2.0 * std::f64::consts::PI * u).sin(),
        SentenceType::Emphatic => 0.4 * (3.0 * std::f64::consts::PI * u).cos(),
    }
}

/// Paint one target from its hierarchical text. Pure rules, no randomness.
pub fn render_target(ht: &HierarchicalText, mel_bins: usize) -> Vec<f32> {
    let t_len = ht.phon.len();
    let frames = t_len * FRAMES_PER_PHONEME;
    let sigma = 2.2f64;

    let mut amp = vec![1.0f64; t_len];
    for span in &ht.syll.syllables {
        amp[span.start] *= 1.2;
    }
    for (span, kind) in &ht.syll.morphemes {
        if *kind == MorphemeKind::Suffix {
            for a in amp.iter_mut().take(span.end).skip(span.start) {
                *a *= 0.8;
            }
        }
    }

    let mut mel = vec![0.0f32; frames * mel_bins];
    for (i, &id) in ht.phon.ids.iter().enumerate() {
        let center = ((id as usize) * 7 + 3) % mel_bins;
        for f in i * FRAMES_PER_PHONEME..(i + 1) * FRAMES_PER_PHONEME {
            let u = f as f64 / frames as f64;
            let tilt = contour(ht.pros.sentence_type, u);
            for b in 0..mel_bins {
                let dist = b as f64 - center as f64;
                let band = amp[i] * (-dist * dist / (2.0 * sigma * sigma)).exp();
                // fixed affine into a roughly unit range (rule version 1)
                mel[f * mel_bins + b] = ((band + tilt - 0.5) * 2.0) as f32;
            }
        }
    }
    mel
}

/// Deterministic grammar sampling + rule rendering. Texts are unique.
pub fn generate_synthetic_corpus(
    seed: u64,
    n_items: usize,
    mel_bins: usize,
) -> Result<SyntheticCorpus> {
    if n_items == 0 || mel_bins == 0 {
        return Err(Error::contract("gen_corpus", "need n ≥ 1 and bins ≥ 1"));
    }
    let frontend = Frontend::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<String> = HashSet::new();
    let mut items = Vec::with_capacity(n_items);
    let mut attempts = 0usize;
    while items.len() < n_items {
        attempts += 1;
        if attempts > n_items * 1000 {
            return Err(Error::Corpus(format!(
                "grammar exhausted after {attempts} attempts ({} unique texts)",
                items.len()
            )));
        }
        let stype = SentenceType::ALL[rng.random_range(0..SentenceType::ALL.len())];
        let text = sample_text(&mut rng, stype);
        if !seen.insert(text.clone()) {
            continue;
        }
        let ht = frontend.build_hierarchical_representation(&text)?;
        let mel = render_target(&ht, mel_bins);
        let frames = ht.phon.len() * FRAMES_PER_PHONEME;
        let speaker = items.len() % CORPUS_SPEAKERS;
        items.push(CorpusItem {
            text,
            ht,
            mel,
            frames,
            speaker,
        });
    }
    Ok(SyntheticCorpus {
        items,
        seed,
        rule_version: RULE_VERSION,
        mel_bins,
    })
}

impl SyntheticCorpus {
    /// Serialize as a directory: `meta.txt`, `manifest.tsv`, one raw-f32
    /// mel per item.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("meta.txt"),
            format!(
                "seed = {}\nrule_version = {}\nn_items = {}\nmel_bins = {}\n",
                self.seed,
                self.rule_version,
                self.items.len(),
                self.mel_bins
            ),
        )?;
        let mut manifest = String::new();
        for (i, item) in self.items.iter().enumerate() {
            manifest.push_str(&format!(
                "{i}\t{}\t{}\t{}\n",
                item.speaker, item.frames, item.text
            ));
            write_raw_f32(&dir.join(format!("item_{i:04}.f32")), &item.mel)?;
        }
        fs::write(dir.join("manifest.tsv"), manifest)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<SyntheticCorpus> {
        let meta = fs::read_to_string(dir.join("meta.txt"))
            .map_err(|e| Error::Corpus(format!("missing meta.txt: {e}")))?;
        let mut seed = None;
        let mut rule_version = None;
        let mut n_items = None;
        let mut mel_bins = None;
        for line in meta.lines() {
            if let Some((k, v)) = line.split_once('=') {
                let v = v.trim();
                match k.trim() {
                    "seed" => seed = v.parse::<u64>().ok(),
                    "rule_version" => rule_version = v.parse::<u32>().ok(),
                    "n_items" => n_items = v.parse::<usize>().ok(),
                    "mel_bins" => mel_bins = v.parse::<usize>().ok(),
                    _ => {}
                }
            }
        }
        let (seed, rule_version, n_items, mel_bins) =
            match (seed, rule_version, n_items, mel_bins) {
                (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
                _ => return Err(Error::Corpus("meta.txt is incomplete".to_string())),
            };
        if rule_version != RULE_VERSION {
            return Err(Error::Corpus(format!(
                "rule version {rule_version} unsupported (expected {RULE_VERSION})"
            )));
        }
        let manifest = fs::read_to_string(dir.join("manifest.tsv"))
            .map_err(|e| Error::Corpus(format!("missing manifest.tsv: {e}")))?;
        let frontend = Frontend::builtin();
        let mut items = Vec::with_capacity(n_items);
        for line in manifest.lines() {
            let fields: Vec<&str> = line.splitn(4, '\t').collect();
            if fields.len() != 4 {
                return Err(Error::Corpus(format!("bad manifest line {line:?}")));
            }
            let idx: usize = fields[0]
                .parse()
                .map_err(|_| Error::Corpus("bad index".to_string()))?;
            let speaker: usize = fields[1]
                .parse()
                .map_err(|_| Error::Corpus("bad speaker".to_string()))?;
            let frames: usize = fields[2]
                .parse()
                .map_err(|_| Error::Corpus("bad frame count".to_string()))?;
            let text = fields[3].to_string();
            let ht = frontend.build_hierarchical_representation(&text)?;
            let mel = read_raw_f32(&dir.join(format!("item_{idx:04}.f32")))?;
            if mel.len() != frames * mel_bins || frames != ht.phon.len() * FRAMES_PER_PHONEME {
                return Err(Error::Corpus(format!(
                    "item {idx}: inconsistent mel size for {text:?}"
                )));
            }
            items.push(CorpusItem {
                text,
                ht,
                mel,
                frames,
                speaker,
            });
        }
        if items.len() != n_items {
            return Err(Error::Corpus(format!(
                "manifest has {} items, meta says {n_items}",
                items.len()
            )));
        }
        Ok(SyntheticCorpus {
            items,
            seed,
            rule_version,
            mel_bins,
        })
    }
}
