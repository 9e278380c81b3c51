//! Flat `key = value` config files for the training harness.
//!
//! UTF-8 text, `#` starts a comment, blank lines ignored. Every key is
//! optional and overrides the desk default; unknown keys are errors. The
//! full key list is in [`TrainConfig::apply_kv`].

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::train::TrainConfig;

/// Parse `key = value` lines.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let k = k.trim();
        let v = v.trim();
        if k.is_empty() || v.is_empty() {
            return Err(Error::Config(format!(
                "line {}: empty key or value",
                lineno + 1
            )));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| Error::Config(format!("bad value {v:?} for key {key:?}")))
}

impl TrainConfig {
    pub fn from_file(path: &Path) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_kv_text(&text)
    }

    pub fn from_kv_text(text: &str) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        for (k, v) in parse_kv(text)? {
            cfg.apply_kv(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply one key. Unknown keys are errors by contract.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "steps" => self.steps = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "peak_lr" => self.peak_lr = num(key, value)?,
            "warmup_steps" => self.warmup_steps = num(key, value)?,
            "final_lr" => self.final_lr = num(key, value)?,
            "grad_clip" => self.grad_clip = num(key, value)?,
            "beta1" => self.beta1 = num(key, value)?,
            "beta2" => self.beta2 = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "hca_weight" => self.hca_weight = num(key, value)?,
            "duration_weight" => self.duration_weight = num(key, value)?,
            "hca_lambda_phon" => self.hca.lambdas[0] = num(key, value)?,
            "hca_lambda_syll" => self.hca.lambdas[1] = num(key, value)?,
            "hca_lambda_pros" => self.hca.lambdas[2] = num(key, value)?,
            "hca_temperature" => self.hca.temperature = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "corpus_items" => self.corpus_items = num(key, value)?,
            "holdout_items" => self.holdout_items = num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            "corpus_dir" => self.corpus_dir = PathBuf::from(value),
            "checkpoint_dir" => self.checkpoint_dir = PathBuf::from(value),
            "metrics_csv" => self.metrics_csv = PathBuf::from(value),
            "model_encoder_layers" => self.model.encoder_layers = num(key, value)?,
            "model_encoder_channels" => self.model.encoder_channels = num(key, value)?,
            "model_encoder_kernel" => self.model.encoder_kernel = num(key, value)?,
            "model_dit_layers" => self.model.dit_layers = num(key, value)?,
            "model_dit_heads" => self.model.dit_heads = num(key, value)?,
            "model_hidden_dim" => self.model.hidden_dim = num(key, value)?,
            "model_ffn_mult" => self.model.ffn_mult = num(key, value)?,
            "model_duration_layers" => self.model.duration_layers = num(key, value)?,
            "model_duration_hidden" => self.model.duration_hidden = num(key, value)?,
            "model_speaker_dim" => self.model.speaker_dim = num(key, value)?,
            "model_speaker_count" => self.model.speaker_count = num(key, value)?,
            "model_mel_bins" => self.model.mel_bins = num(key, value)?,
            "model_vocab_size" => self.model.vocab_size = num(key, value)?,
            "model_dropout_attention" => self.model.dropout_attention = num(key, value)?,
            "model_dropout_ffn" => self.model.dropout_ffn = num(key, value)?,
            "mel_sample_rate" => self.mel.sample_rate_hz = num(key, value)?,
            "mel_frame_ms" => self.mel.frame_length_ms = num(key, value)?,
            "mel_shift_ms" => self.mel.frame_shift_ms = num(key, value)?,
            "mel_fft_size" => self.mel.fft_size = num(key, value)?,
            "mel_bins" => self.mel.mel_bins = num(key, value)?,
            "mel_fmin" => self.mel.fmin_hz = num(key, value)?,
            "mel_fmax" => self.mel.fmax_hz = num(key, value)?,
            "mel_log_floor" => self.mel.log_floor = num(key, value)?,
            other => {
                return Err(Error::Config(format!("unknown key {other:?}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_overrides_and_comments() {
        let cfg = TrainConfig::from_kv_text(
            "# a comment\nsteps = 100\nbatch_size = 4  # trailing\npeak_lr = 0.002\nseed = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.steps, 100);
        assert_eq!(cfg.batch_size, 4);
        assert_eq!(cfg.peak_lr, 0.002);
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn unknown_key_is_error() {
        let err = TrainConfig::from_kv_text("stepz = 100\n").unwrap_err().to_string();
        assert!(err.contains("unknown key"), "{err}");
    }

    #[test]
    fn malformed_line_is_error() {
        assert!(TrainConfig::from_kv_text("steps 100\n").is_err());
        assert!(TrainConfig::from_kv_text("steps =\n").is_err());
        assert!(TrainConfig::from_kv_text("steps = ten\n").is_err());
    }

    #[test]
    fn invalid_combination_is_rejected() {
        // warmup ≥ steps
        assert!(TrainConfig::from_kv_text("steps = 10\nwarmup_steps = 10\n").is_err());
    }
}
