//! STFT + HTK-mel filterbank log-mel extraction.

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};

/// Framing and filterbank parameters.
///
/// Frame and hop lengths are specified in milliseconds and floored to whole
/// samples, so a 44.1 kHz / 12.5 ms hop becomes 551 samples. The desk
/// default (16 kHz, 50 ms / 12.5 ms) frames exactly: 800 / 200 samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelConfig {
    pub sample_rate_hz: u32,
    pub frame_length_ms: f64,
    pub frame_shift_ms: f64,
    pub fft_size: usize,
    pub mel_bins: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    /// Linear-energy floor applied before the natural log.
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            sample_rate_hz: 16_000,
            frame_length_ms: 50.0,
            frame_shift_ms: 12.5,
            fft_size: 1024,
            mel_bins: 16,
            fmin_hz: 0.0,
            fmax_hz: 8_000.0,
            log_floor: 1e-5,
        }
    }
}

impl MelConfig {
    /// The paper-scale preset: 80 mel bins at 44.1 kHz.
    pub fn paper() -> Self {
        MelConfig {
            sample_rate_hz: 44_100,
            mel_bins: 80,
            fft_size: 4096,
            fmax_hz: 22_050.0,
            ..MelConfig::default()
        }
    }

    pub fn frame_samples(&self) -> usize {
        (self.sample_rate_hz as f64 * self.frame_length_ms / 1000.0).floor() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.sample_rate_hz as f64 * self.frame_shift_ms / 1000.0).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_length_ms < self.frame_shift_ms {
            return Err(Error::contract(
                "mel_config",
                "frame length must be ≥ frame shift",
            ));
        }
        if self.fft_size < self.frame_samples() {
            return Err(Error::contract(
                "mel_config",
                format!(
                    "fft size {} < frame samples {}",
                    self.fft_size,
                    self.frame_samples()
                ),
            ));
        }
        if self.mel_bins == 0 || self.hop_samples() == 0 {
            return Err(Error::contract("mel_config", "bins and hop must be ≥ 1"));
        }
        let nyquist = self.sample_rate_hz as f64 / 2.0;
        if !(self.fmin_hz >= 0.0 && self.fmin_hz < self.fmax_hz && self.fmax_hz <= nyquist) {
            return Err(Error::contract(
                "mel_config",
                format!("bad band {}..{} Hz", self.fmin_hz, self.fmax_hz),
            ));
        }
        if self.log_floor <= 0.0 {
            return Err(Error::contract("mel_config", "log floor must be > 0"));
        }
        Ok(())
    }
}

/// Frames × bins matrix of natural-log mel energies.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub data: Vec<f32>,
    pub frames: usize,
    pub bins: usize,
    pub config: MelConfig,
}

impl MelSpectrogram {
    pub fn new(data: Vec<f32>, frames: usize, bins: usize, config: MelConfig) -> Result<Self> {
        if frames == 0 || data.len() != frames * bins {
            return Err(Error::contract(
                "mel",
                format!("{} values do not fill {frames}×{bins}", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("mel", "non-finite mel value"));
        }
        Ok(MelSpectrogram {
            data,
            frames,
            bins,
            config,
        })
    }

    pub fn row(&self, frame: usize) -> &[f32] {
        &self.data[frame * self.bins..(frame + 1) * self.bins]
    }

    /// One CSV line per frame.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for f in 0..self.frames {
            let row: Vec<String> = self.row(f).iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Center frequency (Hz) of each triangular filter.
pub fn filterbank_centers(cfg: &MelConfig) -> Vec<f64> {
    let lo = hz_to_mel(cfg.fmin_hz);
    let hi = hz_to_mel(cfg.fmax_hz);
    let step = (hi - lo) / (cfg.mel_bins + 1) as f64;
    (1..=cfg.mel_bins)
        .map(|b| mel_to_hz(lo + step * b as f64))
        .collect()
}

/// Triangular weights `[bins × (fft/2+1)]`, peak 1 (HTK-style, no area
/// normalization).
fn filterbank(cfg: &MelConfig) -> Vec<f64> {
    let n_bins = cfg.fft_size / 2 + 1;
    let lo = hz_to_mel(cfg.fmin_hz);
    let hi = hz_to_mel(cfg.fmax_hz);
    let step = (hi - lo) / (cfg.mel_bins + 1) as f64;
    let edges: Vec<f64> = (0..cfg.mel_bins + 2)
        .map(|i| mel_to_hz(lo + step * i as f64))
        .collect();
    let mut weights = vec![0.0f64; cfg.mel_bins * n_bins];
    let bin_hz = cfg.sample_rate_hz as f64 / cfg.fft_size as f64;
    for b in 0..cfg.mel_bins {
        let (left, center, right) = (edges[b], edges[b + 1], edges[b + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f <= left || f >= right {
                0.0
            } else if f <= center {
                (f - left) / (center - left)
            } else {
                (right - f) / (right - center)
            };
            weights[b * n_bins + k] = w;
        }
    }
    weights
}

/// Hann-windowed magnitude STFT → mel filterbank → natural log with floor.
pub fn mel_spectrogram(waveform: &[f32], cfg: &MelConfig) -> Result<MelSpectrogram> {
    cfg.validate()?;
    let frame = cfg.frame_samples();
    let hop = cfg.hop_samples();
    if waveform.len() < frame {
        return Err(Error::contract(
            "mel_spectrogram",
            format!(
                "waveform of {} samples shorter than one {frame}-sample frame",
                waveform.len()
            ),
        ));
    }
    let n_frames = (waveform.len() - frame) / hop + 1;
    let n_fft_bins = cfg.fft_size / 2 + 1;

    // periodic Hann
    let window: Vec<f64> = (0..frame)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / frame as f64).cos())
        .collect();
    let weights = filterbank(cfg);

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(cfg.fft_size);
    let mut data = vec![0.0f32; n_frames * cfg.mel_bins];
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    let mut mags = vec![0.0f64; n_fft_bins];
    for fi in 0..n_frames {
        let start = fi * hop;
        for (i, c) in buf.iter_mut().enumerate() {
            *c = if i < frame {
                Complex::new(waveform[start + i] as f64 * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for (k, m) in mags.iter_mut().enumerate() {
            *m = buf[k].norm();
        }
        for b in 0..cfg.mel_bins {
            let w = &weights[b * n_fft_bins..(b + 1) * n_fft_bins];
            let energy: f64 = w.iter().zip(&mags).map(|(w, m)| w * m).sum();
            data[fi * cfg.mel_bins + b] = energy.max(cfg.log_floor).ln() as f32;
        }
    }
    MelSpectrogram::new(data, n_frames, cfg.mel_bins, *cfg)
}
