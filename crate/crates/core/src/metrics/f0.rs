//! Autocorrelation F0 tracking and F0-RMSE over co-voiced frames.

use super::mel::MelConfig;
use crate::error::{Error, Result};

pub const F0_MIN_HZ: f64 = 50.0;
pub const F0_MAX_HZ: f64 = 500.0;
pub const VOICING_THRESHOLD: f64 = 0.3;

/// Per-frame F0 estimates; `None` marks unvoiced frames. Framing follows
/// the mel config (same frame/hop lengths).
pub fn f0_track(waveform: &[f32], cfg: &MelConfig) -> Result<Vec<Option<f64>>> {
    cfg.validate()?;
    let frame = cfg.frame_samples();
    let hop = cfg.hop_samples();
    if waveform.len() < frame {
        return Err(Error::contract(
            "f0_track",
            format!("waveform shorter than one {frame}-sample frame"),
        ));
    }
    let sr = cfg.sample_rate_hz as f64;
    let lag_min = (sr / F0_MAX_HZ).floor() as usize;
    let lag_max = ((sr / F0_MIN_HZ).ceil() as usize).min(frame - 1);
    let n_frames = (waveform.len() - frame) / hop + 1;
    let mut track = Vec::with_capacity(n_frames);
    let mut buf = vec![0.0f64; frame];
    for fi in 0..n_frames {
        let start = fi * hop;
        let mean: f64 =
            waveform[start..start + frame].iter().map(|&v| v as f64).sum::<f64>() / frame as f64;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = waveform[start + i] as f64 - mean;
        }
        track.push(frame_f0(&buf, sr, lag_min, lag_max));
    }
    Ok(track)
}

fn autocorr(x: &[f64], lag: usize) -> f64 {
    x[..x.len() - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| a * b)
        .sum()
}

fn frame_f0(x: &[f64], sr: f64, lag_min: usize, lag_max: usize) -> Option<f64> {
    let r0 = autocorr(x, 0);
    if r0 <= 0.0 {
        return None;
    }
    let mut best_lag = 0usize;
    let mut best = f64::NEG_INFINITY;
    for lag in lag_min..=lag_max {
        let r = autocorr(x, lag);
        if r > best {
            best = r;
            best_lag = lag;
        }
    }
    if best / r0 <= VOICING_THRESHOLD {
        return None;
    }
    // parabolic interpolation around the peak for sub-sample lag accuracy
    let lag = best_lag as f64
        + if best_lag > lag_min && best_lag < lag_max {
            let rl = autocorr(x, best_lag - 1);
            let rc = best;
            let rr = autocorr(x, best_lag + 1);
            let denom = rl - 2.0 * rc + rr;
            if denom.abs() > 1e-12 {
                (0.5 * (rl - rr) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            }
        } else {
            0.0
        };
    Some(sr / lag)
}

/// RMSE result plus the voicing bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Compare {
    pub rmse_hz: f64,
    pub co_voiced_frames: usize,
    /// Set when no frame was voiced in both signals (rmse is then 0).
    pub no_voicing_warning: bool,
}

/// RMSE of the F0 tracks over frames voiced in both signals.
pub fn f0_rmse(a: &[f32], b: &[f32], cfg: &MelConfig) -> Result<F0Compare> {
    if a.len() != b.len() {
        return Err(Error::contract(
            "f0_rmse",
            format!("lengths differ: {} vs {}", a.len(), b.len()),
        ));
    }
    let ta = f0_track(a, cfg)?;
    let tb = f0_track(b, cfg)?;
    let mut sq = 0.0f64;
    let mut n = 0usize;
    for (fa, fb) in ta.iter().zip(&tb) {
        if let (Some(fa), Some(fb)) = (fa, fb) {
            sq += (fa - fb).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Ok(F0Compare {
            rmse_hz: 0.0,
            co_voiced_frames: 0,
            no_voicing_warning: true,
        });
    }
    Ok(F0Compare {
        rmse_hz: (sq / n as f64).sqrt(),
        co_voiced_frames: n,
        no_voicing_warning: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, seconds: f64, sr: u32) -> Vec<f32> {
        let n = (seconds * sr as f64) as usize;
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin() as f32)
            .collect()
    }

    #[test]
    fn identical_signals_have_zero_rmse() {
        let cfg = MelConfig::default();
        let w = sine(150.0, 0.5, cfg.sample_rate_hz);
        let r = f0_rmse(&w, &w, &cfg).unwrap();
        assert_eq!(r.rmse_hz, 0.0);
        assert!(!r.no_voicing_warning);
        assert!(r.co_voiced_frames > 0);
    }

    #[test]
    fn estimator_within_two_hz_on_pure_sines() {
        let cfg = MelConfig::default();
        for freq in [80.0, 120.0, 180.0, 220.0, 300.0, 360.0, 400.0] {
            let w = sine(freq, 0.4, cfg.sample_rate_hz);
            let track = f0_track(&w, &cfg).unwrap();
            for f0 in track.iter().flatten() {
                assert!(
                    (f0 - freq).abs() < 2.0,
                    "estimate {f0} for true {freq}"
                );
            }
            assert!(track.iter().any(|f| f.is_some()));
        }
    }

    #[test]
    fn sines_ten_hz_apart() {
        let cfg = MelConfig::default();
        let a = sine(220.0, 0.5, cfg.sample_rate_hz);
        let b = sine(230.0, 0.5, cfg.sample_rate_hz);
        let r = f0_rmse(&a, &b, &cfg).unwrap();
        assert!((r.rmse_hz - 10.0).abs() <= 2.0, "rmse {}", r.rmse_hz);
    }

    #[test]
    fn white_noise_yields_warning() {
        use rand::{Rng, SeedableRng};
        let cfg = MelConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let a: Vec<f32> = (0..8000).map(|_| rng.random::<f32>() - 0.5).collect();
        let b: Vec<f32> = (0..8000).map(|_| rng.random::<f32>() - 0.5).collect();
        let r = f0_rmse(&a, &b, &cfg).unwrap();
        assert!(r.no_voicing_warning);
        assert_eq!(r.rmse_hz, 0.0);
    }

    #[test]
    fn length_mismatch_is_error() {
        let cfg = MelConfig::default();
        let a = sine(100.0, 0.2, cfg.sample_rate_hz);
        assert!(f0_rmse(&a, &a[..a.len() - 1], &cfg).is_err());
    }
}
