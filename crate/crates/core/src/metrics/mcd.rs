//! Mel-cepstral distortion.
//!
//! Frame-aligned only — no DTW. Cepstra are the orthonormal DCT-II of each
//! log-mel row; the distortion uses coefficients 1..=13 (c₀ excluded):
//! `MCD = mean_frames (10/ln10)·√(2·Σ_d (c_a,d − c_b,d)²)` in dB.

use super::mel::MelSpectrogram;
use crate::error::{Error, Result};

/// Orthonormal DCT-II of one row.
pub fn dct_ii(row: &[f32]) -> Vec<f64> {
    let n = row.len();
    let mut out = vec![0.0f64; n];
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0f64;
        for (i, &x) in row.iter().enumerate() {
            acc += x as f64
                * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n as f64).cos();
        }
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        *o = acc * scale;
    }
    out
}

/// Inverse of [`dct_ii`] (orthonormal DCT-III); used by tests to build rows
/// with prescribed cepstra.
pub fn idct_ii(coeffs: &[f64]) -> Vec<f32> {
    let n = coeffs.len();
    let mut out = vec![0.0f32; n];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = (1.0 / n as f64).sqrt() * coeffs[0];
        for (k, &c) in coeffs.iter().enumerate().skip(1) {
            acc += (2.0 / n as f64).sqrt()
                * c
                * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n as f64).cos();
        }
        *o = acc as f32;
    }
    out
}

const MCD_COEFFS: usize = 13;

/// Mel-cepstral distortion in dB between frame-aligned spectrograms.
pub fn mcd(a: &MelSpectrogram, b: &MelSpectrogram) -> Result<f64> {
    if a.frames != b.frames {
        return Err(Error::contract(
            "mcd",
            format!("frame counts differ: {} vs {}", a.frames, b.frames),
        ));
    }
    if a.bins != b.bins || a.config != b.config {
        return Err(Error::contract("mcd", "mel configs differ"));
    }
    let hi = MCD_COEFFS.min(a.bins - 1);
    let scale = 10.0 / std::f64::consts::LN_10;
    let mut total = 0.0f64;
    for f in 0..a.frames {
        let ca = dct_ii(a.row(f));
        let cb = dct_ii(b.row(f));
        let d2: f64 = (1..=hi).map(|d| (ca[d] - cb[d]).powi(2)).sum();
        total += scale * (2.0 * d2).sqrt();
    }
    Ok(total / a.frames as f64)
}
