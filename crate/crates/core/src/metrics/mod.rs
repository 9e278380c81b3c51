//! Mel-spectrogram extraction and the objective metrics (MCD, F0-RMSE).

pub mod f0;
pub mod mcd;
pub mod mel;
pub mod wav;

pub use f0::{f0_rmse, f0_track, F0Compare};
pub use mcd::mcd;
pub use mel::{mel_spectrogram, MelConfig, MelSpectrogram};
