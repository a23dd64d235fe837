//! Audio ingestion and feature extraction: WAV decoding, STFT, the mel
//! filterbank, mixup and SpecAugment, the synthetic acceptance dataset, and
//! the dataset manifest format.

mod augment;
mod manifest;
mod mel;
mod stft;
mod synth;
mod wav;

pub use augment::{apply_freq_mask, apply_time_mask, mixup, spec_augment, AugmentPolicy};
pub use manifest::{load_dataset, load_manifest, write_manifest};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, melspectrogram};
pub use stft::{frame_count, hann_window, stft_magnitude};
pub use synth::{class_templates, synth_dataset, synth_dataset_with, SynthConfig};
pub use wav::{load_wav, write_wav, AudioClip};

use crate::error::{Error, Result};
use crate::multitask::LabelPair;
use crate::tensor::FeatureMap;

/// A labeled collection of single-clip feature maps `[1, 1, T, F]`.
pub type Dataset = Vec<(FeatureMap, LabelPair)>;

/// STFT/mel extraction parameters. Defaults follow the 44.1 kHz setup:
/// 2048-point FFT, 40 ms window (1764 samples), 20 ms hop (882), 256 mel bins
/// over the full band, power spectrogram, no log compression.
#[derive(Debug, Clone, PartialEq)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub win_length: usize,
    pub hop_length: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// Exponent on the magnitude spectrogram (2 = power).
    pub power: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            sample_rate: 44_100,
            n_fft: 2048,
            win_length: 1764,
            hop_length: 882,
            n_mels: 256,
            fmin: 0.0,
            fmax: 22_050.0,
            power: 2.0,
        }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.n_fft.is_power_of_two() || self.n_fft == 0 {
            return Err(Error::validation(format!(
                "n_fft must be a power of two, got {}",
                self.n_fft
            )));
        }
        if self.win_length == 0 || self.win_length > self.n_fft {
            return Err(Error::validation(format!(
                "win_length {} must lie in 1..={}",
                self.win_length, self.n_fft
            )));
        }
        if self.hop_length == 0 {
            return Err(Error::validation("hop_length must be positive"));
        }
        if self.n_mels == 0 {
            return Err(Error::validation("n_mels must be positive"));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(Error::validation(format!(
                "mel band [{}, {}] must satisfy 0 <= fmin < fmax <= {nyquist}",
                self.fmin, self.fmax
            )));
        }
        if self.power <= 0.0 {
            return Err(Error::validation("power exponent must be positive"));
        }
        Ok(())
    }

    /// One-sided spectrum size.
    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }
}
