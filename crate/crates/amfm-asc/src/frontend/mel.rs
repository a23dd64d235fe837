//! Triangular mel filterbank and the mel-spectrogram pipeline.
//!
//! Filters use the HTK mel scale. Each triangle's weight on an FFT bin is its
//! average over that bin's frequency cell rather than a point sample at the
//! bin center: at 256 mels against a 2048-point FFT the lowest triangles are
//! narrower than one bin, and point sampling would leave those rows all-zero.
//! Cell averaging keeps every row positive and unimodal. Rows are then
//! normalized to peak 1.

use super::{AudioClip, MelConfig};
use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, Tensor};

/// HTK mel scale: `2595 * log10(1 + f/700)`.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Mean of the triangle with nodes `(lo, mid, hi)` (peak 1 at `mid`) over the
/// interval `[a, b]`.
fn triangle_cell_mean(lo: f64, mid: f64, hi: f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut integral = 0.0;
    // Rising edge on [lo, mid].
    if mid > lo {
        let s = a.max(lo);
        let e = b.min(mid);
        if e > s {
            let fa = (s - lo) / (mid - lo);
            let fb = (e - lo) / (mid - lo);
            integral += 0.5 * (fa + fb) * (e - s);
        }
    }
    // Falling edge on [mid, hi].
    if hi > mid {
        let s = a.max(mid);
        let e = b.min(hi);
        if e > s {
            let fa = (hi - s) / (hi - mid);
            let fb = (hi - e) / (hi - mid);
            integral += 0.5 * (fa + fb) * (e - s);
        }
    }
    integral / (b - a)
}

/// Triangular filterbank `[n_mels, n_fft/2 + 1]`. Every row is non-negative,
/// unimodal, and has a positive maximum; configurations whose triangles
/// collapse to zero width produce a validation error.
pub fn mel_filterbank(cfg: &MelConfig) -> Result<Tensor> {
    cfg.validate()?;
    let bins = cfg.bins();
    let df = cfg.sample_rate as f64 / cfg.n_fft as f64;
    let mel_lo = hz_to_mel(cfg.fmin);
    let mel_hi = hz_to_mel(cfg.fmax);
    let step = (mel_hi - mel_lo) / (cfg.n_mels + 1) as f64;
    let nodes: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + step * i as f64))
        .collect();
    let mut fb = Tensor::zeros(&[cfg.n_mels, bins]);
    for m in 0..cfg.n_mels {
        let (lo, mid, hi) = (nodes[m], nodes[m + 1], nodes[m + 2]);
        let mut peak = 0.0f64;
        for k in 0..bins {
            let center = k as f64 * df;
            let a = (center - df / 2.0).max(0.0);
            let b = (center + df / 2.0).min(cfg.sample_rate as f64 / 2.0);
            let w = triangle_cell_mean(lo, mid, hi, a, b);
            fb.set2(m, k, w);
            peak = peak.max(w);
        }
        if peak <= 0.0 {
            return Err(Error::validation(format!(
                "mel filter {m} is empty: {} mel bands cannot be resolved between {} and {} Hz",
                cfg.n_mels, cfg.fmin, cfg.fmax
            )));
        }
        for k in 0..bins {
            let v = fb.at2(m, k) / peak;
            fb.set2(m, k, v);
        }
    }
    Ok(fb)
}

/// Mel spectrogram as a `[1, 1, T, n_mels]` feature map (time-major). No log
/// compression, no deltas.
pub fn melspectrogram(clip: &AudioClip, cfg: &MelConfig) -> Result<FeatureMap> {
    let spec = stft(clip, cfg)?;
    let fb = mel_filterbank(cfg)?;
    let bins = cfg.bins();
    let frames = spec.shape()[1];
    let mut out = FeatureMap::zeros(1, 1, frames, cfg.n_mels);
    for m in 0..cfg.n_mels {
        let fbrow = &fb.data()[m * bins..(m + 1) * bins];
        for t in 0..frames {
            let mut acc = 0.0;
            for k in 0..bins {
                acc += fbrow[k] * spec.at2(k, t);
            }
            out.set(0, 0, t, m, acc);
        }
    }
    Ok(out)
}

fn stft(clip: &AudioClip, cfg: &MelConfig) -> Result<Tensor> {
    super::stft_magnitude(clip, cfg)
}
