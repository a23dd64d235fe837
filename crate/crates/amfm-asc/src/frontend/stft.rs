//! Short-time Fourier transform: Hann-windowed frames, no centering, radix-2
//! FFT, one-sided magnitude (raised to the configured power).

use super::{AudioClip, MelConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()))
        .collect()
}

/// Frames that fit without padding: `floor((len - win)/hop) + 1`, or `None`
/// when the clip is shorter than one window.
pub fn frame_count(len: usize, win: usize, hop: usize) -> Option<usize> {
    if len < win {
        None
    } else {
        Some((len - win) / hop + 1)
    }
}

/// In-place iterative radix-2 Cooley-Tukey FFT. `re.len()` must be a power of
/// two and equal `im.len()`.
fn fft_radix2(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    debug_assert!(n.is_power_of_two());
    debug_assert_eq!(n, im.len());
    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * std::f64::consts::PI / len as f64;
        let (wr, wi) = (ang.cos(), ang.sin());
        let mut i = 0;
        while i < n {
            let (mut cr, mut ci) = (1.0f64, 0.0f64);
            for k in 0..len / 2 {
                let (ur, ui) = (re[i + k], im[i + k]);
                let (vr, vi) = (
                    re[i + k + len / 2] * cr - im[i + k + len / 2] * ci,
                    re[i + k + len / 2] * ci + im[i + k + len / 2] * cr,
                );
                re[i + k] = ur + vr;
                im[i + k] = ui + vi;
                re[i + k + len / 2] = ur - vr;
                im[i + k + len / 2] = ui - vi;
                let ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
            i += len;
        }
        len <<= 1;
    }
}

/// One-sided spectrogram `[n_fft/2 + 1, N]`. Each column is one Hann-windowed
/// frame (zero-padded from `win_length` to `n_fft`), magnitude raised to
/// `cfg.power`.
pub fn stft_magnitude(clip: &AudioClip, cfg: &MelConfig) -> Result<Tensor> {
    cfg.validate()?;
    let n = match frame_count(clip.samples.len(), cfg.win_length, cfg.hop_length) {
        Some(n) => n,
        None => {
            return Err(Error::shape(format!(
                "clip of {} samples is shorter than one {}-sample window",
                clip.samples.len(),
                cfg.win_length
            )));
        }
    };
    let bins = cfg.bins();
    let window = hann_window(cfg.win_length);
    let mut out = Tensor::zeros(&[bins, n]);
    let mut re = vec![0.0; cfg.n_fft];
    let mut im = vec![0.0; cfg.n_fft];
    for frame in 0..n {
        let start = frame * cfg.hop_length;
        re.iter_mut().for_each(|v| *v = 0.0);
        im.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..cfg.win_length {
            re[k] = clip.samples[start + k] * window[k];
        }
        fft_radix2(&mut re, &mut im);
        for b in 0..bins {
            let mag = (re[b] * re[b] + im[b] * im[b]).sqrt();
            out.set2(b, frame, mag.powf(cfg.power));
        }
    }
    Ok(out)
}
