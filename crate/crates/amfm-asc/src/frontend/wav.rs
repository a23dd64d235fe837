//! PCM WAV ingestion via `hound`. Stereo is averaged to mono; sample rates
//! other than 44.1 kHz are rejected outright rather than silently resampled.

use crate::error::{Error, Result};
use std::path::Path;

pub const EXPECTED_SAMPLE_RATE: u32 = 44_100;

/// A mono clip normalized to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source_id: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32, source_id: impl Into<String>) -> Self {
        AudioClip {
            samples,
            sample_rate,
            source_id: source_id.into(),
        }
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Full-scale sine at `freq` Hz, handy for spectral tests.
    pub fn sine(freq: f64, duration_secs: f64, sample_rate: u32) -> Self {
        let n = (duration_secs * sample_rate as f64).round() as usize;
        let samples = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sample_rate as f64).sin())
            .collect();
        AudioClip::new(samples, sample_rate, format!("sine_{freq}hz"))
    }
}

fn map_hound(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::parse(format!("wav: {other}")),
    }
}

/// Read a linear-PCM WAV (16/24/32-bit int or 32-bit float, mono or stereo).
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.sample_rate != EXPECTED_SAMPLE_RATE {
        return Err(Error::validation(format!(
            "{}: sample rate {} Hz, expected {} Hz (resampling is not performed)",
            path.display(),
            spec.sample_rate,
            EXPECTED_SAMPLE_RATE
        )));
    }
    if spec.channels == 0 {
        return Err(Error::parse(format!("{}: zero channels", path.display())));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| (v as f64).clamp(-1.0, 1.0)).map_err(map_hound))
            .collect::<Result<_>>()?,
        (hound::SampleFormat::Int, bits @ (16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| {
                    s.map(|v| (v as f64 * scale).clamp(-1.0, 1.0))
                        .map_err(map_hound)
                })
                .collect::<Result<_>>()?
        }
        (fmt, bits) => {
            return Err(Error::parse(format!(
                "{}: unsupported format {fmt:?}/{bits}-bit",
                path.display()
            )));
        }
    };
    let ch = spec.channels as usize;
    let samples = if ch == 1 {
        interleaved
    } else {
        interleaved
            .chunks(ch)
            .map(|frame| frame.iter().sum::<f64>() / ch as f64)
            .collect()
    };
    Ok(AudioClip::new(
        samples,
        spec.sample_rate,
        path.display().to_string(),
    ))
}

/// Write a mono clip as integer PCM of the given bit depth (16 or 24) or
/// 32-bit float.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip, bits: u16) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: bits,
        sample_format: if bits == 32 {
            hound::SampleFormat::Float
        } else {
            hound::SampleFormat::Int
        },
    };
    let mut writer = hound::WavWriter::create(path.as_ref(), spec).map_err(map_hound)?;
    match bits {
        16 | 24 => {
            let full = (1i64 << (bits - 1)) as f64;
            let max = full - 1.0;
            for &v in &clip.samples {
                let q = (v * full).round().clamp(-full, max) as i32;
                writer.write_sample(q).map_err(map_hound)?;
            }
        }
        32 => {
            for &v in &clip.samples {
                writer.write_sample(v as f32).map_err(map_hound)?;
            }
        }
        other => {
            return Err(Error::validation(format!(
                "unsupported write depth {other}"
            )))
        }
    }
    writer.finalize().map_err(map_hound)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("amfm_wav_test_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn silence_round_trip() {
        let clip = AudioClip::new(vec![0.0; 44_100], 44_100, "silence");
        let p = tmp("silence.wav");
        write_wav(&p, &clip, 16).unwrap();
        let back = load_wav(&p).unwrap();
        assert_eq!(back.samples.len(), 44_100);
        assert!(back.samples.iter().all(|&v| v == 0.0));
        assert_eq!(back.sample_rate, 44_100);
    }

    #[test]
    fn full_scale_24_bit_reads_near_one() {
        let clip = AudioClip::new(vec![1.0; 100], 44_100, "full");
        let p = tmp("full24.wav");
        write_wav(&p, &clip, 24).unwrap();
        let back = load_wav(&p).unwrap();
        let lsb = 1.0 / (1u64 << 23) as f64;
        for &v in &back.samples {
            assert!((v - 1.0).abs() <= lsb, "{v}");
        }
    }

    #[test]
    fn random_clip_round_trips_within_quantization() {
        let mut rng = crate::rng::SeededRng::new(60);
        let samples: Vec<f64> = (0..4410).map(|_| rng.uniform() * 1.8 - 0.9).collect();
        let clip = AudioClip::new(samples, 44_100, "rand");
        for bits in [16u16, 24, 32] {
            let p = tmp(&format!("rt{bits}.wav"));
            write_wav(&p, &clip, bits).unwrap();
            let back = load_wav(&p).unwrap();
            let tol = match bits {
                16 => 1.0 / 32768.0,
                24 => 1.0 / 8_388_608.0,
                _ => 1e-7, // f32 mantissa
            };
            for (a, b) in clip.samples.iter().zip(&back.samples) {
                assert!((a - b).abs() <= tol, "{bits}-bit: {a} vs {b}");
            }
        }
    }

    #[test]
    fn stereo_averages_to_mono() {
        let p = tmp("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 44_100,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        for _ in 0..10 {
            w.write_sample(16384i32).unwrap(); // left ~ 0.5
            w.write_sample(-16384i32).unwrap(); // right ~ -0.5
        }
        w.finalize().unwrap();
        let back = load_wav(&p).unwrap();
        assert_eq!(back.samples.len(), 10);
        for &v in &back.samples {
            assert!(v.abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn wrong_sample_rate_is_rejected() {
        let p = tmp("rate48k.wav");
        let clip = AudioClip::new(vec![0.0; 100], 48_000, "x");
        write_wav(&p, &clip, 16).unwrap();
        assert!(matches!(load_wav(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_header_is_a_parse_error() {
        let p = tmp("garbage.wav");
        std::fs::write(&p, b"RIFFnonsense").unwrap();
        match load_wav(&p) {
            Err(Error::Parse(_)) | Err(Error::Io(_)) => {}
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
