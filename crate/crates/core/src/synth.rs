//! Deterministic synthetic "talkers": harmonic series under a slow random
//! amplitude envelope. Used for demos and tests when no recordings are at
//! hand.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio_io::AudioBuffer;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoiceParams {
    pub f0_hz: f64,
    /// Harmonic `h` has amplitude `h^-rolloff`.
    pub rolloff: f64,
    /// Envelope components are drawn from this band (Hz).
    pub am_band_hz: (f64, f64),
    pub seed: u64,
}

impl VoiceParams {
    pub fn low(seed: u64) -> Self {
        VoiceParams {
            f0_hz: 110.0,
            rolloff: 1.0,
            am_band_hz: (0.3, 3.0),
            seed,
        }
    }

    pub fn high(seed: u64) -> Self {
        VoiceParams {
            f0_hz: 220.0,
            rolloff: 1.0,
            am_band_hz: (0.3, 3.0),
            seed,
        }
    }
}

const ENVELOPE_COMPONENTS: usize = 4;

/// Renders `len` samples of a voice. Harmonics run up to 0.45 of the
/// sample rate; the envelope lies in `[0, 1]`.
pub fn harmonic_voice(params: &VoiceParams, sample_rate: u32, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let fs = f64::from(sample_rate);
    let n_harmonics = ((0.45 * fs) / params.f0_hz).floor() as usize;
    let partials: Vec<(f64, f64, f64)> = (1..=n_harmonics)
        .map(|h| {
            let phase = rng.random_range(0.0..2.0 * PI);
            (h as f64 * params.f0_hz, (h as f64).powf(-params.rolloff), phase)
        })
        .collect();
    let (lo, hi) = params.am_band_hz;
    let envelope: Vec<(f64, f64)> = (0..ENVELOPE_COMPONENTS)
        .map(|_| (rng.random_range(lo..hi), rng.random_range(0.0..2.0 * PI)))
        .collect();
    (0..len)
        .map(|t| {
            let time = t as f64 / fs;
            let env_raw: f64 = envelope
                .iter()
                .map(|(f, p)| (2.0 * PI * f * time + p).sin())
                .sum::<f64>()
                / ENVELOPE_COMPONENTS as f64;
            let env = (0.5 + 0.5 * env_raw).clamp(0.0, 1.0);
            let tone: f64 = partials
                .iter()
                .map(|(f, a, p)| a * (2.0 * PI * f * time + p).sin())
                .sum();
            env * tone
        })
        .collect()
}

/// Two talkers (110 Hz and 220 Hz fundamentals, independent envelopes) of
/// `seconds` duration.
pub fn voice_pair(sample_rate: u32, seconds: f64, seed: u64) -> Result<(AudioBuffer, AudioBuffer)> {
    let len = (seconds * f64::from(sample_rate)).round() as usize;
    let a = harmonic_voice(&VoiceParams::low(seed.wrapping_mul(2)), sample_rate, len);
    let b = harmonic_voice(
        &VoiceParams::high(seed.wrapping_mul(2).wrapping_add(1)),
        sample_rate,
        len,
    );
    Ok((AudioBuffer::mono(a, sample_rate)?, AudioBuffer::mono(b, sample_rate)?))
}
