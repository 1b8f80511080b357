//! Two-talker scenes: level matching, monaural sums, and binaural
//! spatialization through head-related impulse responses.

use std::f64::consts::PI;
use std::path::Path;

use crate::audio_io::{decimate, read_wav, rms, AudioBuffer};
use crate::error::{Error, Result};

pub const SPEED_OF_SOUND: f64 = 343.0;
pub const DEFAULT_HEAD_RADIUS_M: f64 = 0.0875;
pub const DEFAULT_ILD_DB: f64 = 6.0;
const FRACTIONAL_DELAY_TAPS: usize = 33;
const HEAD_SHADOW_CUTOFF_HZ: f64 = 1200.0;

/// Left and right ear impulse responses for one source direction.
#[derive(Debug, Clone, PartialEq)]
pub struct HrirPair {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub sample_rate: u32,
    pub azimuth_deg: f64,
}

impl HrirPair {
    pub fn new(left: Vec<f64>, right: Vec<f64>, sample_rate: u32, azimuth_deg: f64) -> Result<Self> {
        if left.is_empty() || right.is_empty() {
            return Err(Error::InvalidBuffer("empty impulse response".into()));
        }
        if left.iter().chain(&right).any(|v| !v.is_finite()) {
            return Err(Error::InvalidBuffer("non-finite impulse response".into()));
        }
        Ok(HrirPair {
            left,
            right,
            sample_rate,
            azimuth_deg,
        })
    }

    /// Unit impulses on both ears.
    pub fn identity(sample_rate: u32) -> Self {
        HrirPair {
            left: vec![1.0],
            right: vec![1.0],
            sample_rate,
            azimuth_deg: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.left.len().max(self.right.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneMode {
    Monaural,
    Binaural,
}

/// A mixture plus the two mono stems it was built from, padded to the
/// mixture length.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureScene {
    pub mode: SceneMode,
    pub mixture: AudioBuffer,
    pub reference_a: AudioBuffer,
    pub reference_b: AudioBuffer,
}

fn check_rates(a: &AudioBuffer, b: &AudioBuffer) -> Result<()> {
    if a.sample_rate() != b.sample_rate() {
        return Err(Error::RateMismatch(a.sample_rate(), b.sample_rate()));
    }
    Ok(())
}

/// Scales `b` so its RMS equals that of `a`; `a` is returned unchanged.
pub fn equalize_rms(a: &AudioBuffer, b: &AudioBuffer) -> Result<(AudioBuffer, AudioBuffer)> {
    check_rates(a, b)?;
    let (xa, xb) = (a.expect_mono()?, b.expect_mono()?);
    let (ra, rb) = (rms(xa), rms(xb));
    if ra == 0.0 || rb == 0.0 {
        return Err(Error::DegenerateSignal("silent input cannot be level-matched"));
    }
    let gain = ra / rb;
    let scaled = xb.iter().map(|v| v * gain).collect();
    Ok((a.clone(), AudioBuffer::mono(scaled, b.sample_rate())?))
}

fn padded(x: &[f64], len: usize) -> Vec<f64> {
    let mut v = x.to_vec();
    v.resize(len, 0.0);
    v
}

/// Samplewise sum; the shorter input is zero-padded.
pub fn mix_monaural(a: &AudioBuffer, b: &AudioBuffer) -> Result<AudioBuffer> {
    check_rates(a, b)?;
    let (xa, xb) = (a.expect_mono()?, b.expect_mono()?);
    let len = xa.len().max(xb.len());
    let mut sum = padded(xa, len);
    for (s, v) in sum.iter_mut().zip(xb) {
        *s += v;
    }
    AudioBuffer::mono(sum, a.sample_rate())
}

/// Monaural scene: mixture `a + b` with the stems as references.
pub fn monaural_scene(a: &AudioBuffer, b: &AudioBuffer) -> Result<MixtureScene> {
    let mixture = mix_monaural(a, b)?;
    let len = mixture.len();
    Ok(MixtureScene {
        mode: SceneMode::Monaural,
        reference_a: AudioBuffer::mono(padded(a.expect_mono()?, len), a.sample_rate())?,
        reference_b: AudioBuffer::mono(padded(b.expect_mono()?, len), b.sample_rate())?,
        mixture,
    })
}

/// Full linear convolution (length `x.len() + h.len() - 1`).
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut y = vec![0.0; x.len() + h.len() - 1];
    for (k, &hk) in h.iter().enumerate() {
        if hk == 0.0 {
            continue;
        }
        for (yi, &xi) in y[k..k + x.len()].iter_mut().zip(x) {
            *yi += hk * xi;
        }
    }
    y
}

/// Interaural time difference in seconds for a spherical head
/// (Woodworth): `(r / c) (sin θ + θ)` with `θ = |azimuth|`.
pub fn woodworth_itd(azimuth_deg: f64, head_radius_m: f64) -> f64 {
    let theta = azimuth_deg.abs().to_radians();
    head_radius_m / SPEED_OF_SOUND * (theta.sin() + theta)
}

/// Hann-windowed sinc interpolator delaying by `delay` samples.
fn fractional_delay(delay: f64, n_taps: usize) -> Vec<f64> {
    let half_width = n_taps as f64 / 2.0;
    let mut taps: Vec<f64> = (0..n_taps)
        .map(|n| {
            let x = n as f64 - delay;
            let sinc = if x.abs() < 1e-12 {
                1.0
            } else {
                (PI * x).sin() / (PI * x)
            };
            let window = if x.abs() < half_width {
                0.5 * (1.0 + (PI * x / half_width).cos())
            } else {
                0.0
            };
            sinc * window
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// One-pole lowpass applied to a finite response, extended until the
/// recursive tail has decayed below 1e-9 of its peak.
fn one_pole_lowpass(h: &[f64], cutoff_hz: f64, sample_rate: f64) -> Vec<f64> {
    let pole = (-2.0 * PI * cutoff_hz / sample_rate).exp();
    let tail = if pole > 0.0 {
        (1e-9f64.ln() / pole.ln()).ceil() as usize
    } else {
        0
    };
    let mut y = Vec::with_capacity(h.len() + tail);
    let mut state = 0.0;
    for n in 0..h.len() + tail {
        let x = h.get(n).copied().unwrap_or(0.0);
        state = (1.0 - pole) * x + pole * state;
        y.push(state);
    }
    y
}

/// Synthetic HRIR from a spherical-head ITD, a broadband ILD and a
/// head-shadow lowpass on the far ear.
///
/// Positive azimuths are to the listener's right, so the right ear is the
/// near ear. The ITD is split symmetrically: the near ear is advanced and
/// the far ear delayed by half of it around a common 16-sample bulk delay.
pub fn synth_hrir(azimuth_deg: f64, sample_rate: u32, head_radius_m: f64, ild_db: f64) -> Result<HrirPair> {
    if !azimuth_deg.is_finite() || azimuth_deg.abs() > 90.0 {
        return Err(Error::AzimuthOutOfRange(azimuth_deg));
    }
    if sample_rate == 0 || head_radius_m.is_nan() || head_radius_m < 0.0 || !ild_db.is_finite() {
        return Err(Error::InvalidConfig("invalid HRIR synthesis parameters".into()));
    }
    let fs = f64::from(sample_rate);
    let itd_samples = woodworth_itd(azimuth_deg, head_radius_m) * fs;
    let centre = (FRACTIONAL_DELAY_TAPS - 1) as f64 / 2.0;
    let shadow = azimuth_deg.to_radians().sin().abs();
    let near_gain = 10f64.powf(ild_db * shadow / 2.0 / 20.0);
    let far_gain = 10f64.powf(-ild_db * shadow / 2.0 / 20.0);

    let near: Vec<f64> = fractional_delay(centre - itd_samples / 2.0, FRACTIONAL_DELAY_TAPS)
        .into_iter()
        .map(|v| v * near_gain)
        .collect();
    let mut far: Vec<f64> = fractional_delay(centre + itd_samples / 2.0, FRACTIONAL_DELAY_TAPS)
        .into_iter()
        .map(|v| v * far_gain)
        .collect();
    if azimuth_deg != 0.0 {
        far = one_pole_lowpass(&far, HEAD_SHADOW_CUTOFF_HZ.min(0.45 * fs), fs);
    }
    let len = near.len().max(far.len());
    let (near, far) = (padded(&near, len), padded(&far, len));
    let (left, right) = if azimuth_deg >= 0.0 { (far, near) } else { (near, far) };
    HrirPair::new(left, right, sample_rate, azimuth_deg)
}

/// Loads a left/right pair of mono WAV impulse responses, decimating both
/// to `target_rate`.
pub fn load_hrir_pair(path_left: impl AsRef<Path>, path_right: impl AsRef<Path>, target_rate: u32) -> Result<HrirPair> {
    let load = |p: &Path| -> Result<Vec<f64>> {
        let buf = read_wav(p)?;
        let buf = decimate(&buf, target_rate)?;
        Ok(buf.expect_mono()?.to_vec())
    };
    HrirPair::new(
        load(path_left.as_ref())?,
        load(path_right.as_ref())?,
        target_rate,
        f64::NAN,
    )
}

/// Convolves each stem with its HRIR pair and sums per ear.
///
/// Convolution tails are kept; the references are the unconvolved stems
/// zero-padded to the mixture length.
pub fn spatialize_and_mix(
    a: &AudioBuffer,
    b: &AudioBuffer,
    hrir_a: &HrirPair,
    hrir_b: &HrirPair,
) -> Result<MixtureScene> {
    check_rates(a, b)?;
    for h in [hrir_a, hrir_b] {
        if h.sample_rate != a.sample_rate() {
            return Err(Error::RateMismatch(a.sample_rate(), h.sample_rate));
        }
    }
    let (xa, xb) = (a.expect_mono()?, b.expect_mono()?);
    let ears = [(&hrir_a.left, &hrir_b.left), (&hrir_a.right, &hrir_b.right)];
    let convolved: Vec<(Vec<f64>, Vec<f64>)> = ears
        .iter()
        .map(|(ha, hb)| (convolve(xa, ha), convolve(xb, hb)))
        .collect();
    let len = convolved
        .iter()
        .map(|(ya, yb)| ya.len().max(yb.len()))
        .max()
        .unwrap_or(0);
    let channels = convolved
        .into_iter()
        .map(|(ya, yb)| {
            let mut ear = padded(&ya, len);
            for (s, v) in ear.iter_mut().zip(&yb) {
                *s += v;
            }
            ear
        })
        .collect();
    let rate = a.sample_rate();
    Ok(MixtureScene {
        mode: SceneMode::Binaural,
        mixture: AudioBuffer::new(channels, rate)?,
        reference_a: AudioBuffer::mono(padded(xa, len), rate)?,
        reference_b: AudioBuffer::mono(padded(xb, len), rate)?,
    })
}
