//! Audio buffers, WAV files, decimation and unit normalization.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

/// A multichannel sampled signal.
///
/// All channels share one length and every sample is finite. Construction
/// through [`AudioBuffer::new`] enforces both.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidBuffer("no channels".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidBuffer("sample rate must be positive".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidBuffer("channels differ in length".into()));
        }
        if channels.iter().flatten().any(|s| !s.is_finite()) {
            return Err(Error::InvalidBuffer("non-finite sample".into()));
        }
        Ok(AudioBuffer { channels, sample_rate })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn zeros(num_channels: usize, len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![vec![0.0; len]; num_channels], sample_rate)
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn is_mono(&self) -> bool {
        self.channels.len() == 1
    }

    /// Returns the single channel of a mono buffer.
    pub fn expect_mono(&self) -> Result<&[f64]> {
        if self.is_mono() {
            Ok(&self.channels[0])
        } else {
            Err(Error::InvalidBuffer(format!(
                "expected mono, got {} channels",
                self.channels.len()
            )))
        }
    }

    /// Copy of the first `len` samples of every channel.
    pub fn truncated(&self, len: usize) -> AudioBuffer {
        let channels = self.channels.iter().map(|c| c[..len.min(c.len())].to_vec()).collect();
        AudioBuffer {
            channels,
            sample_rate: self.sample_rate,
        }
    }

    /// Copy of samples `start..end` of every channel.
    pub fn slice(&self, start: usize, end: usize) -> AudioBuffer {
        let channels = self.channels.iter().map(|c| c[start..end].to_vec()).collect();
        AudioBuffer {
            channels,
            sample_rate: self.sample_rate,
        }
    }
}

/// Sample encoding used by [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

/// Reads a PCM16 or float-32 WAV file with one or two channels.
///
/// PCM16 samples are divided by 32768, so -32768 maps to exactly -1.0.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(Error::Unsupported(format!("{} channels", spec.channels)));
    }
    let n_ch = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (fmt, bits) => {
            return Err(Error::Unsupported(format!("{fmt:?} {bits}-bit")));
        }
    };
    let mut channels = vec![Vec::with_capacity(interleaved.len() / n_ch); n_ch];
    for frame in interleaved.chunks_exact(n_ch) {
        for (ch, &s) in channels.iter_mut().zip(frame) {
            ch.push(s);
        }
    }
    AudioBuffer::new(channels, spec.sample_rate)
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::Unsupported => Error::Unsupported("WAV variant".into()),
        other => Error::Format(other.to_string()),
    }
}

/// Writes `buffer` as a WAV file.
///
/// PCM16 saturates out-of-range samples; the number of clipped samples is
/// returned (and logged when non-zero). Float-32 output is exact for values
/// representable in `f32`.
pub fn write_wav(buffer: &AudioBuffer, path: impl AsRef<Path>, encoding: WavEncoding) -> Result<usize> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: buffer.num_channels() as u16,
        sample_rate: buffer.sample_rate(),
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => hound::SampleFormat::Int,
            WavEncoding::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    let mut clipped = 0usize;
    for t in 0..buffer.len() {
        for ch in buffer.channels() {
            let s = ch[t];
            match encoding {
                WavEncoding::Pcm16 => {
                    let (v, was_clipped) = to_pcm16(s);
                    clipped += usize::from(was_clipped);
                    writer.write_sample(v).map_err(|e| wav_error(path, e))?;
                }
                WavEncoding::Float32 => {
                    writer.write_sample(s as f32).map_err(|e| wav_error(path, e))?;
                }
            }
        }
    }
    writer.finalize().map_err(|e| wav_error(path, e))?;
    if clipped > 0 {
        log::warn!("{}: clipped {clipped} samples to 16-bit range", path.display());
    }
    Ok(clipped)
}

fn to_pcm16(s: f64) -> (i16, bool) {
    let scaled = (s * 32768.0).round();
    if scaled > f64::from(i16::MAX) {
        (i16::MAX, true)
    } else if scaled < f64::from(i16::MIN) {
        (i16::MIN, true)
    } else {
        (scaled as i16, false)
    }
}

/// Anti-alias taps used by [`decimate`] for an integer factor `m`.
///
/// Linear-phase windowed sinc (Hann), `8m + 1` taps, cutoff at 0.45 of the
/// output Nyquist frequency, unit DC gain.
pub fn decimation_filter(m: usize) -> Vec<f64> {
    let n_taps = 8 * m + 1;
    let centre = (n_taps - 1) as f64 / 2.0;
    // cycles per input sample
    let fc = 0.45 * 0.5 / m as f64;
    let mut taps: Vec<f64> = (0..n_taps)
        .map(|n| {
            let x = n as f64 - centre;
            let sinc = if x == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * x).sin() / (PI * x)
            };
            let hann = 0.5 - 0.5 * (2.0 * PI * (n as f64 + 1.0) / (n_taps as f64 + 1.0)).cos();
            sinc * hann
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Lowpass-filters and downsamples by the integer factor
/// `sample_rate / target_rate`. Output length is `ceil(len / m)`; the
/// filter's group delay is compensated so output sample `j` is aligned
/// with input sample `j * m`.
pub fn decimate(buffer: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    let from = buffer.sample_rate();
    if target_rate == 0 || !from.is_multiple_of(target_rate) {
        return Err(Error::UnsupportedRate { from, to: target_rate });
    }
    let m = (from / target_rate) as usize;
    if m == 1 {
        return Ok(buffer.clone());
    }
    let taps = decimation_filter(m);
    let delay = (taps.len() - 1) / 2;
    let channels = buffer
        .channels()
        .iter()
        .map(|x| {
            let len = x.len();
            (0..len.div_ceil(m))
                .map(|j| {
                    let centre = j * m;
                    // y[c] = sum_k h[k] x[c + delay - k]
                    taps.iter()
                        .enumerate()
                        .filter_map(|(k, h)| {
                            let idx = (centre + delay).checked_sub(k)?;
                            x.get(idx).map(|v| h * v)
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    AudioBuffer::new(channels, target_rate)
}

/// Affine map applied by [`normalize_unit`]: `y = (x - offset) / scale + 0.5`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationParams {
    pub offset: f64,
    pub scale: f64,
}

fn normalize_channel(x: &[f64]) -> Result<(Vec<f64>, NormalizationParams)> {
    if x.is_empty() {
        return Err(Error::DegenerateSignal("empty signal"));
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let peak = x.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
    if peak <= 0.0 {
        return Err(Error::DegenerateSignal("constant signal cannot be normalized"));
    }
    let scale = 2.0 * peak;
    let y: Vec<f64> = x.iter().map(|v| (v - mean) / scale + 0.5).collect();
    Ok((y, NormalizationParams { offset: mean, scale }))
}

/// Maps each channel into `[0, 1]` with mean 0.5: the mean is removed and
/// the result divided by twice the peak deviation.
///
/// Channels are normalized independently; one parameter set is returned per
/// channel.
pub fn normalize_unit(buffer: &AudioBuffer) -> Result<(AudioBuffer, Vec<NormalizationParams>)> {
    let mut channels = Vec::with_capacity(buffer.num_channels());
    let mut params = Vec::with_capacity(buffer.num_channels());
    for ch in buffer.channels() {
        let (y, p) = normalize_channel(ch)?;
        channels.push(y);
        params.push(p);
    }
    Ok((AudioBuffer::new(channels, buffer.sample_rate())?, params))
}

/// Inverse of [`normalize_unit`]: `x = (y - 0.5) * scale + offset`.
///
/// A single parameter set is broadcast to every channel.
pub fn denormalize(buffer: &AudioBuffer, params: &[NormalizationParams]) -> Result<AudioBuffer> {
    if params.is_empty() || (params.len() != 1 && params.len() != buffer.num_channels()) {
        return Err(Error::InvalidConfig(format!(
            "{} normalization parameter sets for {} channels",
            params.len(),
            buffer.num_channels()
        )));
    }
    if params
        .iter()
        .any(|p| p.scale.is_nan() || p.scale <= 0.0 || !p.offset.is_finite())
    {
        return Err(Error::InvalidConfig("normalization scale must be positive".into()));
    }
    let channels = buffer
        .channels()
        .iter()
        .enumerate()
        .map(|(i, ch)| {
            let p = params[i.min(params.len() - 1)];
            ch.iter().map(|y| (y - 0.5) * p.scale + p.offset).collect()
        })
        .collect();
    AudioBuffer::new(channels, buffer.sample_rate())
}

/// Root-mean-square level of a sequence (0 for an empty one).
pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}
