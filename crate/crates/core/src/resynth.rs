//! Probabilistic re-synthesis with a trained network.
//!
//! Every mixture frame is transformed `N` times; before each pass a fixed
//! fraction of its samples is overwritten with random values drawn to match
//! the mixture's statistics. The pass outputs are averaged, the across-frame
//! mean frame is subtracted per output channel (cancelling units that are
//! active regardless of input), and the frames are overlap-added and
//! re-centred.
//!
//! Each pass draws from its own ChaCha stream keyed by
//! `(seed, frame_index, pass_index)`, so the result does not depend on the
//! order in which frames or passes are evaluated.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::audio_io::AudioBuffer;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::framing::{extract_frames, overlap_add_average, remove_dc, FrameSet};
use crate::linalg::Matrix;
use crate::mlp::Mlp;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResynthesisConfig {
    /// Number of perturbed passes averaged per frame (`N`).
    pub n_passes: usize,
    /// Fraction of input samples replaced before each pass.
    pub perturb_fraction: f64,
    /// Mean of the replacement values; the mixture mean when `None`.
    pub perturb_mean: Option<f64>,
    /// Standard deviation of the replacement values; the mixture standard
    /// deviation when `None`.
    pub perturb_std: Option<f64>,
    pub seed: u64,
}

impl Default for ResynthesisConfig {
    fn default() -> Self {
        ResynthesisConfig {
            n_passes: 100,
            perturb_fraction: 0.5,
            perturb_mean: None,
            perturb_std: None,
            seed: 0,
        }
    }
}

/// A [`ResynthesisConfig`] with the perturbation statistics filled in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedConfig {
    pub n_passes: usize,
    pub perturb_fraction: f64,
    pub perturb_mean: f64,
    pub perturb_std: f64,
    pub seed: u64,
}

impl ResynthesisConfig {
    fn validate(&self) -> Result<()> {
        if self.n_passes == 0 {
            return Err(Error::InvalidConfig("N must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.perturb_fraction) {
            return Err(Error::InvalidConfig(format!(
                "perturbation fraction {} outside [0, 1]",
                self.perturb_fraction
            )));
        }
        if let Some(s) = self.perturb_std {
            if !s.is_finite() || s < 0.0 {
                return Err(Error::InvalidConfig(format!("perturbation std {s} must be >= 0")));
            }
        }
        if self.perturb_mean.is_some_and(|m| !m.is_finite()) {
            return Err(Error::InvalidConfig("perturbation mean must be finite".into()));
        }
        Ok(())
    }

    /// Fills unset statistics from `signal` (all channels jointly).
    pub fn resolve(&self, signal: &AudioBuffer) -> Result<ResolvedConfig> {
        self.validate()?;
        let (mean, std) = joint_stats(signal);
        Ok(ResolvedConfig {
            n_passes: self.n_passes,
            perturb_fraction: self.perturb_fraction,
            perturb_mean: self.perturb_mean.unwrap_or(mean),
            perturb_std: self.perturb_std.unwrap_or(std),
            seed: self.seed,
        })
    }

    /// Uses the given statistics for any unset field.
    pub fn resolve_with(&self, mean: f64, std: f64) -> Result<ResolvedConfig> {
        self.validate()?;
        Ok(ResolvedConfig {
            n_passes: self.n_passes,
            perturb_fraction: self.perturb_fraction,
            perturb_mean: self.perturb_mean.unwrap_or(mean),
            perturb_std: self.perturb_std.unwrap_or(std),
            seed: self.seed,
        })
    }
}

fn joint_stats(signal: &AudioBuffer) -> (f64, f64) {
    let n = (signal.len() * signal.num_channels()).max(1) as f64;
    let mean = signal.channels().iter().flatten().sum::<f64>() / n;
    let var = signal
        .channels()
        .iter()
        .flatten()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

/// Random stream for one perturbation pass.
pub fn pass_stream(seed: u64, frame_index: u64, pass_index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&frame_index.to_le_bytes());
    key[16..24].copy_from_slice(&pass_index.to_le_bytes());
    key[24..].copy_from_slice(b"cdt-pass");
    ChaCha8Rng::from_seed(key)
}

/// Number of samples replaced in a frame of `dim` samples.
pub fn replaced_count(fraction: f64, dim: usize) -> usize {
    ((fraction * dim as f64).floor() as usize).min(dim)
}

/// Writes a perturbed copy of `frame` into `out`: exactly
/// `floor(fraction * dim)` distinct positions, chosen uniformly, receive
/// `Normal(mean, std)` draws clipped to `[0, 1]`.
pub fn perturb_frame_into(frame: &[f64], config: &ResolvedConfig, rng: &mut ChaCha8Rng, out: &mut [f64]) {
    out.copy_from_slice(frame);
    let k = replaced_count(config.perturb_fraction, frame.len());
    if k == 0 {
        return;
    }
    let positions = index::sample(rng, frame.len(), k);
    if config.perturb_std == 0.0 {
        let v = config.perturb_mean.clamp(0.0, 1.0);
        positions.into_iter().for_each(|p| out[p] = v);
        return;
    }
    let normal = Normal::new(config.perturb_mean, config.perturb_std).expect("validated std");
    for p in positions {
        out[p] = normal.sample(rng).clamp(0.0, 1.0);
    }
}

pub fn perturb_frame(frame: &[f64], config: &ResolvedConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; frame.len()];
    perturb_frame_into(frame, config, rng, &mut out);
    out
}

/// Averages `N` perturbed passes of one frame and splits the output into
/// the two voice estimates.
pub fn cdt_frame(
    mlp: &Mlp,
    frame: &[f64],
    config: &ResolvedConfig,
    frame_index: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if frame.len() != mlp.input_dim() {
        return Err(Error::Dimension {
            expected: mlp.input_dim(),
            got: frame.len(),
        });
    }
    if !mlp.output_dim().is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!(
            "network output size {} is not two windows",
            mlp.output_dim()
        )));
    }
    let n = config.n_passes;
    let d_in = frame.len();
    let mut batch = vec![0.0; n * d_in];
    for (p, row) in batch.chunks_exact_mut(d_in).enumerate() {
        let mut rng = pass_stream(config.seed, frame_index as u64, p as u64);
        perturb_frame_into(frame, config, &mut rng, row);
    }
    let outputs = mlp.forward_batch(&batch, n)?;
    let d_out = mlp.output_dim();
    let mut mean = vec![0.0; d_out];
    for row in outputs.chunks_exact(d_out) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let inv = 1.0 / n as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    let est_b = mean.split_off(d_out / 2);
    Ok((mean, est_b))
}

/// Per-frame estimates for both voices.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatedFrames {
    pub voice_a: FrameSet,
    pub voice_b: FrameSet,
}

/// Subtracts the mean frame (per position, over all frames).
pub fn invariant_correction(frames: &FrameSet) -> FrameSet {
    let w = frames.window_len();
    let n = frames.num_frames();
    let mut mean = vec![0.0; w];
    for row in frames.frames().row_iter() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
    let mut out = frames.clone();
    let cols = w;
    for row in out.frames_mut().as_mut_slice().chunks_exact_mut(cols.max(1)) {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    out
}

/// Network inputs for every hop-1 frame of a (normalized) mixture:
/// mono frames, or `[left ‖ right]` for stereo.
pub fn mixture_frames(mixture: &AudioBuffer, window_len: usize) -> Result<Vec<FrameSet>> {
    if mixture.num_channels() > 2 {
        return Err(Error::InvalidBuffer(format!(
            "{} channel mixture",
            mixture.num_channels()
        )));
    }
    mixture
        .channels()
        .iter()
        .map(|ch| extract_frames(ch, window_len, 1))
        .collect()
}

/// Runs [`cdt_frame`] on every hop-1 frame of `mixture`.
pub fn separate_frames(
    mlp: &Mlp,
    mixture: &AudioBuffer,
    window_len: usize,
    config: &ResolvedConfig,
    exec: Execution,
) -> Result<SeparatedFrames> {
    let per_channel = mixture_frames(mixture, window_len)?;
    let input_dim = window_len * per_channel.len();
    if input_dim != mlp.input_dim() {
        return Err(Error::Dimension {
            expected: mlp.input_dim(),
            got: input_dim,
        });
    }
    if mlp.output_dim() != 2 * window_len {
        return Err(Error::Dimension {
            expected: 2 * window_len,
            got: mlp.output_dim(),
        });
    }
    let n_frames = per_channel[0].num_frames();
    let results = exec.map_range(n_frames, |i| {
        let input: Vec<f64> = per_channel.iter().flat_map(|fs| fs.frame(i).iter().copied()).collect();
        cdt_frame(mlp, &input, config, i)
    });
    let mut a = Vec::with_capacity(n_frames * window_len);
    let mut b = Vec::with_capacity(n_frames * window_len);
    for r in results {
        let (ea, eb) = r?;
        a.extend_from_slice(&ea);
        b.extend_from_slice(&eb);
    }
    let source_len = mixture.len();
    Ok(SeparatedFrames {
        voice_a: FrameSet::from_matrix(Matrix::from_vec(n_frames, window_len, a), 1, source_len)?,
        voice_b: FrameSet::from_matrix(Matrix::from_vec(n_frames, window_len, b), 1, source_len)?,
    })
}

/// Turns separated frames into two zero-mean signals: invariant
/// correction, averaged overlap-add, DC removal.
pub fn reconstruct(frames: &SeparatedFrames) -> Result<(Vec<f64>, Vec<f64>)> {
    let finish = |fs: &FrameSet| -> Result<Vec<f64>> {
        let corrected = invariant_correction(fs);
        Ok(remove_dc(&overlap_add_average(&corrected)?))
    };
    Ok((finish(&frames.voice_a)?, finish(&frames.voice_b)?))
}

/// Full separation of a normalized mixture (mono or `[left, right]`) into
/// two mono estimates at the mixture's rate.
pub fn separate_signal(
    mlp: &Mlp,
    mixture: &AudioBuffer,
    window_len: usize,
    config: &ResynthesisConfig,
    exec: Execution,
) -> Result<(AudioBuffer, AudioBuffer)> {
    if mixture.len() < window_len {
        return Err(Error::SignalTooShort {
            len: mixture.len(),
            window: window_len,
        });
    }
    let resolved = config.resolve(mixture)?;
    let frames = separate_frames(mlp, mixture, window_len, &resolved, exec)?;
    let (a, b) = reconstruct(&frames)?;
    let rate = mixture.sample_rate();
    Ok((AudioBuffer::mono(a, rate)?, AudioBuffer::mono(b, rate)?))
}
