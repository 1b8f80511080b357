//! Overlapping rectangular windows and their averaged overlap-add inverse.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Frames cut from one signal at a fixed hop.
///
/// Frame `i` covers source samples `i*hop .. i*hop + window_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    frames: Matrix,
    hop: usize,
    source_len: usize,
}

/// Number of whole windows that fit in `len` samples.
pub fn frame_count(len: usize, window_len: usize, hop: usize) -> usize {
    if len < window_len || hop == 0 || window_len == 0 {
        0
    } else {
        (len - window_len) / hop + 1
    }
}

impl FrameSet {
    /// Builds a frame set from an existing matrix, checking its shape against
    /// `hop` and `source_len`.
    pub fn from_matrix(frames: Matrix, hop: usize, source_len: usize) -> Result<Self> {
        if hop == 0 || frames.cols() == 0 {
            return Err(Error::InvalidConfig("window and hop must be at least 1".into()));
        }
        let expected = frame_count(source_len, frames.cols(), hop);
        if frames.rows() != expected {
            return Err(Error::Alignment(format!(
                "{} frames for source length {source_len}, window {}, hop {hop} (expected {expected})",
                frames.rows(),
                frames.cols()
            )));
        }
        Ok(FrameSet {
            frames,
            hop,
            source_len,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn window_len(&self) -> usize {
        self.frames.cols()
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        self.frames.row(i)
    }

    pub fn frames(&self) -> &Matrix {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut Matrix {
        &mut self.frames
    }

    /// Length of the region covered by at least one frame.
    pub fn covered_len(&self) -> usize {
        match self.num_frames() {
            0 => 0,
            n => (n - 1) * self.hop + self.window_len(),
        }
    }
}

/// Cuts `signal` into windows of `window_len` samples every `hop` samples.
/// A trailing remainder shorter than one window is dropped.
pub fn extract_frames(signal: &[f64], window_len: usize, hop: usize) -> Result<FrameSet> {
    if window_len == 0 || hop == 0 {
        return Err(Error::InvalidConfig("window and hop must be at least 1".into()));
    }
    if signal.len() < window_len {
        return Err(Error::SignalTooShort {
            len: signal.len(),
            window: window_len,
        });
    }
    let n = frame_count(signal.len(), window_len, hop);
    let mut data = Vec::with_capacity(n * window_len);
    for i in 0..n {
        data.extend_from_slice(&signal[i * hop..i * hop + window_len]);
    }
    Ok(FrameSet {
        frames: Matrix::from_vec(n, window_len, data),
        hop,
        source_len: signal.len(),
    })
}

/// Places every frame at its offset and averages all contributions per
/// sample. The output spans the covered region.
pub fn overlap_add_average(frames: &FrameSet) -> Result<Vec<f64>> {
    if frames.num_frames() == 0 {
        return Err(Error::InvalidConfig("empty frame set".into()));
    }
    let w = frames.window_len();
    let hop = frames.hop();
    let len = frames.covered_len();
    let mut sum = vec![0.0; len];
    let mut count = vec![0u32; len];
    // frames in index order so each position sums in a fixed order
    for (i, frame) in frames.frames().row_iter().enumerate() {
        let start = i * hop;
        for (k, v) in frame.iter().enumerate() {
            sum[start + k] += v;
            count[start + k] += 1;
        }
    }
    debug_assert!(count.iter().all(|&c| c > 0) || hop > w);
    Ok(sum
        .into_iter()
        .zip(count)
        .map(|(s, c)| if c == 0 { 0.0 } else { s / f64::from(c) })
        .collect())
}

/// Subtracts the mean.
pub fn remove_dc(signal: &[f64]) -> Vec<f64> {
    if signal.is_empty() {
        return Vec::new();
    }
    let mean = signal.iter().sum::<f64>() / signal.len() as f64;
    signal.iter().map(|v| v - mean).collect()
}

/// Input / target pairs for supervised training.
///
/// Row `i` of both matrices comes from the same time offset. Targets are
/// `[voice_a ‖ voice_b]`; binaural inputs are `[left ‖ right]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub inputs: Matrix,
    pub targets: Matrix,
}

impl TrainingSet {
    pub fn new(inputs: Matrix, targets: Matrix) -> Result<Self> {
        if inputs.rows() != targets.rows() {
            return Err(Error::Alignment(format!(
                "{} input rows vs {} target rows",
                inputs.rows(),
                targets.rows()
            )));
        }
        Ok(TrainingSet { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn target_dim(&self) -> usize {
        self.targets.cols()
    }
}

fn check_aligned(reference: &FrameSet, other: &FrameSet, what: &str) -> Result<()> {
    if reference.num_frames() != other.num_frames()
        || reference.window_len() != other.window_len()
        || reference.hop() != other.hop()
    {
        return Err(Error::Alignment(format!(
            "{what}: {} frames (window {}, hop {}) vs {} frames (window {}, hop {})",
            other.num_frames(),
            other.window_len(),
            other.hop(),
            reference.num_frames(),
            reference.window_len(),
            reference.hop()
        )));
    }
    Ok(())
}

fn concat_rows(parts: &[&FrameSet]) -> Matrix {
    let n = parts[0].num_frames();
    let width: usize = parts.iter().map(|p| p.window_len()).sum();
    let mut data = Vec::with_capacity(n * width);
    for i in 0..n {
        for p in parts {
            data.extend_from_slice(p.frame(i));
        }
    }
    Matrix::from_vec(n, width, data)
}

/// Pairs mixture frames (one set for monaural, left and right for
/// binaural) with `[voice_a ‖ voice_b]` target frames.
pub fn build_training_set(mixture: &[FrameSet], voice_a: &FrameSet, voice_b: &FrameSet) -> Result<TrainingSet> {
    if mixture.is_empty() || mixture.len() > 2 {
        return Err(Error::InvalidConfig(format!(
            "expected 1 or 2 mixture channels, got {}",
            mixture.len()
        )));
    }
    for (i, m) in mixture.iter().enumerate() {
        check_aligned(voice_a, m, &format!("mixture channel {i}"))?;
    }
    check_aligned(voice_a, voice_b, "voice b")?;
    let inputs = concat_rows(&mixture.iter().collect::<Vec<_>>());
    let targets = concat_rows(&[voice_a, voice_b]);
    TrainingSet::new(inputs, targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn paper_scale_frame_counts() {
        assert_eq!(frame_count(480_000, 1000, 10), 47_901);
        assert_eq!(frame_count(40_000, 1000, 1), 39_001);
        let fs = extract_frames(&vec![0.0; 40_000], 1000, 1).unwrap();
        assert_eq!(fs.num_frames(), 39_001);
    }

    #[test]
    fn single_window() {
        let x = [1.0, 2.0, 3.0];
        let fs = extract_frames(&x, 3, 7).unwrap();
        assert_eq!(fs.num_frames(), 1);
        assert_eq!(fs.frame(0), &x);
        assert_eq!(overlap_add_average(&fs).unwrap(), x);
    }

    #[test]
    fn short_signal_is_error() {
        assert!(matches!(
            extract_frames(&[1.0, 2.0], 3, 1),
            Err(Error::SignalTooShort { .. })
        ));
        assert!(extract_frames(&[1.0, 2.0], 1, 0).is_err());
    }

    #[test]
    fn overlap_add_averages_contributions() {
        let frames = Matrix::from_vec(2, 2, vec![0.0, 0.0, 2.0, 2.0]);
        let fs = FrameSet::from_matrix(frames, 1, 3).unwrap();
        assert_eq!(overlap_add_average(&fs).unwrap(), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn empty_frameset_is_error() {
        let fs = FrameSet::from_matrix(Matrix::zeros(0, 4), 1, 2).unwrap();
        assert!(overlap_add_average(&fs).is_err());
    }

    #[test]
    fn remove_dc_examples() {
        assert_eq!(remove_dc(&[4.0, 4.0]), vec![0.0, 0.0]);
        assert_eq!(remove_dc(&[-1.0, 1.0]), vec![-1.0, 1.0]);
        assert_eq!(remove_dc(&[1.0, 2.0, 3.0]), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn monaural_training_rows() {
        let m = extract_frames(&[0.5, 0.5], 2, 1).unwrap();
        let a = extract_frames(&[0.5, 0.0], 2, 1).unwrap();
        let b = extract_frames(&[0.0, 0.5], 2, 1).unwrap();
        let ts = build_training_set(&[m], &a, &b).unwrap();
        assert_eq!(ts.inputs.row(0), &[0.5, 0.5]);
        assert_eq!(ts.targets.row(0), &[0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn binaural_inputs_are_left_then_right() {
        let l = extract_frames(&[1.0, 1.0], 2, 1).unwrap();
        let r = extract_frames(&[0.0, 0.0], 2, 1).unwrap();
        let ts = build_training_set(&[l.clone(), r], &l, &l).unwrap();
        assert_eq!(ts.inputs.row(0), &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(ts.input_dim(), 4);
    }

    #[test]
    fn misaligned_sets_are_rejected() {
        let m = extract_frames(&[0.0; 5], 2, 1).unwrap();
        let a = extract_frames(&[0.0; 4], 2, 1).unwrap();
        assert!(matches!(
            build_training_set(std::slice::from_ref(&m), &a, &a),
            Err(Error::Alignment(_))
        ));
        assert!(build_training_set(&[], &m, &m).is_err());
    }

    proptest! {
        #[test]
        fn frame_then_overlap_add_is_identity(
            x in prop::collection::vec(-10.0f64..10.0, 1..400),
            w_frac in 0.0f64..1.0,
            hop_frac in 0.0f64..1.0,
        ) {
            let w = 1 + (w_frac * (x.len() - 1) as f64) as usize;
            let hop = 1 + (hop_frac * (w - 1) as f64) as usize;
            let fs = extract_frames(&x, w, hop).unwrap();
            prop_assert_eq!(fs.num_frames(), (x.len() - w) / hop + 1);
            let y = overlap_add_average(&fs).unwrap();
            prop_assert_eq!(y.len(), fs.covered_len());
            for (a, b) in y.iter().zip(&x) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn training_rows_are_source_slices(len in 8usize..100, w in 1usize..8, hop in 1usize..8) {
            let src: Vec<f64> = (0..len).map(|i| i as f64).collect();
            let b: Vec<f64> = src.iter().map(|v| -v).collect();
            let fa = extract_frames(&src, w, hop).unwrap();
            let fb = extract_frames(&b, w, hop).unwrap();
            let ts = build_training_set(std::slice::from_ref(&fa), &fa, &fb).unwrap();
            for i in 0..ts.len() {
                prop_assert_eq!(ts.inputs.row(i), &src[i * hop..i * hop + w]);
                prop_assert_eq!(&ts.targets.row(i)[w..], &b[i * hop..i * hop + w]);
            }
        }
    }
}
