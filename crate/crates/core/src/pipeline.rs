//! End-to-end experiment plumbing shared by the CLI and the test suites:
//! scene construction, train/test split, training-set assembly, separation
//! and scoring over a sweep of `N`.

use crate::audio_io::{normalize_unit, AudioBuffer};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::framing::{build_training_set, extract_frames, TrainingSet};
use crate::metrics::{bss_eval, SeparationMetrics};
use crate::mlp::{train_sgd_with, Mlp, TrainConfig};
use crate::resynth::{separate_signal, ResynthesisConfig};
use crate::scene::{
    equalize_rms, monaural_scene, spatialize_and_mix, synth_hrir, HrirPair, MixtureScene, SceneMode,
    DEFAULT_HEAD_RADIUS_M, DEFAULT_ILD_DB,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub sample_rate: u32,
    pub train_seconds: f64,
    pub test_seconds: f64,
    pub window_len: usize,
    pub hop_train: usize,
    pub hop_test: usize,
    pub hidden_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub n_list: Vec<usize>,
    pub perturb_fraction: f64,
    pub seed: u64,
    pub mode: SceneMode,
    pub filter_len: usize,
    pub azimuths_deg: (f64, f64),
}

impl Default for ExperimentConfig {
    /// Full-scale settings: 4 kHz, 2 min / 10 s, W = 1000, hops 10 / 1,
    /// 2500 hidden units, 300 epochs, N up to 100, half the samples
    /// perturbed, sources at +45 / -45 degrees.
    fn default() -> Self {
        ExperimentConfig {
            sample_rate: 4000,
            train_seconds: 120.0,
            test_seconds: 10.0,
            window_len: 1000,
            hop_train: 10,
            hop_test: 1,
            hidden_size: 2500,
            epochs: 300,
            learning_rate: 0.05,
            n_list: vec![1, 2, 5, 10, 20, 50, 100],
            perturb_fraction: 0.5,
            seed: 0,
            mode: SceneMode::Monaural,
            filter_len: crate::metrics::DEFAULT_FILTER_LEN,
            azimuths_deg: (45.0, -45.0),
        }
    }
}

impl ExperimentConfig {
    /// Minutes-scale preset: W = 128, 256 hidden units, 50 epochs, 10 s of
    /// audio (8 s train, 2 s test).
    pub fn desk() -> Self {
        ExperimentConfig {
            train_seconds: 8.0,
            test_seconds: 2.0,
            window_len: 128,
            hidden_size: 256,
            epochs: 50,
            n_list: vec![1, 4, 16, 32],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.window_len == 0 || self.hidden_size == 0 {
            return fail("window and hidden size must be positive".into());
        }
        if self.hop_train == 0 || self.hop_train > self.window_len {
            return fail(format!(
                "training hop {} must lie in 1..={}",
                self.hop_train, self.window_len
            ));
        }
        if self.hop_test != 1 {
            return fail("test frames are taken at hop 1".into());
        }
        if self.n_list.is_empty() || self.n_list.contains(&0) || self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!(
                "N list {:?} must be strictly increasing and positive",
                self.n_list
            ));
        }
        if !(self.train_seconds > 0.0 && self.test_seconds > 0.0) {
            return fail("train and test durations must be positive".into());
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        match self.mode {
            SceneMode::Monaural => self.window_len,
            SceneMode::Binaural => 2 * self.window_len,
        }
    }

    pub fn layer_sizes(&self) -> [usize; 3] {
        [self.input_dim(), self.hidden_size, 2 * self.window_len]
    }

    pub fn train_len(&self) -> usize {
        (self.train_seconds * f64::from(self.sample_rate)).round() as usize
    }

    pub fn test_len(&self) -> usize {
        (self.test_seconds * f64::from(self.sample_rate)).round() as usize
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed: self.seed,
            shuffle: true,
        }
    }

    pub fn resynthesis_config(&self, n_passes: usize) -> ResynthesisConfig {
        ResynthesisConfig {
            n_passes,
            perturb_fraction: self.perturb_fraction,
            perturb_mean: None,
            perturb_std: None,
            seed: self.seed,
        }
    }

    /// Default synthetic HRIRs for the two sources.
    pub fn synth_hrirs(&self) -> Result<(HrirPair, HrirPair)> {
        Ok((
            synth_hrir(
                self.azimuths_deg.0,
                self.sample_rate,
                DEFAULT_HEAD_RADIUS_M,
                DEFAULT_ILD_DB,
            )?,
            synth_hrir(
                self.azimuths_deg.1,
                self.sample_rate,
                DEFAULT_HEAD_RADIUS_M,
                DEFAULT_ILD_DB,
            )?,
        ))
    }
}

/// Level-matches two stems and mixes them monaurally, or binaurally through
/// the given HRIRs.
pub fn build_scene(a: &AudioBuffer, b: &AudioBuffer, hrirs: Option<(&HrirPair, &HrirPair)>) -> Result<MixtureScene> {
    let (a, b) = equalize_rms(a, b)?;
    match hrirs {
        None => monaural_scene(&a, &b),
        Some((ha, hb)) => spatialize_and_mix(&a, &b, ha, hb),
    }
}

/// Samples `start..end` of every signal in a scene.
pub fn slice_scene(scene: &MixtureScene, start: usize, end: usize) -> Result<MixtureScene> {
    if end > scene.mixture.len() || start >= end {
        return Err(Error::SignalTooShort {
            len: scene.mixture.len(),
            window: end,
        });
    }
    Ok(MixtureScene {
        mode: scene.mode,
        mixture: scene.mixture.slice(start, end),
        reference_a: scene.reference_a.slice(start, end),
        reference_b: scene.reference_b.slice(start, end),
    })
}

/// Consecutive train and test segments of a scene.
pub fn split_scene(scene: &MixtureScene, train_len: usize, test_len: usize) -> Result<(MixtureScene, MixtureScene)> {
    Ok((
        slice_scene(scene, 0, train_len)?,
        slice_scene(scene, train_len, train_len + test_len)?,
    ))
}

/// Normalizes every signal of a scene to `[0, 1]` and pairs mixture windows
/// with `[voice_a ‖ voice_b]` target windows.
pub fn training_set(scene: &MixtureScene, window_len: usize, hop: usize) -> Result<TrainingSet> {
    let (mixture, _) = normalize_unit(&scene.mixture)?;
    let (ref_a, _) = normalize_unit(&scene.reference_a)?;
    let (ref_b, _) = normalize_unit(&scene.reference_b)?;
    let mixture_frames = mixture
        .channels()
        .iter()
        .map(|ch| extract_frames(ch, window_len, hop))
        .collect::<Result<Vec<_>>>()?;
    build_training_set(
        &mixture_frames,
        &extract_frames(ref_a.expect_mono()?, window_len, hop)?,
        &extract_frames(ref_b.expect_mono()?, window_len, hop)?,
    )
}

/// Trains a fresh network (seeded by `config.seed`) on a training scene.
pub fn train_on_scene<F>(scene: &MixtureScene, config: &ExperimentConfig, on_epoch: F) -> Result<(Mlp, Vec<f64>)>
where
    F: FnMut(usize, f64),
{
    let data = training_set(scene, config.window_len, config.hop_train)?;
    log::info!("{} training frames", data.len());
    let mlp = Mlp::new(&config.layer_sizes(), config.seed)?;
    train_sgd_with(mlp, &data, &config.train_config(), on_epoch)
}

/// Separates a test scene's mixture into two mono estimates (normalized
/// domain, zero mean).
pub fn separate_scene(
    mlp: &Mlp,
    scene: &MixtureScene,
    window_len: usize,
    config: &ResynthesisConfig,
    exec: Execution,
) -> Result<(AudioBuffer, AudioBuffer)> {
    let (mixture, _) = normalize_unit(&scene.mixture)?;
    separate_signal(mlp, &mixture, window_len, config, exec)
}

/// Scores two estimates against a scene's references.
pub fn score(scene: &MixtureScene, est_a: &[f64], est_b: &[f64], filter_len: usize) -> Result<SeparationMetrics> {
    let n = est_a.len().min(est_b.len()).min(scene.reference_a.len());
    let ra = &scene.reference_a.channel(0)[..n];
    let rb = &scene.reference_b.channel(0)[..n];
    bss_eval(&[&est_a[..n], &est_b[..n]], &[ra, rb], filter_len)
}

/// Scores the unprocessed mixture as the estimate of both sources. Stereo
/// mixtures are averaged across ears first.
pub fn mixture_baseline(scene: &MixtureScene, filter_len: usize) -> Result<SeparationMetrics> {
    let chans = scene.mixture.channels();
    let mid: Vec<f64> = (0..scene.mixture.len())
        .map(|t| chans.iter().map(|c| c[t]).sum::<f64>() / chans.len() as f64)
        .collect();
    score(scene, &mid, &mid, filter_len)
}

/// Outcome of one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub loss_history: Vec<f64>,
    pub model: Mlp,
    pub baseline: SeparationMetrics,
    /// One entry per `N`, in `n_list` order.
    pub metrics: Vec<SeparationMetrics>,
    /// Estimates for every `N`, in `n_list` order.
    pub estimates: Vec<(AudioBuffer, AudioBuffer)>,
    pub test_scene: MixtureScene,
    pub train_frames: usize,
}

/// Mix, split, train, then separate and score for every `N` in the list.
pub fn run_experiment<F>(
    voice_a: &AudioBuffer,
    voice_b: &AudioBuffer,
    hrirs: Option<(&HrirPair, &HrirPair)>,
    config: &ExperimentConfig,
    exec: Execution,
    on_epoch: F,
) -> Result<ExperimentReport>
where
    F: FnMut(usize, f64),
{
    config.validate()?;
    let scene = build_scene(voice_a, voice_b, hrirs)?;
    if (scene.mode == SceneMode::Binaural) != (config.mode == SceneMode::Binaural) {
        return Err(Error::InvalidConfig("scene mode does not match configuration".into()));
    }
    let (train, test) = split_scene(&scene, config.train_len(), config.test_len())?;
    let train_frames = crate::framing::frame_count(train.mixture.len(), config.window_len, config.hop_train);
    let (model, loss_history) = train_on_scene(&train, config, on_epoch)?;
    let baseline = mixture_baseline(&test, config.filter_len)?;
    let mut metrics = Vec::with_capacity(config.n_list.len());
    let mut estimates = Vec::with_capacity(config.n_list.len());
    for &n in &config.n_list {
        let (a, b) = separate_scene(&model, &test, config.window_len, &config.resynthesis_config(n), exec)?;
        let mut m = score(&test, a.channel(0), b.channel(0), config.filter_len)?;
        m.n_passes = Some(n);
        log::info!(
            "N = {n}: SDR {:.2} / {:.2} dB, SIR {:.2} / {:.2} dB",
            m.sources[0].sdr_db,
            m.sources[1].sdr_db,
            m.sources[0].sir_db,
            m.sources[1].sir_db
        );
        metrics.push(m);
        estimates.push((a, b));
    }
    Ok(ExperimentReport {
        loss_history,
        model,
        baseline,
        metrics,
        estimates,
        test_scene: test,
        train_frames,
    })
}

/// `n,source,sdr_db,sir_db,sar_db` rows for every `N` and source.
pub fn sweep_csv(metrics: &[SeparationMetrics]) -> String {
    use crate::metrics::{csv_db, source_name};
    let mut out = String::from("n,source,sdr_db,sir_db,sar_db\n");
    for m in metrics {
        let n = m.n_passes.map(|n| n.to_string()).unwrap_or_default();
        for (i, s) in m.sources.iter().enumerate() {
            out.push_str(&format!(
                "{n},{},{},{},{}\n",
                source_name(i),
                csv_db(s.sdr_db),
                csv_db(s.sir_db),
                csv_db(s.sar_db)
            ));
        }
    }
    out
}

/// One `epoch,loss` row per epoch.
pub fn loss_csv(history: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        out.push_str(&format!("{},{l:.9}\n", i + 1));
    }
    out
}
