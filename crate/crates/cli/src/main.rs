//! `cdt`: mix, train, separate, evaluate, plot and sweep from the command
//! line.

mod config_file;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use cdt::audio_io::{decimate, normalize_unit, read_wav, write_wav, AudioBuffer, WavEncoding};
use cdt::metrics::{bss_eval, spectrogram, DEFAULT_FILTER_LEN};
use cdt::mlp::{load_model, save_model};
use cdt::pipeline::{self, ExperimentConfig};
use cdt::resynth::{separate_signal, ResynthesisConfig};
use cdt::scene::{load_hrir_pair, synth_hrir, HrirPair, SceneMode, DEFAULT_HEAD_RADIUS_M, DEFAULT_ILD_DB};
use cdt::synth::voice_pair;
use cdt::Execution;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "cdt",
    version,
    about = "Time-domain two-talker separation with a convolutive deep transform"
)]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a monaural or binaural two-talker mixture and its reference stems.
    Mix(MixArgs),
    /// Train the separation network on a mixture and its references.
    Train(TrainArgs),
    /// Separate a mixture with a trained model.
    Separate(SeparateArgs),
    /// Score two estimates against two references (SDR/SIR/SAR).
    Evaluate(EvaluateArgs),
    /// Write a magnitude spectrogram as CSV or PGM.
    Spectrogram(SpectrogramArgs),
    /// Mix, train, then separate and score for every N in a list.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct VoiceArgs {
    /// First talker (mono WAV); occupies output slot a.
    #[arg(long, requires = "voice_b", conflicts_with = "synthetic")]
    voice_a: Option<PathBuf>,
    /// Second talker (mono WAV); occupies output slot b.
    #[arg(long, requires = "voice_a")]
    voice_b: Option<PathBuf>,
    /// Generate synthetic 110 Hz / 220 Hz talkers of this many seconds
    /// instead of reading files.
    #[arg(long)]
    synthetic: Option<f64>,
    /// Working sample rate; inputs are decimated to it.
    #[arg(long, default_value_t = 4000)]
    rate: u32,
    /// HRIR for talker a: `synth:+45` or `file:left.wav,right.wav`.
    #[arg(long, requires = "hrir_b")]
    hrir_a: Option<String>,
    /// HRIR for talker b.
    #[arg(long, requires = "hrir_a")]
    hrir_b: Option<String>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct MixArgs {
    #[command(flatten)]
    voices: VoiceArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_mixture: PathBuf,
    #[arg(long)]
    out_ref_a: PathBuf,
    #[arg(long)]
    out_ref_b: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct TrainArgs {
    #[arg(long)]
    mixture: PathBuf,
    #[arg(long)]
    ref_a: PathBuf,
    #[arg(long)]
    ref_b: PathBuf,
    /// Window length W in samples [default: 1000, desk 128].
    #[arg(long)]
    window: Option<usize>,
    /// Training hop in samples.
    #[arg(long, default_value_t = 10)]
    hop: usize,
    /// Hidden units [default: 2500, desk 256].
    #[arg(long)]
    hidden: Option<usize>,
    /// SGD sweeps [default: 300, desk 50].
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Minutes-scale preset (W 128, 256 hidden, 50 epochs).
    #[arg(long)]
    desk: bool,
    #[arg(long)]
    model: PathBuf,
    /// Per-epoch loss CSV (`epoch,loss`).
    #[arg(long)]
    loss_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct SeparateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    mixture: PathBuf,
    /// Perturbed passes averaged per frame.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Fraction of each frame replaced before every pass.
    #[arg(long, default_value_t = 0.5)]
    perturb: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_a: PathBuf,
    #[arg(long)]
    out_b: PathBuf,
    /// Run frames on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct EvaluateArgs {
    #[arg(long)]
    est_a: PathBuf,
    #[arg(long)]
    est_b: PathBuf,
    #[arg(long)]
    ref_a: PathBuf,
    #[arg(long)]
    ref_b: PathBuf,
    /// Distortion filter length L in taps.
    #[arg(long, default_value_t = DEFAULT_FILTER_LEN)]
    filter_len: usize,
    /// N recorded in the `n_passes` column.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ImageFormat {
    Csv,
    Pgm,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct SpectrogramArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    channel: usize,
    /// FFT size (power of two).
    #[arg(long, default_value_t = 256)]
    fft_size: usize,
    #[arg(long, default_value_t = 64)]
    hop: usize,
    #[arg(long)]
    out: PathBuf,
    /// Output format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<ImageFormat>,
    #[arg(long, default_value_t = -80.0, allow_hyphen_values = true)]
    floor_db: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    ceil_db: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Monaural,
    Binaural,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct ExperimentArgs {
    #[command(flatten)]
    voices: VoiceArgs,
    #[arg(long, value_enum, default_value_t = Mode::Monaural)]
    mode: Mode,
    /// Seconds of training audio [default: 120, desk 8].
    #[arg(long)]
    train_seconds: Option<f64>,
    /// Seconds of test audio following the training segment [default: 10, desk 2].
    #[arg(long)]
    test_seconds: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, default_value_t = 10)]
    hop: usize,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    /// Comma-separated, strictly increasing N values.
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.5)]
    perturb: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_FILTER_LEN)]
    filter_len: usize,
    /// Minutes-scale preset (W 128, 256 hidden, 50 epochs, 8 s + 2 s).
    #[arg(long)]
    desk: bool,
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

fn exec_mode(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_f32(buf: &AudioBuffer, path: &Path) -> Result<()> {
    write_wav(buf, path, WavEncoding::Float32)?;
    Ok(())
}

fn parse_hrir(spec: &str, rate: u32) -> Result<HrirPair> {
    if let Some(angle) = spec.strip_prefix("synth:") {
        let az: f64 = angle
            .trim_start_matches('+')
            .parse()
            .with_context(|| format!("bad azimuth in `{spec}`"))?;
        Ok(synth_hrir(az, rate, DEFAULT_HEAD_RADIUS_M, DEFAULT_ILD_DB)?)
    } else if let Some(files) = spec.strip_prefix("file:") {
        let (l, r) = files
            .split_once(',')
            .ok_or_else(|| anyhow!("expected `file:left.wav,right.wav`, got `{spec}`"))?;
        Ok(load_hrir_pair(l, r, rate)?)
    } else {
        bail!("HRIR must be `synth:<deg>` or `file:<left>,<right>`, got `{spec}`")
    }
}

fn load_voice(path: &Path, rate: u32) -> Result<AudioBuffer> {
    let buf = read_wav(path).with_context(|| format!("reading {}", path.display()))?;
    let buf = decimate(&buf, rate)?;
    if !buf.is_mono() {
        bail!("{} must be mono", path.display());
    }
    Ok(buf)
}

fn load_voices(args: &VoiceArgs, seed: u64, default_seconds: f64) -> Result<(AudioBuffer, AudioBuffer)> {
    match (&args.voice_a, &args.voice_b) {
        (Some(a), Some(b)) => Ok((load_voice(a, args.rate)?, load_voice(b, args.rate)?)),
        _ => Ok(voice_pair(args.rate, args.synthetic.unwrap_or(default_seconds), seed)?),
    }
}

fn load_hrirs(args: &VoiceArgs, binaural_default: bool) -> Result<Option<(HrirPair, HrirPair)>> {
    match (&args.hrir_a, &args.hrir_b) {
        (Some(a), Some(b)) => Ok(Some((parse_hrir(a, args.rate)?, parse_hrir(b, args.rate)?))),
        _ if binaural_default => Ok(Some((
            parse_hrir("synth:+45", args.rate)?,
            parse_hrir("synth:-45", args.rate)?,
        ))),
        _ => Ok(None),
    }
}

fn run_mix(args: MixArgs) -> Result<()> {
    if args.voices.voice_a.is_none() && args.voices.synthetic.is_none() {
        bail!("give --voice-a/--voice-b or --synthetic <seconds>");
    }
    let (a, b) = load_voices(&args.voices, args.seed, 0.0)?;
    let hrirs = load_hrirs(&args.voices, false)?;
    let scene = pipeline::build_scene(&a, &b, hrirs.as_ref().map(|(x, y)| (x, y)))?;
    write_f32(&scene.mixture, &args.out_mixture)?;
    write_f32(&scene.reference_a, &args.out_ref_a)?;
    write_f32(&scene.reference_b, &args.out_ref_b)?;
    log::info!(
        "{:?} mixture: {} channel(s), {} samples at {} Hz",
        scene.mode,
        scene.mixture.num_channels(),
        scene.mixture.len(),
        scene.mixture.sample_rate()
    );
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let mixture = read_wav(&args.mixture).with_context(|| format!("reading {}", args.mixture.display()))?;
    let ref_a = read_wav(&args.ref_a).with_context(|| format!("reading {}", args.ref_a.display()))?;
    let ref_b = read_wav(&args.ref_b).with_context(|| format!("reading {}", args.ref_b.display()))?;
    let base = if args.desk {
        ExperimentConfig::desk()
    } else {
        ExperimentConfig::default()
    };
    let config = ExperimentConfig {
        window_len: args.window.unwrap_or(base.window_len),
        hop_train: args.hop,
        hidden_size: args.hidden.unwrap_or(base.hidden_size),
        epochs: args.epochs.unwrap_or(base.epochs),
        learning_rate: args.lr,
        seed: args.seed,
        mode: if mixture.num_channels() == 2 {
            SceneMode::Binaural
        } else {
            SceneMode::Monaural
        },
        ..base
    };
    config.validate()?;
    let len = mixture.len().min(ref_a.len()).min(ref_b.len());
    let scene = cdt::MixtureScene {
        mode: config.mode,
        mixture: mixture.truncated(len),
        reference_a: ref_a.truncated(len),
        reference_b: ref_b.truncated(len),
    };
    let (mlp, history) = pipeline::train_on_scene(&scene, &config, |epoch, loss| {
        log::info!("epoch {}/{}: loss {loss:.6}", epoch + 1, config.epochs)
    })?;
    save_model(&mlp, &args.model)?;
    if let Some(path) = &args.loss_csv {
        write_text(path, &pipeline::loss_csv(&history))?;
    }
    Ok(())
}

fn run_separate(args: SeparateArgs) -> Result<()> {
    let mlp = load_model(&args.model)?;
    let mixture = read_wav(&args.mixture).with_context(|| format!("reading {}", args.mixture.display()))?;
    let window = mlp.output_dim() / 2;
    let (normalized, params) = normalize_unit(&mixture)?;
    let cfg = ResynthesisConfig {
        n_passes: args.n,
        perturb_fraction: args.perturb,
        seed: args.seed,
        ..Default::default()
    };
    let (a, b) = separate_signal(&mlp, &normalized, window, &cfg, exec_mode(args.sequential))?;
    // back to the mixture's amplitude scale
    let scale = params[0].scale;
    let rescale =
        |x: &AudioBuffer| AudioBuffer::mono(x.channel(0).iter().map(|v| v * scale).collect(), x.sample_rate());
    write_f32(&rescale(&a)?, &args.out_a)?;
    write_f32(&rescale(&b)?, &args.out_b)?;
    Ok(())
}

fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    let load = |p: &PathBuf| -> Result<Vec<f64>> {
        let buf = read_wav(p).with_context(|| format!("reading {}", p.display()))?;
        Ok(buf.expect_mono()?.to_vec())
    };
    let (ea, eb, ra, rb) = (
        load(&args.est_a)?,
        load(&args.est_b)?,
        load(&args.ref_a)?,
        load(&args.ref_b)?,
    );
    let n = [ea.len(), eb.len(), ra.len(), rb.len()].into_iter().min().unwrap_or(0);
    let mut metrics = bss_eval(&[&ea[..n], &eb[..n]], &[&ra[..n], &rb[..n]], args.filter_len)?;
    metrics.n_passes = args.n;
    write_text(&args.out, &metrics.to_csv())
}

fn run_spectrogram(args: SpectrogramArgs) -> Result<()> {
    let buf = read_wav(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    if args.channel >= buf.num_channels() {
        bail!(
            "channel {} out of range ({} channels)",
            args.channel,
            buf.num_channels()
        );
    }
    let spec = spectrogram(buf.channel(args.channel), args.fft_size, args.hop)?;
    let format = args.format.unwrap_or_else(|| {
        if args.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
            ImageFormat::Pgm
        } else {
            ImageFormat::Csv
        }
    });
    match format {
        ImageFormat::Csv => write_text(&args.out, &spec.to_csv()),
        ImageFormat::Pgm => Ok(spec.write_pgm(&args.out, args.floor_db, args.ceil_db)?),
    }
}

fn run_experiment(args: ExperimentArgs) -> Result<()> {
    let base = if args.desk {
        ExperimentConfig::desk()
    } else {
        ExperimentConfig::default()
    };
    let config = ExperimentConfig {
        sample_rate: args.voices.rate,
        train_seconds: args.train_seconds.unwrap_or(base.train_seconds),
        test_seconds: args.test_seconds.unwrap_or(base.test_seconds),
        window_len: args.window.unwrap_or(base.window_len),
        hop_train: args.hop,
        hidden_size: args.hidden.unwrap_or(base.hidden_size),
        epochs: args.epochs.unwrap_or(base.epochs),
        learning_rate: args.lr,
        n_list: args.n_list.clone().unwrap_or(base.n_list.clone()),
        perturb_fraction: args.perturb,
        seed: args.seed,
        mode: match args.mode {
            Mode::Monaural => SceneMode::Monaural,
            Mode::Binaural => SceneMode::Binaural,
        },
        filter_len: args.filter_len,
        ..base
    };
    config.validate()?;
    let total_seconds = config.train_seconds + config.test_seconds;
    let (a, b) = load_voices(&args.voices, args.seed, total_seconds)?;
    let hrirs = match config.mode {
        SceneMode::Monaural => None,
        SceneMode::Binaural => load_hrirs(&args.voices, true)?,
    };
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let report = pipeline::run_experiment(
        &a,
        &b,
        hrirs.as_ref().map(|(x, y)| (x, y)),
        &config,
        exec_mode(args.sequential),
        |epoch, loss| log::info!("epoch {}/{}: loss {loss:.6}", epoch + 1, config.epochs),
    )?;

    let out = &args.out_dir;
    write_text(&out.join("experiment.csv"), &pipeline::sweep_csv(&report.metrics))?;
    write_text(&out.join("baseline.csv"), &report.baseline.to_csv())?;
    write_text(&out.join("loss.csv"), &pipeline::loss_csv(&report.loss_history))?;
    save_model(&report.model, out.join("model.cdt"))?;
    write_f32(&report.test_scene.mixture, &out.join("test_mixture.wav"))?;
    write_f32(&report.test_scene.reference_a, &out.join("test_ref_a.wav"))?;
    write_f32(&report.test_scene.reference_b, &out.join("test_ref_b.wav"))?;
    for (n, (ea, eb)) in config.n_list.iter().zip(&report.estimates) {
        write_f32(ea, &out.join(format!("est_a_n{n}.wav")))?;
        write_f32(eb, &out.join(format!("est_b_n{n}.wav")))?;
    }
    // spectrogram images of the test segment, for the figure panels
    let fft = 256.min(report.test_scene.mixture.len().next_power_of_two() / 2).max(2);
    let mut panels: Vec<(String, Vec<f64>)> = vec![
        ("ref_a".into(), report.test_scene.reference_a.channel(0).to_vec()),
        ("ref_b".into(), report.test_scene.reference_b.channel(0).to_vec()),
    ];
    for (ch, name) in report
        .test_scene
        .mixture
        .channels()
        .iter()
        .zip(["mixture_left", "mixture_right"])
    {
        let name = if report.test_scene.mixture.is_mono() {
            "mixture"
        } else {
            name
        };
        panels.push((name.into(), ch.clone()));
    }
    if let Some((ea, eb)) = report.estimates.last() {
        panels.push(("est_a".into(), ea.channel(0).to_vec()));
        panels.push(("est_b".into(), eb.channel(0).to_vec()));
    }
    for (name, signal) in panels {
        let peak = signal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scaled: Vec<f64> = signal.iter().map(|v| if peak > 0.0 { v / peak } else { 0.0 }).collect();
        let spec = spectrogram(&scaled, fft, fft / 4)?;
        spec.write_pgm(out.join(format!("spectrogram_{name}.pgm")), -80.0, 0.0)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let (stage, result) = match cli.command {
        Command::Mix(a) => ("mix", run_mix(a)),
        Command::Train(a) => ("train", run_train(a)),
        Command::Separate(a) => ("separate", run_separate(a)),
        Command::Evaluate(a) => ("evaluate", run_evaluate(a)),
        Command::Spectrogram(a) => ("spectrogram", run_spectrogram(a)),
        Command::Experiment(a) => ("experiment", run_experiment(a)),
    };
    result.with_context(|| format!("{stage} failed"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let argv = match config_file::expand(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
