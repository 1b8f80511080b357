use cdt::audio_io::{normalize_unit, read_wav, write_wav, WavEncoding};
use cdt::mlp::{load_model, save_model};
use cdt::pipeline::{self, ExperimentConfig};
use cdt::resynth::{separate_signal, ResynthesisConfig};
use cdt::scene::SceneMode;
use cdt::synth::voice_pair;
use cdt::Execution;

fn tiny_config(mode: SceneMode) -> ExperimentConfig {
    ExperimentConfig {
        train_seconds: 1.0,
        test_seconds: 0.25,
        window_len: 16,
        hop_train: 4,
        hidden_size: 12,
        epochs: 3,
        n_list: vec![2],
        filter_len: 16,
        mode,
        ..Default::default()
    }
}

#[test]
fn wav_and_model_round_trip_preserves_separation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(SceneMode::Monaural);
    let (a, b) = voice_pair(4000, 1.25, 4).unwrap();
    let scene = pipeline::build_scene(&a, &b, None).unwrap();
    let (train, test) = pipeline::split_scene(&scene, cfg.train_len(), cfg.test_len()).unwrap();
    let (mlp, _) = pipeline::train_on_scene(&train, &cfg, |_, _| {}).unwrap();

    let model_path = dir.path().join("net.cdt");
    save_model(&mlp, &model_path).unwrap();
    let loaded = load_model(&model_path).unwrap();
    assert_eq!(loaded, mlp);

    let wav = dir.path().join("mix.wav");
    write_wav(&test.mixture, &wav, WavEncoding::Float32).unwrap();
    let mix = read_wav(&wav).unwrap();
    assert_eq!(mix.len(), test.mixture.len());

    let rc = cfg.resynthesis_config(2);
    let (direct, _) = pipeline::separate_scene(&mlp, &test, cfg.window_len, &rc, Execution::Sequential).unwrap();
    let (normalized, _) = normalize_unit(&mix).unwrap();
    let (from_files, _) = separate_signal(&loaded, &normalized, cfg.window_len, &rc, Execution::Sequential).unwrap();
    // the WAV stores f32, so only approximate agreement is expected
    let err = direct
        .channel(0)
        .iter()
        .zip(from_files.channel(0))
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(err < 1e-5, "max deviation {err}");
}

#[test]
fn binaural_experiment_runs_and_execution_modes_agree() {
    let cfg = tiny_config(SceneMode::Binaural);
    let (a, b) = voice_pair(4000, 1.25, 6).unwrap();
    let (ha, hb) = cfg.synth_hrirs().unwrap();
    let seq = pipeline::run_experiment(&a, &b, Some((&ha, &hb)), &cfg, Execution::Sequential, |_, _| {}).unwrap();
    let par = pipeline::run_experiment(&a, &b, Some((&ha, &hb)), &cfg, Execution::Parallel, |_, _| {}).unwrap();
    assert_eq!(seq.model.input_dim(), 32);
    assert_eq!(seq.test_scene.mixture.num_channels(), 2);
    assert_eq!(seq.estimates, par.estimates);
    assert_eq!(pipeline::sweep_csv(&seq.metrics), pipeline::sweep_csv(&par.metrics));
}

#[test]
fn separation_is_repeatable_and_depends_on_n() {
    let cfg = tiny_config(SceneMode::Monaural);
    let (a, b) = voice_pair(4000, 1.25, 8).unwrap();
    let scene = pipeline::build_scene(&a, &b, None).unwrap();
    let (train, test) = pipeline::split_scene(&scene, cfg.train_len(), cfg.test_len()).unwrap();
    let (mlp, _) = pipeline::train_on_scene(&train, &cfg, |_, _| {}).unwrap();
    let run = |n| {
        let rc = ResynthesisConfig {
            n_passes: n,
            ..cfg.resynthesis_config(n)
        };
        pipeline::separate_scene(&mlp, &test, cfg.window_len, &rc, Execution::Parallel).unwrap()
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3), run(4));
}
