//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits nonzero if any criterion fails.
//!
//! `CDT_ACCEPTANCE_ONLY=C1,C4` restricts the run to the listed criteria.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use cdt::audio_io::AudioBuffer;
use cdt::framing::{extract_frames, overlap_add_average};
use cdt::linalg::Matrix;
use cdt::metrics::{bss_eval, csv_db, INFINITE_DB_SENTINEL};
use cdt::pipeline::{self, ExperimentConfig, ExperimentReport};
use cdt::resynth::{separate_signal, ResynthesisConfig};
use cdt::scene::SceneMode;
use cdt::synth::voice_pair;
use cdt::{Execution, Mlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twofloat::TwoFloat;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn std_dev(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

// ---------------------------------------------------------------- C1

/// `1 / b` by Newton steps from the f64 reciprocal.
fn dd_recip(b: TwoFloat) -> TwoFloat {
    let one = TwoFloat::from(1.0);
    let mut y = TwoFloat::from(1.0 / b.hi());
    for _ in 0..2 {
        y += y * (one - b * y);
    }
    y
}

/// `exp` to double-double accuracy: `z = k ln 2 + r`, then a Taylor series
/// on `r / 2^10` squared back up.
fn dd_exp(z: TwoFloat) -> TwoFloat {
    let ln2 = TwoFloat::new_add(std::f64::consts::LN_2, 2.319_046_813_846_299_6e-17);
    let k = (f64::from(z) / std::f64::consts::LN_2).round();
    let r = (z - ln2 * k) / 1024.0;
    let mut term = TwoFloat::from(1.0);
    let mut sum = TwoFloat::from(1.0);
    for n in 1..=14 {
        term = term * r / n as f64;
        sum += term;
    }
    for _ in 0..10 {
        sum = sum * sum;
    }
    sum * 2f64.powi(k as i32)
}

/// Independent double-double forward pass. `params` holds hidden weights,
/// output weights and hidden biases, in that order.
fn dd_loss(sizes: [usize; 3], params: &[TwoFloat], x: &[f64], t: &[f64]) -> TwoFloat {
    let [d_in, d_h, d_out] = sizes;
    let (w_h, rest) = params.split_at(d_h * d_in);
    let (w_o, b_h) = rest.split_at(d_out * d_h);
    let one = TwoFloat::from(1.0);
    let sigma = |z: TwoFloat| dd_recip(one + dd_exp(-z));
    let hidden: Vec<TwoFloat> = (0..d_h)
        .map(|j| sigma((0..d_in).fold(b_h[j], |acc, k| acc + w_h[j * d_in + k] * x[k])))
        .collect();
    (0..d_out).fold(TwoFloat::from(0.0), |acc, o| {
        let z = (0..d_h).fold(TwoFloat::from(0.0), |acc, j| acc + w_o[o * d_h + j] * hidden[j]);
        let e = sigma(z) - t[o];
        acc + e * e * 0.5
    })
}

fn c1_gradients() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for net in 0..20u64 {
        let sizes = [
            rng.random_range(1..=8),
            rng.random_range(1..=8),
            rng.random_range(1..=8),
        ];
        let base = Mlp::new(&sizes, net).unwrap();
        let b_hidden: Vec<f64> = (0..sizes[1]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mlp = Mlp::from_parts(base.w_hidden().clone(), b_hidden, base.w_out().clone()).unwrap();
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random::<f64>()).collect();
        let t: Vec<f64> = (0..sizes[2]).map(|_| rng.random::<f64>()).collect();

        let (g, _) = mlp.backprop(&x, &t).unwrap();
        let analytic: Vec<f64> = g
            .w_hidden
            .as_slice()
            .iter()
            .chain(g.w_out.as_slice())
            .chain(&g.b_hidden)
            .copied()
            .collect();
        let params: Vec<TwoFloat> = mlp
            .w_hidden()
            .as_slice()
            .iter()
            .chain(mlp.w_out().as_slice())
            .chain(mlp.b_hidden())
            .map(|&v| TwoFloat::from(v))
            .collect();
        for (i, &a) in analytic.iter().enumerate() {
            let shifted = |delta: f64| {
                let mut p = params.clone();
                p[i] += delta;
                dd_loss(sizes, &p, &x, &t)
            };
            let numeric = f64::from((shifted(h) - shifted(-h)) * (0.5 / h));
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    let el = start.elapsed();
    Verdict::new(
        worst < 1e-6 && within(el, 10.0),
        format!(
            "20 nets, {checked} partials, max relative error {worst:.2e} ({:.2} s)",
            el.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- C2

fn c2_framing() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
    let mut worst: f64 = 0.0;
    let mut exact_len = true;
    for _ in 0..100 {
        let w = rng.random_range(1..=256);
        let hop = rng.random_range(1..=w);
        let len = w + rng.random_range(0..2000);
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let frames = extract_frames(&x, w, hop).unwrap();
        let y = overlap_add_average(&frames).unwrap();
        exact_len &= y.len() == frames.covered_len();
        for (a, b) in y.iter().zip(&x) {
            worst = worst.max((a - b).abs());
        }
    }
    let el = start.elapsed();
    Verdict::new(
        worst < 1e-12 && exact_len && within(el, 5.0),
        format!("100 signals, max abs error {worst:.2e} ({:.2} s)", el.as_secs_f64()),
    )
}

// ---------------------------------------------------------------- C3

fn c3_frame_counts() -> Verdict {
    let train = extract_frames(&vec![0.0; 480_000], 1000, 10).unwrap().num_frames();
    let test = extract_frames(&vec![0.0; 40_000], 1000, 1).unwrap().num_frames();
    Verdict::new(
        train == 47_901 && test == 39_001,
        format!("480000/W1000/hop10 -> {train}, 40000/W1000/hop1 -> {test}"),
    )
}

// ---------------------------------------------------------------- C4

fn dotp(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn db(num: f64, den: f64) -> f64 {
    10.0 * (num / den).log10()
}

fn c4_bss_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC4);
    let n = 4096;
    let mut worst: f64 = 0.0;
    let mut infinite_ok = true;
    let mut gain_ok = true;
    for _ in 0..10 {
        // Gram-Schmidt on two random vectors
        let r1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r2: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c = dotp(&r1, &r2) / dotp(&r1, &r1);
        let s1 = r1.clone();
        let s2: Vec<f64> = r2.iter().zip(&r1).map(|(b, a)| b - c * a).collect();
        let refs = [&s1[..], &s2[..]];

        let (alpha, beta) = (rng.random_range(0.5..2.0), rng.random_range(-0.5..0.5));
        let noise: Vec<f64> = (0..n).map(|_| rng.random_range(-0.2..0.2)).collect();
        let est: Vec<f64> = (0..n).map(|t| alpha * s1[t] + beta * s2[t] + noise[t]).collect();

        // closed form at L = 1: projections onto the orthogonal references
        let p1 = dotp(&est, &s1) / dotp(&s1, &s1);
        let p2 = dotp(&est, &s2) / dotp(&s2, &s2);
        let target: Vec<f64> = s1.iter().map(|v| p1 * v).collect();
        let interf: Vec<f64> = s2.iter().map(|v| p2 * v).collect();
        let artif: Vec<f64> = (0..n).map(|t| est[t] - target[t] - interf[t]).collect();
        let e_t = dotp(&target, &target);
        let e_i = dotp(&interf, &interf);
        let e_a = dotp(&artif, &artif);
        let distortion: Vec<f64> = (0..n).map(|t| interf[t] + artif[t]).collect();
        let sdr = db(e_t, dotp(&distortion, &distortion));
        let sir = db(e_t, e_i);
        let sar = db(e_t + e_i, e_a);

        let m = bss_eval(&[&est, &s2], &refs, 1).unwrap();
        let s = m.sources[0];
        worst = worst
            .max((s.sdr_db - sdr).abs())
            .max((s.sir_db - sir).abs())
            .max((s.sar_db - sar).abs());

        let perfect = bss_eval(&[&s1, &s2], &refs, 1).unwrap();
        infinite_ok &= perfect
            .sources
            .iter()
            .all(|s| s.sdr_db == f64::INFINITY && s.sir_db == f64::INFINITY && s.sar_db == f64::INFINITY);
        infinite_ok &= csv_db(perfect.sources[0].sdr_db) == format!("{INFINITE_DB_SENTINEL}");

        for g in [0.25, 4.0, -2.0] {
            let scaled: Vec<f64> = est.iter().map(|v| g * v).collect();
            let ms = bss_eval(&[&scaled, &s2], &refs, 1).unwrap();
            gain_ok &= ms.sources[0] == s;
        }
    }
    let el = start.elapsed();
    Verdict::new(
        worst < 1e-6 && infinite_ok && gain_ok && within(el, 5.0),
        format!(
            "max deviation {worst:.2e} dB, +inf sentinel {}, gain invariance {} ({:.2} s)",
            if infinite_ok { "ok" } else { "broken" },
            if gain_ok { "exact" } else { "broken" },
            el.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- C5-C7

const SEEDS: [u64; 3] = [0, 1, 2];
const MATERIAL_SEED: u64 = 0;

fn desk_config(seed: u64, mode: SceneMode) -> ExperimentConfig {
    ExperimentConfig {
        train_seconds: 60.0,
        test_seconds: 5.0,
        window_len: 128,
        hidden_size: 256,
        epochs: 50,
        n_list: vec![32],
        seed,
        mode,
        ..ExperimentConfig::desk()
    }
}

fn material(cfg: &ExperimentConfig) -> (AudioBuffer, AudioBuffer) {
    voice_pair(cfg.sample_rate, cfg.train_seconds + cfg.test_seconds, MATERIAL_SEED).unwrap()
}

fn run(cfg: &ExperimentConfig) -> ExperimentReport {
    let (a, b) = material(cfg);
    let hrirs = match cfg.mode {
        SceneMode::Monaural => None,
        SceneMode::Binaural => Some(cfg.synth_hrirs().unwrap()),
    };
    pipeline::run_experiment(
        &a,
        &b,
        hrirs.as_ref().map(|(x, y)| (x, y)),
        cfg,
        Execution::Parallel,
        |_, _| {},
    )
    .unwrap()
}

fn sir_pair(report: &ExperimentReport) -> [f64; 2] {
    let m = &report.metrics[0];
    [m.sources[0].sir_db, m.sources[1].sir_db]
}

fn c5_monaural(reports: &[ExperimentReport], elapsed: Duration) -> Verdict {
    let base = &reports[0].baseline;
    let mut pass = within(elapsed, 15.0 * 60.0);
    let mut parts = Vec::new();
    for s in 0..2 {
        let med = median(reports.iter().map(|r| sir_pair(r)[s]).collect());
        let floor = base.sources[s].sir_db;
        pass &= med >= floor + 6.0;
        parts.push(format!(
            "{}: median SIR {med:.2} dB vs baseline {floor:.2} dB",
            ["a", "b"][s]
        ));
    }
    Verdict::new(pass, format!("{} ({:.0} s)", parts.join("; "), elapsed.as_secs_f64()))
}

fn c6_convergence(report: &ExperimentReport, cfg: &ExperimentConfig) -> Verdict {
    let start = Instant::now();
    let sdr = |n: usize, seed: u64| -> [f64; 2] {
        let rc = ResynthesisConfig {
            seed,
            ..cfg.resynthesis_config(n)
        };
        let (a, b) = pipeline::separate_scene(
            &report.model,
            &report.test_scene,
            cfg.window_len,
            &rc,
            Execution::Parallel,
        )
        .unwrap();
        let m = pipeline::score(&report.test_scene, a.channel(0), b.channel(0), cfg.filter_len).unwrap();
        [m.sources[0].sdr_db, m.sources[1].sdr_db]
    };
    let s64 = sdr(64, cfg.seed);
    let s128 = sdr(128, cfg.seed);
    let gap = [(s128[0] - s64[0]).abs(), (s128[1] - s64[1]).abs()];

    let ns = [4usize, 16, 64];
    let mut stds = [[0.0; 3]; 2];
    for (k, &n) in ns.iter().enumerate() {
        let runs: Vec<[f64; 2]> = (0..5).map(|seed| sdr(n, seed)).collect();
        for (s, row) in stds.iter_mut().enumerate() {
            row[k] = std_dev(&runs.iter().map(|r| r[s]).collect::<Vec<_>>());
        }
    }
    let decreasing = stds.iter().all(|row| row[0] > row[1] && row[1] > row[2]);
    let el = start.elapsed();
    Verdict::new(
        gap[0] < 0.5 && gap[1] < 0.5 && decreasing && within(el, 600.0),
        format!(
            "|SDR128-SDR64| {:.3} / {:.3} dB; SDR std over N=4,16,64: a {:.3} {:.3} {:.3}, b {:.3} {:.3} {:.3} ({:.0} s)",
            gap[0],
            gap[1],
            stds[0][0],
            stds[0][1],
            stds[0][2],
            stds[1][0],
            stds[1][1],
            stds[1][2],
            el.as_secs_f64()
        ),
    )
}

fn c7_binaural(mono: &[ExperimentReport]) -> Verdict {
    let start = Instant::now();
    let bin: Vec<ExperimentReport> = SEEDS
        .iter()
        .map(|&s| run(&desk_config(s, SceneMode::Binaural)))
        .collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for s in 0..2 {
        let mb = median(bin.iter().map(|r| sir_pair(r)[s]).collect());
        let mm = median(mono.iter().map(|r| sir_pair(r)[s]).collect());
        pass &= mb >= mm;
        parts.push(format!("{}: binaural {mb:.2} dB vs monaural {mm:.2} dB", ["a", "b"][s]));
    }
    Verdict::new(
        pass,
        format!("{} ({:.0} s)", parts.join("; "), start.elapsed().as_secs_f64()),
    )
}

// ---------------------------------------------------------------- C8

fn c8_null_network() -> Verdict {
    let start = Instant::now();
    let (w, hidden) = (64, 32);
    let mlp = Mlp::from_parts(
        Matrix::zeros(hidden, w),
        vec![0.0; hidden],
        Matrix::zeros(2 * w, hidden),
    )
    .unwrap();
    let (a, _) = voice_pair(4000, 1.0, 5).unwrap();
    let (mix, _) = cdt::audio_io::normalize_unit(&a).unwrap();
    let cfg = ResynthesisConfig {
        n_passes: 8,
        ..Default::default()
    };
    let (ea, eb) = separate_signal(&mlp, &mix, w, &cfg, Execution::Parallel).unwrap();
    let zeros = ea.channel(0).iter().chain(eb.channel(0)).all(|&v| v == 0.0);
    let len_ok = ea.len() == mix.len() && eb.len() == mix.len();
    let el = start.elapsed();
    Verdict::new(
        zeros && len_ok && within(el, 60.0),
        format!(
            "{} output samples, all exactly zero: {zeros} ({:.2} s)",
            2 * ea.len(),
            el.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- C9

fn cli_experiment(out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_cdt"))
        .args([
            "experiment",
            "--synthetic",
            "65",
            "--train-seconds",
            "60",
            "--test-seconds",
            "5",
            "--window",
            "128",
            "--hidden",
            "256",
            "--epochs",
            "50",
            "--n-list",
            "32",
            "--seed",
            "0",
            "--out-dir",
        ])
        .arg(out)
        .env("RUST_LOG", "warn")
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "wav")))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn c9_determinism() -> Verdict {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let (d1, d2) = (tmp.path().join("run1"), tmp.path().join("run2"));
    if !(cli_experiment(&d1) && cli_experiment(&d2)) {
        return Verdict::new(false, "cdt experiment exited with an error");
    }
    let (a1, a2) = (artifacts(&d1), artifacts(&d2));
    let differing: Vec<&String> = a1.keys().filter(|k| a1.get(*k) != a2.get(*k)).collect();
    let same_set = a1.keys().eq(a2.keys());
    Verdict::new(
        differing.is_empty() && same_set && a1.len() >= 5,
        format!(
            "{} CSV/WAV files compared, {} differ ({:.0} s)",
            a1.len(),
            differing.len(),
            start.elapsed().as_secs_f64()
        ),
    )
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    let only: Option<Vec<String>> = std::env::var("CDT_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').map(|s| s.trim().to_uppercase()).collect());
    let wanted = |id: &str| only.as_ref().is_none_or(|o| o.iter().any(|x| x == id));
    let mut failed = 0;
    let mut report = |id: &str, name: &str, v: Verdict| {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {id} {name}: {}", v.detail);
        if !v.pass {
            failed += 1;
        }
    };

    if wanted("C1") {
        report("C1", "gradient correctness", c1_gradients());
    }
    if wanted("C2") {
        report("C2", "framing identity", c2_framing());
    }
    if wanted("C3") {
        report("C3", "frame counts", c3_frame_counts());
    }
    if wanted("C4") {
        report("C4", "BSS-EVAL oracle", c4_bss_oracle());
    }
    if wanted("C5") || wanted("C6") || wanted("C7") {
        let start = Instant::now();
        let mono: Vec<ExperimentReport> = SEEDS
            .iter()
            .map(|&s| run(&desk_config(s, SceneMode::Monaural)))
            .collect();
        let elapsed = start.elapsed();
        if wanted("C5") {
            report("C5", "monaural separation", c5_monaural(&mono, elapsed));
        }
        if wanted("C6") {
            report(
                "C6",
                "N convergence",
                c6_convergence(&mono[0], &desk_config(SEEDS[0], SceneMode::Monaural)),
            );
        }
        if wanted("C7") {
            report("C7", "binaural advantage", c7_binaural(&mono));
        }
    }
    if wanted("C8") {
        report("C8", "constant-network null case", c8_null_network());
    }
    if wanted("C9") {
        report("C9", "end-to-end determinism", c9_determinism());
    }

    if failed == 0 {
        println!("acceptance: all selected criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criterion/criteria failed");
        ExitCode::FAILURE
    }
}
