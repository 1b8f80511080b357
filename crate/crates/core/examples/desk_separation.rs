//! Trains the desk-scale network on two synthetic talkers and prints the
//! separation scores for each N.
//!
//! cargo run --release --example desk_separation -- [epochs] [binaural]

use cdt::pipeline::{run_experiment, sweep_csv, ExperimentConfig};
use cdt::scene::SceneMode;
use cdt::synth::voice_pair;
use cdt::Execution;

fn main() -> cdt::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let binaural = args.next().is_some_and(|s| s == "binaural");
    let cfg = ExperimentConfig {
        epochs,
        mode: if binaural {
            SceneMode::Binaural
        } else {
            SceneMode::Monaural
        },
        ..ExperimentConfig::desk()
    };
    let (a, b) = voice_pair(cfg.sample_rate, cfg.train_seconds + cfg.test_seconds, cfg.seed)?;
    let hrirs = cfg.synth_hrirs()?;
    let report = run_experiment(
        &a,
        &b,
        binaural.then_some((&hrirs.0, &hrirs.1)),
        &cfg,
        Execution::default(),
        |epoch, loss| eprintln!("epoch {:>3}: loss {loss:.5}", epoch + 1),
    )?;
    println!("baseline (mixture as estimate):\n{}", report.baseline.to_csv());
    print!("{}", sweep_csv(&report.metrics));
    Ok(())
}
