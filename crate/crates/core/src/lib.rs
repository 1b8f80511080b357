//! Time-domain two-talker source separation.
//!
//! A dense sigmoid autoencoder is trained to map overlapping windows of a
//! monaural or binaural mixture onto the concatenated windows of the two
//! clean voices. At inference the trained network is slid over the mixture
//! one sample at a time; every frame is randomly perturbed and transformed
//! `N` times, the outputs are averaged, centred, overlap-added and scored
//! with BSS-EVAL style SDR/SIR/SAR.
//!
//! Module map:
//!
//! * [`audio_io`]: WAV I/O, integer-factor decimation, unit normalization.
//! * [`scene`]: RMS equalization, monaural mixing, HRIR synthesis and
//!   binaural spatialization.
//! * [`framing`]: window extraction, averaged overlap-add, training sets.
//! * [`mlp`]: the autoencoder, backprop, SGD and the model file format.
//! * [`resynth`]: probabilistic re-synthesis and the separation pipeline.
//! * [`metrics`]: BSS-EVAL decomposition and scores, spectrograms.
//! * [`pipeline`]: scene → train → separate → score experiment driver.
//! * [`synth`]: deterministic synthetic "voices" for tests and demos.
//! * [`exec`]: parallel / sequential execution switch.

pub mod audio_io;
mod error;
pub mod exec;
pub mod framing;
pub mod linalg;
pub mod metrics;
pub mod mlp;
pub mod pipeline;
pub mod resynth;
pub mod scene;
pub mod synth;

pub use audio_io::{AudioBuffer, NormalizationParams, WavEncoding};
pub use error::{Error, Result};
pub use exec::Execution;
pub use framing::{FrameSet, TrainingSet};
pub use metrics::{BssDecomposition, SeparationMetrics, SourceScores};
pub use mlp::{Mlp, TrainConfig};
pub use resynth::{ResynthesisConfig, SeparatedFrames};
pub use scene::{HrirPair, MixtureScene, SceneMode};
