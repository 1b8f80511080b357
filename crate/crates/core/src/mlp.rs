//! Three-layer sigmoid autoencoder, per-example SGD, and the `CDT1` model
//! file format.
//!
//! Hidden units carry a trainable additive bias; the output layer's bias is
//! fixed at zero and never updated. Loss is half the summed squared error.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::framing::TrainingSet;
use crate::linalg::Matrix;

const MODEL_MAGIC: &[u8; 4] = b"CDT1";

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Dense `d_in × d_hidden × d_out` network with logistic units throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    w_hidden: Matrix,
    b_hidden: Vec<f64>,
    w_out: Matrix,
    b_out: Vec<f64>,
}

/// Activations of one forward pass, kept for backprop.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

/// Loss gradients, shaped like the parameters. `b_out` is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w_hidden: Matrix,
    pub b_hidden: Vec<f64>,
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases, deterministic in `seed`.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let [d_in, d_hidden, d_out] = check_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |fan_out: usize, fan_in: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..=limit))
                .collect();
            Matrix::from_vec(fan_out, fan_in, data)
        };
        let w_hidden = glorot(d_hidden, d_in);
        let w_out = glorot(d_out, d_hidden);
        Ok(Mlp {
            w_hidden,
            b_hidden: vec![0.0; d_hidden],
            w_out,
            b_out: vec![0.0; d_out],
        })
    }

    /// Builds a network from explicit parameters. The output bias is zero.
    pub fn from_parts(w_hidden: Matrix, b_hidden: Vec<f64>, w_out: Matrix) -> Result<Self> {
        if b_hidden.len() != w_hidden.rows() || w_out.cols() != w_hidden.rows() {
            return Err(Error::InvalidConfig(format!(
                "inconsistent shapes: hidden {}x{}, bias {}, output {}x{}",
                w_hidden.rows(),
                w_hidden.cols(),
                b_hidden.len(),
                w_out.rows(),
                w_out.cols()
            )));
        }
        check_sizes(&[w_hidden.cols(), w_hidden.rows(), w_out.rows()])?;
        let mlp = Mlp {
            b_out: vec![0.0; w_out.rows()],
            w_hidden,
            b_hidden,
            w_out,
        };
        if !mlp.is_finite() {
            return Err(Error::InvalidConfig("non-finite parameter".into()));
        }
        Ok(mlp)
    }

    pub fn layer_sizes(&self) -> [usize; 3] {
        [self.input_dim(), self.hidden_dim(), self.output_dim()]
    }

    pub fn input_dim(&self) -> usize {
        self.w_hidden.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w_out.rows()
    }

    pub fn w_hidden(&self) -> &Matrix {
        &self.w_hidden
    }

    pub fn b_hidden(&self) -> &[f64] {
        &self.b_hidden
    }

    pub fn w_out(&self) -> &Matrix {
        &self.w_out
    }

    pub fn b_out(&self) -> &[f64] {
        &self.b_out
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(f64::is_finite)
    }

    fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.w_hidden
            .as_slice()
            .iter()
            .chain(&self.b_hidden)
            .chain(self.w_out.as_slice())
            .copied()
    }

    /// Mutable view of every trainable scalar, in file order
    /// (hidden weights, output weights, hidden biases).
    pub fn trainable_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.w_hidden
            .as_mut_slice()
            .iter_mut()
            .chain(self.w_out.as_mut_slice())
            .chain(&mut self.b_hidden)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn forward_into(&self, x: &[f64], hidden: &mut [f64], output: &mut [f64]) {
        self.w_hidden.matvec_into(x, hidden);
        for (h, b) in hidden.iter_mut().zip(&self.b_hidden) {
            *h = sigmoid(*h + b);
        }
        self.w_out.matvec_into(hidden, output);
        for o in output.iter_mut() {
            *o = sigmoid(*o);
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Activations> {
        self.check_input(x)?;
        let mut hidden = vec![0.0; self.hidden_dim()];
        let mut output = vec![0.0; self.output_dim()];
        self.forward_into(x, &mut hidden, &mut output);
        Ok(Activations { hidden, output })
    }

    /// Forward pass over `m` row-major inputs at once; returns the `m`
    /// output rows.
    pub fn forward_batch(&self, inputs: &[f64], m: usize) -> Result<Vec<f64>> {
        if inputs.len() != m * self.input_dim() {
            return Err(Error::Dimension {
                expected: m * self.input_dim(),
                got: inputs.len(),
            });
        }
        let mut hidden = vec![0.0; m * self.hidden_dim()];
        self.w_hidden.batch_apply(inputs, m, &mut hidden);
        for row in hidden.chunks_exact_mut(self.hidden_dim()) {
            for (h, b) in row.iter_mut().zip(&self.b_hidden) {
                *h = sigmoid(*h + b);
            }
        }
        let mut output = vec![0.0; m * self.output_dim()];
        self.w_out.batch_apply(&hidden, m, &mut output);
        output.iter_mut().for_each(|o| *o = sigmoid(*o));
        Ok(output)
    }

    /// Loss and exact gradients for one example.
    pub fn backprop(&self, x: &[f64], target: &[f64]) -> Result<(Gradients, f64)> {
        self.check_input(x)?;
        self.check_target(target)?;
        let act = self.forward(x)?;
        let (delta_out, loss) = output_delta(&act.output, target);
        let delta_hidden = self.hidden_delta(&delta_out, &act.hidden);
        let mut w_out = Matrix::zeros(self.output_dim(), self.hidden_dim());
        w_out.sub_scaled_outer(-1.0, &delta_out, &act.hidden);
        let mut w_hidden = Matrix::zeros(self.hidden_dim(), self.input_dim());
        w_hidden.sub_scaled_outer(-1.0, &delta_hidden, x);
        Ok((
            Gradients {
                w_hidden,
                b_hidden: delta_hidden,
                w_out,
                b_out: vec![0.0; self.output_dim()],
            },
            loss,
        ))
    }

    fn check_target(&self, target: &[f64]) -> Result<()> {
        if target.len() != self.output_dim() {
            return Err(Error::Dimension {
                expected: self.output_dim(),
                got: target.len(),
            });
        }
        Ok(())
    }

    fn hidden_delta(&self, delta_out: &[f64], hidden: &[f64]) -> Vec<f64> {
        let mut back = vec![0.0; self.hidden_dim()];
        self.w_out.matvec_t_into(delta_out, &mut back);
        back.iter().zip(hidden).map(|(b, h)| b * (h * (1.0 - h))).collect()
    }

    /// One SGD update. Bit-identical to subtracting `lr` times the
    /// [`Mlp::backprop`] gradients from every parameter.
    pub fn sgd_step(&mut self, x: &[f64], target: &[f64], lr: f64, scratch: &mut Scratch) -> f64 {
        scratch.resize(self);
        let Scratch {
            hidden,
            output,
            delta_hidden,
        } = scratch;
        self.forward_into(x, hidden, output);
        let (delta_out, loss) = output_delta(output, target);
        self.w_out.matvec_t_into(&delta_out, delta_hidden);
        for (d, h) in delta_hidden.iter_mut().zip(hidden.iter()) {
            *d *= h * (1.0 - h);
        }
        self.w_out.sub_scaled_outer(lr, &delta_out, hidden);
        self.w_hidden.sub_scaled_outer(lr, delta_hidden, x);
        for (b, d) in self.b_hidden.iter_mut().zip(delta_hidden.iter()) {
            *b -= lr * d;
        }
        loss
    }

    /// Mean per-example loss over a data set.
    pub fn mean_loss(&self, data: &TrainingSet) -> Result<f64> {
        check_data(self, data)?;
        let mut hidden = vec![0.0; self.hidden_dim()];
        let mut output = vec![0.0; self.output_dim()];
        let total: f64 = (0..data.len())
            .map(|i| {
                self.forward_into(data.inputs.row(i), &mut hidden, &mut output);
                output_delta(&output, data.targets.row(i)).1
            })
            .sum();
        Ok(total / data.len().max(1) as f64)
    }
}

/// Reusable buffers for [`Mlp::sgd_step`].
#[derive(Debug, Default)]
pub struct Scratch {
    hidden: Vec<f64>,
    output: Vec<f64>,
    delta_hidden: Vec<f64>,
}

impl Scratch {
    fn resize(&mut self, mlp: &Mlp) {
        self.hidden.resize(mlp.hidden_dim(), 0.0);
        self.output.resize(mlp.output_dim(), 0.0);
        self.delta_hidden.resize(mlp.hidden_dim(), 0.0);
    }
}

fn check_sizes(layer_sizes: &[usize]) -> Result<[usize; 3]> {
    match *layer_sizes {
        [a, b, c] if a >= 1 && b >= 1 && c >= 1 => Ok([a, b, c]),
        _ => Err(Error::InvalidConfig(format!(
            "expected three positive layer sizes, got {layer_sizes:?}"
        ))),
    }
}

fn output_delta(output: &[f64], target: &[f64]) -> (Vec<f64>, f64) {
    let mut loss = 0.0;
    let delta = output
        .iter()
        .zip(target)
        .map(|(&o, &t)| {
            let e = o - t;
            loss += e * e;
            e * (o * (1.0 - o))
        })
        .collect();
    (delta, 0.5 * loss)
}

fn check_data(mlp: &Mlp, data: &TrainingSet) -> Result<()> {
    if data.input_dim() != mlp.input_dim() {
        return Err(Error::Dimension {
            expected: mlp.input_dim(),
            got: data.input_dim(),
        });
    }
    if data.target_dim() != mlp.output_dim() {
        return Err(Error::Dimension {
            expected: mlp.output_dim(),
            got: data.target_dim(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            learning_rate: 0.05,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} is not a finite non-negative number",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Per-example SGD over `config.epochs` full sweeps of `data`.
///
/// Returns the trained network and the mean loss of each epoch (accumulated
/// while sweeping).
pub fn train_sgd(mlp: Mlp, data: &TrainingSet, config: &TrainConfig) -> Result<(Mlp, Vec<f64>)> {
    train_sgd_with(mlp, data, config, |_, _| {})
}

/// [`train_sgd`] with a callback receiving `(epoch, mean_loss)` after every
/// epoch.
pub fn train_sgd_with<F>(
    mut mlp: Mlp,
    data: &TrainingSet,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<(Mlp, Vec<f64>)>
where
    F: FnMut(usize, f64),
{
    config.validate()?;
    check_data(&mlp, data)?;
    if data.is_empty() {
        return Err(Error::InvalidConfig("empty training set".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut scratch = Scratch::default();
    let mut losses = vec![0.0; data.len()];
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        if config.shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(epoch as u64 + 1);
            order.sort_unstable();
            order.shuffle(&mut rng);
        }
        // summed in example order so the mean does not depend on the shuffle
        for &i in &order {
            losses[i] = mlp.sgd_step(
                data.inputs.row(i),
                data.targets.row(i),
                config.learning_rate,
                &mut scratch,
            );
        }
        let mean = losses.iter().sum::<f64>() / data.len() as f64;
        if !mean.is_finite() || !mlp.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        log::debug!("epoch {epoch}: mean loss {mean:.6}");
        on_epoch(epoch, mean);
        history.push(mean);
    }
    Ok((mlp, history))
}

/// Serializes `mlp` in the `CDT1` format: magic, then little-endian `u32`
/// layer count, `u32` sizes, `f64` weights row-major per layer, `f64`
/// hidden biases, and a trailing CRC-32 of everything after the magic.
pub fn write_model<W: Write>(mlp: &Mlp, mut out: W) -> std::io::Result<()> {
    let mut payload = Vec::new();
    payload.extend_from_slice(&3u32.to_le_bytes());
    for s in mlp.layer_sizes() {
        payload.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for v in mlp
        .w_hidden
        .as_slice()
        .iter()
        .chain(mlp.w_out.as_slice())
        .chain(&mlp.b_hidden)
    {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&payload);
    out.write_all(MODEL_MAGIC)?;
    out.write_all(&payload)?;
    out.write_all(&crc.to_le_bytes())?;
    out.flush()
}

pub fn read_model<R: Read>(mut input: R) -> Result<Mlp> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::ModelFormat(e.to_string()))?;
    if bytes.len() < 8 || &bytes[..4] != MODEL_MAGIC {
        return Err(Error::ModelFormat("missing CDT1 magic".into()));
    }
    let payload = &bytes[4..bytes.len() - 4];
    let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32fast::hash(payload) != stored_crc {
        return Err(Error::ModelFormat("checksum mismatch".into()));
    }
    let mut cursor = payload;
    let mut take = |n: usize| -> Result<&[u8]> {
        if cursor.len() < n {
            return Err(Error::ModelFormat("truncated payload".into()));
        }
        let (head, rest) = cursor.split_at(n);
        cursor = rest;
        Ok(head)
    };
    let read_u32 = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap()) as usize;
    let layers = read_u32(take(4)?);
    if layers != 3 {
        return Err(Error::ModelFormat(format!("expected 3 layers, found {layers}")));
    }
    let sizes = [read_u32(take(4)?), read_u32(take(4)?), read_u32(take(4)?)];
    check_sizes(&sizes).map_err(|e| Error::ModelFormat(e.to_string()))?;
    let [d_in, d_hidden, d_out] = sizes;
    let mut read_f64s = |n: usize| -> Result<Vec<f64>> {
        let raw = take(
            n.checked_mul(8)
                .ok_or_else(|| Error::ModelFormat("size overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let w_hidden = Matrix::from_vec(d_hidden, d_in, read_f64s(d_hidden * d_in)?);
    let w_out = Matrix::from_vec(d_out, d_hidden, read_f64s(d_out * d_hidden)?);
    let b_hidden = read_f64s(d_hidden)?;
    if !cursor.is_empty() {
        return Err(Error::ModelFormat(format!("{} trailing bytes", cursor.len())));
    }
    Mlp::from_parts(w_hidden, b_hidden, w_out).map_err(|e| Error::ModelFormat(e.to_string()))
}

pub fn save_model(mlp: &Mlp, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_model(mlp, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Mlp> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(std::io::BufReader::new(file))
}
