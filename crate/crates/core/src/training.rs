//! Adam training with cosine decay on freshly simulated channel batches.

use std::path::Path;

use autodiff::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::channel::{build_decoder_input, transmit, ChannelConfig, ChannelError, DecoderInput, Modulation};
use crate::codes::{CodeError, LinearCode};
use crate::transformer::{
    batch_tensor, model_container, model_from_container, Container, Model, ModelConfig, TransformerError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite loss {loss} at step {step}")]
    NonFinite { step: usize, loss: f64 },
    #[error(transparent)]
    Model(#[from] TransformerError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error("malformed training checkpoint: {0}")]
    Checkpoint(String),
}

impl From<autodiff::AutodiffError> for TrainError {
    fn from(e: autodiff::AutodiffError) -> Self {
        TrainError::Model(e.into())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch: usize,
    pub lr: f64,
    /// Final learning rate as a fraction of `lr`.
    pub lr_floor: f64,
    pub ebno_low: f64,
    pub ebno_high: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm bound; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub modulation: Modulation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1000,
            batch: 128,
            lr: 5e-3,
            lr_floor: 0.01,
            ebno_low: 8.0,
            ebno_high: 15.0,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            grad_clip: Some(1.0),
            modulation: Modulation::Bpsk,
        }
    }
}

impl TrainConfig {
    /// Wide low-SNR range for a first training phase.
    pub fn wide_range() -> Self {
        TrainConfig {
            ebno_low: 0.0,
            ebno_high: 8.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |msg: &str| Err(TrainError::Config(msg.to_string()));
        if !(self.lr > 0.0) && self.lr != 0.0 {
            return fail("learning rate must be non-negative");
        }
        if self.iterations == 0 || self.batch == 0 {
            return fail("iterations and batch size must be positive");
        }
        if !(self.ebno_low <= self.ebno_high) {
            return fail("Eb/N0 range must satisfy low <= high");
        }
        if !(0.0..=1.0).contains(&self.lr_floor) {
            return fail("learning-rate floor must lie in [0, 1]");
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return fail("gradient clip must be positive");
        }
        Ok(())
    }

    fn to_pairs(&self) -> Vec<(String, String)> {
        let clip = self.grad_clip.map_or("none".to_string(), |c| c.to_string());
        [
            ("train.iterations", self.iterations.to_string()),
            ("train.batch", self.batch.to_string()),
            ("train.lr", self.lr.to_string()),
            ("train.lr_floor", self.lr_floor.to_string()),
            ("train.ebno_low", self.ebno_low.to_string()),
            ("train.ebno_high", self.ebno_high.to_string()),
            ("train.seed", self.seed.to_string()),
            ("train.beta1", self.beta1.to_string()),
            ("train.beta2", self.beta2.to_string()),
            ("train.eps", self.eps.to_string()),
            ("train.grad_clip", clip),
            ("train.modulation", self.modulation.name().to_string()),
            ("train.loss", "bce".to_string()),
            ("train.optimizer", "adam".to_string()),
            ("train.schedule", "cosine".to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    fn from_container(c: &Container) -> Result<Self, TrainError> {
        fn parse<V: std::str::FromStr>(c: &Container, key: &str) -> Result<V, TrainError> {
            c.meta_value(key)
                .ok_or_else(|| TrainError::Checkpoint(format!("missing `{key}`")))?
                .parse()
                .map_err(|_| TrainError::Checkpoint(format!("bad value for `{key}`")))
        }
        let clip = c.meta_value("train.grad_clip").unwrap_or("none");
        Ok(TrainConfig {
            iterations: parse(c, "train.iterations")?,
            batch: parse(c, "train.batch")?,
            lr: parse(c, "train.lr")?,
            lr_floor: parse(c, "train.lr_floor")?,
            ebno_low: parse(c, "train.ebno_low")?,
            ebno_high: parse(c, "train.ebno_high")?,
            seed: parse(c, "train.seed")?,
            beta1: parse(c, "train.beta1")?,
            beta2: parse(c, "train.beta2")?,
            eps: parse(c, "train.eps")?,
            grad_clip: if clip == "none" {
                None
            } else {
                Some(
                    clip.parse()
                        .map_err(|_| TrainError::Checkpoint("bad gradient clip".into()))?,
                )
            },
            modulation: c
                .meta_value("train.modulation")
                .unwrap_or("bpsk")
                .parse()
                .map_err(|e: ChannelError| TrainError::Checkpoint(e.to_string()))?,
        })
    }
}

/// `f lr0 + (1 - f) lr0 (1 + cos(pi step / total)) / 2`, held at the floor
/// past `total`.
pub fn cosine_lr(step: usize, total: usize, lr0: f64, floor: f64) -> f64 {
    let t = if total == 0 {
        1.0
    } else {
        (step as f64 / total as f64).min(1.0)
    };
    floor * lr0 + (1.0 - floor) * lr0 * (1.0 + (std::f64::consts::PI * t).cos()) / 2.0
}

/// Optimizer state: step count and Adam moments mirroring the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub step: usize,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
    pub lr: f64,
    pub loss: f64,
    pub ber: f64,
}

impl TrainState {
    pub fn new(model: &Model<f32>) -> Self {
        let zeros: Vec<Vec<f32>> = model.params().tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        TrainState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
            lr: 0.0,
            loss: f64::NAN,
            ber: f64::NAN,
        }
    }
}

/// Decoder inputs and transmitted codewords for one batch.
#[derive(Clone, Debug)]
pub struct TrainingBatch {
    pub inputs: Vec<DecoderInput>,
    pub codewords: Vec<Vec<u8>>,
}

impl TrainingBatch {
    pub fn input_tensor(&self) -> Result<Tensor<f32>, TrainError> {
        let seq = self.inputs.first().map_or(0, DecoderInput::len);
        Ok(batch_tensor(&self.inputs, seq)?)
    }

    pub fn target_tensor(&self) -> Tensor<f32> {
        let n = self.codewords.first().map_or(0, Vec::len);
        let data = self.codewords.iter().flatten().map(|&b| b as f32).collect();
        Tensor::new(&[self.codewords.len(), n], data).expect("rectangular batch")
    }
}

/// Random codewords sent at Eb/N0 drawn uniformly from `[low, high]` dB.
pub fn sample_training_batch<R: Rng + ?Sized>(
    code: &LinearCode,
    channel: &ChannelConfig,
    ebno_range: (f64, f64),
    batch: usize,
    rng: &mut R,
) -> Result<TrainingBatch, TrainError> {
    let mut inputs = Vec::with_capacity(batch);
    let mut codewords = Vec::with_capacity(batch);
    for _ in 0..batch {
        let info: Vec<u8> = (0..code.k()).map(|_| rng.random::<bool>() as u8).collect();
        let c = code.encode(&info)?;
        let ebno = if ebno_range.0 == ebno_range.1 {
            ebno_range.0
        } else {
            rng.random_range(ebno_range.0..ebno_range.1)
        };
        let llr = transmit(&c, channel, ebno, rng)?;
        inputs.push(build_decoder_input(&llr, code.pcm())?);
        codewords.push(c);
    }
    Ok(TrainingBatch { inputs, codewords })
}

/// Loss and hard-decision bit error rate of one step, before its update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub train_ber: f64,
}

/// Forward, BCE loss, backward, optional global-norm clip and one Adam
/// update at the cosine learning rate of `state.step`.
pub fn train_step(
    model: &mut Model<f32>,
    inputs: &Tensor<f32>,
    targets: &Tensor<f32>,
    state: &mut TrainState,
    cfg: &TrainConfig,
) -> Result<StepRecord, TrainError> {
    let mut g = Graph::new();
    let params = model.bind(&mut g, true);
    let x = g.constant(inputs.clone());
    let logits = model.forward(&mut g, &params, x)?;
    let loss_node = g.bce_with_logits(logits, targets)?;
    let loss = g.value(loss_node).data()[0] as f64;
    if !loss.is_finite() {
        return Err(TrainError::NonFinite { step: state.step, loss });
    }
    let errors = g
        .value(logits)
        .data()
        .iter()
        .zip(targets.data())
        .filter(|(&z, &t)| ((z > 0.0) as u8 as f32) != t)
        .count();
    let ber = errors as f64 / targets.len().max(1) as f64;
    g.backward(loss_node)?;

    let grads: Vec<Vec<f32>> = params
        .iter()
        .zip(model.params().tensors())
        .map(|(&id, t)| g.grad(id).map_or_else(|| vec![0.0; t.len()], <[f32]>::to_vec))
        .collect();
    let norm = grads
        .iter()
        .flatten()
        .map(|&x| (x as f64) * (x as f64))
        .sum::<f64>()
        .sqrt();
    let scale = match cfg.grad_clip {
        Some(c) if norm > c => (c / norm) as f32,
        _ => 1.0,
    };

    let lr = cosine_lr(state.step, cfg.iterations, cfg.lr, cfg.lr_floor);
    let t = state.step + 1;
    for (((p, grad), m), v) in model
        .params_mut()
        .tensors_mut()
        .iter_mut()
        .zip(&grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        adam_update(p.data_mut(), grad, scale, m, v, t, lr, cfg);
    }
    let record = StepRecord {
        step: state.step,
        lr,
        loss,
        train_ber: ber,
    };
    state.step += 1;
    state.lr = lr;
    state.loss = loss;
    state.ber = ber;
    Ok(record)
}

/// One bias-corrected Adam update at 1-based step `t`; gradients are
/// multiplied by `scale` first.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    w: &mut [f32],
    grad: &[f32],
    scale: f32,
    m: &mut [f32],
    v: &mut [f32],
    t: usize,
    lr: f64,
    cfg: &TrainConfig,
) {
    let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
    let bc1 = (1.0 - cfg.beta1.powi(t as i32)) as f32;
    let bc2 = (1.0 - cfg.beta2.powi(t as i32)) as f32;
    let (lr, eps) = (lr as f32, cfg.eps as f32);
    for (((wi, &g0), mi), vi) in w.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        let gi = g0 * scale;
        *mi = b1 * *mi + (1.0 - b1) * gi;
        *vi = b2 * *vi + (1.0 - b2) * gi * gi;
        *wi -= lr * (*mi / bc1) / ((*vi / bc2).sqrt() + eps);
    }
}

/// Model, optimizer state and the data stream, resumable from a checkpoint.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Model<f32>,
    pub code: LinearCode,
    pub config: TrainConfig,
    pub state: TrainState,
    channel: ChannelConfig,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model_config: ModelConfig, code: LinearCode, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let model = Model::new(model_config, code.pcm())?;
        let state = TrainState::new(&model);
        let channel = ChannelConfig::new(config.modulation, code.rate().value())?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Trainer {
            model,
            code,
            config,
            state,
            channel,
            rng,
        })
    }

    pub fn channel(&self) -> &ChannelConfig {
        &self.channel
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.config.iterations
    }

    pub fn step(&mut self) -> Result<StepRecord, TrainError> {
        let batch = sample_training_batch(
            &self.code,
            &self.channel,
            (self.config.ebno_low, self.config.ebno_high),
            self.config.batch,
            &mut self.rng,
        )?;
        train_step(
            &mut self.model,
            &batch.input_tensor()?,
            &batch.target_tensor(),
            &mut self.state,
            &self.config,
        )
    }

    /// Trains until `until` steps have been taken (capped at the configured
    /// iteration count).
    pub fn run_until(&mut self, until: usize) -> Result<Vec<StepRecord>, TrainError> {
        let until = until.min(self.config.iterations);
        let mut log = Vec::with_capacity(until.saturating_sub(self.state.step));
        while self.state.step < until {
            log.push(self.step()?);
        }
        Ok(log)
    }

    pub fn run(&mut self) -> Result<Vec<StepRecord>, TrainError> {
        self.run_until(self.config.iterations)
    }

    pub fn to_container(&self) -> Container {
        let mut c = model_container(&self.model);
        c.meta.extend(self.config.to_pairs());
        let seed = hex::encode(self.rng.get_seed());
        c.meta.extend([
            ("state.step".to_string(), self.state.step.to_string()),
            ("state.lr".to_string(), self.state.lr.to_string()),
            ("state.loss".to_string(), self.state.loss.to_string()),
            ("state.ber".to_string(), self.state.ber.to_string()),
            ("rng.seed".to_string(), seed),
            ("rng.stream".to_string(), self.rng.get_stream().to_string()),
            ("rng.word_pos".to_string(), self.rng.get_word_pos().to_string()),
        ]);
        let names = self.model.params().names();
        let tensors = self.model.params().tensors();
        for (kind, moments) in [("m", &self.state.m), ("v", &self.state.v)] {
            for ((name, t), data) in names.iter().zip(tensors).zip(moments) {
                let moment = Tensor::new(t.shape(), data.clone()).expect("moment mirrors parameter");
                c.tensors.push((format!("adam.{kind}.{name}"), moment));
            }
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self, TrainError> {
        let model = model_from_container(c)?;
        let config = TrainConfig::from_container(c)?;
        config.validate()?;
        let code = LinearCode::from_pcm(model.code().clone(), crate::codes::Construction::Imported)?;
        let meta = |key: &str| {
            c.meta_value(key)
                .ok_or_else(|| TrainError::Checkpoint(format!("missing `{key}`")))
        };
        let num = |key: &str| -> Result<f64, TrainError> {
            meta(key)?
                .parse()
                .map_err(|_| TrainError::Checkpoint(format!("bad value for `{key}`")))
        };
        let step: usize = meta("state.step")?
            .parse()
            .map_err(|_| TrainError::Checkpoint("bad step".into()))?;
        let mut state = TrainState::new(&model);
        state.step = step;
        state.lr = num("state.lr")?;
        state.loss = num("state.loss")?;
        state.ber = num("state.ber")?;
        for (kind, moments) in [("m", &mut state.m), ("v", &mut state.v)] {
            for ((name, t), slot) in model
                .params()
                .names()
                .iter()
                .zip(model.params().tensors())
                .zip(moments.iter_mut())
            {
                let key = format!("adam.{kind}.{name}");
                let stored = c
                    .tensor(&key)
                    .ok_or_else(|| TrainError::Checkpoint(format!("missing `{key}`")))?;
                if stored.shape() != t.shape() {
                    return Err(TrainError::Checkpoint(format!(
                        "`{key}` has shape {:?}",
                        stored.shape()
                    )));
                }
                *slot = stored.data().to_vec();
            }
        }
        let seed_hex = meta("rng.seed")?;
        let mut seed = [0u8; 32];
        hex::decode_to_slice(seed_hex, &mut seed).map_err(|_| TrainError::Checkpoint("bad rng seed".into()))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(
            meta("rng.stream")?
                .parse()
                .map_err(|_| TrainError::Checkpoint("bad rng stream".into()))?,
        );
        rng.set_word_pos(
            meta("rng.word_pos")?
                .parse()
                .map_err(|_| TrainError::Checkpoint("bad rng position".into()))?,
        );
        let channel = ChannelConfig::new(config.modulation, code.rate().value())?;
        Ok(Trainer {
            model,
            code,
            config,
            state,
            channel,
            rng,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        Ok(self.to_container().write(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        Self::from_container(&Container::read(path)?)
    }
}

/// Writes `step,lr,loss,train_ber` rows, with a header when `header` is set.
pub fn write_log<W: std::io::Write>(out: W, records: &[StepRecord], header: bool) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(header).from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()
}
