//! The two review classifiers, their training loop and prediction.
//!
//! ```text
//! cnn:    Embedding -> Conv1D(filters, kernel, ReLU) -> GlobalMaxPool
//!         -> Dense(dense_units, ReLU) -> Dropout -> Dense(3, softmax)
//! bilstm: Embedding -> BiLSTM(units) -> Dropout
//!         -> Dense(dense_units, ReLU) -> Dropout -> Dense(3, softmax)
//! ```
//!
//! The output layer produces logits; softmax is fused into the loss during
//! training and applied explicitly by [`predict`].

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{
    self, adam_step, bilstm_backward, bilstm_forward, conv1d_backward, conv1d_forward,
    crossentropy_rows, dense_backward, dense_forward, dropout, dropout_backward,
    embedding_backward, embedding_forward, global_max_pool, global_max_pool_backward, init,
    softmax_crossentropy, softmax_rows, Activation, AdamConfig, AdamState, BiLstmCache,
    Conv1dCache, Conv1dParams, DenseCache, DenseParams, DropoutMask, GradCheckReport, IdBatch,
    LstmParams, MaxPoolCache, Mode, Tensor,
};
use crate::textenc::{EncodedSequence, DEFAULT_MAX_LENGTH, DEFAULT_MAX_WORDS};
use crate::{Error, Result};

pub const NUM_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cnn,
    Bilstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::Cnn, ModelKind::Bilstm];

    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Cnn => "cnn",
            ModelKind::Bilstm => "bilstm",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Cnn => "CNN",
            ModelKind::Bilstm => "Bi-LSTM",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(ModelKind::Cnn),
            "bilstm" | "bi-lstm" => Ok(ModelKind::Bilstm),
            other => Err(Error::Config(format!(
                "unknown model `{other}` (cnn or bilstm)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub max_words: usize,
    pub embedding_dim: usize,
    pub max_length: usize,
    pub filters: usize,
    pub kernel_size: usize,
    pub lstm_units: usize,
    pub dense_units: usize,
    pub dropout: f64,
    pub classes: usize,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec {
            kind,
            max_words: DEFAULT_MAX_WORDS,
            embedding_dim: 64,
            max_length: DEFAULT_MAX_LENGTH,
            filters: 128,
            kernel_size: 5,
            lstm_units: 64,
            dense_units: 64,
            dropout: 0.5,
            classes: NUM_CLASSES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("max_words", self.max_words),
            ("embedding_dim", self.embedding_dim),
            ("max_length", self.max_length),
            ("filters", self.filters),
            ("kernel_size", self.kernel_size),
            ("lstm_units", self.lstm_units),
            ("dense_units", self.dense_units),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!(
                "model spec: {name} must be positive"
            )));
        }
        if self.classes != NUM_CLASSES {
            return Err(Error::Config(format!(
                "model spec: classes must be {NUM_CLASSES}, got {}",
                self.classes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "model spec: dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.kind == ModelKind::Cnn && self.max_length < self.kernel_size {
            return Err(Error::Config(format!(
                "model spec: max_length {} shorter than kernel_size {}",
                self.max_length, self.kernel_size
            )));
        }
        Ok(())
    }

    /// Parameter block names and shapes in storage order.
    pub fn blocks(&self) -> Vec<(&'static str, Vec<usize>)> {
        let (v, e, d, c) = (
            self.max_words,
            self.embedding_dim,
            self.dense_units,
            self.classes,
        );
        let mut blocks = vec![("embedding", vec![v, e])];
        let features = match self.kind {
            ModelKind::Cnn => {
                let (k, f) = (self.kernel_size, self.filters);
                blocks.push(("conv.kernel", vec![k, e, f]));
                blocks.push(("conv.bias", vec![f]));
                f
            }
            ModelKind::Bilstm => {
                let u = self.lstm_units;
                for dir in ["lstm_fwd", "lstm_bwd"] {
                    let names: [&'static str; 3] = match dir {
                        "lstm_fwd" => ["lstm_fwd.input", "lstm_fwd.recurrent", "lstm_fwd.bias"],
                        _ => ["lstm_bwd.input", "lstm_bwd.recurrent", "lstm_bwd.bias"],
                    };
                    blocks.push((names[0], vec![e, 4 * u]));
                    blocks.push((names[1], vec![u, 4 * u]));
                    blocks.push((names[2], vec![4 * u]));
                }
                2 * u
            }
        };
        blocks.push(("dense.weight", vec![features, d]));
        blocks.push(("dense.bias", vec![d]));
        blocks.push(("output.weight", vec![d, c]));
        blocks.push(("output.bias", vec![c]));
        blocks
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    /// Epochs without validation-loss improvement before stopping; 0 disables.
    pub patience: usize,
    pub restore_best: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction carved from the end of the training data when no validation set is given.
    pub validation_fraction: f64,
    pub early_stop: EarlyStop,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            validation_fraction: 0.1,
            early_stop: EarlyStop {
                patience: 5,
                restore_best: true,
            },
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction {} outside (0, 1)",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    /// 1-based epoch at which training ended.
    pub stopped_epoch: usize,
    /// 1-based epoch with the lowest validation loss.
    pub best_epoch: usize,
}

/// Padded id sequences with their integer class targets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Examples {
    pub inputs: Vec<EncodedSequence>,
    pub labels: Vec<usize>,
}

impl Examples {
    pub fn new(inputs: Vec<EncodedSequence>, labels: Vec<usize>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= NUM_CLASSES) {
            return Err(Error::Data(format!("label {bad} outside 0..{NUM_CLASSES}")));
        }
        Ok(Examples { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn batch(&self, indices: &[usize]) -> Result<(IdBatch, Vec<usize>)> {
        let ids = IdBatch::from_sequences(indices.iter().map(|&i| &self.inputs[i]))?;
        Ok((ids, indices.iter().map(|&i| self.labels[i]).collect()))
    }

    fn split_tail(&self, fraction: f64) -> (Examples, Examples) {
        let cut = (self.len() as f64 * (1.0 - fraction)).floor() as usize;
        (
            Examples {
                inputs: self.inputs[..cut].to_vec(),
                labels: self.labels[..cut].to_vec(),
            },
            Examples {
                inputs: self.inputs[cut..].to_vec(),
                labels: self.labels[cut..].to_vec(),
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    params: Vec<Tensor>,
}

enum Cache {
    Cnn {
        conv: Conv1dCache,
        pool: MaxPoolCache,
        dense: DenseCache,
        drop: DropoutMask,
        out: DenseCache,
    },
    Bilstm {
        lstm: BiLstmCache,
        drop1: DropoutMask,
        dense: DenseCache,
        drop2: DropoutMask,
        out: DenseCache,
    },
}

struct ForwardPass {
    logits: Tensor,
    cache: Cache,
    ids: IdBatch,
}

/// Builds a model with freshly initialized parameters:
/// embedding `U(-0.05, 0.05)`, convolution and dense layers Glorot-uniform,
/// LSTM input weights Glorot-uniform, recurrent weights orthogonal, forget
/// gate bias 1, all other biases 0.
pub fn build(spec: &ModelSpec, seed: u64) -> Result<Model> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::new();
    for (name, shape) in spec.blocks() {
        let t = if name == "embedding" {
            init::uniform(&shape, 0.05, &mut rng)
        } else if name.ends_with(".bias") {
            let mut b = Tensor::zeros(&shape);
            if name.starts_with("lstm") {
                let u = spec.lstm_units;
                b.data_mut()[u..2 * u].iter_mut().for_each(|v| *v = 1.0);
            }
            b
        } else if name == "conv.kernel" {
            let (k, c, f) = (shape[0], shape[1], shape[2]);
            init::glorot_uniform(&shape, k * c, k * f, &mut rng)
        } else if name.ends_with(".recurrent") {
            init::orthogonal(shape[0], shape[1], &mut rng)
        } else {
            init::glorot_uniform(&shape, shape[0], shape[1], &mut rng)
        };
        params.push(t);
    }
    Ok(Model {
        spec: *spec,
        params,
    })
}

impl Model {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn block_names(&self) -> Vec<&'static str> {
        self.spec.blocks().into_iter().map(|(n, _)| n).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.block_names()
            .iter()
            .position(|n| *n == name)
            .map(|i| &self.params[i])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = self.block_names().iter().position(|n| *n == name)?;
        self.params.get_mut(i)
    }

    /// Replaces all parameter blocks, checking names' shapes against the spec.
    pub fn set_params(&mut self, params: Vec<Tensor>) -> Result<()> {
        let blocks = self.spec.blocks();
        if params.len() != blocks.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter blocks, got {}",
                blocks.len(),
                params.len()
            )));
        }
        for ((name, shape), p) in blocks.iter().zip(&params) {
            if p.shape() != shape.as_slice() {
                return Err(Error::Shape(format!(
                    "block `{name}` expects {shape:?}, got {:?}",
                    p.shape()
                )));
            }
        }
        self.params = params;
        Ok(())
    }

    fn conv(&self) -> Conv1dParams {
        Conv1dParams {
            kernel: self.params[1].clone(),
            bias: self.params[2].clone(),
        }
    }

    fn lstm(&self, first: usize) -> LstmParams {
        LstmParams {
            input: self.params[first].clone(),
            recurrent: self.params[first + 1].clone(),
            bias: self.params[first + 2].clone(),
        }
    }

    fn dense(&self, first: usize) -> DenseParams {
        DenseParams {
            weight: self.params[first].clone(),
            bias: self.params[first + 1].clone(),
        }
    }

    fn head_index(&self) -> usize {
        self.params.len() - 4
    }

    fn forward<R: Rng + ?Sized>(
        &self,
        ids: &IdBatch,
        mode: Mode,
        rng: &mut R,
    ) -> Result<ForwardPass> {
        let rate = self.spec.dropout;
        let embedded = embedding_forward(ids, &self.params[0])?;
        let head = self.head_index();
        let (logits, cache) = match self.spec.kind {
            ModelKind::Cnn => {
                let (h, conv) = conv1d_forward(&embedded, &self.conv())?;
                let (h, pool) = global_max_pool(&h)?;
                let (h, dense) = dense_forward(&h, &self.dense(head), Activation::Relu)?;
                let (h, drop) = dropout(&h, rate, mode, rng)?;
                let (logits, out) = dense_forward(&h, &self.dense(head + 2), Activation::None)?;
                (
                    logits,
                    Cache::Cnn {
                        conv,
                        pool,
                        dense,
                        drop,
                        out,
                    },
                )
            }
            ModelKind::Bilstm => {
                let (h, lstm) = bilstm_forward(&embedded, &self.lstm(1), &self.lstm(4))?;
                let (h, drop1) = dropout(&h, rate, mode, rng)?;
                let (h, dense) = dense_forward(&h, &self.dense(head), Activation::Relu)?;
                let (h, drop2) = dropout(&h, rate, mode, rng)?;
                let (logits, out) = dense_forward(&h, &self.dense(head + 2), Activation::None)?;
                (
                    logits,
                    Cache::Bilstm {
                        lstm,
                        drop1,
                        dense,
                        drop2,
                        out,
                    },
                )
            }
        };
        logits.check_finite("model logits")?;
        Ok(ForwardPass {
            logits,
            cache,
            ids: ids.clone(),
        })
    }

    /// Gradients of every parameter block, in storage order.
    fn backward(&self, pass: &ForwardPass, grad_logits: &Tensor) -> Vec<Tensor> {
        let head = self.head_index();
        let mut grads: Vec<Option<Tensor>> = vec![None; self.params.len()];
        let d_embedded = match &pass.cache {
            Cache::Cnn {
                conv,
                pool,
                dense,
                drop,
                out,
            } => {
                let g_out = dense_backward(out, grad_logits, &self.dense(head + 2));
                let g = dropout_backward(drop, &g_out.input);
                let g_dense = dense_backward(dense, &g, &self.dense(head));
                let g = global_max_pool_backward(pool, &g_dense.input);
                let g_conv = conv1d_backward(conv, &g, &self.conv());
                grads[1] = Some(g_conv.kernel);
                grads[2] = Some(g_conv.bias);
                grads[head] = Some(g_dense.weight);
                grads[head + 1] = Some(g_dense.bias);
                grads[head + 2] = Some(g_out.weight);
                grads[head + 3] = Some(g_out.bias);
                g_conv.input
            }
            Cache::Bilstm {
                lstm,
                drop1,
                dense,
                drop2,
                out,
            } => {
                let g_out = dense_backward(out, grad_logits, &self.dense(head + 2));
                let g = dropout_backward(drop2, &g_out.input);
                let g_dense = dense_backward(dense, &g, &self.dense(head));
                let g = dropout_backward(drop1, &g_dense.input);
                let g_lstm = bilstm_backward(lstm, &g, &self.lstm(1), &self.lstm(4));
                let [f, r] = [g_lstm.forward, g_lstm.reverse];
                grads[1] = Some(f.input);
                grads[2] = Some(f.recurrent);
                grads[3] = Some(f.bias);
                grads[4] = Some(r.input);
                grads[5] = Some(r.recurrent);
                grads[6] = Some(r.bias);
                grads[head] = Some(g_dense.weight);
                grads[head + 1] = Some(g_dense.bias);
                grads[head + 2] = Some(g_out.weight);
                grads[head + 3] = Some(g_out.bias);
                g_lstm.input
            }
        };
        grads[0] = Some(embedding_backward(
            &pass.ids,
            &d_embedded,
            self.params[0].shape(),
        ));
        grads
            .into_iter()
            .map(|g| g.expect("every block has a gradient"))
            .collect()
    }

    /// Mean loss and parameter gradients for one batch.
    pub fn loss_and_grads<R: Rng + ?Sized>(
        &self,
        ids: &IdBatch,
        targets: &[usize],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(f64, Tensor, Vec<Tensor>)> {
        let pass = self.forward(ids, mode, rng)?;
        let (loss, grad_logits) = softmax_crossentropy(&pass.logits, targets)?;
        let grads = self.backward(&pass, &grad_logits);
        Ok((loss, pass.logits, grads))
    }

    /// Inference-mode logits for a batch.
    pub fn logits(&self, ids: &IdBatch) -> Result<Tensor> {
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(ids, Mode::Infer, &mut unused)?.logits)
    }

    /// Compares analytic gradients on one batch with central differences.
    /// Dropout runs in training mode with a mask fixed by `dropout_seed`.
    pub fn grad_check(
        &self,
        ids: &IdBatch,
        targets: &[usize],
        dropout_seed: u64,
        tolerance: f64,
    ) -> Result<GradCheckReport> {
        let run = |m: &Model| {
            let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
            m.loss_and_grads(ids, targets, Mode::Train, &mut rng)
        };
        let (_, _, analytic) = run(self)?;
        let names: Vec<String> = self.block_names().iter().map(|s| s.to_string()).collect();
        let mut probe = self.clone();
        nn::check_blocks(
            &names,
            &self.params,
            &analytic,
            nn::gradcheck::DEFAULT_STEP,
            tolerance,
            |params| {
                probe.params.clone_from_slice(params);
                Ok(run(&probe)?.0)
            },
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let names = self.block_names();
        let blocks: Vec<(&str, &Tensor)> = names.iter().copied().zip(&self.params).collect();
        nn::save_checkpoint(path, self.spec.kind.tag(), &blocks)
    }

    pub fn load(spec: &ModelSpec, path: impl AsRef<Path>) -> Result<Model> {
        spec.validate()?;
        let ck = nn::load_checkpoint(path)?;
        if ck.arch != spec.kind.tag() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds a `{}` model, expected `{}`",
                ck.arch,
                spec.kind.tag()
            )));
        }
        let expected = spec.blocks();
        if ck.blocks.len() != expected.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} blocks, spec needs {}",
                ck.blocks.len(),
                expected.len()
            )));
        }
        let mut params = Vec::with_capacity(expected.len());
        for ((name, shape), (ck_name, tensor)) in expected.iter().zip(ck.blocks) {
            if *name != ck_name || shape.as_slice() != tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "block `{ck_name}` {:?} does not match `{name}` {shape:?}",
                    tensor.shape()
                )));
            }
            params.push(tensor);
        }
        Ok(Model {
            spec: *spec,
            params,
        })
    }
}

const EVAL_CHUNK: usize = 256;

/// Per-row inference outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub classes: Vec<usize>,
    pub probabilities: Vec<[f64; NUM_CLASSES]>,
}

/// Argmax with the lowest index winning ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

pub fn predict(model: &Model, inputs: &[EncodedSequence]) -> Result<Predictions> {
    let mut classes = Vec::with_capacity(inputs.len());
    let mut probabilities = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(EVAL_CHUNK) {
        let ids = IdBatch::from_sequences(chunk)?;
        let probs = softmax_rows(&model.logits(&ids)?);
        for row in probs.data().chunks_exact(NUM_CLASSES) {
            classes.push(argmax(row));
            probabilities.push([row[0], row[1], row[2]]);
        }
    }
    Ok(Predictions {
        classes,
        probabilities,
    })
}

/// Inference-mode predictions with the crossentropy of each row.
pub fn evaluate_rows(model: &Model, data: &Examples) -> Result<(Predictions, Vec<f64>)> {
    let mut losses = Vec::with_capacity(data.len());
    let mut classes = Vec::with_capacity(data.len());
    let mut probabilities = Vec::with_capacity(data.len());
    for (inputs, labels) in data
        .inputs
        .chunks(EVAL_CHUNK)
        .zip(data.labels.chunks(EVAL_CHUNK))
    {
        let ids = IdBatch::from_sequences(inputs)?;
        let logits = model.logits(&ids)?;
        losses.extend(crossentropy_rows(&logits, labels)?);
        let probs = softmax_rows(&logits);
        for row in probs.data().chunks_exact(NUM_CLASSES) {
            classes.push(argmax(row));
            probabilities.push([row[0], row[1], row[2]]);
        }
    }
    Ok((
        Predictions {
            classes,
            probabilities,
        },
        losses,
    ))
}

fn loss_and_accuracy(model: &Model, data: &Examples) -> Result<(f64, f64)> {
    let (pred, losses) = evaluate_rows(model, data)?;
    let n = data.len() as f64;
    let correct = pred
        .classes
        .iter()
        .zip(&data.labels)
        .filter(|(p, t)| p == t)
        .count();
    Ok((losses.iter().sum::<f64>() / n, correct as f64 / n))
}

/// Mini-batch Adam training with per-epoch seeded shuffling and early stopping
/// on validation loss. Without an explicit validation set the last
/// `validation_fraction` of `train` is held out.
pub fn train(
    model: &mut Model,
    train: &Examples,
    validation: Option<&Examples>,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    let carved;
    let (train, validation) = match validation {
        Some(v) => (train, v),
        None => {
            carved = train.split_tail(config.validation_fraction);
            (&carved.0, &carved.1)
        }
    };
    if train.is_empty() {
        return Err(Error::Data("no training rows".into()));
    }
    if validation.is_empty() {
        return Err(Error::Data("no validation rows".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(config.adam, &model.params);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Vec<Tensor>)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch_no, chunk) in order.chunks(config.batch_size).enumerate() {
            let (ids, targets) = train.batch(chunk)?;
            let (loss, logits, grads) = model
                .loss_and_grads(&ids, &targets, Mode::Train, &mut rng)
                .map_err(|e| match e {
                    Error::NonFinite(m) => Error::NonFinite(format!(
                        "training diverged at epoch {epoch}, batch {batch_no}: {m}"
                    )),
                    other => other,
                })?;
            loss_sum += loss * chunk.len() as f64;
            correct += logits
                .data()
                .chunks_exact(NUM_CLASSES)
                .zip(&targets)
                .filter(|(row, t)| argmax(row) == **t)
                .count();
            adam_step(model.params.iter_mut(), &grads, &mut adam)?;
        }
        let n = train.len() as f64;
        let (val_loss, val_acc) = loss_and_accuracy(model, validation)?;
        history.train_loss.push(loss_sum / n);
        history.train_accuracy.push(correct as f64 / n);
        history.val_loss.push(val_loss);
        history.val_accuracy.push(val_acc);
        history.stopped_epoch = epoch;
        log::info!(
            "{} epoch {epoch}: loss {:.4} acc {:.4} val_loss {val_loss:.4} val_acc {val_acc:.4}",
            model.spec.kind,
            loss_sum / n,
            correct as f64 / n
        );

        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, model.params.clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if config.early_stop.patience > 0 && since_best >= config.early_stop.patience {
                break;
            }
        }
    }
    if config.early_stop.restore_best {
        if let Some((_, params)) = best {
            model.params = params;
        }
    }
    Ok(history)
}

/// Sidecar metadata saved next to a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub spec: ModelSpec,
    pub config: TrainConfig,
    pub seed: u64,
    pub history: TrainHistory,
}

impl ModelRecord {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
