//! Small multilayer perceptrons with manual backprop.
//!
//! Parameters live in one flat vector so tangent-kernel code can treat the
//! model as a differentiable map from R^d. Flattening order is fixed: for
//! each layer, the weight matrix row-major (out x in), then the bias vector
//! if biases are enabled.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::numerics::{argmax_tiebreak, Matrix, Rng};

/// Loss floor applied inside the log to keep cross entropy finite.
pub const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Tanh => libm::tanh(x),
        }
    }

    /// Derivative as a function of the pre-activation.
    pub(crate) fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = libm::tanh(pre);
                1.0 - t * t
            }
        }
    }
}

/// Architecture of a classifier: layer widths from input to logits, one
/// shared hidden activation, and an optional bias per layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub bias: bool,
}

impl NetworkSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation, bias: bool) -> Result<NetworkSpec> {
        if layer_widths.len() < 2 {
            return Err(Error::invalid("network needs at least input and output widths"));
        }
        if layer_widths.iter().any(|w| *w == 0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if *layer_widths.last().unwrap() < 2 {
            return Err(Error::invalid("output layer needs at least two classes"));
        }
        Ok(NetworkSpec {
            layer_widths,
            activation,
            bias,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn classes(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    /// Number of weight layers.
    pub fn layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        let mut d = 0;
        for l in 0..self.layers() {
            d += self.layer_widths[l] * self.layer_widths[l + 1];
            if self.bias {
                d += self.layer_widths[l + 1];
            }
        }
        d
    }

    /// Offset of layer `l`'s weight block in the flat parameter vector.
    pub(crate) fn layer_offset(&self, l: usize) -> usize {
        let mut off = 0;
        for k in 0..l {
            off += self.layer_widths[k] * self.layer_widths[k + 1];
            if self.bias {
                off += self.layer_widths[k + 1];
            }
        }
        off
    }
}

/// Flat parameter vector matching a `NetworkSpec` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    pub fn from_vec(values: Vec<f64>) -> Result<ParamVector> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "ParamVector::from_vec",
                index: i,
            });
        }
        Ok(ParamVector { values })
    }

    pub fn zeros(len: usize) -> ParamVector {
        ParamVector {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// LeCun-style init: weights `N(0, 1/fan_in)`, biases zero. Weights are
/// drawn layer by layer in row-major order, so the draw sequence is part
/// of the reproducibility contract.
pub fn init_params(spec: &NetworkSpec, rng: &mut Rng) -> ParamVector {
    let mut values = vec![0.0; spec.param_count()];
    for l in 0..spec.layers() {
        let fan_in = spec.layer_widths[l];
        let fan_out = spec.layer_widths[l + 1];
        let std = libm::sqrt(1.0 / fan_in as f64);
        let off = spec.layer_offset(l);
        for i in 0..fan_out * fan_in {
            values[off + i] = std * rng.next_normal();
        }
        // bias block stays zero
    }
    ParamVector { values }
}

/// Cached intermediate state of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    /// post[l] is the input to layer l; post[0] is the raw input.
    pub(crate) post: Vec<Vec<f64>>,
    /// pre[l] is the pre-activation output of layer l; the last entry is
    /// the logits.
    pub(crate) pre: Vec<Vec<f64>>,
}

impl ForwardTrace {
    /// Post-activation input to the final layer.
    pub fn hidden_output(&self) -> &[f64] {
        self.post.last().unwrap()
    }
}

fn check_compat(params: &ParamVector, spec: &NetworkSpec, x: &[f64]) -> Result<()> {
    if params.len() != spec.param_count() {
        return Err(Error::LengthMismatch {
            context: "params vs spec",
            left: params.len(),
            right: spec.param_count(),
        });
    }
    if x.len() != spec.input_dim() {
        return Err(Error::LengthMismatch {
            context: "input vs spec",
            left: x.len(),
            right: spec.input_dim(),
        });
    }
    Ok(())
}

/// Softmax with max subtraction.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let mut max = f64::NEG_INFINITY;
    for v in z {
        if *v > max {
            max = *v;
        }
    }
    let mut exps: Vec<f64> = z.iter().map(|v| libm::exp(v - max)).collect();
    let total: f64 = exps.iter().sum();
    for e in exps.iter_mut() {
        *e /= total;
    }
    exps
}

pub fn forward(params: &ParamVector, spec: &NetworkSpec, x: &[f64]) -> Result<ForwardTrace> {
    check_compat(params, spec, x)?;
    let mut post: Vec<Vec<f64>> = Vec::with_capacity(spec.layers());
    let mut pre: Vec<Vec<f64>> = Vec::with_capacity(spec.layers());
    post.push(x.to_vec());
    let w = params.as_slice();
    for l in 0..spec.layers() {
        let n_in = spec.layer_widths[l];
        let n_out = spec.layer_widths[l + 1];
        let off = spec.layer_offset(l);
        let input = post.last().unwrap();
        let mut z = vec![0.0; n_out];
        for i in 0..n_out {
            let row = &w[off + i * n_in..off + (i + 1) * n_in];
            let mut acc = 0.0;
            for j in 0..n_in {
                acc += row[j] * input[j];
            }
            if spec.bias {
                acc += w[off + n_out * n_in + i];
            }
            z[i] = acc;
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "forward pre-activation",
                index: l,
            });
        }
        if l + 1 < spec.layers() {
            let h: Vec<f64> = z.iter().map(|v| spec.activation.apply(*v)).collect();
            pre.push(z);
            post.push(h);
        } else {
            pre.push(z);
        }
    }
    let logits = pre.last().unwrap().clone();
    let probs = softmax(&logits);
    Ok(ForwardTrace {
        logits,
        probs,
        post,
        pre,
    })
}

/// `diag(q) - q q^T`; the derivative of softmax output with respect to the
/// logits.
pub fn softmax_jacobian(q: &[f64]) -> Matrix {
    let k = q.len();
    let mut a = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let v = if i == j {
                q[i] * (1.0 - q[i])
            } else {
                -q[i] * q[j]
            };
            a.set(i, j, v);
        }
    }
    a
}

/// Cross entropy `-ln q_y` with the probability floored at `PROB_FLOOR`
/// so the loss never becomes infinite. The flag reports whether the
/// floor was hit.
pub fn cross_entropy(q: &[f64], y: usize) -> Result<(f64, bool)> {
    if y >= q.len() {
        return Err(Error::LabelOutOfRange {
            index: 0,
            label: y,
            classes: q.len(),
        });
    }
    let mut qy = q[y];
    let clamped = qy < PROB_FLOOR;
    if clamped {
        qy = PROB_FLOOR;
    }
    Ok((-libm::log(qy), clamped))
}

pub fn one_hot(y: usize, classes: usize) -> Result<Vec<f64>> {
    if y >= classes {
        return Err(Error::LabelOutOfRange {
            index: 0,
            label: y,
            classes,
        });
    }
    let mut v = vec![0.0; classes];
    v[y] = 1.0;
    Ok(v)
}

/// Gradient of `seed . z` with respect to the flat parameters, reusing a
/// cached forward trace.
fn backprop_seed(
    params: &ParamVector,
    spec: &NetworkSpec,
    trace: &ForwardTrace,
    seed: &[f64],
) -> Vec<f64> {
    let w = params.as_slice();
    let mut grad = vec![0.0; spec.param_count()];
    let mut delta = seed.to_vec();
    for l in (0..spec.layers()).rev() {
        let n_in = spec.layer_widths[l];
        let n_out = spec.layer_widths[l + 1];
        let off = spec.layer_offset(l);
        let input = &trace.post[l];
        for i in 0..n_out {
            let di = delta[i];
            if di != 0.0 {
                let row = &mut grad[off + i * n_in..off + (i + 1) * n_in];
                for j in 0..n_in {
                    row[j] = di * input[j];
                }
            }
            if spec.bias {
                grad[off + n_out * n_in + i] = delta[i];
            }
        }
        if l > 0 {
            let mut next = vec![0.0; n_in];
            for j in 0..n_in {
                let mut acc = 0.0;
                for i in 0..n_out {
                    acc += w[off + i * n_in + j] * delta[i];
                }
                next[j] = acc * spec.activation.derivative(trace.pre[l - 1][j]);
            }
            delta = next;
        }
    }
    grad
}

/// Jacobian of the logits with respect to the parameters, one row per
/// class, `K x d`.
pub fn logit_jacobian(params: &ParamVector, spec: &NetworkSpec, x: &[f64]) -> Result<Matrix> {
    let trace = forward(params, spec, x)?;
    logit_jacobian_with_trace(params, spec, &trace)
}

pub(crate) fn logit_jacobian_with_trace(
    params: &ParamVector,
    spec: &NetworkSpec,
    trace: &ForwardTrace,
) -> Result<Matrix> {
    let k = spec.classes();
    let d = spec.param_count();
    let mut jac = Matrix::zeros(k, d);
    let mut seed = vec![0.0; k];
    for c in 0..k {
        seed[c] = 1.0;
        let row = backprop_seed(params, spec, trace, &seed);
        seed[c] = 0.0;
        jac.row_mut(c).copy_from_slice(&row);
    }
    Ok(jac)
}

/// Gradient of one logit with respect to the parameters.
pub fn logit_row_gradient(
    params: &ParamVector,
    spec: &NetworkSpec,
    x: &[f64],
    class: usize,
) -> Result<Vec<f64>> {
    if class >= spec.classes() {
        return Err(Error::LabelOutOfRange {
            index: 0,
            label: class,
            classes: spec.classes(),
        });
    }
    let trace = forward(params, spec, x)?;
    let mut seed = vec![0.0; spec.classes()];
    seed[class] = 1.0;
    Ok(backprop_seed(params, spec, &trace, &seed))
}

/// Gradient of the cross-entropy loss with respect to the parameters,
/// computed as one backward pass seeded with `q - onehot(y)`.
pub fn loss_gradient(
    params: &ParamVector,
    spec: &NetworkSpec,
    x: &[f64],
    y: usize,
) -> Result<Vec<f64>> {
    if y >= spec.classes() {
        return Err(Error::LabelOutOfRange {
            index: 0,
            label: y,
            classes: spec.classes(),
        });
    }
    let trace = forward(params, spec, x)?;
    let mut seed = trace.probs.clone();
    seed[y] -= 1.0;
    Ok(backprop_seed(params, spec, &trace, &seed))
}

/// SGD settings. `seed` drives both the init and the shuffle stream, so a
/// config fully determines a run on a given dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
    /// Snapshot parameters after every update, for step-level analyses.
    pub record_iteration_params: bool,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            lr: 0.1,
            batch_size: 32,
            epochs: 10,
            seed: 0,
            shuffle: true,
            record_iteration_params: false,
        }
    }
}

/// One SGD update step, as seen by step-level analyses.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// Dataset indices of the updated batch.
    pub batch: Vec<usize>,
    /// Predicted classes of this batch under the parameters right after
    /// this update.
    pub preds_after: Vec<usize>,
    /// Predicted classes of the previous iteration's batch under the
    /// parameters right after this update.
    pub prev_preds_after: Vec<usize>,
    /// Parameters after this update, when recording is enabled.
    pub params_after: Option<ParamVector>,
}

/// Everything a training run leaves behind.
#[derive(Debug, Clone)]
pub struct TrainLog {
    pub spec: NetworkSpec,
    pub config: TrainConfig,
    /// Sample ids in dataset order; loss rows align with this.
    pub ids: Vec<u64>,
    /// `losses[e][i]` is the loss of sample `i` when visited in epoch `e`.
    pub losses: Vec<Vec<f64>>,
    /// Parameters after each epoch.
    pub checkpoints: Vec<ParamVector>,
    /// Accuracy on the validation set after each epoch; empty without one.
    pub val_accuracy: Vec<f64>,
    pub initial_params: ParamVector,
    pub iterations: Vec<IterationRecord>,
    /// Whether the cross-entropy floor was ever hit.
    pub clamped: bool,
}

/// Fraction of samples whose top class matches the label.
pub fn accuracy(params: &ParamVector, spec: &NetworkSpec, ds: &LabeledDataset) -> Result<f64> {
    if ds.len() == 0 {
        return Err(Error::EmptyInput("accuracy"));
    }
    let mut hits = 0usize;
    for i in 0..ds.len() {
        let trace = forward(params, spec, ds.features(i))?;
        if argmax_tiebreak(&trace.probs)? == ds.label(i) {
            hits += 1;
        }
    }
    Ok(hits as f64 / ds.len() as f64)
}

fn validate_train_inputs(
    ds: &LabeledDataset,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
) -> Result<()> {
    if ds.len() == 0 {
        return Err(Error::EmptyInput("train dataset"));
    }
    if ds.dim() != spec.input_dim() {
        return Err(Error::LengthMismatch {
            context: "dataset dim vs spec input",
            left: ds.dim(),
            right: spec.input_dim(),
        });
    }
    for i in 0..ds.len() {
        if ds.label(i) >= spec.classes() {
            return Err(Error::LabelOutOfRange {
                index: i,
                label: ds.label(i),
                classes: spec.classes(),
            });
        }
    }
    if !cfg.lr.is_finite() || cfg.lr <= 0.0 {
        return Err(Error::invalid("learning rate must be finite and positive"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    Ok(())
}

/// Minibatch SGD on the cross-entropy loss. Losses are recorded at visit
/// time within each epoch, checkpoints after every epoch. Identical
/// inputs give bit-identical outputs.
pub fn train(
    ds: &LabeledDataset,
    valset: Option<&LabeledDataset>,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
) -> Result<(ParamVector, TrainLog)> {
    validate_train_inputs(ds, spec, cfg)?;
    let n = ds.len();
    let mut rng = Rng::new(cfg.seed);
    let mut params = init_params(spec, &mut rng);
    let initial_params = params.clone();
    let mut log = TrainLog {
        spec: spec.clone(),
        config: cfg.clone(),
        ids: ds.ids().to_vec(),
        losses: Vec::with_capacity(cfg.epochs),
        checkpoints: Vec::with_capacity(cfg.epochs),
        val_accuracy: Vec::new(),
        initial_params,
        iterations: Vec::new(),
        clamped: false,
    };
    let mut order: Vec<usize> = (0..n).collect();
    let d = spec.param_count();
    let mut iteration = 0usize;
    let mut prev_batch: Vec<usize> = Vec::new();
    for _epoch in 0..cfg.epochs {
        if cfg.shuffle {
            rng.shuffle(&mut order);
        }
        let mut epoch_losses = vec![0.0; n];
        for batch in order.chunks(cfg.batch_size.min(n)) {
            let mut grad = vec![0.0; d];
            for &i in batch {
                let label = ds.label(i);
                let trace = forward(&params, spec, ds.features(i)).map_err(|e| match e {
                    Error::NonFinite { .. } => Error::Diverged { iteration },
                    other => other,
                })?;
                let (loss, clamped) = cross_entropy(&trace.probs, label)?;
                if clamped {
                    log.clamped = true;
                }
                if !loss.is_finite() {
                    return Err(Error::Diverged { iteration });
                }
                epoch_losses[i] = loss;
                let mut seed = trace.probs.clone();
                seed[label] -= 1.0;
                let g = backprop_seed(&params, spec, &trace, &seed);
                for j in 0..d {
                    grad[j] += g[j];
                }
            }
            let scale = cfg.lr / batch.len() as f64;
            {
                let w = params.as_mut_slice();
                for j in 0..d {
                    w[j] -= scale * grad[j];
                }
            }
            if !params.is_finite() {
                return Err(Error::Diverged { iteration });
            }
            if cfg.record_iteration_params {
                let preds_after = predict_batch(&params, spec, ds, batch)?;
                let prev_preds_after = predict_batch(&params, spec, ds, &prev_batch)?;
                log.iterations.push(IterationRecord {
                    batch: batch.to_vec(),
                    preds_after,
                    prev_preds_after,
                    params_after: Some(params.clone()),
                });
                prev_batch = batch.to_vec();
            }
            iteration += 1;
        }
        log.losses.push(epoch_losses);
        log.checkpoints.push(params.clone());
        if let Some(vs) = valset {
            log.val_accuracy.push(accuracy(&params, spec, vs)?);
        }
    }
    Ok((params, log))
}

fn predict_batch(
    params: &ParamVector,
    spec: &NetworkSpec,
    ds: &LabeledDataset,
    batch: &[usize],
) -> Result<Vec<usize>> {
    let mut preds = Vec::with_capacity(batch.len());
    for &i in batch {
        let trace = forward(params, spec, ds.features(i))?;
        preds.push(argmax_tiebreak(&trace.probs)?);
    }
    Ok(preds)
}

/// Picks the checkpoint with the highest validation accuracy, earliest
/// epoch on ties.
pub fn select_best(log: &TrainLog, valset: &LabeledDataset) -> Result<(usize, ParamVector)> {
    if log.checkpoints.is_empty() {
        return Err(Error::EmptyInput("select_best needs at least one checkpoint"));
    }
    let mut best_epoch = 0usize;
    let mut best_acc = f64::NEG_INFINITY;
    for (e, ckpt) in log.checkpoints.iter().enumerate() {
        let acc = accuracy(ckpt, &log.spec, valset)?;
        if acc > best_acc {
            best_acc = acc;
            best_epoch = e;
        }
    }
    Ok((best_epoch, log.checkpoints[best_epoch].clone()))
}
