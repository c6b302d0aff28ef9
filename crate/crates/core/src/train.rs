//! Loss, optimizers, the epoch loop, and evaluation.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::EegSegment;
use crate::error::{Error, Result};
use crate::gradcheck::{gradient_check_resampled, GradCheckReport};
use crate::graph::{Graph, Var, LOG_FLOOR};
use crate::metrics::Metrics;
use crate::model::{forward, predict, ModelConfig, ModelParams, NUM_CLASSES};
use crate::parallel::{ordered_map, Execution};
use crate::rng::{stream, subseed, StreamRng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Weight of the assignment entropy term.
    pub lambda: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            max_epochs: 10,
            batch_size: 128,
            lambda: 1e-5,
            seed: 0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    /// A zero learning rate is accepted and leaves parameters untouched.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be non-negative, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// `−log p[label] − λ Σ_R Σ_ij R_ij log R_ij` for one sample.
pub fn loss(g: &mut Graph, probs: Var, label: usize, assignments: &[Var], lambda: f64) -> Result<Var> {
    let classes = g.value(probs).numel();
    if label >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let p = g.slice(probs, 0, label, label + 1)?;
    let log_p = g.log(p)?;
    let nll = g.sum(log_p)?;
    let mut total = g.scale(nll, -1.0)?;
    if lambda != 0.0 {
        for &r in assignments {
            let log_r = g.log(r)?;
            let r_log_r = g.mul(r, log_r)?;
            let s = g.sum(r_log_r)?;
            let term = g.scale(s, -lambda)?;
            total = g.add(total, term)?;
        }
    }
    Ok(total)
}

/// Mean row entropy `−Σ_j R_ij log R_ij` of one assignment matrix.
pub fn mean_row_entropy(r: &Tensor) -> f64 {
    let (rows, _) = r.dims2();
    let total: f64 = r.data().iter().map(|&v| -v * v.max(LOG_FLOOR).ln()).sum();
    total / rows as f64
}

#[derive(Debug, Clone)]
pub struct SampleGradient {
    pub loss: f64,
    /// One tensor per parameter, canonical order.
    pub grads: Vec<Tensor>,
}

pub fn sample_gradient(params: &ModelParams, config: &ModelConfig, segment: &EegSegment, lambda: f64) -> Result<SampleGradient> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g, true);
    let out = forward(&mut g, &bound, config, &segment.data)?;
    let l = loss(&mut g, out.probs, segment.label.index(), &out.assignments(), lambda)?;
    g.backward(l)?;
    Ok(SampleGradient {
        loss: g.value(l).item(),
        grads: bound.vars().into_iter().map(|v| g.grad_or_zeros(v)).collect(),
    })
}

/// Mean loss and mean gradient over a batch. Samples may run in parallel;
/// the reduction is always sequential in batch order.
pub fn batch_gradient(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &[&EegSegment],
    lambda: f64,
    exec: Execution,
) -> Result<(f64, Vec<Tensor>)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let per_sample = ordered_map(exec, batch, |s| sample_gradient(params, config, s, lambda));
    let mut loss_sum = 0.0;
    let mut grads: Option<Vec<Tensor>> = None;
    for sg in per_sample {
        let sg = sg?;
        loss_sum += sg.loss;
        match &mut grads {
            None => grads = Some(sg.grads),
            Some(acc) => acc.iter_mut().zip(&sg.grads).for_each(|(a, g)| a.axpy(1.0, g)),
        }
    }
    let n = batch.len() as f64;
    let mut grads = grads.expect("non-empty batch");
    for gr in &mut grads {
        gr.data_mut().iter_mut().for_each(|v| *v /= n);
    }
    Ok((loss_sum / n, grads))
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &[Tensor]) -> Result<()> {
        self.step += 1;
        let lr = self.learning_rate;
        if self.kind == OptimizerKind::Adam && self.m.is_empty() {
            self.m = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
            self.v = self.m.clone();
        }
        let bc1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
        let mut k = 0;
        let mut mismatch = None;
        let kind = self.kind;
        let (ms, vs) = (&mut self.m, &mut self.v);
        params.visit_mut(|name, p| {
            let Some(g) = grads.get(k).filter(|g| g.shape() == p.shape()) else {
                mismatch.get_or_insert_with(|| name.to_string());
                k += 1;
                return;
            };
            match kind {
                OptimizerKind::Sgd => p.axpy(-lr, g),
                OptimizerKind::Adam => {
                    let (m, v) = (ms[k].data_mut(), vs[k].data_mut());
                    for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                        *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * gi;
                        *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * gi * gi;
                        *w -= lr * (*mi / bc1) / ((*vi / bc2).sqrt() + ADAM_EPS);
                    }
                }
            }
            k += 1;
        });
        match mismatch {
            Some(name) => Err(Error::Config(format!("gradient for {name} missing or misshapen"))),
            None if k != grads.len() => Err(Error::Config(format!("{} gradients for {k} parameters", grads.len()))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    /// Mean of the per-batch mean losses.
    pub mean_loss: f64,
    /// Mean over batches of the gradient L2 norm.
    pub grad_norm: f64,
}

/// Owns one model's parameters, optimizer state and shuffle stream.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub params: ModelParams,
    optimizer: Optimizer,
    shuffle: StreamRng,
    epoch: usize,
    exec: Execution,
}

impl Trainer {
    /// Initializes parameters from the `init` stream of `train_config.seed`.
    pub fn new(model_config: ModelConfig, train_config: TrainConfig, exec: Execution) -> Result<Self> {
        train_config.validate()?;
        let params = ModelParams::init(&model_config, &mut stream(train_config.seed, "init"))?;
        Ok(Self::with_params(model_config, train_config, params, exec))
    }

    pub fn with_params(model_config: ModelConfig, train_config: TrainConfig, params: ModelParams, exec: Execution) -> Self {
        Self {
            optimizer: Optimizer::new(train_config.optimizer, train_config.learning_rate),
            shuffle: stream(train_config.seed, "shuffle"),
            model_config,
            train_config,
            params,
            epoch: 0,
            exec,
        }
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn train_epoch(&mut self, shard: &[&EegSegment]) -> Result<EpochSummary> {
        if shard.is_empty() {
            return Err(Error::Empty("training shard"));
        }
        let mut order: Vec<&EegSegment> = shard.to_vec();
        order.shuffle(&mut self.shuffle);
        let (mut loss_sum, mut norm_sum, mut batches) = (0.0, 0.0, 0usize);
        for (b, batch) in order.chunks(self.train_config.batch_size).enumerate() {
            let (loss, grads) = batch_gradient(&self.params, &self.model_config, batch, self.train_config.lambda, self.exec)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    batch: b,
                    loss,
                    param_norm: self.params.norm(),
                });
            }
            norm_sum += grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt();
            self.optimizer.step(&mut self.params, &grads)?;
            loss_sum += loss;
            batches += 1;
        }
        self.epoch += 1;
        Ok(EpochSummary {
            epoch: self.epoch,
            mean_loss: loss_sum / batches as f64,
            grad_norm: norm_sum / batches as f64,
        })
    }

    /// Runs `max_epochs` epochs, calling `on_epoch` after each.
    pub fn fit(&mut self, shard: &[&EegSegment], mut on_epoch: impl FnMut(&EpochSummary)) -> Result<Vec<EpochSummary>> {
        let mut log = Vec::with_capacity(self.train_config.max_epochs);
        for _ in 0..self.train_config.max_epochs {
            let s = self.train_epoch(shard)?;
            on_epoch(&s);
            log.push(s);
        }
        Ok(log)
    }
}

/// Class predictions (argmax) for each segment.
pub fn predict_classes(
    params: &ModelParams,
    config: &ModelConfig,
    segments: &[&EegSegment],
    exec: Execution,
) -> Result<Vec<usize>> {
    ordered_map(exec, segments, |s| predict(params, config, &s.data).map(|p| p.class()))
        .into_iter()
        .collect()
}

pub fn evaluate(params: &ModelParams, config: &ModelConfig, segments: &[&EegSegment], exec: Execution) -> Result<Metrics> {
    if segments.is_empty() {
        return Err(Error::Empty("test shard"));
    }
    let preds = predict_classes(params, config, segments, exec)?;
    debug_assert!(preds.iter().all(|&p| p < NUM_CLASSES));
    let labels: Vec<usize> = segments.iter().map(|s| s.label.index()).collect();
    Ok(Metrics::from_predictions(&labels, &preds))
}

/// Mean row entropy over every assignment matrix of every segment;
/// `None` for variants without pooling.
pub fn mean_assignment_entropy(
    params: &ModelParams,
    config: &ModelConfig,
    segments: &[&EegSegment],
    exec: Execution,
) -> Result<Option<f64>> {
    let per = ordered_map(exec, segments, |s| {
        predict(params, config, &s.data).map(|p| {
            [p.individual_assignment, p.common_assignment]
                .into_iter()
                .flatten()
                .map(|r| mean_row_entropy(&r))
                .collect::<Vec<_>>()
        })
    });
    let (mut total, mut count) = (0.0, 0usize);
    for e in per {
        for v in e? {
            total += v;
            count += 1;
        }
    }
    Ok((count > 0).then(|| total / count as f64))
}

/// Step used by [`check_model_gradients`]. Smaller steps let loss roundoff
/// (about 1e-16) swamp the smallest individual-adjacency gradients, which
/// sit near 1e-9 at initialization; larger ones rarely clear the relu guard.
pub const MODEL_GRADCHECK_EPS: f64 = 2e-4;

/// Finite-difference check of forward plus loss on one random segment.
#[derive(Debug, Clone)]
pub struct ModelGradCheck {
    pub report: GradCheckReport,
    /// Parameter names aligned with `report.per_param`.
    pub names: Vec<String>,
}

impl ModelGradCheck {
    /// Worst parameter tensor and its error.
    pub fn worst(&self) -> (&str, f64) {
        self.names
            .iter()
            .zip(&self.report.per_param)
            .fold(("", 0.0), |acc, (n, &e)| if e > acc.1 { (n.as_str(), e) } else { acc })
    }
}

/// Checks every parameter gradient of `config` on a uniform random
/// `channels × samples` segment, redrawing the initialization while a relu
/// sits too close to its kink.
pub fn check_model_gradients(config: &ModelConfig, samples: usize, seed: u64, lambda: f64, eps: f64) -> Result<ModelGradCheck> {
    let mut rng = stream(seed, "gradcheck-data");
    let segment = Tensor::from_fn(&[config.channels, samples], |_| rng.gen_range(-1.0..1.0));
    let label = (seed % NUM_CLASSES as u64) as usize;
    let draw = |attempt: usize| ModelParams::init(config, &mut stream(subseed(seed, attempt as u64), "gradcheck-init"));
    let template = draw(0)?;
    let names = template.named_tensors().into_iter().map(|(n, _)| n).collect();
    let f = |g: &mut Graph, vars: &[Var]| -> Result<Var> {
        let bound = template.assemble(vars)?;
        let out = forward(g, &bound, config, &segment)?;
        loss(g, out.probs, label, &out.assignments(), lambda)
    };
    let report = gradient_check_resampled(f, |a| draw(a).expect("config validated above").tensors(), eps, 50)?;
    Ok(ModelGradCheck { report, names })
}
