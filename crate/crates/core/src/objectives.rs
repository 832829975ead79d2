//! Training objectives for interval targets.
//!
//! | kind                 | per-batch loss minimized by the learner `f`                   |
//! |----------------------|---------------------------------------------------------------|
//! | `Projection`         | mean projection loss against `[l, u]`                          |
//! | `Minmax`             | mean worst-case loss against `[l, u]`                          |
//! | `MinmaxReg`          | mean `l(f, f')`, with an adversary `f'` ascending              |
//! |                      | `mean l(f, f') - lambda * mean proj(f', l, u)`                 |
//! | `PLMax`              | max over teachers `j` of mean `l(f, f_j)`                      |
//! | `PLMean`             | mean over teachers `j` of mean `l(f, f_j)`                     |
//! | `PLEnsembleBaseline` | mean `l(f, mean_j f_j)`                                        |
//! | `SupervisedMidpoint` | mean `l(f, (l + u) / 2)`                                       |
//! | `SupervisedTrue`     | mean `l(f, y)` (needs hidden targets)                          |
//!
//! Teachers for the pseudo-label variants are Projection models trained from
//! seeds `seed + 1 ..= seed + k`.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalDataset};
use crate::loss::{projection_loss, projection_loss_grad, worstcase_loss, LossFamily};
use crate::model::{AdamState, BatchObjective, MeanLoss, Mlp, MlpConfig, SampleLoss};
use crate::rng::{stream, Purpose};

/// Power-iteration rounds applied once training ends.
pub const EXPORT_POWER_ITERATIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum ObjectiveKind {
    Projection,
    Minmax,
    MinmaxReg {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default)]
        adversary_lr: Option<f64>,
    },
    PLMax {
        #[serde(default = "default_k")]
        k: usize,
    },
    PLMean {
        #[serde(default = "default_k")]
        k: usize,
    },
    PLEnsembleBaseline {
        #[serde(default = "default_k")]
        k: usize,
    },
    SupervisedMidpoint,
    SupervisedTrue,
}

fn default_lambda() -> f64 {
    1.0
}

fn default_k() -> usize {
    5
}

impl ObjectiveKind {
    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveKind::Projection => "projection",
            ObjectiveKind::Minmax => "minmax",
            ObjectiveKind::MinmaxReg { .. } => "minmax_reg",
            ObjectiveKind::PLMax { .. } => "pl_max",
            ObjectiveKind::PLMean { .. } => "pl_mean",
            ObjectiveKind::PLEnsembleBaseline { .. } => "pl_ensemble",
            ObjectiveKind::SupervisedMidpoint => "supervised_midpoint",
            ObjectiveKind::SupervisedTrue => "supervised_true",
        }
    }

    fn teacher_count(&self) -> Option<usize> {
        match *self {
            ObjectiveKind::PLMax { k }
            | ObjectiveKind::PLMean { k }
            | ObjectiveKind::PLEnsembleBaseline { k } => Some(k),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    #[serde(default)]
    pub loss_exponent: LossFamily,
}

impl ObjectiveSpec {
    pub fn new(kind: ObjectiveKind) -> Self {
        Self {
            kind,
            loss_exponent: LossFamily::L1,
        }
    }

    pub fn with_exponent(mut self, family: LossFamily) -> Self {
        self.loss_exponent = family;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.kind.teacher_count() {
            if k == 0 {
                return Err(Error::InvalidConfig(
                    "pseudo-label objectives need k >= 1".into(),
                ));
            }
        }
        if let ObjectiveKind::MinmaxReg {
            lambda,
            adversary_lr,
        } = self.kind
        {
            if !(lambda.is_finite() && lambda > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "lambda must be > 0, got {lambda}"
                )));
            }
            if let Some(lr) = adversary_lr {
                if !(lr.is_finite() && lr > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "adversary_lr must be > 0, got {lr}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Name plus any parameters, e.g. `pl_mean(k=5)`.
    pub fn label(&self) -> String {
        let base = match self.kind {
            ObjectiveKind::MinmaxReg { lambda, .. } => format!("minmax_reg(lambda={lambda})"),
            ObjectiveKind::PLMax { k } => format!("pl_max(k={k})"),
            ObjectiveKind::PLMean { k } => format!("pl_mean(k={k})"),
            ObjectiveKind::PLEnsembleBaseline { k } => format!("pl_ensemble(k={k})"),
            other => other.name().to_string(),
        };
        if self.loss_exponent.exponent() == 1.0 {
            base
        } else {
            format!("{base} p={}", self.loss_exponent.exponent())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_model")]
    pub model: MlpConfig,
}

fn default_epochs() -> usize {
    1000
}

fn default_batch_size() -> usize {
    512
}

fn default_lr() -> f64 {
    1e-3
}

/// Input width 0 is a placeholder filled in from the data.
fn default_model() -> MlpConfig {
    MlpConfig::standard(0)
}

impl TrainConfig {
    pub fn new(model: MlpConfig, seed: u64) -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            lr: default_lr(),
            seed,
            model,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "epochs and batch_size must be >= 1".into(),
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lr must be > 0, got {}",
                self.lr
            )));
        }
        self.model.validate()
    }

    /// Same config with run seed and init seed both shifted by `offset`.
    pub fn offset_seed(&self, offset: u64) -> Self {
        let mut tc = self.clone();
        tc.seed = self.seed.wrapping_add(offset);
        tc.model.init_seed = self.model.init_seed.wrapping_add(offset);
        tc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: Mlp,
    pub objective: ObjectiveSpec,
    pub config: TrainConfig,
    /// Full-dataset training objective after each epoch.
    pub loss_trace: Vec<f64>,
    /// Full-dataset MAE against hidden targets after each epoch, when available.
    pub mae_trace: Option<Vec<f64>>,
}

impl TrainedModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.model.forward(x)
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.model.predict_many(xs)
    }

    pub fn final_loss(&self) -> f64 {
        *self
            .loss_trace
            .last()
            .expect("trace has one entry per epoch")
    }
}

/// Seen by an observer after every optimizer step of the learner.
pub struct StepInfo<'a> {
    pub epoch: usize,
    pub batch: usize,
    pub rows: &'a [usize],
    /// Batch loss of the learner before the update.
    pub batch_loss: f64,
    pub model: &'a Mlp,
}

/// The learner's batch objective given the rows in the batch.
trait LearnerTask {
    fn batch_objective(&self, rows: &[usize]) -> Box<dyn BatchObjective + '_>;
    /// Full-dataset objective for the loss trace.
    fn full_objective(&self, outputs: &[f64]) -> f64;
}

/// Per-sample losses, one per dataset row.
struct PerSample {
    family: LossFamily,
    losses: Vec<SampleLoss>,
}

struct Gathered {
    family: LossFamily,
    losses: Vec<SampleLoss>,
}

impl BatchObjective for Gathered {
    fn evaluate(&self, outputs: &[f64], grad: &mut [f64]) -> f64 {
        MeanLoss {
            family: self.family,
            losses: &self.losses,
        }
        .evaluate(outputs, grad)
    }
}

impl LearnerTask for PerSample {
    fn batch_objective(&self, rows: &[usize]) -> Box<dyn BatchObjective + '_> {
        Box::new(Gathered {
            family: self.family,
            losses: rows.iter().map(|&i| self.losses[i]).collect(),
        })
    }

    fn full_objective(&self, outputs: &[f64]) -> f64 {
        let total: f64 = outputs
            .iter()
            .zip(&self.losses)
            .map(|(&y, l)| l.value(self.family, y))
            .sum();
        total / outputs.len() as f64
    }
}

/// How teacher losses are combined for the student.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregate {
    /// Max over teachers of the batch-mean loss; the gradient follows the first maximizer.
    Max,
    /// Mean over teachers of the batch-mean loss.
    Mean,
}

/// Student loss against pseudo labels: `labels[j][i]` is teacher `j` on batch row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelLoss {
    pub family: LossFamily,
    pub labels: Vec<Vec<f64>>,
    pub aggregate: Aggregate,
}

impl PseudoLabelLoss {
    /// Mean loss of `outputs` against teacher `j`.
    pub fn teacher_loss(&self, j: usize, outputs: &[f64]) -> f64 {
        let total: f64 = outputs
            .iter()
            .zip(&self.labels[j])
            .map(|(&y, &t)| self.family.psi((y - t).abs()))
            .sum();
        total / outputs.len() as f64
    }
}

impl BatchObjective for PseudoLabelLoss {
    fn evaluate(&self, outputs: &[f64], grad: &mut [f64]) -> f64 {
        let n = outputs.len() as f64;
        let k = self.labels.len();
        match self.aggregate {
            Aggregate::Max => {
                let (best, loss) = (0..k).map(|j| (j, self.teacher_loss(j, outputs))).fold(
                    (0, f64::NEG_INFINITY),
                    |acc, cur| if cur.1 > acc.1 { cur } else { acc },
                );
                for ((g, &y), &t) in grad.iter_mut().zip(outputs).zip(&self.labels[best]) {
                    *g = self.family.derivative(y, t) / n;
                }
                loss
            }
            Aggregate::Mean => {
                let mut total = 0.0;
                for (i, (g, &y)) in grad.iter_mut().zip(outputs).enumerate() {
                    let mut d = 0.0;
                    for t in &self.labels {
                        total += self.family.psi((y - t[i]).abs());
                        d += self.family.derivative(y, t[i]);
                    }
                    *g = d / k as f64 / n;
                }
                total / k as f64 / n
            }
        }
    }
}

/// Pseudo labels over the whole dataset, sliced per batch.
struct PseudoLabels {
    family: LossFamily,
    labels: Vec<Vec<f64>>,
    aggregate: Aggregate,
}

impl PseudoLabels {
    fn gather(&self, rows: &[usize]) -> PseudoLabelLoss {
        PseudoLabelLoss {
            family: self.family,
            labels: self
                .labels
                .iter()
                .map(|t| rows.iter().map(|&i| t[i]).collect())
                .collect(),
            aggregate: self.aggregate,
        }
    }
}

impl LearnerTask for PseudoLabels {
    fn batch_objective(&self, rows: &[usize]) -> Box<dyn BatchObjective + '_> {
        Box::new(self.gather(rows))
    }

    fn full_objective(&self, outputs: &[f64]) -> f64 {
        let full = PseudoLabelLoss {
            family: self.family,
            labels: self.labels.clone(),
            aggregate: self.aggregate,
        };
        let mut scratch = vec![0.0; outputs.len()];
        full.evaluate(outputs, &mut scratch)
    }
}

fn check_input_dim(tc: &TrainConfig, ds: &IntervalDataset) -> Result<TrainConfig> {
    let mut tc = tc.clone();
    if tc.model.layer_sizes.first() == Some(&0) {
        tc.model.layer_sizes[0] = ds.feature_dim();
    }
    if tc.model.input_dim() != ds.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: tc.model.input_dim(),
            got: ds.feature_dim(),
        });
    }
    tc.validate()?;
    Ok(tc)
}

fn mae(predictions: &[f64], truth: &[f64]) -> f64 {
    predictions
        .iter()
        .zip(truth)
        .map(|(p, y)| (p - y).abs())
        .sum::<f64>()
        / predictions.len() as f64
}

/// Shared minibatch loop for a single learner (everything except MinmaxReg).
fn fit(
    tc: &TrainConfig,
    ds: &IntervalDataset,
    task: &dyn LearnerTask,
    observer: &mut dyn FnMut(&StepInfo),
) -> Result<(Mlp, Vec<f64>, Option<Vec<f64>>)> {
    let mut model = Mlp::new(tc.model.clone())?;
    let mut adam = AdamState::new(&model, tc.lr);
    let xs = ds.features();
    let truth = ds.true_targets().ok();
    let mut shuffle_rng = stream(tc.seed, Purpose::Shuffle);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut loss_trace = Vec::with_capacity(tc.epochs);
    let mut mae_trace = truth.as_ref().map(|_| Vec::with_capacity(tc.epochs));
    let lipschitz = model.lipschitz().is_some();

    for epoch in 0..tc.epochs {
        order.shuffle(&mut shuffle_rng);
        for (batch, rows) in order.chunks(tc.batch_size).enumerate() {
            if lipschitz {
                model.spectral_normalize();
            }
            let inputs: Vec<&[f64]> = rows.iter().map(|&i| xs[i].as_slice()).collect();
            let objective = task.batch_objective(rows);
            let (batch_loss, grads) = model.loss_and_grad(&inputs, objective.as_ref())?;
            adam.step(&mut model, &grads);
            observer(&StepInfo {
                epoch,
                batch,
                rows,
                batch_loss,
                model: &model,
            });
        }
        if lipschitz && epoch + 1 == tc.epochs {
            model.spectral_normalize_with(EXPORT_POWER_ITERATIONS);
        }
        let preds = model.predict_many(&xs)?;
        loss_trace.push(task.full_objective(&preds));
        if let (Some(trace), Some(y)) = (mae_trace.as_mut(), truth.as_ref()) {
            trace.push(mae(&preds, y));
        }
    }
    Ok((model, loss_trace, mae_trace))
}

pub fn train(spec: &ObjectiveSpec, tc: &TrainConfig, ds: &IntervalDataset) -> Result<TrainedModel> {
    train_observed(spec, tc, ds, &mut |_| {})
}

/// [`train`] with a callback after every learner update.
pub fn train_observed(
    spec: &ObjectiveSpec,
    tc: &TrainConfig,
    ds: &IntervalDataset,
    observer: &mut dyn FnMut(&StepInfo),
) -> Result<TrainedModel> {
    spec.validate()?;
    let tc = check_input_dim(tc, ds)?;
    let family = spec.loss_exponent;
    let per_sample = |f: &dyn Fn(&crate::interval::IntervalSample) -> SampleLoss| PerSample {
        family,
        losses: ds.samples().iter().map(f).collect(),
    };
    let (model, loss_trace, mae_trace) = match spec.kind {
        ObjectiveKind::Projection => fit(
            &tc,
            ds,
            &per_sample(&|s| SampleLoss::Projection(s.interval)),
            observer,
        )?,
        ObjectiveKind::Minmax => fit(
            &tc,
            ds,
            &per_sample(&|s| SampleLoss::Worstcase(s.interval)),
            observer,
        )?,
        ObjectiveKind::SupervisedMidpoint => fit(
            &tc,
            ds,
            &per_sample(&|s| SampleLoss::Pointwise(s.interval.midpoint())),
            observer,
        )?,
        ObjectiveKind::SupervisedTrue => {
            let ys = ds.true_targets().map_err(|e| {
                Error::MissingTruth(format!("SupervisedTrue needs true targets: {e}"))
            })?;
            let task = PerSample {
                family,
                losses: ys.into_iter().map(SampleLoss::Pointwise).collect(),
            };
            fit(&tc, ds, &task, observer)?
        }
        ObjectiveKind::MinmaxReg {
            lambda,
            adversary_lr,
        } => fit_minmax_reg(
            &tc,
            ds,
            family,
            lambda,
            adversary_lr.unwrap_or(tc.lr),
            observer,
        )?,
        ObjectiveKind::PLMax { k }
        | ObjectiveKind::PLMean { k }
        | ObjectiveKind::PLEnsembleBaseline { k } => {
            let teachers = train_teachers(&tc, ds, k, family)?;
            return train_student_observed(spec, &tc, ds, &teachers, observer);
        }
    };
    Ok(TrainedModel {
        model,
        objective: *spec,
        config: tc,
        loss_trace,
        mae_trace,
    })
}

/// `k` Projection models from seeds `seed + 1 ..= seed + k`, trained in parallel.
pub fn train_teachers(
    tc: &TrainConfig,
    ds: &IntervalDataset,
    k: usize,
    family: LossFamily,
) -> Result<Vec<TrainedModel>> {
    let spec = ObjectiveSpec::new(ObjectiveKind::Projection).with_exponent(family);
    (1..=k as u64)
        .into_par_iter()
        .map(|j| train(&spec, &tc.offset_seed(j), ds))
        .collect()
}

/// Row `j` holds teacher `j`'s predictions on `xs`.
pub fn make_pseudo_labels(teachers: &[TrainedModel], xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if teachers.is_empty() {
        return Err(Error::InvalidConfig("no teachers".into()));
    }
    teachers.iter().map(|t| t.predict_many(xs)).collect()
}

/// Trains the student of a pseudo-label objective against frozen teachers.
pub fn train_student(
    spec: &ObjectiveSpec,
    tc: &TrainConfig,
    ds: &IntervalDataset,
    teachers: &[TrainedModel],
) -> Result<TrainedModel> {
    train_student_observed(spec, tc, ds, teachers, &mut |_| {})
}

pub fn train_student_observed(
    spec: &ObjectiveSpec,
    tc: &TrainConfig,
    ds: &IntervalDataset,
    teachers: &[TrainedModel],
    observer: &mut dyn FnMut(&StepInfo),
) -> Result<TrainedModel> {
    spec.validate()?;
    let tc = check_input_dim(tc, ds)?;
    let labels = make_pseudo_labels(teachers, &ds.features())?;
    let family = spec.loss_exponent;
    let (model, loss_trace, mae_trace) = match spec.kind {
        ObjectiveKind::PLMax { .. } => fit(
            &tc,
            ds,
            &PseudoLabels {
                family,
                labels,
                aggregate: Aggregate::Max,
            },
            observer,
        )?,
        ObjectiveKind::PLMean { .. } => fit(
            &tc,
            ds,
            &PseudoLabels {
                family,
                labels,
                aggregate: Aggregate::Mean,
            },
            observer,
        )?,
        ObjectiveKind::PLEnsembleBaseline { .. } => {
            let k = labels.len() as f64;
            let targets = (0..ds.len())
                .map(|i| SampleLoss::Pointwise(labels.iter().map(|t| t[i]).sum::<f64>() / k))
                .collect();
            fit(
                &tc,
                ds,
                &PerSample {
                    family,
                    losses: targets,
                },
                observer,
            )?
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "{} is not a pseudo-label objective",
                other.name()
            )))
        }
    };
    Ok(TrainedModel {
        model,
        objective: *spec,
        config: tc,
        loss_trace,
        mae_trace,
    })
}

/// What the Minmax(reg) adversary minimizes: the negated batch mean of
/// `l(anchor, f') - lambda * proj(f', l, u)`, where `anchor` is the learner's output.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryLoss {
    pub family: LossFamily,
    pub lambda: f64,
    pub anchors: Vec<f64>,
    pub intervals: Vec<Interval>,
}

impl BatchObjective for AdversaryLoss {
    fn evaluate(&self, outputs: &[f64], grad: &mut [f64]) -> f64 {
        let n = outputs.len() as f64;
        let mut total = 0.0;
        for (((g, &y), &a), iv) in grad
            .iter_mut()
            .zip(outputs)
            .zip(&self.anchors)
            .zip(&self.intervals)
        {
            let gain =
                self.family.psi((y - a).abs()) - self.lambda * projection_loss(self.family, y, iv);
            total += gain;
            *g = -(self.family.derivative(y, a)
                - self.lambda * projection_loss_grad(self.family, y, iv))
                / n;
        }
        -total / n
    }
}

/// `mean l(f, f') - lambda * mean proj(f', l, u)` over the given outputs.
pub fn minmax_reg_value(
    family: LossFamily,
    lambda: f64,
    learner: &[f64],
    adversary: &[f64],
    intervals: &[Interval],
) -> f64 {
    let n = learner.len() as f64;
    let fit: f64 = learner
        .iter()
        .zip(adversary)
        .map(|(a, b)| family.psi((a - b).abs()))
        .sum();
    let reg: f64 = adversary
        .iter()
        .zip(intervals)
        .map(|(y, iv)| projection_loss(family, *y, iv))
        .sum();
    fit / n - lambda * reg / n
}

/// Gradient descent-ascent: one adversary ascent step then one learner descent step per batch.
fn fit_minmax_reg(
    tc: &TrainConfig,
    ds: &IntervalDataset,
    family: LossFamily,
    lambda: f64,
    adversary_lr: f64,
    observer: &mut dyn FnMut(&StepInfo),
) -> Result<(Mlp, Vec<f64>, Option<Vec<f64>>)> {
    let mut learner = Mlp::new(tc.model.clone())?;
    let mut adv_cfg = tc.model.clone();
    adv_cfg.init_seed = adversary_seed(tc.model.init_seed);
    let mut adversary = Mlp::new(adv_cfg)?;
    let mut learner_opt = AdamState::new(&learner, tc.lr);
    let mut adversary_opt = AdamState::new(&adversary, adversary_lr);

    let xs = ds.features();
    let intervals = ds.intervals();
    let truth = ds.true_targets().ok();
    let mut shuffle_rng = stream(tc.seed, Purpose::Shuffle);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut loss_trace = Vec::with_capacity(tc.epochs);
    let mut mae_trace = truth.as_ref().map(|_| Vec::with_capacity(tc.epochs));
    let lipschitz = learner.lipschitz().is_some();

    for epoch in 0..tc.epochs {
        order.shuffle(&mut shuffle_rng);
        for (batch, rows) in order.chunks(tc.batch_size).enumerate() {
            if lipschitz {
                learner.spectral_normalize();
                adversary.spectral_normalize();
            }
            let inputs: Vec<&[f64]> = rows.iter().map(|&i| xs[i].as_slice()).collect();

            let anchors = inputs
                .iter()
                .map(|x| learner.forward(x))
                .collect::<Result<Vec<_>>>()?;
            let ascent = AdversaryLoss {
                family,
                lambda,
                anchors,
                intervals: rows.iter().map(|&i| intervals[i]).collect(),
            };
            let (_, adv_grads) = adversary.loss_and_grad(&inputs, &ascent)?;
            adversary_opt.step(&mut adversary, &adv_grads);

            let targets: Vec<SampleLoss> = inputs
                .iter()
                .map(|x| adversary.forward(x).map(SampleLoss::Pointwise))
                .collect::<Result<_>>()?;
            let descent = MeanLoss {
                family,
                losses: &targets,
            };
            let (batch_loss, grads) = learner.loss_and_grad(&inputs, &descent)?;
            learner_opt.step(&mut learner, &grads);
            observer(&StepInfo {
                epoch,
                batch,
                rows,
                batch_loss,
                model: &learner,
            });
        }
        if lipschitz && epoch + 1 == tc.epochs {
            learner.spectral_normalize_with(EXPORT_POWER_ITERATIONS);
            adversary.spectral_normalize_with(EXPORT_POWER_ITERATIONS);
        }
        let preds = learner.predict_many(&xs)?;
        let adv = adversary.predict_many(&xs)?;
        loss_trace.push(minmax_reg_value(family, lambda, &preds, &adv, &intervals));
        if let (Some(trace), Some(y)) = (mae_trace.as_mut(), truth.as_ref()) {
            trace.push(mae(&preds, y));
        }
    }
    Ok((learner, loss_trace, mae_trace))
}

/// Init seed of the Minmax(reg) adversary, distinct from the learner's.
pub fn adversary_seed(init_seed: u64) -> u64 {
    init_seed ^ 0x9E37_79B9_7F4A_7C15
}

/// Mean of a per-sample interval loss of `model` over `ds`.
pub fn mean_interval_loss(
    model: &Mlp,
    ds: &IntervalDataset,
    family: LossFamily,
    worst_case: bool,
) -> Result<f64> {
    let preds = model.predict_many(&ds.features())?;
    let total: f64 = preds
        .iter()
        .zip(ds.samples())
        .map(|(&y, s)| {
            if worst_case {
                worstcase_loss(family, y, &s.interval)
            } else {
                projection_loss(family, y, &s.interval)
            }
        })
        .sum();
    Ok(total / preds.len() as f64)
}

/// Closed-form analysis of a two-point construction with constant hypotheses.
///
/// `X = {0, 1}`, true function 0, intervals `[-a, eps]` at 0 and `[-eps, 2 eps]`
/// at 1. Constants consistent with both intervals form `[-eps, eps]`. The
/// learner minimizing the worst case over those constants picks 0; the
/// learner minimizing the label-level worst-case loss is indifferent over a
/// whole interval of constants, some of them far from 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantClassFixture {
    pub f1_value: f64,
    pub f1_error: f64,
    pub label_minmax_minimizer_set: Interval,
    pub worst_tie_error: f64,
}

pub fn constant_class_minmax_fixture(a: f64, epsilon: f64) -> Result<ConstantClassFixture> {
    if !(epsilon > 0.0 && a > epsilon && a.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "need a > epsilon > 0, got a={a} epsilon={epsilon}"
        )));
    }
    // max_{c in [-eps, eps]} |d - c| = |d| + eps, minimized at d = 0
    let f1_value = 0.0;
    // sum of |d - m0| and |d - m1| (plus constants) is flat between the two midpoints
    let m0 = (-a + epsilon) / 2.0;
    let m1 = epsilon / 2.0;
    let set = Interval::new(m0.min(m1), m0.max(m1))?;
    Ok(ConstantClassFixture {
        f1_value,
        f1_error: f1_value.abs(),
        label_minmax_minimizer_set: set,
        worst_tie_error: set.lower().abs().max(set.upper().abs()),
    })
}

/// The two intervals of the construction.
pub fn constant_class_intervals(a: f64, epsilon: f64) -> (Interval, Interval) {
    (
        Interval::from_raw(-a, epsilon),
        Interval::from_raw(-epsilon, 2.0 * epsilon),
    )
}
