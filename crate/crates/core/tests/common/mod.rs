#![allow(dead_code)]

use ivreg::interval::{Interval, IntervalDataset, IntervalSample};
use ivreg::model::{BatchObjective, Mlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Smooth synthetic regression: `y = 3 sin(2 x0) + x1^2 - x2 + noise`, inputs in [-1, 1]^d.
pub fn synthetic(n: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut r = rng(seed);
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let ys = xs
        .iter()
        .map(|x| {
            let x1 = x.get(1).copied().unwrap_or(0.0);
            let x2 = x.get(2).copied().unwrap_or(0.0);
            3.0 * (2.0 * x[0]).sin() + x1 * x1 - x2 + 0.1 * r.random_range(-1.0..1.0)
        })
        .collect();
    (xs, ys)
}

/// Dataset with intervals `[y - a, y + b]`, `a, b ~ U[0, max_half]`.
pub fn interval_dataset(n: usize, dim: usize, max_half: f64, seed: u64) -> IntervalDataset {
    let (xs, ys) = synthetic(n, dim, seed);
    let mut r = rng(seed ^ 0xABCD);
    let samples = xs
        .into_iter()
        .zip(ys)
        .map(|(x, y)| {
            let a = r.random_range(0.0..=max_half);
            let b = r.random_range(0.0..=max_half);
            IntervalSample::new(x, Interval::new(y - a, y + b).unwrap(), Some(y)).unwrap()
        })
        .collect();
    IntervalDataset::new(samples).unwrap()
}

/// Min and max of `|yhat - t|^p` over `points` evenly spaced targets in `[l, u]`, endpoints included.
pub fn grid_extrema(p: f64, yhat: f64, l: f64, u: f64, points: usize) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..points {
        let t = if points == 1 {
            l
        } else {
            l + (u - l) * (i as f64) / ((points - 1) as f64)
        };
        let v = (yhat - t).abs().powf(p);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Naive reduced interval: every sample's induced bound computed from scratch and folded.
pub fn brute_reduced(ds: &IntervalDataset, m: f64, x: &[f64]) -> (f64, f64) {
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    for s in ds.samples() {
        let mut sq = 0.0;
        for (a, b) in x.iter().zip(&s.features) {
            sq += (a - b) * (a - b);
        }
        let dist = sq.sqrt();
        let lo = s.interval.lower() - m * dist;
        let hi = s.interval.upper() + m * dist;
        if lo > lower {
            lower = lo;
        }
        if hi < upper {
            upper = hi;
        }
    }
    (lower, upper)
}

/// Central finite difference of a batch objective with respect to parameter `index`.
pub fn finite_difference(
    mlp: &Mlp,
    xs: &[&[f64]],
    objective: &dyn BatchObjective,
    index: usize,
    h: f64,
) -> f64 {
    let eval = |m: &Mlp| {
        let outs: Vec<f64> = xs.iter().map(|x| m.forward(x).unwrap()).collect();
        let mut scratch = vec![0.0; outs.len()];
        objective.evaluate(&outs, &mut scratch)
    };
    let mut plus = mlp.clone();
    *plus.parameter_mut(index) += h;
    let mut minus = mlp.clone();
    *minus.parameter_mut(index) -= h;
    (eval(&plus) - eval(&minus)) / (2.0 * h)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Top singular value through an SVD independent of the crate's power iteration.
pub fn spectral_norm(weight: &[f64], rows: usize, cols: usize) -> f64 {
    let m = nalgebra::DMatrix::from_row_slice(rows, cols, weight);
    m.singular_values().max()
}

/// Inputs in `[-1, 1]^d` whose hidden pre-activations all stay at least `margin` away from 0.
pub fn off_kink_inputs(mlp: &Mlp, n: usize, margin: f64, r: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x: Vec<f64> = (0..mlp.input_dim())
            .map(|_| r.random_range(-1.0..1.0))
            .collect();
        if mlp.min_abs_preactivation(&x).unwrap() >= margin {
            out.push(x);
        }
    }
    out
}

fn offset(r: &mut ChaCha8Rng) -> f64 {
    let d = r.random_range(0.1..1.5);
    if r.random::<bool>() {
        d
    } else {
        -d
    }
}

/// An interval that keeps `y` at least 0.1 away from both endpoints and the midpoint.
pub fn interval_off_kinks(y: f64, r: &mut ChaCha8Rng) -> Interval {
    match r.random_range(0..3) {
        0 => {
            let l = y + r.random_range(0.1..1.5);
            Interval::new(l, l + r.random_range(0.0..2.0)).unwrap()
        }
        1 => {
            let u = y - r.random_range(0.1..1.5);
            Interval::new(u - r.random_range(0.0..2.0), u).unwrap()
        }
        _ => {
            let a = r.random_range(0.1..1.0);
            let b = a + r.random_range(0.2..1.0);
            if r.random::<bool>() {
                Interval::new(y - a, y + b).unwrap()
            } else {
                Interval::new(y - b, y + a).unwrap()
            }
        }
    }
}

/// Pseudo labels around `outputs` whose per-teacher batch losses are separated by at least `gap`.
pub fn separated_labels(
    outputs: &[f64],
    k: usize,
    family: ivreg::LossFamily,
    gap: f64,
    r: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    loop {
        let labels: Vec<Vec<f64>> = (0..k)
            .map(|_| outputs.iter().map(|&y| y + offset(r)).collect())
            .collect();
        let mut losses: Vec<f64> = labels
            .iter()
            .map(|t| {
                outputs
                    .iter()
                    .zip(t)
                    .map(|(y, t)| family.psi((y - t).abs()))
                    .sum::<f64>()
                    / outputs.len() as f64
            })
            .collect();
        losses.sort_by(f64::total_cmp);
        if losses.windows(2).all(|w| w[1] - w[0] >= gap) {
            return labels;
        }
    }
}

/// Every batch objective of the crate, built around `outputs` so no prediction sits on a kink.
pub fn objectives_off_kinks(
    outputs: &[f64],
    family: ivreg::LossFamily,
    r: &mut ChaCha8Rng,
) -> Vec<(String, Box<dyn BatchObjective>)> {
    use ivreg::model::{MeanLoss, SampleLoss};
    use ivreg::objectives::{AdversaryLoss, Aggregate, PseudoLabelLoss};

    struct Owned {
        family: ivreg::LossFamily,
        losses: Vec<SampleLoss>,
    }
    impl BatchObjective for Owned {
        fn evaluate(&self, outputs: &[f64], grad: &mut [f64]) -> f64 {
            MeanLoss {
                family: self.family,
                losses: &self.losses,
            }
            .evaluate(outputs, grad)
        }
    }

    let intervals: Vec<Interval> = outputs.iter().map(|&y| interval_off_kinks(y, r)).collect();
    let points: Vec<f64> = outputs.iter().map(|&y| y + offset(r)).collect();
    let per_sample =
        |losses: Vec<SampleLoss>| -> Box<dyn BatchObjective> { Box::new(Owned { family, losses }) };
    let mut out: Vec<(String, Box<dyn BatchObjective>)> = vec![
        (
            "projection".into(),
            per_sample(
                intervals
                    .iter()
                    .map(|iv| SampleLoss::Projection(*iv))
                    .collect(),
            ),
        ),
        (
            "minmax".into(),
            per_sample(
                intervals
                    .iter()
                    .map(|iv| SampleLoss::Worstcase(*iv))
                    .collect(),
            ),
        ),
        (
            "pointwise".into(),
            per_sample(points.iter().map(|&t| SampleLoss::Pointwise(t)).collect()),
        ),
    ];
    for (name, aggregate) in [("pl_max", Aggregate::Max), ("pl_mean", Aggregate::Mean)] {
        out.push((
            name.into(),
            Box::new(PseudoLabelLoss {
                family,
                labels: separated_labels(outputs, 3, family, 1e-2, r),
                aggregate,
            }),
        ));
    }
    out.push((
        "minmax_reg_adversary".into(),
        Box::new(AdversaryLoss {
            family,
            lambda: r.random_range(0.5..2.0),
            anchors: outputs.iter().map(|&y| y + offset(r)).collect(),
            intervals,
        }),
    ));
    out
}

/// Largest relative error between analytic and central-difference gradients over `coords` random parameters.
pub fn max_gradient_error(
    mlp: &Mlp,
    xs: &[Vec<f64>],
    objective: &dyn BatchObjective,
    coords: usize,
    r: &mut ChaCha8Rng,
) -> f64 {
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let (_, grads) = mlp.loss_and_grad(&refs, objective).unwrap();
    let analytic: Vec<f64> = grads.iter().copied().collect();
    (0..coords)
        .map(|_| {
            let i = r.random_range(0..analytic.len());
            let numeric = finite_difference(mlp, &refs, objective, i, 1e-6);
            relative_error(analytic[i], numeric)
        })
        .fold(0.0, f64::max)
}

/// One learner step as seen by the training observer.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub rows: Vec<usize>,
    pub batch_loss: f64,
    pub params: Vec<f64>,
}

pub fn record_training(
    spec: &ivreg::ObjectiveSpec,
    tc: &ivreg::TrainConfig,
    ds: &IntervalDataset,
) -> (ivreg::TrainedModel, Vec<Step>) {
    let mut steps = Vec::new();
    let trained = ivreg::objectives::train_observed(spec, tc, ds, &mut |s| {
        steps.push(Step {
            rows: s.rows.to_vec(),
            batch_loss: s.batch_loss,
            params: s.model.flat_parameters(),
        })
    })
    .unwrap();
    (trained, steps)
}

/// Same features and truths, intervals collapsed to `[y, y]`.
pub fn zero_width(ds: &IntervalDataset) -> IntervalDataset {
    IntervalDataset::new(
        ds.samples()
            .iter()
            .map(|s| {
                let y = s.true_y.unwrap();
                IntervalSample::new(s.features.clone(), Interval::point(y).unwrap(), Some(y))
                    .unwrap()
            })
            .collect(),
    )
    .unwrap()
}

pub fn small_train_config(
    dim: usize,
    epochs: usize,
    batch: usize,
    seed: u64,
) -> ivreg::TrainConfig {
    let mut tc =
        ivreg::TrainConfig::new(ivreg::model::MlpConfig::standard(dim).with_seed(seed), seed);
    tc.epochs = epochs;
    tc.batch_size = batch;
    tc.lr = 1e-2;
    tc
}
