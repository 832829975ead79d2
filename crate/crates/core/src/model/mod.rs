//! Dense ReLU network with reverse-mode gradients.
//!
//! Weights are row-major `(out_dim, in_dim)`. With a Lipschitz constant `m`
//! configured, every weight matrix `W` is used as `W / sigma` where
//! `sigma = u^T W v` comes from persistent power-iteration vectors, and the
//! network output is multiplied by `m`. ReLU is 1-Lipschitz, so the product
//! bound gives a network Lipschitz constant of about `m`.
//!
//! The gradient treats `u` and `v` as constants but differentiates through
//! `sigma`, so [`Mlp::loss_and_grad`] is the exact gradient of the function
//! that [`Mlp::forward`] computes for the current `(u, v)`.

mod adam;
mod checkpoint;
mod lipschitz;
mod spectral;

pub use adam::AdamState;
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use lipschitz::{estimate_lipschitz_constant, percentile, DEFAULT_MAX_PAIRS};
pub use spectral::{power_iteration, SIGMA_FLOOR};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::loss::{
    projection_loss, projection_loss_grad, psi_loss, worstcase_loss, worstcase_loss_grad,
    LossFamily,
};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Activation {
    #[default]
    ReLU,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    /// Input width first, then hidden widths, then 1.
    pub layer_sizes: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    /// Enables spectral normalization with output scale `m`.
    #[serde(default)]
    pub lipschitz: Option<f64>,
    #[serde(default = "default_power_iterations")]
    pub power_iterations: usize,
    #[serde(default)]
    pub init_seed: u64,
}

fn default_power_iterations() -> usize {
    5
}

/// Hidden widths used throughout the experiments.
pub const DEFAULT_HIDDEN: [usize; 3] = [10, 20, 30];

impl MlpConfig {
    /// `[input_dim, 10, 20, 30, 1]`.
    pub fn standard(input_dim: usize) -> Self {
        let mut layer_sizes = vec![input_dim];
        layer_sizes.extend(DEFAULT_HIDDEN);
        layer_sizes.push(1);
        Self {
            layer_sizes,
            activation: Activation::ReLU,
            lipschitz: None,
            power_iterations: default_power_iterations(),
            init_seed: 0,
        }
    }

    pub fn with_lipschitz(mut self, m: f64) -> Self {
        self.lipschitz = Some(m);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.init_seed = seed;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "layer sizes must have >= 2 positive entries, got {:?}",
                self.layer_sizes
            )));
        }
        if *self.layer_sizes.last().unwrap() != 1 {
            return Err(Error::InvalidConfig("last layer must have size 1".into()));
        }
        if let Some(m) = self.lipschitz {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "Lipschitz constant must be > 0, got {m}"
                )));
            }
        }
        if self.power_iterations == 0 {
            return Err(Error::InvalidConfig("power_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// One dense layer plus its power-iteration state.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    /// Left singular-vector estimate, length `out_dim`.
    pub u: Vec<f64>,
    /// Right singular-vector estimate, length `in_dim`.
    pub v: Vec<f64>,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            u: unit(out_dim),
            v: unit(in_dim),
        }
    }

    /// `u^T W v`, floored at [`SIGMA_FLOOR`].
    pub fn sigma(&self) -> f64 {
        self.raw_sigma().max(SIGMA_FLOOR)
    }

    fn raw_sigma(&self) -> f64 {
        let mut s = 0.0;
        for (o, &uo) in self.u.iter().enumerate() {
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            s += uo * row.iter().zip(&self.v).map(|(w, v)| w * v).sum::<f64>();
        }
        s
    }
}

fn unit(n: usize) -> Vec<f64> {
    vec![1.0 / (n as f64).sqrt(); n]
}

/// Parameter-shaped buffers: gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            weights: mlp
                .layers
                .iter()
                .map(|l| vec![0.0; l.weight.len()])
                .collect(),
            biases: mlp.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.biases).flatten()
    }
}

/// Per-sample loss against one prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleLoss {
    Projection(Interval),
    Worstcase(Interval),
    Pointwise(f64),
}

impl SampleLoss {
    pub fn value(&self, family: LossFamily, yhat: f64) -> f64 {
        match self {
            SampleLoss::Projection(iv) => projection_loss(family, yhat, iv),
            SampleLoss::Worstcase(iv) => worstcase_loss(family, yhat, iv),
            SampleLoss::Pointwise(t) => psi_loss(family, yhat, *t),
        }
    }

    pub fn grad(&self, family: LossFamily, yhat: f64) -> f64 {
        match self {
            SampleLoss::Projection(iv) => projection_loss_grad(family, yhat, iv),
            SampleLoss::Worstcase(iv) => worstcase_loss_grad(family, yhat, iv),
            SampleLoss::Pointwise(t) => family.derivative(yhat, *t),
        }
    }
}

/// A loss over a whole batch of network outputs.
///
/// `evaluate` returns the loss and writes `d loss / d output_i` into `grad`.
pub trait BatchObjective {
    fn evaluate(&self, outputs: &[f64], grad: &mut [f64]) -> f64;
}

/// Mean of per-sample losses.
pub struct MeanLoss<'a> {
    pub family: LossFamily,
    pub losses: &'a [SampleLoss],
}

impl BatchObjective for MeanLoss<'_> {
    fn evaluate(&self, outputs: &[f64], grad: &mut [f64]) -> f64 {
        let n = outputs.len() as f64;
        let mut total = 0.0;
        for ((g, &y), loss) in grad.iter_mut().zip(outputs).zip(self.losses) {
            total += loss.value(self.family, y);
            *g = loss.grad(self.family, y) / n;
        }
        total / n
    }
}

/// A network: config plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    config: MlpConfig,
    pub layers: Vec<Layer>,
}

/// Activations kept for backprop: `inputs[k]` is the input of layer `k`.
struct Trace {
    inputs: Vec<Vec<f64>>,
    output: f64,
}

impl Mlp {
    /// He-uniform weights from `config.init_seed`, zero biases.
    pub fn new(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(config.init_seed, Purpose::Init);
        let mut uv_rng = stream(config.init_seed, Purpose::PowerIteration);
        let layers = config
            .layer_sizes
            .windows(2)
            .map(|w| {
                let (in_dim, out_dim) = (w[0], w[1]);
                let bound = (6.0 / in_dim as f64).sqrt();
                let mut layer = Layer::zeros(in_dim, out_dim);
                for x in layer.weight.iter_mut() {
                    *x = rng.random_range(-bound..bound);
                }
                layer.u = random_unit(&mut uv_rng, out_dim);
                layer.v = random_unit(&mut uv_rng, in_dim);
                layer
            })
            .collect();
        Ok(Self { config, layers })
    }

    /// All weights and biases zero.
    pub fn zeros(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_sizes
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.config.lipschitz
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// The weight matrices actually used by the forward pass.
    pub fn effective_weights(&self) -> Vec<Vec<f64>> {
        self.layers
            .iter()
            .map(|l| match self.config.lipschitz {
                Some(_) => {
                    let s = l.sigma();
                    l.weight.iter().map(|w| w / s).collect()
                }
                None => l.weight.clone(),
            })
            .collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let eff = self.effective_weights();
        Ok(self.trace(&eff, x, false).output)
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        let eff = self.effective_weights();
        xs.iter()
            .map(|x| {
                self.check_input(x)?;
                Ok(self.trace(&eff, x, false).output)
            })
            .collect()
    }

    fn trace(&self, eff: &[Vec<f64>], x: &[f64], keep: bool) -> Trace {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(if keep { self.layers.len() } else { 0 });
        let mut act = x.to_vec();
        for (k, (layer, w)) in self.layers.iter().zip(eff).enumerate() {
            let mut z = layer.bias.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[o * layer.in_dim..(o + 1) * layer.in_dim];
                *zo += row.iter().zip(&act).map(|(a, b)| a * b).sum::<f64>();
            }
            if k < last {
                for zo in z.iter_mut() {
                    *zo = zo.max(0.0);
                }
            }
            if keep {
                inputs.push(act);
            }
            act = z;
        }
        let output = act[0] * self.config.lipschitz.unwrap_or(1.0);
        Trace { inputs, output }
    }

    /// Batch loss and its exact gradient with respect to every weight and bias.
    pub fn loss_and_grad(
        &self,
        xs: &[&[f64]],
        objective: &dyn BatchObjective,
    ) -> Result<(f64, Gradients)> {
        if xs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for x in xs {
            self.check_input(x)?;
        }
        let eff = self.effective_weights();
        let traces: Vec<Trace> = xs.iter().map(|x| self.trace(&eff, x, true)).collect();
        let outputs: Vec<f64> = traces.iter().map(|t| t.output).collect();
        let mut out_grad = vec![0.0; outputs.len()];
        let loss = objective.evaluate(&outputs, &mut out_grad);

        let mut grads = Gradients::zeros_like(self);
        let scale = self.config.lipschitz.unwrap_or(1.0);
        let last = self.layers.len() - 1;
        for (trace, &g) in traces.iter().zip(&out_grad) {
            if g == 0.0 {
                continue;
            }
            // delta = d loss / d pre-activation of the current layer
            let mut delta = vec![g * scale];
            for k in (0..=last).rev() {
                let layer = &self.layers[k];
                let input = &trace.inputs[k];
                let gw = &mut grads.weights[k];
                for (o, &d) in delta.iter().enumerate() {
                    grads.biases[k][o] += d;
                    if d != 0.0 {
                        let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                        for (gwi, &a) in row.iter_mut().zip(input) {
                            *gwi += d * a;
                        }
                    }
                }
                if k == 0 {
                    break;
                }
                let w = &eff[k];
                let mut next = vec![0.0; layer.in_dim];
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        let row = &w[o * layer.in_dim..(o + 1) * layer.in_dim];
                        for (n, &wi) in next.iter_mut().zip(row) {
                            *n += d * wi;
                        }
                    }
                }
                // input of layer k is relu(z_{k-1}); relu'(0) = 0
                for (n, &a) in next.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *n = 0.0;
                    }
                }
                delta = next;
            }
        }

        if self.config.lipschitz.is_some() {
            for (layer, gw) in self.layers.iter().zip(grads.weights.iter_mut()) {
                spectral::chain_through_sigma(layer, gw);
            }
        }
        Ok((loss, grads))
    }

    /// Convenience wrapper: mean of per-sample losses.
    pub fn loss_and_grad_samples(
        &self,
        family: LossFamily,
        batch: &[(Vec<f64>, SampleLoss)],
    ) -> Result<(f64, Gradients)> {
        let xs: Vec<&[f64]> = batch.iter().map(|(x, _)| x.as_slice()).collect();
        let losses: Vec<SampleLoss> = batch.iter().map(|(_, l)| *l).collect();
        self.loss_and_grad(
            &xs,
            &MeanLoss {
                family,
                losses: &losses,
            },
        )
    }

    /// Runs `config.power_iterations` power-iteration steps per layer, updating `(u, v)`.
    /// Returns the per-layer `sigma` estimates. No-op without a Lipschitz constant.
    pub fn spectral_normalize(&mut self) -> Vec<f64> {
        let iters = self.config.power_iterations;
        self.spectral_normalize_with(iters)
    }

    pub fn spectral_normalize_with(&mut self, iterations: usize) -> Vec<f64> {
        if self.config.lipschitz.is_none() {
            return Vec::new();
        }
        self.layers
            .iter_mut()
            .map(|l| power_iteration(l, iterations))
            .collect()
    }

    /// Pre-activation patterns (`z > 0`) of every hidden unit for `x`.
    pub fn activation_pattern(&self, x: &[f64]) -> Result<Vec<bool>> {
        self.check_input(x)?;
        let eff = self.effective_weights();
        let t = self.trace(&eff, x, true);
        Ok(t.inputs[1..].iter().flatten().map(|&a| a > 0.0).collect())
    }

    /// Smallest `|z|` over hidden pre-activations for `x`; small values mean a ReLU kink is near.
    pub fn min_abs_preactivation(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let eff = self.effective_weights();
        let last = self.layers.len() - 1;
        let mut act = x.to_vec();
        let mut smallest = f64::INFINITY;
        for (k, (layer, w)) in self.layers.iter().zip(&eff).enumerate() {
            let mut z = layer.bias.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[o * layer.in_dim..(o + 1) * layer.in_dim];
                *zo += row.iter().zip(&act).map(|(a, b)| a * b).sum::<f64>();
            }
            if k < last {
                smallest = z.iter().fold(smallest, |s, v| s.min(v.abs()));
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            act = z;
        }
        Ok(smallest)
    }

    /// Mutable view of every trainable scalar, weights first then biases, layer by layer.
    pub fn parameter_mut(&mut self, index: usize) -> &mut f64 {
        let nw: usize = self.layers.iter().map(|l| l.weight.len()).sum();
        if index < nw {
            let mut i = index;
            for l in &mut self.layers {
                if i < l.weight.len() {
                    return &mut l.weight[i];
                }
                i -= l.weight.len();
            }
        } else {
            let mut i = index - nw;
            for l in &mut self.layers {
                if i < l.bias.len() {
                    return &mut l.bias[i];
                }
                i -= l.bias.len();
            }
        }
        panic!("parameter index {index} out of range");
    }

    /// Parameters flattened in the order used by [`Mlp::parameter_mut`] and [`Gradients::iter`].
    pub fn flat_parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter())
            .chain(self.layers.iter().flat_map(|l| l.bias.iter()))
            .copied()
            .collect()
    }
}

fn random_unit<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
        v
    } else {
        unit(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(w: f64, b: f64) -> Mlp {
        let mut m = Mlp::zeros(MlpConfig {
            layer_sizes: vec![1, 1],
            ..MlpConfig::standard(1)
        })
        .unwrap();
        m.layers[0].weight[0] = w;
        m.layers[0].bias[0] = b;
        m
    }

    #[test]
    fn zero_network_outputs_zero() {
        let m = Mlp::zeros(MlpConfig::standard(3)).unwrap();
        assert_eq!(m.forward(&[1.0, -2.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn single_linear_layer() {
        assert_eq!(linear(2.0, 0.0).forward(&[3.0]).unwrap(), 6.0);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let m = Mlp::new(MlpConfig::standard(3)).unwrap();
        assert!(matches!(
            m.forward(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let mut c = MlpConfig::standard(2);
        c.layer_sizes = vec![2, 3, 2];
        assert!(c.validate().is_err());
        assert!(MlpConfig::standard(2)
            .with_lipschitz(0.0)
            .validate()
            .is_err());
        assert!(MlpConfig::standard(2)
            .with_lipschitz(3.0)
            .validate()
            .is_ok());
    }

    #[test]
    fn projection_inside_gives_zero_gradient() {
        let m = Mlp::new(MlpConfig::standard(2).with_seed(4)).unwrap();
        let xs = [vec![0.1, 0.2], vec![-1.0, 0.5]];
        let batch: Vec<_> = xs
            .iter()
            .map(|x| {
                let y = m.forward(x).unwrap();
                (
                    x.clone(),
                    SampleLoss::Projection(Interval::new(y - 1.0, y + 1.0).unwrap()),
                )
            })
            .collect();
        let (loss, g) = m.loss_and_grad_samples(LossFamily::L1, &batch).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bias_only_l1_gradient() {
        // f = 0 with target 1: loss 1, d loss / d bias = sign(0 - 1) = -1
        let m = linear(0.0, 0.0);
        let (loss, g) = m
            .loss_and_grad_samples(LossFamily::L1, &[(vec![0.7], SampleLoss::Pointwise(1.0))])
            .unwrap();
        assert_eq!(loss, 1.0);
        assert_eq!(g.biases[0][0], -1.0);
        assert_eq!(g.weights[0][0], -0.7);
    }

    #[test]
    fn same_seed_same_network() {
        let a = Mlp::new(MlpConfig::standard(4).with_seed(9)).unwrap();
        let b = Mlp::new(MlpConfig::standard(4).with_seed(9)).unwrap();
        let c = Mlp::new(MlpConfig::standard(4).with_seed(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn parameter_indexing_matches_gradient_order() {
        let mut m = Mlp::new(MlpConfig::standard(2).with_seed(1)).unwrap();
        let flat = m.flat_parameters();
        assert_eq!(flat.len(), m.num_parameters());
        for (i, &v) in flat.iter().enumerate() {
            assert_eq!(*m.parameter_mut(i), v);
        }
    }
}
