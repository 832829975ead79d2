use super::{Gradients, Mlp};

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: Gradients,
    second: Gradients,
}

impl AdamState {
    pub fn new(mlp: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Gradients::zeros_like(mlp),
            second: Gradients::zeros_like(mlp),
        }
    }

    pub fn step(&mut self, mlp: &mut Mlp, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.epsilon);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        };
        for (k, layer) in mlp.layers.iter_mut().enumerate() {
            update(
                &mut layer.weight,
                &grads.weights[k],
                &mut self.first.weights[k],
                &mut self.second.weights[k],
            );
            update(
                &mut layer.bias,
                &grads.biases[k],
                &mut self.first.biases[k],
                &mut self.second.biases[k],
            );
        }
    }
}
