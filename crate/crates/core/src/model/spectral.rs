use super::Layer;

/// Lower limit on `sigma`; a zero matrix normalizes to zero instead of NaN.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// `iterations` rounds of `v <- W^T u / |W^T u|`, `u <- W v / |W v|`, then `sigma = u^T W v`.
///
/// Vectors are left unchanged when a product vanishes.
pub fn power_iteration(layer: &mut Layer, iterations: usize) -> f64 {
    let (rows, cols) = (layer.out_dim, layer.in_dim);
    let w = &layer.weight;
    for _ in 0..iterations {
        let mut v = vec![0.0; cols];
        for (o, &uo) in layer.u.iter().enumerate() {
            for (vi, &wi) in v.iter_mut().zip(&w[o * cols..(o + 1) * cols]) {
                *vi += uo * wi;
            }
        }
        if normalize(&mut v) {
            layer.v = v;
        }
        let mut u: Vec<f64> = (0..rows)
            .map(|o| {
                w[o * cols..(o + 1) * cols]
                    .iter()
                    .zip(&layer.v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        if normalize(&mut u) {
            layer.u = u;
        }
    }
    layer.sigma()
}

fn normalize(x: &mut [f64]) -> bool {
    let n = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n > 0.0 && n.is_finite() {
        x.iter_mut().for_each(|a| *a /= n);
        true
    } else {
        false
    }
}

/// Turns a gradient with respect to `W / sigma` into one with respect to `W`,
/// holding `u` and `v` fixed: `G / sigma - (<G, W> / sigma^2) u v^T`.
pub(super) fn chain_through_sigma(layer: &Layer, grad: &mut [f64]) {
    let raw = layer.raw_sigma();
    let sigma = raw.max(SIGMA_FLOOR);
    let inner: f64 = grad.iter().zip(&layer.weight).map(|(g, w)| g * w).sum();
    let coupling = if raw > SIGMA_FLOOR {
        inner / (sigma * sigma)
    } else {
        0.0
    };
    let cols = layer.in_dim;
    for (o, &uo) in layer.u.iter().enumerate() {
        for (c, g) in grad[o * cols..(o + 1) * cols].iter_mut().enumerate() {
            *g = *g / sigma - coupling * uo * layer.v[c];
        }
    }
}
