//! Central finite-difference checks for layers with analytic backward passes.

use rand::Rng;

use super::{Layer, Mode, Tensor};
use crate::error::Result;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Debug, Clone, Default)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub worst: String,
    pub checked: usize,
}

impl GradReport {
    fn record(&mut self, what: String, analytic: f64, numeric: f64, floor: f64) {
        let e = rel_err(analytic, numeric, floor);
        self.checked += 1;
        if e > self.max_rel_err || self.worst.is_empty() {
            self.max_rel_err = self.max_rel_err.max(e);
            self.worst = format!("{what}: analytic {analytic:e} numeric {numeric:e}");
        }
    }
}

fn probe<L: Layer>(layer: &mut L, x: &Tensor, weights: &[f64], mode: Mode) -> Result<f64> {
    let y = layer.forward(x, mode)?;
    Ok(y.data().iter().zip(weights).map(|(a, b)| a * b).sum())
}

/// Checks input and parameter gradients of `layer` at `x` for the scalar
/// `sum(r ⊙ layer(x))` with a random projection `r`. At most
/// `max_per_tensor` coordinates per tensor are probed.
pub fn check_layer<L: Layer>(
    layer: &mut L,
    x: &Tensor,
    mode: Mode,
    h: f64,
    max_per_tensor: usize,
    rng: &mut impl Rng,
) -> Result<GradReport> {
    let floor = 1e-6;
    let y = layer.forward(x, mode)?;
    let r: Vec<f64> = (0..y.data().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let r_t = Tensor::from_vec(y.shape(), r.clone())?;
    layer.zero_grad();
    let dx = layer.backward(&r_t)?;

    let mut analytic_params: Vec<(String, Vec<f64>, bool)> = Vec::new();
    layer.visit_params(&mut |p| analytic_params.push((p.name.clone(), p.grad.clone(), p.trainable())));

    let mut report = GradReport::default();
    let n_in = x.data().len();
    let picks = |n: usize, rng: &mut dyn rand::RngCore| -> Vec<usize> {
        if n <= max_per_tensor {
            (0..n).collect()
        } else {
            (0..max_per_tensor).map(|_| rng.gen_range(0..n)).collect()
        }
    };

    for i in picks(n_in, rng) {
        let mut xp = x.clone();
        xp.data_mut()[i] += h;
        let fp = probe(layer, &xp, &r, mode)?;
        xp.data_mut()[i] -= 2.0 * h;
        let fm = probe(layer, &xp, &r, mode)?;
        report.record(format!("input[{i}]"), dx.data()[i], (fp - fm) / (2.0 * h), floor);
    }

    for (pi, (name, grad, trainable)) in analytic_params.iter().enumerate() {
        if !trainable {
            continue;
        }
        for i in picks(grad.len(), rng) {
            let fp = perturbed(layer, pi, i, h, x, &r, mode)?;
            let fm = perturbed(layer, pi, i, -h, x, &r, mode)?;
            report.record(format!("{name}[{i}]"), grad[i], (fp - fm) / (2.0 * h), floor);
        }
    }
    Ok(report)
}

fn perturbed<L: Layer>(
    layer: &mut L,
    param: usize,
    index: usize,
    delta: f64,
    x: &Tensor,
    r: &[f64],
    mode: Mode,
) -> Result<f64> {
    let mut k = 0;
    layer.visit_params(&mut |p| {
        if k == param {
            p.value[index] += delta;
        }
        k += 1;
    });
    let f = probe(layer, x, r, mode);
    let mut k = 0;
    layer.visit_params(&mut |p| {
        if k == param {
            p.value[index] -= delta;
        }
        k += 1;
    });
    f
}
