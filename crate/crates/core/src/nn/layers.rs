use rand::Rng;

use super::param::{Param, ParamKind, ParamVisitor};
use super::tensor::{gemm, Tensor};
use super::{Layer, Mode};
use crate::error::{shape_err, Error, Result};

fn missing(layer: &str) -> Error {
    Error::Config(format!("{layer} backward called before forward"))
}

/// Per-channel batch normalization with running averages for evaluation.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    momentum: f64,
    eps: f64,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
    train: bool,
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::filled(format!("{name}.gamma"), ParamKind::NoDecay, channels, 1.0),
            beta: Param::zeros(format!("{name}.beta"), ParamKind::NoDecay, channels),
            running_mean: Param::zeros(format!("{name}.running_mean"), ParamKind::Buffer, channels),
            running_var: Param::filled(format!("{name}.running_var"), ParamKind::Buffer, channels, 1.0),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }
}

impl Layer for BatchNorm2d {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let [n, c, h, w] = x.shape();
        if c != self.gamma.len() {
            return Err(shape_err(self.gamma.len(), c));
        }
        let hw = h * w;
        let m = (n * hw) as f64;
        let mut xhat = Tensor::zeros(x.shape());
        let mut out = Tensor::zeros(x.shape());
        let mut inv_std = vec![0.0; c];
        for ch in 0..c {
            let (mean, var) = if mode == Mode::Train {
                let mut s = 0.0;
                for b in 0..n {
                    s += x.data()[(b * c + ch) * hw..(b * c + ch + 1) * hw].iter().sum::<f64>();
                }
                let mean = s / m;
                let mut v = 0.0;
                for b in 0..n {
                    for &val in &x.data()[(b * c + ch) * hw..(b * c + ch + 1) * hw] {
                        v += (val - mean) * (val - mean);
                    }
                }
                let var = v / m;
                let unbiased = if m > 1.0 { v / (m - 1.0) } else { var };
                let mom = self.momentum;
                self.running_mean.value[ch] = (1.0 - mom) * self.running_mean.value[ch] + mom * mean;
                self.running_var.value[ch] = (1.0 - mom) * self.running_var.value[ch] + mom * unbiased;
                (mean, var)
            } else {
                (self.running_mean.value[ch], self.running_var.value[ch])
            };
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std[ch] = is;
            let (g, bt) = (self.gamma.value[ch], self.beta.value[ch]);
            for b in 0..n {
                let range = (b * c + ch) * hw..(b * c + ch + 1) * hw;
                for i in range {
                    let xh = (x.data()[i] - mean) * is;
                    xhat.data_mut()[i] = xh;
                    out.data_mut()[i] = g * xh + bt;
                }
            }
        }
        self.cache = Some(BnCache {
            xhat,
            inv_std,
            train: mode == Mode::Train,
        });
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or_else(|| missing("batchnorm"))?;
        let [n, c, h, w] = grad.shape();
        if cache.xhat.shape() != grad.shape() {
            return Err(shape_err(cache.xhat.shape(), grad.shape()));
        }
        let hw = h * w;
        let m = (n * hw) as f64;
        let mut dx = Tensor::zeros(grad.shape());
        for ch in 0..c {
            let mut sum_dy = 0.0;
            let mut sum_dy_xh = 0.0;
            for b in 0..n {
                for i in (b * c + ch) * hw..(b * c + ch + 1) * hw {
                    sum_dy += grad.data()[i];
                    sum_dy_xh += grad.data()[i] * cache.xhat.data()[i];
                }
            }
            self.gamma.grad[ch] += sum_dy_xh;
            self.beta.grad[ch] += sum_dy;
            let g = self.gamma.value[ch];
            let is = cache.inv_std[ch];
            for b in 0..n {
                for i in (b * c + ch) * hw..(b * c + ch + 1) * hw {
                    dx.data_mut()[i] = if cache.train {
                        g * is / m * (m * grad.data()[i] - sum_dy - cache.xhat.data()[i] * sum_dy_xh)
                    } else {
                        g * is * grad.data()[i]
                    };
                }
            }
        }
        Ok(dx)
    }

    fn visit_params(&mut self, f: &mut ParamVisitor) {
        f(&mut self.gamma);
        f(&mut self.beta);
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Layer for Relu {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        self.mask = Some(x.data().iter().map(|&v| v > 0.0).collect());
        Ok(x.map(|v| v.max(0.0)))
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mask = self.mask.take().ok_or_else(|| missing("relu"))?;
        let mut dx = grad.clone();
        for (d, keep) in dx.data_mut().iter_mut().zip(mask) {
            if !keep {
                *d = 0.0;
            }
        }
        Ok(dx)
    }

    fn visit_params(&mut self, _f: &mut ParamVisitor) {}
}

/// Non-overlapping or strided max pooling without padding.
#[derive(Debug, Clone)]
pub struct MaxPool2d {
    kernel: usize,
    stride: usize,
    argmax: Option<(Vec<usize>, [usize; 4])>,
}

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize) -> Result<Self> {
        if kernel == 0 || stride == 0 {
            return Err(Error::Config("max-pool kernel and stride must be positive".into()));
        }
        Ok(Self {
            kernel,
            stride,
            argmax: None,
        })
    }

    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if h < self.kernel || w < self.kernel {
            return Err(Error::Dimension(format!(
                "input {h}x{w} smaller than pool kernel {}",
                self.kernel
            )));
        }
        Ok((
            (h - self.kernel) / self.stride + 1,
            (w - self.kernel) / self.stride + 1,
        ))
    }
}

impl Layer for MaxPool2d {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let [n, c, h, w] = x.shape();
        let (oh, ow) = self.output_size(h, w)?;
        let mut out = Tensor::zeros([n, c, oh, ow]);
        let mut idx = vec![0usize; n * c * oh * ow];
        for nc in 0..n * c {
            let plane = &x.data()[nc * h * w..(nc + 1) * h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut arg = 0;
                    for ky in 0..self.kernel {
                        for kx in 0..self.kernel {
                            let p = (oy * self.stride + ky) * w + ox * self.stride + kx;
                            if plane[p] > best {
                                best = plane[p];
                                arg = p;
                            }
                        }
                    }
                    let o = (nc * oh + oy) * ow + ox;
                    out.data_mut()[o] = best;
                    idx[o] = nc * h * w + arg;
                }
            }
        }
        self.argmax = Some((idx, x.shape()));
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let (idx, shape) = self.argmax.take().ok_or_else(|| missing("max-pool"))?;
        if idx.len() != grad.data().len() {
            return Err(shape_err(idx.len(), grad.data().len()));
        }
        let mut dx = Tensor::zeros(shape);
        for (&i, &g) in idx.iter().zip(grad.data()) {
            dx.data_mut()[i] += g;
        }
        Ok(dx)
    }

    fn visit_params(&mut self, _f: &mut ParamVisitor) {}
}

/// Spatial mean per channel: `[n, c, h, w] -> [n, c, 1, 1]`.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    shape: Option<[usize; 4]>,
}

impl Layer for GlobalAvgPool {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let [n, c, h, w] = x.shape();
        let hw = (h * w) as f64;
        let data = x
            .data()
            .chunks_exact(h * w)
            .map(|p| p.iter().sum::<f64>() / hw)
            .collect();
        self.shape = Some(x.shape());
        Tensor::from_vec([n, c, 1, 1], data)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let shape = self.shape.take().ok_or_else(|| missing("avg-pool"))?;
        let [_, _, h, w] = shape;
        let hw = h * w;
        let mut dx = Tensor::zeros(shape);
        for (plane, &g) in dx.data_mut().chunks_exact_mut(hw).zip(grad.data()) {
            plane.iter_mut().for_each(|v| *v = g / hw as f64);
        }
        Ok(dx)
    }

    fn visit_params(&mut self, _f: &mut ParamVisitor) {}
}

/// Affine map on flattened samples: `y = x Wᵀ + b`, output `[n, out, 1, 1]`.
#[derive(Debug, Clone)]
pub struct Linear {
    in_features: usize,
    out_features: usize,
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Linear {
    pub fn new(name: &str, in_features: usize, out_features: usize, rng: &mut impl Rng) -> Self {
        Self {
            in_features,
            out_features,
            weight: Param::fan_in_uniform(
                format!("{name}.weight"),
                ParamKind::Weight,
                in_features * out_features,
                in_features,
                rng,
            ),
            bias: Param::fan_in_uniform(
                format!("{name}.bias"),
                ParamKind::NoDecay,
                out_features,
                in_features,
                rng,
            ),
            input: None,
        }
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }
}

impl Layer for Linear {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        if x.sample_len() != self.in_features {
            return Err(shape_err(self.in_features, x.sample_len()));
        }
        let n = x.batch();
        let mut out = vec![0.0; n * self.out_features];
        for row in out.chunks_exact_mut(self.out_features) {
            row.copy_from_slice(&self.bias.value);
        }
        gemm(
            n,
            self.in_features,
            self.out_features,
            x.data(),
            false,
            &self.weight.value,
            true,
            1.0,
            &mut out,
        );
        self.input = Some(x.clone());
        Tensor::matrix(n, self.out_features, out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = self.input.take().ok_or_else(|| missing("linear"))?;
        let n = x.batch();
        if grad.shape() != [n, self.out_features, 1, 1] {
            return Err(shape_err([n, self.out_features, 1, 1], grad.shape()));
        }
        for row in grad.data().chunks_exact(self.out_features) {
            for (b, g) in self.bias.grad.iter_mut().zip(row) {
                *b += g;
            }
        }
        gemm(
            self.out_features,
            n,
            self.in_features,
            grad.data(),
            true,
            x.data(),
            false,
            1.0,
            &mut self.weight.grad,
        );
        let mut dx = vec![0.0; n * self.in_features];
        gemm(
            n,
            self.out_features,
            self.in_features,
            grad.data(),
            false,
            &self.weight.value,
            false,
            0.0,
            &mut dx,
        );
        Tensor::from_vec(x.shape(), dx)
    }

    fn visit_params(&mut self, f: &mut ParamVisitor) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Channel gating from a global max descriptor:
/// `y = x ⊙ sigmoid(W₂ relu(W₁ maxpool(x) + b₁) + b₂)`.
#[derive(Debug, Clone)]
pub struct ChannelAttention {
    pub fc1: Linear,
    pub fc2: Linear,
    relu: Relu,
    cache: Option<AttnCache>,
}

#[derive(Debug, Clone)]
struct AttnCache {
    x: Tensor,
    argmax: Vec<usize>,
    gate: Vec<f64>,
}

pub const ATTENTION_GATE_BIAS: f64 = 2.0;

impl ChannelAttention {
    pub fn new(name: &str, channels: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let fc1 = Linear::new(&format!("{name}.fc1"), channels, hidden, rng);
        let mut fc2 = Linear::new(&format!("{name}.fc2"), hidden, channels, rng);
        fc2.bias.value.iter_mut().for_each(|b| *b = ATTENTION_GATE_BIAS);
        Self {
            fc1,
            fc2,
            relu: Relu::default(),
            cache: None,
        }
    }

    /// Gate values of the most recent forward pass, `[n × c]`.
    pub fn last_gate(&self) -> Option<&[f64]> {
        self.cache.as_ref().map(|c| c.gate.as_slice())
    }
}

impl Layer for ChannelAttention {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let [n, c, h, w] = x.shape();
        let hw = h * w;
        let mut desc = vec![0.0; n * c];
        let mut argmax = vec![0; n * c];
        for (i, plane) in x.data().chunks_exact(hw).enumerate() {
            let (arg, best) = plane
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc });
            desc[i] = best;
            argmax[i] = i * hw + arg;
        }
        let d = Tensor::matrix(n, c, desc)?;
        let z = self.fc1.forward(&d, mode)?;
        let z = self.relu.forward(&z, mode)?;
        let z = self.fc2.forward(&z, mode)?;
        let gate: Vec<f64> = z.data().iter().map(|&v| sigmoid(v)).collect();
        let mut out = x.clone();
        for (plane, &g) in out.data_mut().chunks_exact_mut(hw).zip(&gate) {
            plane.iter_mut().for_each(|v| *v *= g);
        }
        self.cache = Some(AttnCache {
            x: x.clone(),
            argmax,
            gate,
        });
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let AttnCache { x, argmax, gate } = self.cache.take().ok_or_else(|| missing("attention"))?;
        let [n, c, h, w] = x.shape();
        let hw = h * w;
        let mut dx = grad.clone();
        let mut dz = vec![0.0; n * c];
        for i in 0..n * c {
            let g = gate[i];
            let xs = &x.data()[i * hw..(i + 1) * hw];
            let gs = &grad.data()[i * hw..(i + 1) * hw];
            let dgate: f64 = xs.iter().zip(gs).map(|(a, b)| a * b).sum();
            dz[i] = dgate * g * (1.0 - g);
            dx.data_mut()[i * hw..(i + 1) * hw]
                .iter_mut()
                .for_each(|v| *v *= g);
        }
        let dz = Tensor::matrix(n, c, dz)?;
        let d = self.fc2.backward(&dz)?;
        let d = self.relu.backward(&d)?;
        let ddesc = self.fc1.backward(&d)?;
        for (i, &g) in ddesc.data().iter().enumerate() {
            dx.data_mut()[argmax[i]] += g;
        }
        Ok(dx)
    }

    fn visit_params(&mut self, f: &mut ParamVisitor) {
        self.fc1.visit_params(f);
        self.fc2.visit_params(f);
    }
}

/// Convolution followed by batch normalization and ReLU.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub conv: super::conv::Conv2d,
    pub norm: BatchNorm2d,
    relu: Relu,
    pre_activation: Option<Tensor>,
    keep_pre_activation: bool,
}

impl ConvBlock {
    pub fn new(name: &str, geo: super::conv::ConvGeometry, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            conv: super::conv::Conv2d::new(&format!("{name}.conv"), geo, false, rng)?,
            norm: BatchNorm2d::new(&format!("{name}.bn"), geo.out_channels),
            relu: Relu::default(),
            pre_activation: None,
            keep_pre_activation: false,
        })
    }

    /// Retain the raw convolution output of the next forward pass.
    pub fn record_pre_activation(&mut self, on: bool) {
        self.keep_pre_activation = on;
    }

    pub fn pre_activation(&self) -> Option<&Tensor> {
        self.pre_activation.as_ref()
    }
}

impl Layer for ConvBlock {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = self.conv.forward(x, mode)?;
        if self.keep_pre_activation {
            self.pre_activation = Some(y.clone());
        }
        let y = self.norm.forward(&y, mode)?;
        self.relu.forward(&y, mode)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let g = self.relu.backward(grad)?;
        let g = self.norm.backward(&g)?;
        self.conv.backward(&g)
    }

    fn visit_params(&mut self, f: &mut ParamVisitor) {
        self.conv.visit_params(f);
        self.norm.visit_params(f);
    }
}
