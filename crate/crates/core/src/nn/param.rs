use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Trainable and subject to weight decay.
    Weight,
    /// Trainable, never decayed (biases, norm affine terms, centers).
    NoDecay,
    /// Persistent state that the optimizer never touches (running stats).
    Buffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, kind: ParamKind, value: Vec<f64>) -> Self {
        let grad = vec![0.0; value.len()];
        Self {
            name: name.into(),
            kind,
            value,
            grad,
        }
    }

    pub fn zeros(name: impl Into<String>, kind: ParamKind, len: usize) -> Self {
        Self::new(name, kind, vec![0.0; len])
    }

    pub fn filled(name: impl Into<String>, kind: ParamKind, len: usize, v: f64) -> Self {
        Self::new(name, kind, vec![v; len])
    }

    /// He-style normal init scaled by fan-in.
    pub fn he_normal(name: impl Into<String>, len: usize, fan_in: usize, rng: &mut impl Rng) -> Self {
        let std = (2.0 / fan_in.max(1) as f64).sqrt();
        let value = (0..len)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * std
            })
            .collect();
        Self::new(name, ParamKind::Weight, value)
    }

    /// Uniform in ±1/sqrt(fan_in), the usual affine-layer default.
    pub fn fan_in_uniform(
        name: impl Into<String>,
        kind: ParamKind,
        len: usize,
        fan_in: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let value = (0..len).map(|_| rng.gen_range(-bound..bound)).collect();
        Self::new(name, kind, value)
    }

    pub fn trainable(&self) -> bool {
        self.kind != ParamKind::Buffer
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

pub type ParamVisitor<'a> = dyn FnMut(&mut Param) + 'a;
