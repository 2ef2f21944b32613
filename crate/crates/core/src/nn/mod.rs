//! Minimal CPU neural-network layers with hand-written backward passes.
//!
//! Every layer caches what its backward pass needs during `forward`, and
//! `backward` consumes that cache, returning the input gradient while
//! accumulating parameter gradients into [`Param::grad`].

mod conv;
pub mod gradcheck;
mod layers;
mod param;
mod tensor;

pub use conv::{Conv2d, ConvGeometry};
pub use layers::{
    sigmoid, BatchNorm2d, ChannelAttention, ConvBlock, GlobalAvgPool, Linear, MaxPool2d, Relu,
    ATTENTION_GATE_BIAS,
};
pub use param::{Param, ParamKind, ParamVisitor};
pub use tensor::Tensor;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running averages updated.
    Train,
    /// Running statistics, no state changes.
    Eval,
}

pub trait Layer {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor>;
    fn backward(&mut self, grad: &Tensor) -> Result<Tensor>;
    fn visit_params(&mut self, f: &mut ParamVisitor);

    fn zero_grad(&mut self) {
        self.visit_params(&mut |p| p.zero_grad());
    }
}

/// Rounds every element through f32, emulating 32-bit activation storage.
pub fn round_to_f32(t: &mut Tensor) {
    t.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
}
