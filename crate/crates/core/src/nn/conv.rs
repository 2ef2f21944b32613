use rand::Rng;

use super::param::{Param, ParamKind, ParamVisitor};
use super::tensor::{gemm, Tensor};
use super::{Layer, Mode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvGeometry {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            padding: kernel / 2,
            groups: 1,
        }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.groups;
        if g == 0
            || self.kernel == 0
            || self.stride == 0
            || self.in_channels % g != 0
            || self.out_channels % g != 0
            || self.in_channels == 0
            || self.out_channels == 0
        {
            return Err(Error::Config(format!("invalid convolution geometry {self:?}")));
        }
        Ok(())
    }

    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (hp, wp) = (h + 2 * self.padding, w + 2 * self.padding);
        if hp < self.kernel || wp < self.kernel {
            return Err(Error::Dimension(format!(
                "input {h}x{w} too small for kernel {} with padding {}",
                self.kernel, self.padding
            )));
        }
        Ok((
            (hp - self.kernel) / self.stride + 1,
            (wp - self.kernel) / self.stride + 1,
        ))
    }
}

/// 2-D convolution with optional channel groups, computed via im2col + GEMM.
#[derive(Debug, Clone)]
pub struct Conv2d {
    geo: ConvGeometry,
    pub weight: Param,
    pub bias: Option<Param>,
    input: Option<Tensor>,
}

impl Conv2d {
    pub fn new(name: &str, geo: ConvGeometry, bias: bool, rng: &mut impl Rng) -> Result<Self> {
        geo.validate()?;
        let fan_in = geo.in_channels / geo.groups * geo.kernel * geo.kernel;
        let len = geo.out_channels * fan_in;
        let weight = Param::he_normal(format!("{name}.weight"), len, fan_in, rng);
        let bias = bias.then(|| {
            Param::fan_in_uniform(
                format!("{name}.bias"),
                ParamKind::NoDecay,
                geo.out_channels,
                fan_in,
                rng,
            )
        });
        Ok(Self {
            geo,
            weight,
            bias,
            input: None,
        })
    }

    pub fn geometry(&self) -> ConvGeometry {
        self.geo
    }

    fn col_rows(&self) -> usize {
        self.geo.in_channels * self.geo.kernel * self.geo.kernel
    }

    /// Columns matrix `(C·k·k) × (N·oh·ow)`.
    fn im2col(&self, x: &Tensor, oh: usize, ow: usize) -> Vec<f64> {
        let [n, c, h, w] = x.shape();
        let ConvGeometry {
            kernel: k,
            stride: s,
            padding: p,
            ..
        } = self.geo;
        let cols_n = n * oh * ow;
        let mut cols = vec![0.0; c * k * k * cols_n];
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut cols[row * cols_n..(row + 1) * cols_n];
                    for b in 0..n {
                        let plane = &x.data()[(b * c + ci) * h * w..(b * c + ci + 1) * h * w];
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - p as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                            let base = (b * oh + oy) * ow;
                            for ox in 0..ow {
                                let ix = (ox * s + kx) as isize - p as isize;
                                if ix >= 0 && ix < w as isize {
                                    dst[base + ox] = src[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], shape: [usize; 4], oh: usize, ow: usize) -> Tensor {
        let [n, c, h, w] = shape;
        let ConvGeometry {
            kernel: k,
            stride: s,
            padding: p,
            ..
        } = self.geo;
        let cols_n = n * oh * ow;
        let mut out = Tensor::zeros(shape);
        let data = out.data_mut();
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &cols[row * cols_n..(row + 1) * cols_n];
                    for b in 0..n {
                        let plane = &mut data[(b * c + ci) * h * w..(b * c + ci + 1) * h * w];
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - p as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let base = (b * oh + oy) * ow;
                            for ox in 0..ow {
                                let ix = (ox * s + kx) as isize - p as isize;
                                if ix >= 0 && ix < w as isize {
                                    plane[iy as usize * w + ix as usize] += src[base + ox];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

impl Layer for Conv2d {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let [n, c, h, w] = x.shape();
        if c != self.geo.in_channels {
            return Err(crate::error::shape_err(
                format!("{} input channels", self.geo.in_channels),
                x.shape(),
            ));
        }
        let (oh, ow) = self.geo.output_size(h, w)?;
        let g = self.geo.groups;
        let (cin_g, cout_g) = (c / g, self.geo.out_channels / g);
        let kk = self.geo.kernel * self.geo.kernel;
        let cols = self.im2col(x, oh, ow);
        let cols_n = n * oh * ow;
        // (Cout) × (N·oh·ow), then scattered into NCHW
        let mut out_mat = vec![0.0; self.geo.out_channels * cols_n];
        for gi in 0..g {
            let wg = &self.weight.value[gi * cout_g * cin_g * kk..(gi + 1) * cout_g * cin_g * kk];
            let cg = &cols[gi * cin_g * kk * cols_n..(gi + 1) * cin_g * kk * cols_n];
            let og = &mut out_mat[gi * cout_g * cols_n..(gi + 1) * cout_g * cols_n];
            gemm(cout_g, cin_g * kk, cols_n, wg, false, cg, false, 0.0, og);
        }
        let mut out = Tensor::zeros([n, self.geo.out_channels, oh, ow]);
        let hw = oh * ow;
        for co in 0..self.geo.out_channels {
            let b0 = self.bias.as_ref().map_or(0.0, |b| b.value[co]);
            for b in 0..n {
                let src = &out_mat[co * cols_n + b * hw..co * cols_n + (b + 1) * hw];
                let dst = &mut out.data_mut()
                    [(b * self.geo.out_channels + co) * hw..(b * self.geo.out_channels + co + 1) * hw];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = s + b0;
                }
            }
        }
        self.input = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::Config("conv backward called before forward".into()))?;
        let [n, c, h, w] = x.shape();
        let (oh, ow) = self.geo.output_size(h, w)?;
        if grad.shape() != [n, self.geo.out_channels, oh, ow] {
            return Err(crate::error::shape_err([n, self.geo.out_channels, oh, ow], grad.shape()));
        }
        let g = self.geo.groups;
        let (cin_g, cout_g) = (c / g, self.geo.out_channels / g);
        let kk = self.geo.kernel * self.geo.kernel;
        let cols_n = n * oh * ow;
        let hw = oh * ow;
        let mut gmat = vec![0.0; self.geo.out_channels * cols_n];
        for co in 0..self.geo.out_channels {
            for b in 0..n {
                let src = &grad.data()
                    [(b * self.geo.out_channels + co) * hw..(b * self.geo.out_channels + co + 1) * hw];
                gmat[co * cols_n + b * hw..co * cols_n + (b + 1) * hw].copy_from_slice(src);
            }
        }
        if let Some(bias) = self.bias.as_mut() {
            for co in 0..self.geo.out_channels {
                bias.grad[co] += gmat[co * cols_n..(co + 1) * cols_n].iter().sum::<f64>();
            }
        }
        let cols = self.im2col(&x, oh, ow);
        let mut dcols = vec![0.0; self.col_rows() * cols_n];
        for gi in 0..g {
            let wlen = cout_g * cin_g * kk;
            let go = &gmat[gi * cout_g * cols_n..(gi + 1) * cout_g * cols_n];
            let cg = &cols[gi * cin_g * kk * cols_n..(gi + 1) * cin_g * kk * cols_n];
            let dw = &mut self.weight.grad[gi * wlen..(gi + 1) * wlen];
            gemm(cout_g, cols_n, cin_g * kk, go, false, cg, true, 1.0, dw);
            let wg = &self.weight.value[gi * wlen..(gi + 1) * wlen];
            let dc = &mut dcols[gi * cin_g * kk * cols_n..(gi + 1) * cin_g * kk * cols_n];
            gemm(cin_g * kk, cout_g, cols_n, wg, true, go, false, 0.0, dc);
        }
        Ok(self.col2im(&dcols, [n, c, h, w], oh, ow))
    }

    fn visit_params(&mut self, f: &mut ParamVisitor) {
        f(&mut self.weight);
        if let Some(b) = self.bias.as_mut() {
            f(b);
        }
    }
}
