//! Building blocks with torchvision-compatible parameter names.

use candle_core::{DType, Tensor, D};

use super::params::{Init, ParamBuilder};
use crate::error::Result;

#[derive(Debug, Clone)]
pub(crate) struct Conv2d {
    weight: Tensor,
    bias: Option<Tensor>,
    stride: usize,
    padding: (usize, usize),
}

impl Conv2d {
    /// `kernel` and `padding` are `(height, width)`.
    pub fn new(
        pb: &ParamBuilder,
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: (usize, usize),
        bias: bool,
    ) -> Result<Self> {
        let weight = pb.var("weight", &[cout, cin, kernel.0, kernel.1], Init::KaimingFanOut)?;
        let bias = if bias {
            Some(pb.var("bias", &[cout], Init::Const(0.0))?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn square(pb: &ParamBuilder, cin: usize, cout: usize, k: usize, stride: usize, pad: usize) -> Result<Self> {
        Self::new(pb, cin, cout, (k, k), stride, (pad, pad), false)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (ph, pw) = self.padding;
        let y = if ph == pw {
            x.conv2d(&self.weight, ph, self.stride, 1, 1)?
        } else {
            x.pad_with_zeros(2, ph, ph)?
                .pad_with_zeros(3, pw, pw)?
                .conv2d(&self.weight, 0, self.stride, 1, 1)?
        };
        Ok(match &self.bias {
            Some(b) => y.broadcast_add(&b.reshape((1, b.dim(0)?, 1, 1))?)?,
            None => y,
        })
    }
}

/// Batch normalisation with fixed running statistics. The affine
/// parameters remain trainable.
#[derive(Debug, Clone)]
pub(crate) struct FrozenBatchNorm {
    weight: Tensor,
    bias: Tensor,
    running_mean: Tensor,
    running_var: Tensor,
    eps: f64,
}

impl FrozenBatchNorm {
    pub fn new(pb: &ParamBuilder, c: usize, eps: f64) -> Result<Self> {
        Self::with_gamma(pb, c, eps, 1.0)
    }

    pub fn with_gamma(pb: &ParamBuilder, c: usize, eps: f64, gamma: f64) -> Result<Self> {
        Ok(Self {
            weight: pb.var("weight", &[c], Init::Const(gamma))?,
            bias: pb.var("bias", &[c], Init::Const(0.0))?,
            running_mean: pb.buffer("running_mean", &[c], Init::Const(0.0))?,
            running_var: pb.buffer("running_var", &[c], Init::Const(1.0))?,
            eps,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let c = self.weight.dim(0)?;
        let inv = (self.running_var.clone() + self.eps)?.sqrt()?.recip()?;
        let scale = self.weight.mul(&inv)?;
        let shift = self.bias.sub(&self.running_mean.mul(&scale)?)?;
        Ok(x.broadcast_mul(&scale.reshape((1, c, 1, 1))?)?
            .broadcast_add(&shift.reshape((1, c, 1, 1))?)?)
    }
}

/// Convolution followed by batch norm and, optionally, ReLU. Parameters sit
/// under `conv.*` and `bn.*` as in torchvision's `BasicConv2d`.
#[derive(Debug, Clone)]
pub(crate) struct ConvBn {
    conv: Conv2d,
    bn: FrozenBatchNorm,
}

impl ConvBn {
    pub fn new(
        pb: &ParamBuilder,
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: (usize, usize),
    ) -> Result<Self> {
        Ok(Self {
            conv: Conv2d::new(&pb.pp("conv"), cin, cout, kernel, stride, padding, false)?,
            bn: FrozenBatchNorm::new(&pb.pp("bn"), cout, 1e-3)?,
        })
    }

    pub fn square(pb: &ParamBuilder, cin: usize, cout: usize, k: usize, stride: usize, pad: usize) -> Result<Self> {
        Self::new(pb, cin, cout, (k, k), stride, (pad, pad))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.bn.forward(&self.conv.forward(x)?)?.relu()?)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(pb: &ParamBuilder, cin: usize, cout: usize) -> Result<Self> {
        Ok(Self {
            weight: pb.var("weight", &[cout, cin], Init::LinearDefault)?,
            bias: pb.var("bias", &[cout], Init::Uniform { bound: 1.0 / (cin.max(1) as f64).sqrt() })?,
        })
    }

    pub fn with_init(pb: &ParamBuilder, cin: usize, cout: usize, w: Init, b: Init) -> Result<Self> {
        Ok(Self {
            weight: pb.var("weight", &[cout, cin], w)?,
            bias: pb.var("bias", &[cout], b)?,
        })
    }

    /// Applies to the last dimension of a 2-D or 3-D input.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let wt = self.weight.t()?;
        let y = match x.rank() {
            2 => x.matmul(&wt)?,
            _ => x.broadcast_matmul(&wt)?,
        };
        Ok(y.broadcast_add(&self.bias)?)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub fn new(pb: &ParamBuilder, dim: usize, eps: f64) -> Result<Self> {
        Ok(Self {
            weight: pb.var("weight", &[dim], Init::Const(1.0))?,
            bias: pb.var("bias", &[dim], Init::Const(0.0))?,
            eps,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let xc = x.broadcast_sub(&mean)?;
        let var = xc.sqr()?.mean_keepdim(D::Minus1)?;
        let xn = xc.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(xn.broadcast_mul(&self.weight)?.broadcast_add(&self.bias)?)
    }
}

fn pad_hw(x: &Tensor, pad: usize, value: f64) -> Result<Tensor> {
    if pad == 0 {
        return Ok(x.clone());
    }
    if value == 0.0 {
        return Ok(x.pad_with_zeros(2, pad, pad)?.pad_with_zeros(3, pad, pad)?);
    }
    let (b, c, h, w) = x.dims4()?;
    let fill = |shape: (usize, usize, usize, usize)| -> Result<Tensor> {
        Ok(Tensor::full(value, shape, x.device())?.to_dtype(x.dtype())?)
    };
    let rows = fill((b, c, pad, w))?;
    let x = Tensor::cat(&[&rows, x, &rows], 2)?;
    let cols = fill((b, c, h + 2 * pad, pad))?;
    Ok(Tensor::cat(&[&cols, &x, &cols], 3)?)
}

fn window_starts(offset: usize, stride: usize, n: usize, x: &Tensor) -> Result<Tensor> {
    let idx: Vec<u32> = (0..n).map(|i| (offset + i * stride) as u32).collect();
    Ok(Tensor::from_vec(idx, n, x.device())?)
}

/// Visits the `k x k` shifted, strided views of a padded input. Built from
/// `index_select` so every pooling variant has a backward pass.
fn pool_windows(
    x: &Tensor,
    k: usize,
    stride: usize,
    pad: usize,
    fill: f64,
    mut f: impl FnMut(Option<Tensor>, Tensor) -> Result<Tensor>,
) -> Result<Tensor> {
    let x = pad_hw(x, pad, fill)?.contiguous()?;
    let (_, _, h, w) = x.dims4()?;
    let ho = (h - k) / stride + 1;
    let wo = (w - k) / stride + 1;
    let mut acc: Option<Tensor> = None;
    for di in 0..k {
        let rows = x.index_select(&window_starts(di, stride, ho, &x)?, 2)?;
        for dj in 0..k {
            let v = rows.index_select(&window_starts(dj, stride, wo, &x)?, 3)?;
            acc = Some(f(acc, v)?);
        }
    }
    Ok(acc.expect("kernel is at least 1x1"))
}

pub(crate) fn max_pool2d(x: &Tensor, k: usize, stride: usize, pad: usize) -> Result<Tensor> {
    // finite sentinel keeps gradients free of inf arithmetic
    let fill = match x.dtype() {
        DType::F64 => -1e300,
        _ => -1e30,
    };
    pool_windows(x, k, stride, pad, fill, |acc, v| {
        Ok(match acc {
            None => v,
            Some(a) => a.maximum(&v)?,
        })
    })
}

/// Average pooling counting padded zeros, as PyTorch does by default.
pub(crate) fn avg_pool2d(x: &Tensor, k: usize, stride: usize, pad: usize) -> Result<Tensor> {
    let sum = pool_windows(x, k, stride, pad, 0.0, |acc, v| {
        Ok(match acc {
            None => v,
            Some(a) => (a + v)?,
        })
    })?;
    Ok((sum / (k * k) as f64)?)
}

/// `(B, C, H, W) -> (B, C)`.
pub(crate) fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    Ok(x.mean(D::Minus1)?.mean(D::Minus1)?)
}
