use candle_core::{DType, Device, Tensor};

use super::layers::Linear;
use super::params::ParamBuilder;
use crate::data::Field;
use crate::error::{Error, Result};

/// Width of the hidden layer of every regression head.
pub const HEAD_HIDDEN_WIDTH: usize = 4096;

/// One two-layer regressor: `linear2(relu(linear1(x)))`.
#[derive(Debug, Clone)]
pub struct HeadParams {
    /// `(4096, F)`
    pub w1: Tensor,
    pub b1: Tensor,
    /// `(1, 4096)`
    pub w2: Tensor,
    pub b2: Tensor,
}

impl HeadParams {
    pub(crate) fn new(pb: &ParamBuilder, features: usize) -> Result<Self> {
        let l1 = Linear::new(&pb.pp("0"), features, HEAD_HIDDEN_WIDTH)?;
        let l2 = Linear::new(&pb.pp("2"), HEAD_HIDDEN_WIDTH, 1)?;
        Ok(Self {
            w1: l1.weight,
            b1: l1.bias,
            w2: l2.weight,
            b2: l2.bias,
        })
    }

    pub fn from_tensors(w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Result<Self> {
        let (h, _) = w1.dims2()?;
        if h != HEAD_HIDDEN_WIDTH || w2.dims() != [1, HEAD_HIDDEN_WIDTH] {
            return Err(Error::shape(
                format!("hidden width {HEAD_HIDDEN_WIDTH}"),
                format!("{:?} / {:?}", w1.dims(), w2.dims()),
            ));
        }
        if b1.dims() != [h] || b2.dims() != [1] {
            return Err(Error::shape("bias shapes [4096] and [1]", format!("{:?} / {:?}", b1.dims(), b2.dims())));
        }
        Ok(Self { w1, b1, w2, b2 })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.dims()[1]
    }

    pub fn hidden_width(&self) -> usize {
        self.w1.dims()[0]
    }

    /// `(B, F) -> (B)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, f) = x.dims2()?;
        if f != self.input_dim() {
            return Err(Error::shape(format!("{} features", self.input_dim()), f));
        }
        let h = x.matmul(&self.w1.t()?)?.broadcast_add(&self.b1)?.relu()?;
        Ok(h.matmul(&self.w2.t()?)?.broadcast_add(&self.b2)?.squeeze(1)?)
    }
}

/// Applies one head to a single feature vector.
pub fn head_forward(features: &[f64], head: &HeadParams) -> Result<f64> {
    if features.len() != head.input_dim() {
        return Err(Error::shape(head.input_dim(), features.len()));
    }
    let x = Tensor::from_slice(features, (1, features.len()), &Device::Cpu)?
        .to_dtype(head.w1.dtype())?
        .to_device(head.w1.device())?;
    Ok(head.forward(&x)?.to_dtype(DType::F64)?.to_vec1::<f64>()?[0])
}

/// Four heads sharing one representation, in [`Field::ALL`] order.
#[derive(Debug, Clone)]
pub struct MultiTaskHeads {
    pub heads: [HeadParams; 4],
}

impl MultiTaskHeads {
    pub(crate) fn new(pb: &ParamBuilder, features: usize) -> Result<Self> {
        let mk = |f: Field| HeadParams::new(&pb.pp(f.name()), features);
        Ok(Self {
            heads: [
                mk(Field::ALL[0])?,
                mk(Field::ALL[1])?,
                mk(Field::ALL[2])?,
                mk(Field::ALL[3])?,
            ],
        })
    }

    /// `(B, F) -> (B, 4)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let cols = self
            .heads
            .iter()
            .map(|h| h.forward(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(Tensor::stack(&cols, 1)?)
    }
}
