use candle_core::{Tensor, D};

use super::config::BackboneScale;
use super::fusion::{fuse_token, TokenSequence};
use super::layers::{LayerNorm, Linear};
use super::params::{Init, ParamBuilder};
use super::Injection;
use crate::error::{Error, Result};

const PATCH: usize = 16;
const LN_EPS: f64 = 1e-6;

#[derive(Debug, Clone)]
struct EncoderBlock {
    ln_1: LayerNorm,
    in_proj: Linear,
    out_proj: Linear,
    ln_2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
    heads: usize,
}

impl EncoderBlock {
    fn new(pb: &ParamBuilder, d: usize, mlp: usize, heads: usize) -> Result<Self> {
        let attn = pb.pp("self_attention");
        let bound = (6.0 / (d + 3 * d) as f64).sqrt();
        Ok(Self {
            ln_1: LayerNorm::new(&pb.pp("ln_1"), d, LN_EPS)?,
            in_proj: Linear {
                weight: attn.var("in_proj_weight", &[3 * d, d], Init::Uniform { bound })?,
                bias: attn.var("in_proj_bias", &[3 * d], Init::Const(0.0))?,
            },
            out_proj: Linear::with_init(&attn.pp("out_proj"), d, d, Init::LinearDefault, Init::Const(0.0))?,
            ln_2: LayerNorm::new(&pb.pp("ln_2"), d, LN_EPS)?,
            fc1: Linear::with_init(&pb.pp("mlp.0"), d, mlp, Init::LinearDefault, Init::Normal { std: 1e-6 })?,
            fc2: Linear::with_init(&pb.pp("mlp.3"), mlp, d, Init::LinearDefault, Init::Normal { std: 1e-6 })?,
            heads,
        })
    }

    fn attention(&self, x: &Tensor) -> Result<Tensor> {
        let (b, n, d) = x.dims3()?;
        let dh = d / self.heads;
        let qkv = self.in_proj.forward(x)?.reshape((b, n, 3, self.heads, dh))?;
        let part = |i: usize| -> Result<Tensor> {
            Ok(qkv.narrow(2, i, 1)?.squeeze(2)?.transpose(1, 2)?.contiguous()?)
        };
        let (q, k, v) = (part(0)?, part(1)?, part(2)?);
        let scores = (q.matmul(&k.t()?)? / (dh as f64).sqrt())?;
        let attn = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let y = attn.matmul(&v)?.transpose(1, 2)?.reshape((b, n, d))?;
        self.out_proj.forward(&y)
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let x = (x + self.attention(&self.ln_1.forward(x)?)?)?;
        let h = self.fc1.forward(&self.ln_2.forward(&x)?)?.gelu_erf()?;
        Ok((&x + self.fc2.forward(&h)?)?)
    }
}

/// ViT-B/16 trunk with torchvision parameter names (no `heads`). The
/// ingredient token gets its own positional slot,
/// `encoder.ingredient_pos_embedding`, zero at initialisation.
#[derive(Debug, Clone)]
pub(crate) struct VisionTransformer {
    conv_proj_w: Tensor,
    conv_proj_b: Tensor,
    class_token: Tensor,
    pos_embedding: Tensor,
    ingredient_pos: Tensor,
    layers: Vec<EncoderBlock>,
    ln: LayerNorm,
    width: usize,
}

impl VisionTransformer {
    pub fn new(pb: &ParamBuilder, scale: BackboneScale, resolution: usize) -> Result<Self> {
        let d = scale.width(768);
        let mlp = scale.width(3072);
        let heads = 12;
        let patches = (resolution / PATCH).pow(2);
        let enc = pb.pp("encoder");
        let conv = pb.pp("conv_proj");
        let fan_in = 3 * PATCH * PATCH;
        let layers = (0..12)
            .map(|i| EncoderBlock::new(&enc.pp("layers").pp(format!("encoder_layer_{i}")), d, mlp, heads))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            conv_proj_w: conv.var(
                "weight",
                &[d, 3, PATCH, PATCH],
                Init::TruncNormal { std: (1.0 / fan_in as f64).sqrt() },
            )?,
            conv_proj_b: conv.var("bias", &[d], Init::Const(0.0))?,
            class_token: pb.var("class_token", &[1, 1, d], Init::Const(0.0))?,
            pos_embedding: enc.var("pos_embedding", &[1, patches + 1, d], Init::Normal { std: 0.02 })?,
            ingredient_pos: enc.var("ingredient_pos_embedding", &[1, 1, d], Init::Const(0.0))?,
            layers,
            ln: LayerNorm::new(&enc.pp("ln"), d, LN_EPS)?,
            width: d,
        })
    }

    /// `[class, patch...]` before positional encoding.
    pub fn tokens(&self, x: &Tensor) -> Result<TokenSequence> {
        let (b, _, h, w) = x.dims4()?;
        if h % PATCH != 0 || w % PATCH != 0 {
            return Err(Error::Resolution {
                expected: format!("multiple of {PATCH}"),
                actual: format!("{h}x{w}"),
            });
        }
        let p = x
            .conv2d(&self.conv_proj_w, 0, PATCH, 1, 1)?
            .broadcast_add(&self.conv_proj_b.reshape((1, self.width, 1, 1))?)?;
        let p = p.flatten_from(2)?.transpose(1, 2)?;
        let cls = self.class_token.broadcast_as((b, 1, self.width))?;
        TokenSequence::new(Tensor::cat(&[&cls, &p], 1)?)
    }

    fn encode(&self, seq: &TokenSequence) -> Result<Tensor> {
        let pos = if seq.has_ingredient_token {
            let n = self.pos_embedding.dim(1)?;
            Tensor::cat(
                &[
                    &self.pos_embedding.narrow(1, 0, 1)?,
                    &self.ingredient_pos,
                    &self.pos_embedding.narrow(1, 1, n - 1)?,
                ],
                1,
            )?
        } else {
            self.pos_embedding.clone()
        };
        if pos.dim(1)? != seq.len() {
            return Err(Error::shape(format!("{} tokens", pos.dim(1)?), seq.len()));
        }
        let mut x = seq.tokens.broadcast_add(&pos)?;
        for l in &self.layers {
            x = l.forward(&x)?;
        }
        let x = self.ln.forward(&x)?;
        Ok(x.narrow(1, 0, 1)?.squeeze(1)?)
    }

    /// Class-token features `(B, D)`. Rows without ingredients skip the
    /// extra token entirely, so a mixed batch is run as two groups.
    pub fn forward(&self, x: &Tensor, inject: Option<&Injection>) -> Result<Tensor> {
        let seq = self.tokens(x)?;
        let Some(inj) = inject else {
            return self.encode(&seq);
        };
        if inj.present.iter().all(|&p| p) {
            return self.encode(&fuse_token(&seq, inj.projected)?);
        }
        if !inj.present.iter().any(|&p| p) {
            return self.encode(&seq);
        }
        let dev = x.device();
        let idx = |want: bool| -> Result<Tensor> {
            let v: Vec<u32> = (0..inj.present.len())
                .filter(|&i| inj.present[i] == want)
                .map(|i| i as u32)
                .collect();
            Ok(Tensor::new(v, dev)?)
        };
        let (on, off) = (idx(true)?, idx(false)?);
        let tokens = seq.tokens.contiguous()?;
        let fused = {
            let part = TokenSequence::new(tokens.index_select(&on, 0)?)?;
            self.encode(&fuse_token(&part, &inj.projected.contiguous()?.index_select(&on, 0)?)?)?
        };
        let plain = self.encode(&TokenSequence::new(tokens.index_select(&off, 0)?)?)?;
        let stacked = Tensor::cat(&[&fused, &plain], 0)?.contiguous()?;
        let order: Vec<u32> = {
            let on_v = on.to_vec1::<u32>()?;
            let off_v = off.to_vec1::<u32>()?;
            let mut inv = vec![0u32; inj.present.len()];
            for (pos, &row) in on_v.iter().chain(off_v.iter()).enumerate() {
                inv[row as usize] = pos as u32;
            }
            inv
        };
        Ok(stacked.index_select(&Tensor::new(order, dev)?, 0)?)
    }
}
