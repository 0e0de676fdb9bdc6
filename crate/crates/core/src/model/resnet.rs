use candle_core::Tensor;

use super::config::{BackboneScale, InjectionSite};
use super::fusion::{fuse_broadcast_masked, FeatureMap};
use super::layers::{global_avg_pool, max_pool2d, Conv2d, FrozenBatchNorm};
use super::params::ParamBuilder;
use super::Injection;
use crate::error::Result;

const BN_EPS: f64 = 1e-5;
const EXPANSION: usize = 4;

#[derive(Debug, Clone)]
struct Bottleneck {
    conv1: Conv2d,
    bn1: FrozenBatchNorm,
    conv2: Conv2d,
    bn2: FrozenBatchNorm,
    conv3: Conv2d,
    bn3: FrozenBatchNorm,
    downsample: Option<(Conv2d, FrozenBatchNorm)>,
}

impl Bottleneck {
    fn new(pb: &ParamBuilder, cin: usize, width: usize, stride: usize) -> Result<Self> {
        let cout = width * EXPANSION;
        let downsample = if stride != 1 || cin != cout {
            let ds = pb.pp("downsample");
            Some((
                Conv2d::square(&ds.pp("0"), cin, cout, 1, stride, 0)?,
                FrozenBatchNorm::new(&ds.pp("1"), cout, BN_EPS)?,
            ))
        } else {
            None
        };
        Ok(Self {
            conv1: Conv2d::square(&pb.pp("conv1"), cin, width, 1, 1, 0)?,
            bn1: FrozenBatchNorm::new(&pb.pp("bn1"), width, BN_EPS)?,
            conv2: Conv2d::square(&pb.pp("conv2"), width, width, 3, stride, 1)?,
            bn2: FrozenBatchNorm::new(&pb.pp("bn2"), width, BN_EPS)?,
            conv3: Conv2d::square(&pb.pp("conv3"), width, cout, 1, 1, 0)?,
            // residual branch starts as identity so deep stacks stay bounded
            bn3: FrozenBatchNorm::with_gamma(&pb.pp("bn3"), cout, BN_EPS, 0.0)?,
            downsample,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.bn1.forward(&self.conv1.forward(x)?)?.relu()?;
        let y = self.bn2.forward(&self.conv2.forward(&y)?)?.relu()?;
        let y = self.bn3.forward(&self.conv3.forward(&y)?)?;
        let shortcut = match &self.downsample {
            Some((conv, bn)) => bn.forward(&conv.forward(x)?)?,
            None => x.clone(),
        };
        Ok((y + shortcut)?.relu()?)
    }
}

/// ResNet-50/101 (v1.5, stride on the 3x3 convolution) without the
/// classifier.
#[derive(Debug, Clone)]
pub(crate) struct ResNet {
    conv1: Conv2d,
    bn1: FrozenBatchNorm,
    layers: Vec<Vec<Bottleneck>>,
    site: usize,
}

impl ResNet {
    pub fn new(pb: &ParamBuilder, depths: [usize; 4], scale: BackboneScale, site: InjectionSite) -> Result<Self> {
        let stem = scale.width(64);
        let mut cin = stem;
        let mut layers = Vec::with_capacity(4);
        for (i, &depth) in depths.iter().enumerate() {
            let width = scale.width(64 << i);
            let lp = pb.pp(format!("layer{}", i + 1));
            let mut blocks = Vec::with_capacity(depth);
            for j in 0..depth {
                let stride = if i > 0 && j == 0 { 2 } else { 1 };
                blocks.push(Bottleneck::new(&lp.pp(j.to_string()), cin, width, stride)?);
                cin = width * EXPANSION;
            }
            layers.push(blocks);
        }
        let site = match site {
            InjectionSite::Block1 => 0,
            InjectionSite::Block2 => 1,
            InjectionSite::Block3 => 2,
            _ => 3,
        };
        Ok(Self {
            conv1: Conv2d::square(&pb.pp("conv1"), 3, stem, 7, 2, 3)?,
            bn1: FrozenBatchNorm::new(&pb.pp("bn1"), stem, BN_EPS)?,
            layers,
            site,
        })
    }

    /// Pooled `(B, 2048)` features (scaled width for tiny models).
    pub fn forward(&self, x: &Tensor, inject: Option<&Injection>) -> Result<Tensor> {
        let x = self.bn1.forward(&self.conv1.forward(x)?)?.relu()?;
        let mut x = max_pool2d(&x, 3, 2, 1)?;
        for (i, blocks) in self.layers.iter().enumerate() {
            for b in blocks {
                x = b.forward(&x)?;
            }
            if i == self.site {
                if let Some(inj) = inject {
                    x = fuse_broadcast_masked(&FeatureMap(x), inj.projected, inj.present)?.into_tensor();
                }
            }
        }
        global_avg_pool(&x)
    }
}
