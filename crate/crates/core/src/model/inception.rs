use candle_core::Tensor;

use super::config::{BackboneScale, InjectionSite};
use super::fusion::{fuse_broadcast_masked, FeatureMap};
use super::layers::{avg_pool2d, global_avg_pool, max_pool2d, ConvBn};
use super::params::ParamBuilder;
use super::Injection;
use crate::error::Result;

fn cat(parts: &[Tensor]) -> Result<Tensor> {
    Ok(Tensor::cat(parts, 1)?)
}

#[derive(Debug, Clone)]
struct InceptionA {
    b1: ConvBn,
    b5: [ConvBn; 2],
    b3: [ConvBn; 3],
    pool: ConvBn,
}

impl InceptionA {
    fn new(pb: &ParamBuilder, s: BackboneScale, cin: usize, pool_features: usize) -> Result<Self> {
        let w = |c| s.width(c);
        Ok(Self {
            b1: ConvBn::square(&pb.pp("branch1x1"), cin, w(64), 1, 1, 0)?,
            b5: [
                ConvBn::square(&pb.pp("branch5x5_1"), cin, w(48), 1, 1, 0)?,
                ConvBn::square(&pb.pp("branch5x5_2"), w(48), w(64), 5, 1, 2)?,
            ],
            b3: [
                ConvBn::square(&pb.pp("branch3x3dbl_1"), cin, w(64), 1, 1, 0)?,
                ConvBn::square(&pb.pp("branch3x3dbl_2"), w(64), w(96), 3, 1, 1)?,
                ConvBn::square(&pb.pp("branch3x3dbl_3"), w(96), w(96), 3, 1, 1)?,
            ],
            pool: ConvBn::square(&pb.pp("branch_pool"), cin, w(pool_features), 1, 1, 0)?,
        })
    }

    fn out_channels(s: BackboneScale, pool_features: usize) -> usize {
        s.width(64) + s.width(64) + s.width(96) + s.width(pool_features)
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let b1 = self.b1.forward(x)?;
        let b5 = self.b5[1].forward(&self.b5[0].forward(x)?)?;
        let b3 = chain(&self.b3, x)?;
        let bp = self.pool.forward(&avg_pool2d(x, 3, 1, 1)?)?;
        cat(&[b1, b5, b3, bp])
    }
}

fn chain(layers: &[ConvBn], x: &Tensor) -> Result<Tensor> {
    let mut y = x.clone();
    for l in layers {
        y = l.forward(&y)?;
    }
    Ok(y)
}

#[derive(Debug, Clone)]
struct InceptionB {
    b3: ConvBn,
    b3dbl: [ConvBn; 3],
}

impl InceptionB {
    fn new(pb: &ParamBuilder, s: BackboneScale, cin: usize) -> Result<Self> {
        let w = |c| s.width(c);
        Ok(Self {
            b3: ConvBn::square(&pb.pp("branch3x3"), cin, w(384), 3, 2, 0)?,
            b3dbl: [
                ConvBn::square(&pb.pp("branch3x3dbl_1"), cin, w(64), 1, 1, 0)?,
                ConvBn::square(&pb.pp("branch3x3dbl_2"), w(64), w(96), 3, 1, 1)?,
                ConvBn::square(&pb.pp("branch3x3dbl_3"), w(96), w(96), 3, 2, 0)?,
            ],
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        cat(&[self.b3.forward(x)?, chain(&self.b3dbl, x)?, max_pool2d(x, 3, 2, 0)?])
    }
}

#[derive(Debug, Clone)]
struct InceptionC {
    b1: ConvBn,
    b7: [ConvBn; 3],
    b7dbl: [ConvBn; 5],
    pool: ConvBn,
}

impl InceptionC {
    fn new(pb: &ParamBuilder, s: BackboneScale, cin: usize, c7: usize) -> Result<Self> {
        let (c7, c192) = (s.width(c7), s.width(192));
        let row = |name: &str, a, b| ConvBn::new(&pb.pp(name), a, b, (1, 7), 1, (0, 3));
        let col = |name: &str, a, b| ConvBn::new(&pb.pp(name), a, b, (7, 1), 1, (3, 0));
        Ok(Self {
            b1: ConvBn::square(&pb.pp("branch1x1"), cin, c192, 1, 1, 0)?,
            b7: [
                ConvBn::square(&pb.pp("branch7x7_1"), cin, c7, 1, 1, 0)?,
                row("branch7x7_2", c7, c7)?,
                col("branch7x7_3", c7, c192)?,
            ],
            b7dbl: [
                ConvBn::square(&pb.pp("branch7x7dbl_1"), cin, c7, 1, 1, 0)?,
                col("branch7x7dbl_2", c7, c7)?,
                row("branch7x7dbl_3", c7, c7)?,
                col("branch7x7dbl_4", c7, c7)?,
                row("branch7x7dbl_5", c7, c192)?,
            ],
            pool: ConvBn::square(&pb.pp("branch_pool"), cin, c192, 1, 1, 0)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let bp = self.pool.forward(&avg_pool2d(x, 3, 1, 1)?)?;
        cat(&[self.b1.forward(x)?, chain(&self.b7, x)?, chain(&self.b7dbl, x)?, bp])
    }
}

#[derive(Debug, Clone)]
struct InceptionD {
    b3: [ConvBn; 2],
    b7x3: [ConvBn; 4],
}

impl InceptionD {
    fn new(pb: &ParamBuilder, s: BackboneScale, cin: usize) -> Result<Self> {
        let w = |c| s.width(c);
        Ok(Self {
            b3: [
                ConvBn::square(&pb.pp("branch3x3_1"), cin, w(192), 1, 1, 0)?,
                ConvBn::square(&pb.pp("branch3x3_2"), w(192), w(320), 3, 2, 0)?,
            ],
            b7x3: [
                ConvBn::square(&pb.pp("branch7x7x3_1"), cin, w(192), 1, 1, 0)?,
                ConvBn::new(&pb.pp("branch7x7x3_2"), w(192), w(192), (1, 7), 1, (0, 3))?,
                ConvBn::new(&pb.pp("branch7x7x3_3"), w(192), w(192), (7, 1), 1, (3, 0))?,
                ConvBn::square(&pb.pp("branch7x7x3_4"), w(192), w(192), 3, 2, 0)?,
            ],
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        cat(&[chain(&self.b3, x)?, chain(&self.b7x3, x)?, max_pool2d(x, 3, 2, 0)?])
    }
}

#[derive(Debug, Clone)]
struct InceptionE {
    b1: ConvBn,
    b3_1: ConvBn,
    b3_2: [ConvBn; 2],
    b3dbl_1: [ConvBn; 2],
    b3dbl_3: [ConvBn; 2],
    pool: ConvBn,
}

impl InceptionE {
    fn new(pb: &ParamBuilder, s: BackboneScale, cin: usize) -> Result<Self> {
        let w = |c| s.width(c);
        let pair = |a: &str, b: &str, cin| -> Result<[ConvBn; 2]> {
            Ok([
                ConvBn::new(&pb.pp(a), cin, w(384), (1, 3), 1, (0, 1))?,
                ConvBn::new(&pb.pp(b), cin, w(384), (3, 1), 1, (1, 0))?,
            ])
        };
        Ok(Self {
            b1: ConvBn::square(&pb.pp("branch1x1"), cin, w(320), 1, 1, 0)?,
            b3_1: ConvBn::square(&pb.pp("branch3x3_1"), cin, w(384), 1, 1, 0)?,
            b3_2: pair("branch3x3_2a", "branch3x3_2b", w(384))?,
            b3dbl_1: [
                ConvBn::square(&pb.pp("branch3x3dbl_1"), cin, w(448), 1, 1, 0)?,
                ConvBn::square(&pb.pp("branch3x3dbl_2"), w(448), w(384), 3, 1, 1)?,
            ],
            b3dbl_3: pair("branch3x3dbl_3a", "branch3x3dbl_3b", w(384))?,
            pool: ConvBn::square(&pb.pp("branch_pool"), cin, w(192), 1, 1, 0)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let b1 = self.b1.forward(x)?;
        let y = self.b3_1.forward(x)?;
        let b3 = cat(&[self.b3_2[0].forward(&y)?, self.b3_2[1].forward(&y)?])?;
        let y = chain(&self.b3dbl_1, x)?;
        let bd = cat(&[self.b3dbl_3[0].forward(&y)?, self.b3dbl_3[1].forward(&y)?])?;
        let bp = self.pool.forward(&avg_pool2d(x, 3, 1, 1)?)?;
        cat(&[b1, b3, bd, bp])
    }
}

/// Auxiliary branch on Mixed_6e without its classifier; yields a pooled
/// `(B, 768)` feature.
#[derive(Debug, Clone)]
struct InceptionAux {
    conv0: ConvBn,
    conv1: ConvBn,
}

impl InceptionAux {
    fn new(pb: &ParamBuilder, s: BackboneScale, cin: usize) -> Result<Self> {
        Ok(Self {
            conv0: ConvBn::square(&pb.pp("conv0"), cin, s.width(128), 1, 1, 0)?,
            conv1: ConvBn::square(&pb.pp("conv1"), s.width(128), s.width(768), 5, 1, 0)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = avg_pool2d(x, 5, 3, 0)?;
        let y = self.conv1.forward(&self.conv0.forward(&y)?)?;
        global_avg_pool(&y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Site {
    PostMaxpool2,
    Mixed6eWithAux,
    Mixed6eNoAux,
    PostMixed7c,
}

pub(crate) struct InceptionOutput {
    pub features: Tensor,
    pub aux: Option<Tensor>,
}

/// Inception v3 trunk with torchvision parameter names, minus `fc` and
/// `AuxLogits.fc`.
#[derive(Debug, Clone)]
pub(crate) struct InceptionV3 {
    stem_a: [ConvBn; 3],
    stem_b: [ConvBn; 2],
    mixed5: [InceptionA; 3],
    mixed6a: InceptionB,
    mixed6: [InceptionC; 4],
    aux: InceptionAux,
    mixed7a: InceptionD,
    mixed7: [InceptionE; 2],
    site: Site,
}

impl InceptionV3 {
    pub fn new(pb: &ParamBuilder, s: BackboneScale, site: InjectionSite) -> Result<Self> {
        let w = |c| s.width(c);
        let c5b = InceptionA::out_channels(s, 32);
        let c5c = InceptionA::out_channels(s, 64);
        let c6a = w(384) + w(96) + c5c;
        let c6 = 4 * w(192);
        let c7a = w(320) + w(192) + c6;
        let c7b = w(320) + 2 * w(384) + 2 * w(384) + w(192);
        let site = match site {
            InjectionSite::PostMaxpool2 => Site::PostMaxpool2,
            InjectionSite::Mixed6eWithAux => Site::Mixed6eWithAux,
            InjectionSite::Mixed6eNoAux => Site::Mixed6eNoAux,
            _ => Site::PostMixed7c,
        };
        Ok(Self {
            stem_a: [
                ConvBn::square(&pb.pp("Conv2d_1a_3x3"), 3, w(32), 3, 2, 0)?,
                ConvBn::square(&pb.pp("Conv2d_2a_3x3"), w(32), w(32), 3, 1, 0)?,
                ConvBn::square(&pb.pp("Conv2d_2b_3x3"), w(32), w(64), 3, 1, 1)?,
            ],
            stem_b: [
                ConvBn::square(&pb.pp("Conv2d_3b_1x1"), w(64), w(80), 1, 1, 0)?,
                ConvBn::square(&pb.pp("Conv2d_4a_3x3"), w(80), w(192), 3, 1, 0)?,
            ],
            mixed5: [
                InceptionA::new(&pb.pp("Mixed_5b"), s, w(192), 32)?,
                InceptionA::new(&pb.pp("Mixed_5c"), s, c5b, 64)?,
                InceptionA::new(&pb.pp("Mixed_5d"), s, c5c, 64)?,
            ],
            mixed6a: InceptionB::new(&pb.pp("Mixed_6a"), s, c5c)?,
            mixed6: [
                InceptionC::new(&pb.pp("Mixed_6b"), s, c6a, 128)?,
                InceptionC::new(&pb.pp("Mixed_6c"), s, c6, 160)?,
                InceptionC::new(&pb.pp("Mixed_6d"), s, c6, 160)?,
                InceptionC::new(&pb.pp("Mixed_6e"), s, c6, 192)?,
            ],
            aux: InceptionAux::new(&pb.pp("AuxLogits"), s, c6)?,
            mixed7a: InceptionD::new(&pb.pp("Mixed_7a"), s, c6)?,
            mixed7: [
                InceptionE::new(&pb.pp("Mixed_7b"), s, c7a)?,
                InceptionE::new(&pb.pp("Mixed_7c"), s, c7b)?,
            ],
            site,
        })
    }

    /// With `with_aux` the auxiliary branch is evaluated as well (training).
    pub fn forward(&self, x: &Tensor, inject: Option<&Injection>, with_aux: bool) -> Result<InceptionOutput> {
        let fuse = |x: Tensor, here: bool| -> Result<Tensor> {
            match inject {
                Some(inj) if here => {
                    Ok(fuse_broadcast_masked(&FeatureMap(x), inj.projected, inj.present)?.into_tensor())
                }
                _ => Ok(x),
            }
        };
        let x = chain(&self.stem_a, x)?;
        let x = max_pool2d(&x, 3, 2, 0)?;
        let x = chain(&self.stem_b, &x)?;
        let mut x = max_pool2d(&x, 3, 2, 0)?;
        x = fuse(x, self.site == Site::PostMaxpool2)?;
        for m in &self.mixed5 {
            x = m.forward(&x)?;
        }
        x = self.mixed6a.forward(&x)?;
        for m in &self.mixed6 {
            x = m.forward(&x)?;
        }
        let aux_input = |x: &Tensor| -> Result<Option<Tensor>> {
            if with_aux {
                Ok(Some(self.aux.forward(x)?))
            } else {
                Ok(None)
            }
        };
        let aux = match self.site {
            Site::Mixed6eWithAux => {
                x = fuse(x, true)?;
                aux_input(&x)?
            }
            Site::Mixed6eNoAux => {
                let a = aux_input(&x)?;
                x = fuse(x, true)?;
                a
            }
            _ => aux_input(&x)?,
        };
        x = self.mixed7a.forward(&x)?;
        for m in &self.mixed7 {
            x = m.forward(&x)?;
        }
        x = fuse(x, self.site == Site::PostMixed7c)?;
        Ok(InceptionOutput {
            features: global_avg_pool(&x)?,
            aux,
        })
    }
}
