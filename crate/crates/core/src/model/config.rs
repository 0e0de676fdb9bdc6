use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    Resnet50,
    Resnet101,
    InceptionV3,
    VitBase16,
}

impl Backbone {
    pub const ALL: [Backbone; 4] = [
        Backbone::Resnet50,
        Backbone::Resnet101,
        Backbone::InceptionV3,
        Backbone::VitBase16,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Backbone::Resnet50 => "resnet50",
            Backbone::Resnet101 => "resnet101",
            Backbone::InceptionV3 => "inception_v3",
            Backbone::VitBase16 => "vit_base16",
        }
    }

    /// Input side length the pretrained weights expect.
    pub fn native_resolution(self) -> usize {
        match self {
            Backbone::InceptionV3 => 299,
            _ => 224,
        }
    }

    pub fn default_site(self) -> InjectionSite {
        match self {
            Backbone::Resnet50 | Backbone::Resnet101 => InjectionSite::Block2,
            Backbone::InceptionV3 => InjectionSite::Mixed6eWithAux,
            Backbone::VitBase16 => InjectionSite::ExtraToken,
        }
    }

    pub fn sites(self) -> &'static [InjectionSite] {
        use InjectionSite::*;
        match self {
            Backbone::Resnet50 | Backbone::Resnet101 => &[Block1, Block2, Block3, Block4],
            Backbone::InceptionV3 => &[PostMaxpool2, Mixed6eWithAux, Mixed6eNoAux, PostMixed7c],
            Backbone::VitBase16 => &[ExtraToken],
        }
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionSite {
    Block1,
    Block2,
    Block3,
    Block4,
    PostMaxpool2,
    Mixed6eWithAux,
    Mixed6eNoAux,
    PostMixed7c,
    ExtraToken,
}

impl InjectionSite {
    pub fn name(self) -> &'static str {
        use InjectionSite::*;
        match self {
            Block1 => "block1",
            Block2 => "block2",
            Block3 => "block3",
            Block4 => "block4",
            PostMaxpool2 => "post_maxpool2",
            Mixed6eWithAux => "mixed6e_with_aux",
            Mixed6eNoAux => "mixed6e_no_aux",
            PostMixed7c => "post_mixed7c",
            ExtraToken => "extra_token",
        }
    }
}

impl fmt::Display for InjectionSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Architecture width. `Tiny` divides every channel count (and the ViT
/// hidden size) by 16 while keeping depths and topology, and permits a
/// reduced input resolution for ResNet and ViT so tests stay fast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneScale {
    #[default]
    Full,
    Tiny,
}

impl BackboneScale {
    pub(crate) fn width(self, full: usize) -> usize {
        match self {
            BackboneScale::Full => full,
            BackboneScale::Tiny => (full / 16).max(1),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFusionConfig {
    backbone: Option<Backbone>,
    injection_site: Option<InjectionSite>,
    input_resolution: Option<usize>,
    fuse_auxiliary: Option<bool>,
    #[serde(default)]
    scale: BackboneScale,
}

/// Backbone choice and where the ingredient feature enters it.
///
/// Missing keys take backbone defaults when deserialized: the default
/// injection site, the native resolution and `fuse_auxiliary` set exactly
/// when the site is `mixed6e_with_aux`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawFusionConfig")]
pub struct FusionConfig {
    pub backbone: Backbone,
    pub injection_site: InjectionSite,
    pub input_resolution: usize,
    pub fuse_auxiliary: bool,
    pub scale: BackboneScale,
}

impl TryFrom<RawFusionConfig> for FusionConfig {
    type Error = Error;

    fn try_from(raw: RawFusionConfig) -> Result<Self> {
        let backbone = raw.backbone.unwrap_or(Backbone::Resnet101);
        let site = raw.injection_site.unwrap_or(backbone.default_site());
        let cfg = FusionConfig {
            backbone,
            injection_site: site,
            input_resolution: raw.input_resolution.unwrap_or(backbone.native_resolution()),
            fuse_auxiliary: raw
                .fuse_auxiliary
                .unwrap_or(site == InjectionSite::Mixed6eWithAux),
            scale: raw.scale,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self::new(Backbone::Resnet101)
    }
}

impl FusionConfig {
    /// Full-size backbone with its default site and native resolution.
    pub fn new(backbone: Backbone) -> Self {
        let site = backbone.default_site();
        Self {
            backbone,
            injection_site: site,
            input_resolution: backbone.native_resolution(),
            fuse_auxiliary: site == InjectionSite::Mixed6eWithAux,
            scale: BackboneScale::Full,
        }
    }

    /// Narrow variant for tests and benches. ResNet and ViT drop to a small
    /// input side; Inception keeps 299 because its auxiliary branch needs a
    /// 17x17 Mixed6e map.
    pub fn tiny(backbone: Backbone) -> Self {
        let input_resolution = match backbone {
            Backbone::Resnet50 | Backbone::Resnet101 => 64,
            Backbone::VitBase16 => 64,
            Backbone::InceptionV3 => 299,
        };
        Self {
            input_resolution,
            scale: BackboneScale::Tiny,
            ..Self::new(backbone)
        }
    }

    pub fn with_site(mut self, site: InjectionSite) -> Self {
        self.injection_site = site;
        self.fuse_auxiliary = site == InjectionSite::Mixed6eWithAux;
        self
    }

    pub fn with_resolution(mut self, px: usize) -> Self {
        self.input_resolution = px;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.backbone.sites().contains(&self.injection_site) {
            return Err(Error::InvalidConfig(format!(
                "injection site `{}` is not valid for {}",
                self.injection_site, self.backbone
            )));
        }
        let expects_aux = self.injection_site == InjectionSite::Mixed6eWithAux;
        if self.fuse_auxiliary != expects_aux {
            return Err(Error::InvalidConfig(format!(
                "fuse_auxiliary must be {expects_aux} for site `{}`",
                self.injection_site
            )));
        }
        let px = self.input_resolution;
        let native = self.backbone.native_resolution();
        let ok = match (self.scale, self.backbone) {
            (BackboneScale::Full, _) | (BackboneScale::Tiny, Backbone::InceptionV3) => px == native,
            (BackboneScale::Tiny, Backbone::VitBase16) => px >= 16 && px % 16 == 0,
            (BackboneScale::Tiny, _) => px >= 32 && px % 32 == 0,
        };
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "input_resolution {px} is not allowed for {} at {:?} scale (native {native})",
                self.backbone, self.scale
            )));
        }
        Ok(())
    }

    /// Channel width `C` of the fusion site (the ViT hidden size for the
    /// token site).
    pub fn fusion_dim(&self) -> usize {
        use InjectionSite::*;
        let full = match self.injection_site {
            Block1 => 256,
            Block2 => 512,
            Block3 => 1024,
            Block4 => 2048,
            PostMaxpool2 => 192,
            Mixed6eWithAux | Mixed6eNoAux => 768,
            PostMixed7c => 2048,
            ExtraToken => 768,
        };
        self.scale.width(full)
    }

    /// Width of the pooled representation fed to the heads.
    pub fn feature_dim(&self) -> usize {
        let full = match self.backbone {
            Backbone::Resnet50 | Backbone::Resnet101 | Backbone::InceptionV3 => 2048,
            Backbone::VitBase16 => 768,
        };
        self.scale.width(full)
    }

    pub fn has_aux_heads(&self) -> bool {
        self.backbone == Backbone::InceptionV3
    }
}
