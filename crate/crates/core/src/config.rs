use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// Sensing spectrum of an input image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    Rgb,
    Depth,
    Ir,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Rgb, Modality::Depth, Modality::Ir];

    pub fn tag(self) -> &'static str {
        match self {
            Modality::Rgb => "R",
            Modality::Depth => "D",
            Modality::Ir => "I",
        }
    }

    /// Channels stored on disk and produced by the generator.
    pub fn native_channels(self) -> usize {
        match self {
            Modality::Rgb => 3,
            Modality::Depth | Modality::Ir => 1,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "R" | "r" | "rgb" | "RGB" => Ok(Modality::Rgb),
            "D" | "d" | "depth" | "Depth" => Ok(Modality::Depth),
            "I" | "i" | "ir" | "IR" => Ok(Modality::Ir),
            other => Err(Error::UnknownModality(String::from(other))),
        }
    }
}

/// A modality registered in a model, with the row of the spectrum
/// embedding table it owns. The spectrum index doubles as the modality
/// classification target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModalityId {
    pub modality: Modality,
    pub spectrum_index: usize,
}

/// Structural switches for the ablation variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ablation {
    /// Modal-disentangle attention after every standard block.
    pub mda: bool,
    /// Cross-modal attention path and its liveness loss.
    pub cma: bool,
}

impl Ablation {
    pub const FULL: Ablation = Ablation { mda: true, cma: true };
    pub const VIT: Ablation = Ablation { mda: false, cma: false };

    pub fn name(self) -> &'static str {
        match (self.mda, self.cma) {
            (true, true) => "ma-vit",
            (true, false) => "mda-vit",
            (false, true) => "cma-vit",
            (false, false) => "vit",
        }
    }
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation::FULL
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub mlp_ratio: f64,
    pub lambda: f64,
    pub modalities: Vec<Modality>,
    pub ablation: Ablation,
}

impl ModelConfig {
    /// 32x32 images, 8x8 patches (16 patch tokens), D=32, 4 heads,
    /// 4 blocks, lambda 0.8, RGB + depth.
    pub fn desk() -> Self {
        ModelConfig {
            image_size: 32,
            patch_size: 8,
            channels: 3,
            dim: 32,
            heads: 4,
            blocks: 4,
            mlp_ratio: 4.0,
            lambda: 0.8,
            modalities: alloc::vec![Modality::Rgb, Modality::Depth],
            ablation: Ablation::FULL,
        }
    }

    /// Smallest configuration used for finite-difference checks:
    /// 16 patch tokens, D=16, 2 heads, 2 blocks.
    pub fn tiny() -> Self {
        ModelConfig {
            image_size: 16,
            patch_size: 4,
            dim: 16,
            heads: 2,
            blocks: 2,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.image_size == 0 || !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::Config(format!(
                "image size {} is not divisible by patch size {}",
                self.image_size, self.patch_size
            )));
        }
        if self.channels == 0 {
            return Err(Error::Config("channel count must be positive".into()));
        }
        if self.dim == 0 || self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "embedding dim {} is not divisible by head count {}",
                self.dim, self.heads
            )));
        }
        if self.blocks == 0 {
            return Err(Error::Config("at least one transformer block is required".into()));
        }
        let hidden = self.mlp_ratio * self.dim as f64;
        if !(self.mlp_ratio > 0.0) || hidden != libm::round(hidden) {
            return Err(Error::Config(format!(
                "mlp ratio {} does not give an integral hidden width for dim {}",
                self.mlp_ratio, self.dim
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} is outside [0, 1]", self.lambda)));
        }
        if self.modalities.is_empty() || self.modalities.len() > 2 {
            return Err(Error::Config(format!(
                "one or two modalities are supported, got {}",
                self.modalities.len()
            )));
        }
        if self.modalities.len() == 2 && self.modalities[0] == self.modalities[1] {
            return Err(Error::Config("modalities must be distinct".into()));
        }
        Ok(())
    }

    /// Patches per side.
    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    /// Patch tokens per sequence.
    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Tokens per sequence: patches plus the CLS and MOD agents.
    pub fn seq_len(&self) -> usize {
        self.num_patches() + 2
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn mlp_hidden(&self) -> usize {
        libm::round(self.mlp_ratio * self.dim as f64) as usize
    }

    /// Flattened length of one patch.
    pub fn patch_len(&self) -> usize {
        self.channels * self.patch_size * self.patch_size
    }

    pub fn modality_id(&self, m: Modality) -> Result<ModalityId> {
        self.modalities
            .iter()
            .position(|&x| x == m)
            .map(|spectrum_index| ModalityId {
                modality: m,
                spectrum_index,
            })
            .ok_or_else(|| Error::UnknownModality(String::from(m.tag())))
    }

    /// Whether the cross-modal path exists for this configuration.
    pub fn cross_modal(&self) -> bool {
        self.ablation.cma && self.modalities.len() == 2
    }
}
