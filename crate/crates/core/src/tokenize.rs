//! Early-fusion tokenizer: every modality is cut into the same patch grid,
//! projected by one shared linear map, prefixed with the shared CLS and MOD
//! agents, and offset by the shared position table plus the modality's own
//! spectrum embedding.

use alloc::format;
use alloc::vec::Vec;

use crate::config::{Modality, ModelConfig};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const PATCH_W: &str = "embed.patch.w";
pub const PATCH_B: &str = "embed.patch.b";
pub const CLS: &str = "embed.cls";
pub const MOD: &str = "embed.mod";
pub const POS: &str = "embed.pos";

pub fn spectrum_name(m: Modality) -> alloc::string::String {
    format!("embed.spe.{}", m.tag())
}

/// What a token sequence describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeqKind {
    Modal(Modality),
    /// Batch-concatenated cross-modal sequence, `2N x D`.
    Cross,
}

/// Encoder state for one sequence: row 0 is CLS, row 1 is MOD, the rest are
/// patch tokens (for [`SeqKind::Cross`] the layout repeats at row `N`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub kind: SeqKind,
    pub tokens: Var,
}

/// Cuts a `C x H x W` image into non-overlapping square patches in raster
/// order. Each output row is one patch flattened channel-major, then by
/// row, then by column.
pub fn patchify(image: &Tensor, patch_size: usize) -> Result<Tensor> {
    let s = image.shape();
    if s.len() != 3 {
        return Err(Error::shape("patchify", s, &[0, 0, 0]));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    if patch_size == 0 || h % patch_size != 0 || w % patch_size != 0 {
        return Err(Error::Config(format!(
            "image {h}x{w} is not divisible into {patch_size}x{patch_size} patches"
        )));
    }
    let (gh, gw) = (h / patch_size, w / patch_size);
    let plen = c * patch_size * patch_size;
    let mut out = Vec::with_capacity(gh * gw * plen);
    for py in 0..gh {
        for px in 0..gw {
            for ch in 0..c {
                for y in 0..patch_size {
                    let base = ch * h * w + (py * patch_size + y) * w + px * patch_size;
                    out.extend_from_slice(&image.data()[base..base + patch_size]);
                }
            }
        }
    }
    Tensor::new(alloc::vec![gh * gw, plen], out)
}

/// Replicates a single-channel image to `channels` channels; images that
/// already have `channels` channels pass through.
pub fn to_channels(image: &Tensor, channels: usize) -> Result<Tensor> {
    let s = image.shape();
    if s.len() != 3 {
        return Err(Error::shape("to_channels", s, &[channels, 0, 0]));
    }
    if s[0] == channels {
        return Ok(image.clone());
    }
    if s[0] != 1 {
        return Err(Error::shape("to_channels", s, &[channels, s[1], s[2]]));
    }
    let mut data = Vec::with_capacity(channels * image.numel());
    for _ in 0..channels {
        data.extend_from_slice(image.data());
    }
    Tensor::new(alloc::vec![channels, s[1], s[2]], data)
}

/// Registers the tokenizer parameters. Only the spectrum tables of the
/// configured modalities exist.
pub fn init_params(
    store: &mut ParamStore,
    cfg: &ModelConfig,
    mut uniform: impl FnMut(&[usize]) -> Tensor,
) -> Result<()> {
    let (d, n) = (cfg.dim, cfg.seq_len());
    store.insert(PATCH_W, uniform(&[cfg.patch_len(), d]))?;
    store.insert(PATCH_B, Tensor::zeros(alloc::vec![d]))?;
    store.insert(CLS, uniform(&[1, d]))?;
    store.insert(MOD, uniform(&[1, d]))?;
    store.insert(POS, uniform(&[n, d]))?;
    for &m in &cfg.modalities {
        store.insert(spectrum_name(m), uniform(&[n, d]))?;
    }
    Ok(())
}

/// Builds the initial `N x D` sequence for one modal image.
pub fn embed(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &ModelConfig,
    image: &Tensor,
    modality: Modality,
) -> Result<TokenSequence> {
    cfg.modality_id(modality)?;
    let s = image.shape();
    if s.len() != 3 || s[1] != cfg.image_size || s[2] != cfg.image_size {
        return Err(Error::shape(
            "embed",
            s,
            &[cfg.channels, cfg.image_size, cfg.image_size],
        ));
    }
    let patches = patchify(&to_channels(image, cfg.channels)?, cfg.patch_size)?;
    let patches = g.constant(patches);
    let w = g.param(store, PATCH_W)?;
    let b = g.param(store, PATCH_B)?;
    let proj = g.matmul(patches, w)?;
    let proj = g.add_row(proj, b)?;
    let cls = g.param(store, CLS)?;
    let md = g.param(store, MOD)?;
    let tokens = g.concat_rows(&[cls, md, proj])?;
    let pos = g.param(store, POS)?;
    let spe = g.param(store, &spectrum_name(modality))?;
    let offset = g.add(pos, spe)?;
    let tokens = g.add(tokens, offset)?;
    Ok(TokenSequence {
        kind: SeqKind::Modal(modality),
        tokens,
    })
}
