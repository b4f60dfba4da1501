//! Attention primitives.
//!
//! * [`msa`]: standard multi-head self-attention.
//! * [`mda`]: modal-disentangle attention. The MOD token scores every patch
//!   token; [`threshold_mask`] marks the smallest top-mass set of patches as
//!   modality-related and [`mask_select`] disconnects them from the CLS
//!   query before the CLS token aggregates the surviving patch values.
//! * [`cma`]: cross-modal attention, queries from one modality and
//!   keys/values from the other, through the self-attention projections.
//!
//! Masks are discrete and carry no gradient; gradients flow only through the
//! surviving attention entries.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{softmax, Graph, Var};
use crate::tensor::Tensor;

/// Query/key/value projections, each `D x D` (all heads side by side).
#[derive(Clone, Copy, Debug)]
pub struct QkvProj {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
}

/// Output projection `D x D` plus bias.
#[derive(Clone, Copy, Debug)]
pub struct OutProj {
    pub w: Var,
    pub b: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct MdaWeights {
    /// CLS query and patch key/value projections.
    pub cls: QkvProj,
    pub wq_mod: Var,
    pub wk_mod: Var,
    pub out: OutProj,
}

/// Per-head binary mask over the patch tokens; `true` marks a
/// modality-related token that the CLS query must not see.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskMatrix {
    heads: usize,
    patches: usize,
    bits: Vec<bool>,
}

impl MaskMatrix {
    /// Fails unless every head leaves at least one patch unmasked.
    pub fn new(heads: usize, patches: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != heads * patches {
            return Err(Error::shape("mask", &[heads, patches], &[bits.len()]));
        }
        let m = MaskMatrix { heads, patches, bits };
        for h in 0..heads {
            if m.row(h).iter().all(|&b| b) {
                return Err(Error::Contract(alloc::format!("mask head {h} hides every patch token")));
            }
        }
        Ok(m)
    }

    pub fn empty(heads: usize, patches: usize) -> Self {
        MaskMatrix {
            heads,
            patches,
            bits: vec![false; heads * patches],
        }
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn patches(&self) -> usize {
        self.patches
    }

    pub fn row(&self, head: usize) -> &[bool] {
        &self.bits[head * self.patches..(head + 1) * self.patches]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn masked_count(&self, head: usize) -> usize {
        self.row(head).iter().filter(|&&b| b).count()
    }
}

/// Indices ordered by descending weight, lower index first among ties.
pub fn descending_order(weights: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        weights[b]
            .partial_cmp(&weights[a])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Smallest set of entries, taken in descending weight order, whose
/// cumulative weight reaches `lambda`. `lambda >= 1` takes everything.
pub fn top_mass(weights: &[f64], lambda: f64) -> Vec<bool> {
    let mut selected = vec![false; weights.len()];
    if lambda >= 1.0 {
        selected.iter_mut().for_each(|s| *s = true);
        return selected;
    }
    let mut mass = 0.0;
    for idx in descending_order(weights) {
        if mass >= lambda {
            break;
        }
        selected[idx] = true;
        mass += weights[idx];
    }
    selected
}

/// Thresholds each row of a relevance map (`heads x n` pre-softmax scores)
/// into a modality-related mask keeping `lambda` of the softmax mass. If a
/// head would lose every token, its least relevant token is kept.
pub fn threshold_mask(map: &Tensor, lambda: f64) -> Result<MaskMatrix> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(alloc::format!("lambda {lambda} is outside [0, 1]")));
    }
    let (heads, n) = (map.rows(), map.cols());
    let mut bits = Vec::with_capacity(heads * n);
    for h in 0..heads {
        let w = softmax(map.row(h));
        let mut row = top_mass(&w, lambda);
        if row.iter().all(|&b| b) {
            let last = *descending_order(&w).last().expect("n > 0");
            row[last] = false;
        }
        bits.extend(row);
    }
    MaskMatrix::new(heads, n, bits)
}

/// Writes the large negative sentinel into masked entries of a `heads x n`
/// score map; everything else passes through.
pub fn mask_select(g: &mut Graph, map_cls: Var, mask: &MaskMatrix) -> Result<Var> {
    let shape = g.value(map_cls).shape().to_vec();
    if shape != [mask.heads(), mask.patches()] {
        return Err(Error::shape("mask_select", &shape, &[mask.heads(), mask.patches()]));
    }
    for h in 0..mask.heads() {
        if mask.masked_count(h) == mask.patches() {
            return Err(Error::Contract(alloc::format!("mask head {h} hides every patch token")));
        }
    }
    g.mask_fill(map_cls, mask.bits())
}

fn inv_sqrt_head_dim(dim: usize, heads: usize) -> f64 {
    1.0 / libm::sqrt((dim / heads) as f64)
}

fn check_heads(g: &Graph, z: Var, heads: usize) -> Result<(usize, usize)> {
    let s = g.value(z).shape();
    if s.len() != 2 || heads == 0 || !s[1].is_multiple_of(heads) {
        return Err(Error::shape("attention", s, &[heads]));
    }
    Ok((s[0], s[1]))
}

/// Multi-head attention before the output projection: queries from `zq`,
/// keys and values from `zkv`. Returns the heads concatenated, `rows(zq) x D`.
pub fn attend(g: &mut Graph, zq: Var, zkv: Var, proj: &QkvProj, heads: usize) -> Result<Var> {
    let (_, d) = check_heads(g, zq, heads)?;
    let (_, dkv) = check_heads(g, zkv, heads)?;
    if d != dkv {
        return Err(Error::shape("attend", g.value(zq).shape(), g.value(zkv).shape()));
    }
    let dh = d / heads;
    let q = g.matmul(zq, proj.wq)?;
    let k = g.matmul(zkv, proj.wk)?;
    let v = g.matmul(zkv, proj.wv)?;
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.cols(q, h * dh, dh)?;
        let kh = g.cols(k, h * dh, dh)?;
        let vh = g.cols(v, h * dh, dh)?;
        let kt = g.transpose(kh)?;
        let s = g.matmul(qh, kt)?;
        let s = g.scale(s, inv_sqrt_head_dim(d, heads))?;
        let a = g.softmax_rows(s)?;
        outs.push(g.matmul(a, vh)?);
    }
    g.concat_cols(&outs)
}

pub fn project(g: &mut Graph, x: Var, out: &OutProj) -> Result<Var> {
    let y = g.matmul(x, out.w)?;
    g.add_row(y, out.b)
}

/// Standard multi-head self-attention including the output projection.
pub fn msa(g: &mut Graph, z: Var, proj: &QkvProj, out: &OutProj, heads: usize) -> Result<Var> {
    let a = attend(g, z, z, proj, heads)?;
    project(g, a, out)
}

/// Cross-modal attention. The first output attends from `z_r` into `z_d`,
/// the second from `z_d` into `z_r`; both are pre-projection.
pub fn cma(g: &mut Graph, z_r: Var, z_d: Var, proj: &QkvProj, heads: usize) -> Result<(Var, Var)> {
    let (sr, sd) = (g.value(z_r).shape(), g.value(z_d).shape());
    if sr != sd {
        return Err(Error::shape("cma", sr, sd));
    }
    let rd = attend(g, z_r, z_d, proj, heads)?;
    let dr = attend(g, z_d, z_r, proj, heads)?;
    Ok((rd, dr))
}

/// Scaled scores of one query row against the patch tokens, per head:
/// `heads x n`.
fn query_scores(g: &mut Graph, z: Var, query_row: usize, wq: Var, wk: Var, heads: usize) -> Result<(Var, Var)> {
    let (rows, d) = check_heads(g, z, heads)?;
    if rows < 3 {
        return Err(Error::shape("patch attention", g.value(z).shape(), &[3, d]));
    }
    let n = rows - 2;
    let dh = d / heads;
    let zq = g.rows(z, query_row, 1)?;
    let zpat = g.rows(z, 2, n)?;
    let q = g.matmul(zq, wq)?;
    let k = g.matmul(zpat, wk)?;
    let mut scores = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.cols(q, h * dh, dh)?;
        let kh = g.cols(k, h * dh, dh)?;
        let kt = g.transpose(kh)?;
        let s = g.matmul(qh, kt)?;
        scores.push(g.scale(s, inv_sqrt_head_dim(d, heads))?);
    }
    Ok((g.concat_rows(&scores)?, zpat))
}

/// Pre-softmax relevance of every patch token to the MOD query, `heads x n`.
pub fn modal_relevance(g: &mut Graph, z: Var, wq_mod: Var, wk_mod: Var, heads: usize) -> Result<Var> {
    Ok(query_scores(g, z, 1, wq_mod, wk_mod, heads)?.0)
}

/// Output of one modal-disentangle attention call.
#[derive(Clone, Debug)]
pub struct MdaOutput {
    /// CLS update, `1 x D`, after the output projection.
    pub update: Var,
    pub mask: MaskMatrix,
    /// CLS attention weights over patches after masking, `heads x n`.
    pub cls_weights: Var,
    /// CLS scores over patches before masking, `heads x n`.
    pub cls_scores: Tensor,
}

fn cls_patch_attention(
    g: &mut Graph,
    z: Var,
    w: &MdaWeights,
    mask: Option<&MaskMatrix>,
    heads: usize,
) -> Result<(Var, Var, Tensor)> {
    let (map_cls, zpat) = query_scores(g, z, 0, w.cls.wq, w.cls.wk, heads)?;
    let raw = g.value(map_cls).clone();
    let map_cls = match mask {
        Some(m) => mask_select(g, map_cls, m)?,
        None => map_cls,
    };
    let a = g.softmax_rows(map_cls)?;
    let d = g.value(z).cols();
    let dh = d / heads;
    let v = g.matmul(zpat, w.cls.wv)?;
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let ah = g.rows(a, h, 1)?;
        let vh = g.cols(v, h * dh, dh)?;
        outs.push(g.matmul(ah, vh)?);
    }
    let cat = g.concat_cols(&outs)?;
    Ok((project(g, cat, &w.out)?, a, raw))
}

/// Modal-disentangle attention on a full token sequence (`N x D`). Only a
/// CLS update is produced.
pub fn mda(g: &mut Graph, z: Var, w: &MdaWeights, lambda: f64, heads: usize) -> Result<MdaOutput> {
    let map_mod = modal_relevance(g, z, w.wq_mod, w.wk_mod, heads)?;
    let mask = threshold_mask(g.value(map_mod), lambda)?;
    let (update, cls_weights, cls_scores) = cls_patch_attention(g, z, w, Some(&mask), heads)?;
    Ok(MdaOutput {
        update,
        mask,
        cls_weights,
        cls_scores,
    })
}

/// CLS-query attention over all patch tokens with nothing masked.
pub fn cls_attention(g: &mut Graph, z: Var, w: &MdaWeights, heads: usize) -> Result<Var> {
    Ok(cls_patch_attention(g, z, w, None, heads)?.0)
}
