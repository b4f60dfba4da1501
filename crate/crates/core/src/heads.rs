//! Liveness and modality heads shared by every sequence, and the joint loss.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::config::{Modality, ModelConfig};
use crate::encoder::{EncoderState, LayerNormVars};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::tokenize::{SeqKind, TokenSequence};

pub const LN_G: &str = "head.ln.g";
pub const LN_B: &str = "head.ln.b";
pub const CLS_W: &str = "head.cls.w";
pub const CLS_B: &str = "head.cls.b";
pub const MOD_W: &str = "head.mod.w";
pub const MOD_B: &str = "head.mod.b";

pub fn init_params(
    store: &mut ParamStore,
    cfg: &ModelConfig,
    mut uniform: impl FnMut(&[usize]) -> Tensor,
) -> Result<()> {
    let d = cfg.dim;
    store.insert(LN_G, Tensor::filled(alloc::vec![d], 1.0))?;
    store.insert(LN_B, Tensor::zeros(alloc::vec![d]))?;
    store.insert(CLS_W, uniform(&[d, 1]))?;
    store.insert(CLS_B, Tensor::zeros(alloc::vec![1]))?;
    store.insert(MOD_W, uniform(&[d, 1]))?;
    store.insert(MOD_B, Tensor::zeros(alloc::vec![1]))?;
    Ok(())
}

#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    pub ln: LayerNormVars,
    pub cls_w: Var,
    pub cls_b: Var,
    pub mod_w: Var,
    pub mod_b: Var,
}

impl HeadVars {
    pub fn bind(g: &mut Graph, store: &ParamStore) -> Result<Self> {
        Ok(HeadVars {
            ln: LayerNormVars {
                gain: g.param(store, LN_G)?,
                bias: g.param(store, LN_B)?,
            },
            cls_w: g.param(store, CLS_W)?,
            cls_b: g.param(store, CLS_B)?,
            mod_w: g.param(store, MOD_W)?,
            mod_b: g.param(store, MOD_B)?,
        })
    }
}

fn linear_on_row(g: &mut Graph, z: Var, row: usize, ln: &LayerNormVars, w: Var, b: Var) -> Result<Var> {
    let r = g.rows(z, row, 1)?;
    let n = ln.apply(g, r)?;
    let y = g.matmul(n, w)?;
    g.add_row(y, b)
}

/// Liveness logit from the CLS row. The cross-modal sequence has a CLS row
/// in each half (rows `0` and `N`); their logits are averaged.
pub fn liveness_logit(g: &mut Graph, seq: &TokenSequence, head: &HeadVars) -> Result<Var> {
    match seq.kind {
        SeqKind::Modal(_) => linear_on_row(g, seq.tokens, 0, &head.ln, head.cls_w, head.cls_b),
        SeqKind::Cross => {
            let rows = g.value(seq.tokens).rows();
            if !rows.is_multiple_of(2) {
                return Err(Error::shape("liveness_logit", g.value(seq.tokens).shape(), &[]));
            }
            let a = linear_on_row(g, seq.tokens, 0, &head.ln, head.cls_w, head.cls_b)?;
            let b = linear_on_row(g, seq.tokens, rows / 2, &head.ln, head.cls_w, head.cls_b)?;
            let s = g.add(a, b)?;
            g.scale(s, 0.5)
        }
    }
}

/// Modality logit from the MOD row. Undefined for the cross-modal sequence.
pub fn modality_logit(g: &mut Graph, seq: &TokenSequence, head: &HeadVars) -> Result<Var> {
    match seq.kind {
        SeqKind::Modal(_) => linear_on_row(g, seq.tokens, 1, &head.ln, head.mod_w, head.mod_b),
        SeqKind::Cross => Err(Error::Contract(
            "the cross-modal sequence has no modality target".into(),
        )),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum LossTerm {
    Liveness(Modality),
    CrossLiveness,
    Modality(Modality),
}

impl fmt::Display for LossTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossTerm::Liveness(m) => write!(f, "cls.{m}"),
            LossTerm::CrossLiveness => f.write_str("cls.cross"),
            LossTerm::Modality(m) => write!(f, "mod.{m}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct JointLoss {
    pub total: Var,
    pub terms: Vec<(LossTerm, Var)>,
    pub warnings: Vec<String>,
}

/// Sum of the liveness BCE of every modal sequence, the liveness BCE of the
/// cross-modal sequence (counted once) and the modality BCE of every modal
/// sequence. Terms are added in the order they are listed.
pub fn total_loss(
    g: &mut Graph,
    cfg: &ModelConfig,
    state: &EncoderState,
    head: &HeadVars,
    y_cls: u8,
) -> Result<JointLoss> {
    if y_cls > 1 {
        return Err(Error::Contract(alloc::format!("liveness label {y_cls} is not 0/1")));
    }
    let y = f64::from(y_cls);
    let mut terms = Vec::new();
    let mut warnings = Vec::new();
    for seq in &state.modal {
        let SeqKind::Modal(m) = seq.kind else { continue };
        let logit = liveness_logit(g, seq, head)?;
        terms.push((LossTerm::Liveness(m), g.bce_with_logit(logit, y)?));
    }
    match &state.cross {
        Some(seq) => {
            let logit = liveness_logit(g, seq, head)?;
            terms.push((LossTerm::CrossLiveness, g.bce_with_logit(logit, y)?));
        }
        None if cfg.cross_modal() => {
            warnings.push(String::from(
                "cross-modal liveness term omitted: only one modality supplied",
            ));
        }
        None => {}
    }
    for seq in &state.modal {
        let SeqKind::Modal(m) = seq.kind else { continue };
        let target = cfg.modality_id(m)?.spectrum_index as f64;
        let logit = modality_logit(g, seq, head)?;
        terms.push((LossTerm::Modality(m), g.bce_with_logit(logit, target)?));
    }
    let mut total = terms[0].1;
    for &(_, v) in &terms[1..] {
        total = g.add(total, v)?;
    }
    Ok(JointLoss { total, terms, warnings })
}
