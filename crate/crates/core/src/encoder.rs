//! Transformer encoder: `K` blocks, each a standard pre-norm block (STB)
//! followed by the modality-agnostic block (MATB).
//!
//! Per block `k`, for every modal sequence `z`:
//!
//! ```text
//! z'   = z + MSA(LN1(z));  z' = z' + MLP(LN2(z'))         (STB)
//! z    = z' with CLS row += MDA(LN_mda(z'))                (MATB, MDA)
//! ```
//!
//! and, when two modalities are present, from the previous block's modal
//! sequences:
//!
//! ```text
//! y    = Wo [CMA(LN1(z_r), LN1(z_d)) ; CMA(LN1(z_d), LN1(z_r))] (+ z_rd, k > 1)
//! z_rd = y + MLP(LN2(y))
//! ```
//!
//! The cross-modal path reuses the block's LN1, attention projections, LN2
//! and MLP through parameter aliases, so it adds no parameters.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::attention::{self, MdaOutput, MdaWeights, OutProj, QkvProj};
use crate::config::{Modality, ModelConfig};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::tokenize::{SeqKind, TokenSequence};

fn pname(block: usize, suffix: &str) -> String {
    format!("block{block}.{suffix}")
}

const STB_PARAMS: [&str; 13] = [
    "ln1.g", "ln1.b", "msa.wq", "msa.wk", "msa.wv", "msa.wo", "msa.bo", "ln2.g", "ln2.b", "mlp.w1", "mlp.b1", "mlp.w2",
    "mlp.b2",
];

const MDA_PARAMS: [&str; 9] = [
    "mda.ln.g",
    "mda.ln.b",
    "mda.wq",
    "mda.wk",
    "mda.wv",
    "mda.wq_mod",
    "mda.wk_mod",
    "mda.wo",
    "mda.bo",
];

/// `(alias, target)` pairs wiring the cross-modal path onto the STB weights.
const CMA_ALIASES: [(&str, &str); 13] = [
    ("cma.ln.g", "ln1.g"),
    ("cma.ln.b", "ln1.b"),
    ("cma.wq", "msa.wq"),
    ("cma.wk", "msa.wk"),
    ("cma.wv", "msa.wv"),
    ("cma.wo", "msa.wo"),
    ("cma.bo", "msa.bo"),
    ("cma.ln2.g", "ln2.g"),
    ("cma.ln2.b", "ln2.b"),
    ("cma.mlp.w1", "mlp.w1"),
    ("cma.mlp.b1", "mlp.b1"),
    ("cma.mlp.w2", "mlp.w2"),
    ("cma.mlp.b2", "mlp.b2"),
];

pub fn init_params(
    store: &mut ParamStore,
    cfg: &ModelConfig,
    mut uniform: impl FnMut(&[usize]) -> Tensor,
) -> Result<()> {
    let (d, hid) = (cfg.dim, cfg.mlp_hidden());
    let ones = || Tensor::filled(alloc::vec![d], 1.0);
    let zeros = |n: usize| Tensor::zeros(alloc::vec![n]);
    for k in 0..cfg.blocks {
        for name in STB_PARAMS {
            let t = match name {
                "ln1.g" | "ln2.g" => ones(),
                "ln1.b" | "ln2.b" | "msa.bo" | "mlp.b2" => zeros(d),
                "mlp.b1" => zeros(hid),
                "mlp.w1" => uniform(&[d, hid]),
                "mlp.w2" => uniform(&[hid, d]),
                _ => uniform(&[d, d]),
            };
            store.insert(pname(k, name), t)?;
        }
        if cfg.ablation.mda {
            for name in MDA_PARAMS {
                let t = match name {
                    "mda.ln.g" => ones(),
                    "mda.ln.b" | "mda.bo" => zeros(d),
                    _ => uniform(&[d, d]),
                };
                store.insert(pname(k, name), t)?;
            }
        }
        if cfg.ablation.cma {
            for (alias, target) in CMA_ALIASES {
                store.alias(pname(k, alias), &pname(k, target))?;
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNormVars {
    pub gain: Var,
    pub bias: Var,
}

impl LayerNormVars {
    pub fn apply(&self, g: &mut Graph, x: Var) -> Result<Var> {
        g.layernorm(x, self.gain, self.bias)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MlpVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl MlpVars {
    pub fn apply(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let h = g.matmul(x, self.w1)?;
        let h = g.add_row(h, self.b1)?;
        let h = g.gelu(h)?;
        let y = g.matmul(h, self.w2)?;
        g.add_row(y, self.b2)
    }
}

/// Standard block weights; also the weights of the cross-modal path when
/// bound through the `cma.*` aliases.
#[derive(Clone, Copy, Debug)]
pub struct StbVars {
    pub ln1: LayerNormVars,
    pub proj: QkvProj,
    pub out: OutProj,
    pub ln2: LayerNormVars,
    pub mlp: MlpVars,
}

impl StbVars {
    pub fn bind(g: &mut Graph, store: &ParamStore, block: usize) -> Result<Self> {
        Self::bind_with(g, store, block, ["ln1", "msa", "ln2", "mlp"])
    }

    /// Binds the cross-modal weights by their alias names.
    pub fn bind_cma(g: &mut Graph, store: &ParamStore, block: usize) -> Result<Self> {
        Self::bind_with(g, store, block, ["cma.ln", "cma", "cma.ln2", "cma.mlp"])
    }

    fn bind_with(g: &mut Graph, store: &ParamStore, k: usize, prefix: [&str; 4]) -> Result<Self> {
        let mut p = |group: &str, leaf: &str| g.param(store, &pname(k, &format!("{group}.{leaf}")));
        Ok(StbVars {
            ln1: LayerNormVars {
                gain: p(prefix[0], "g")?,
                bias: p(prefix[0], "b")?,
            },
            proj: QkvProj {
                wq: p(prefix[1], "wq")?,
                wk: p(prefix[1], "wk")?,
                wv: p(prefix[1], "wv")?,
            },
            out: OutProj {
                w: p(prefix[1], "wo")?,
                b: p(prefix[1], "bo")?,
            },
            ln2: LayerNormVars {
                gain: p(prefix[2], "g")?,
                bias: p(prefix[2], "b")?,
            },
            mlp: MlpVars {
                w1: p(prefix[3], "w1")?,
                b1: p(prefix[3], "b1")?,
                w2: p(prefix[3], "w2")?,
                b2: p(prefix[3], "b2")?,
            },
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MdaVars {
    pub ln: LayerNormVars,
    pub weights: MdaWeights,
}

impl MdaVars {
    pub fn bind(g: &mut Graph, store: &ParamStore, k: usize) -> Result<Self> {
        let mut p = |leaf: &str| g.param(store, &pname(k, &format!("mda.{leaf}")));
        Ok(MdaVars {
            ln: LayerNormVars {
                gain: p("ln.g")?,
                bias: p("ln.b")?,
            },
            weights: MdaWeights {
                cls: QkvProj {
                    wq: p("wq")?,
                    wk: p("wk")?,
                    wv: p("wv")?,
                },
                wq_mod: p("wq_mod")?,
                wk_mod: p("wk_mod")?,
                out: OutProj {
                    w: p("wo")?,
                    b: p("bo")?,
                },
            },
        })
    }
}

/// Pre-norm residual self-attention followed by pre-norm residual MLP.
pub fn stb_forward(g: &mut Graph, z: Var, w: &StbVars, heads: usize) -> Result<Var> {
    let n = w.ln1.apply(g, z)?;
    let a = attention::msa(g, n, &w.proj, &w.out, heads)?;
    let z = g.add(z, a)?;
    let n = w.ln2.apply(g, z)?;
    let m = w.mlp.apply(g, n)?;
    g.add(z, m)
}

/// Adds the modal-disentangle update to the CLS row; MOD and patch rows are
/// copied through unchanged.
pub fn matb_mda_forward(g: &mut Graph, z: Var, w: &MdaVars, lambda: f64, heads: usize) -> Result<(Var, MdaOutput)> {
    let rows = g.value(z).rows();
    let n = w.ln.apply(g, z)?;
    let out = attention::mda(g, n, &w.weights, lambda, heads)?;
    let cls = g.rows(z, 0, 1)?;
    let cls = g.add(cls, out.update)?;
    let rest = g.rows(z, 1, rows - 1)?;
    Ok((g.concat_rows(&[cls, rest])?, out))
}

/// Cross-modal update from the previous block's modal sequences. The two
/// attention directions are stacked along the batch (row) axis into
/// `2N x D`. `z_rd_prev` is `None` in the first block, which therefore has
/// no residual.
pub fn matb_cma_forward(
    g: &mut Graph,
    z_r: Var,
    z_d: Var,
    z_rd_prev: Option<Var>,
    w: &StbVars,
    heads: usize,
) -> Result<Var> {
    let nr = w.ln1.apply(g, z_r)?;
    let nd = w.ln1.apply(g, z_d)?;
    let (rd, dr) = attention::cma(g, nr, nd, &w.proj, heads)?;
    let cat = g.concat_rows(&[rd, dr])?;
    let mut y = attention::project(g, cat, &w.out)?;
    if let Some(prev) = z_rd_prev {
        y = g.add(y, prev)?;
    }
    let n = w.ln2.apply(g, y)?;
    let m = w.mlp.apply(g, n)?;
    g.add(y, m)
}

/// Masks and attention produced by the MDA of one block.
#[derive(Clone, Debug)]
pub struct BlockTrace {
    pub mda: Vec<(Modality, MdaOutput)>,
}

#[derive(Clone, Debug)]
pub struct EncoderState {
    pub modal: Vec<TokenSequence>,
    pub cross: Option<TokenSequence>,
    pub trace: Vec<BlockTrace>,
}

impl EncoderState {
    pub fn sequence(&self, m: Modality) -> Option<Var> {
        self.modal
            .iter()
            .find(|s| s.kind == SeqKind::Modal(m))
            .map(|s| s.tokens)
    }
}

/// Runs all blocks over one or two modal sequences. The cross-modal
/// sequence is produced only when two sequences are given and the
/// configuration keeps the cross-modal path.
pub fn encode(g: &mut Graph, store: &ParamStore, cfg: &ModelConfig, inputs: &[TokenSequence]) -> Result<EncoderState> {
    if inputs.is_empty() || inputs.len() > 2 {
        return Err(Error::Contract(format!(
            "encode takes one or two modal sequences, got {}",
            inputs.len()
        )));
    }
    if inputs.iter().any(|s| s.kind == SeqKind::Cross) {
        return Err(Error::Contract("encode takes modal sequences only".into()));
    }
    let cross = cfg.ablation.cma && inputs.len() == 2;
    let mut modal: Vec<TokenSequence> = inputs.to_vec();
    let mut z_rd: Option<Var> = None;
    let mut trace = Vec::with_capacity(cfg.blocks);
    for k in 0..cfg.blocks {
        let stb = StbVars::bind(g, store, k)?;
        let prev: Vec<Var> = modal.iter().map(|s| s.tokens).collect();
        let mut block = BlockTrace { mda: Vec::new() };
        for seq in modal.iter_mut() {
            let mut z = stb_forward(g, seq.tokens, &stb, cfg.heads)?;
            if cfg.ablation.mda {
                let w = MdaVars::bind(g, store, k)?;
                let (z2, out) = matb_mda_forward(g, z, &w, cfg.lambda, cfg.heads)?;
                z = z2;
                if let SeqKind::Modal(m) = seq.kind {
                    block.mda.push((m, out));
                }
            }
            seq.tokens = z;
        }
        if cross {
            let w = StbVars::bind_cma(g, store, k)?;
            z_rd = Some(matb_cma_forward(g, prev[0], prev[1], z_rd, &w, cfg.heads)?);
        }
        trace.push(block);
    }
    Ok(EncoderState {
        modal,
        cross: z_rd.map(|tokens| TokenSequence {
            kind: SeqKind::Cross,
            tokens,
        }),
        trace,
    })
}
