//! End-to-end model: tokenizer, encoder and heads over one parameter store.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Modality, ModelConfig};
use crate::encoder::{self, EncoderState};
use crate::error::{Error, Result};
use crate::graph::{sigmoid, Graph};
use crate::heads::{self, HeadVars, JointLoss, LossTerm};
use crate::params::{GradStore, ParamStore};
use crate::tensor::Tensor;
use crate::tokenize::{self, TokenSequence};

/// Source of per-modality images. Evaluation only asks for the modalities
/// it was told to use.
pub trait ModalImages {
    fn image(&self, m: Modality) -> Option<&Tensor>;
}

impl ModalImages for BTreeMap<Modality, Tensor> {
    fn image(&self, m: Modality) -> Option<&Tensor> {
        self.get(&m)
    }
}

/// One capture: an image per modality and its labels. The modality label of
/// each image is implied by the model's modality order.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub images: BTreeMap<Modality, Tensor>,
    /// 1 for bonafide, 0 for attack.
    pub y_cls: u8,
    /// Patch index of the planted spoof cue, when known.
    pub cue_patch: Option<usize>,
}

impl ModalImages for Sample {
    fn image(&self, m: Modality) -> Option<&Tensor> {
        self.images.get(&m)
    }
}

/// Liveness probabilities for each evaluated path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathScores {
    pub modal: Vec<(Modality, f64)>,
    pub cross: Option<f64>,
}

impl PathScores {
    pub fn modal(&self, m: Modality) -> Option<f64> {
        self.modal.iter().find(|(x, _)| *x == m).map(|&(_, s)| s)
    }

    pub fn len(&self) -> usize {
        self.modal.len() + usize::from(self.cross.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Encoder state and bound head weights of one forward pass.
pub struct Forward {
    pub state: EncoderState,
    pub head: HeadVars,
}

/// Loss value of one sample with its named terms.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub terms: Vec<(LossTerm, f64)>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaVit {
    config: ModelConfig,
    params: ParamStore,
}

impl MaVit {
    /// Fresh model; every embedding and projection is drawn from
    /// `U(-1/sqrt(D), 1/sqrt(D))`, norms start at identity, biases at zero.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / libm::sqrt(config.dim as f64);
        let mut uniform = |shape: &[usize]| Tensor::from_fn(shape.to_vec(), |_| (2.0 * rng.gen::<f64>() - 1.0) * scale);
        let mut params = ParamStore::new();
        tokenize::init_params(&mut params, &config, &mut uniform)?;
        encoder::init_params(&mut params, &config, &mut uniform)?;
        heads::init_params(&mut params, &config, &mut uniform)?;
        Ok(MaVit { config, params })
    }

    /// Rebuilds a model from stored parameters, checking that names,
    /// aliases and shapes match what `config` implies.
    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let template = MaVit::new(config.clone(), 0)?;
        let expected: Vec<(&str, &[usize])> = template.params.iter().map(|(k, t)| (k, t.shape())).collect();
        let got: Vec<(&str, &[usize])> = params.iter().map(|(k, t)| (k, t.shape())).collect();
        if expected != got {
            return Err(Error::Format(
                "parameter names or shapes do not match the configuration".into(),
            ));
        }
        if template.params.aliases().ne(params.aliases()) {
            return Err(Error::Format("alias table does not match the configuration".into()));
        }
        Ok(MaVit { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Tokenizes and encodes the selected modalities. Only the selected
    /// images are read and only their spectrum embeddings are bound.
    pub fn forward<S: ModalImages + ?Sized>(&self, g: &mut Graph, source: &S, subset: &[Modality]) -> Result<Forward> {
        forward_with(&self.config, &self.params, g, source, subset)
    }

    /// Joint training loss of one paired sample recorded into `g`.
    pub fn loss(&self, g: &mut Graph, sample: &Sample) -> Result<JointLoss> {
        loss_with(&self.config, &self.params, g, sample)
    }

    pub fn forward_train(&self, sample: &Sample) -> Result<LossBreakdown> {
        let mut g = Graph::new();
        let loss = self.loss(&mut g, sample)?;
        Ok(breakdown(&g, &loss))
    }

    /// Adds `scale * dLoss/dParam` of one sample into `grads` and returns
    /// the sample's loss breakdown.
    pub fn accumulate_grads(&self, sample: &Sample, grads: &mut GradStore, scale: f64) -> Result<LossBreakdown> {
        let mut g = Graph::new();
        let loss = self.loss(&mut g, sample)?;
        let out = breakdown(&g, &loss);
        if !out.total.is_finite() {
            return Err(Error::NonFinite(alloc::format!(
                "loss of sample `{}` is {}",
                sample.id,
                out.total
            )));
        }
        g.backward(loss.total)?;
        for (name, v) in g.bound_params() {
            if let Some(grad) = g.grad(v) {
                grads.accumulate(name, grad, scale);
            }
        }
        Ok(out)
    }

    /// Liveness probabilities for the given modalities: one per modality
    /// and, with two modalities and the cross-modal path enabled, one for
    /// the cross-modal sequence.
    pub fn infer<S: ModalImages + ?Sized>(&self, source: &S, subset: &[Modality]) -> Result<PathScores> {
        let mut g = Graph::new();
        let fwd = self.forward(&mut g, source, subset)?;
        let mut modal = Vec::with_capacity(fwd.state.modal.len());
        for seq in &fwd.state.modal {
            let tokenize::SeqKind::Modal(m) = seq.kind else {
                continue;
            };
            let logit = heads::liveness_logit(&mut g, seq, &fwd.head)?;
            modal.push((m, sigmoid(g.value(logit).item()?)));
        }
        let cross = match &fwd.state.cross {
            Some(seq) => {
                let logit = heads::liveness_logit(&mut g, seq, &fwd.head)?;
                Some(sigmoid(g.value(logit).item()?))
            }
            None => None,
        };
        Ok(PathScores { modal, cross })
    }

    /// Scalar parameters, each shared tensor counted once.
    pub fn count_params(&self) -> usize {
        self.params.num_scalars()
    }

    /// Closed-form parameter count for a configuration.
    pub fn param_formula(cfg: &ModelConfig) -> usize {
        let (d, h, n, p) = (cfg.dim, cfg.mlp_hidden(), cfg.seq_len(), cfg.patch_len());
        let m = cfg.modalities.len();
        let tokenizer = p * d + d + 2 * d + n * d + m * n * d;
        let stb = 4 * d * d + 2 * d * h + 6 * d + h;
        let mda = if cfg.ablation.mda { 6 * d * d + 3 * d } else { 0 };
        let head = 2 * d + 2 * (d + 1);
        tokenizer + cfg.blocks * (stb + mda) + head
    }

    /// Closed-form multiply-accumulate count of one forward pass over every
    /// configured modality (matrix products only).
    pub fn flops_formula(cfg: &ModelConfig) -> u64 {
        let (d, h, seq, n, p) = (
            cfg.dim as u64,
            cfg.mlp_hidden() as u64,
            cfg.seq_len() as u64,
            cfg.num_patches() as u64,
            cfg.patch_len() as u64,
        );
        let m = cfg.modalities.len() as u64;
        let cross = cfg.cross_modal();
        let stb = 4 * seq * d * d + 2 * seq * seq * d + 2 * seq * d * h;
        let mda = if cfg.ablation.mda {
            3 * d * d + 3 * n * d * d + 3 * n * d
        } else {
            0
        };
        let cma = if cross {
            8 * seq * d * d + 4 * seq * seq * d + 4 * seq * d * h
        } else {
            0
        };
        let heads = 2 * d * m + if cross { 2 * d } else { 0 };
        m * n * p * d + cfg.blocks as u64 * (m * (stb + mda) + cma) + heads
    }
}

fn check_subset(cfg: &ModelConfig, subset: &[Modality]) -> Result<Vec<Modality>> {
    if subset.is_empty() {
        return Err(Error::Contract("no modality selected".into()));
    }
    for &m in subset {
        cfg.modality_id(m)?;
    }
    // configuration order fixes which sequence plays the r/d role
    let ordered: Vec<Modality> = cfg.modalities.iter().copied().filter(|m| subset.contains(m)).collect();
    if ordered.len() != subset.len() {
        return Err(Error::Contract("modality selected twice".into()));
    }
    Ok(ordered)
}

/// [`MaVit::forward`] over a borrowed configuration and parameter store.
pub fn forward_with<S: ModalImages + ?Sized>(
    cfg: &ModelConfig,
    params: &ParamStore,
    g: &mut Graph,
    source: &S,
    subset: &[Modality],
) -> Result<Forward> {
    let ordered = check_subset(cfg, subset)?;
    let mut seqs: Vec<TokenSequence> = Vec::with_capacity(ordered.len());
    for m in ordered {
        let image = source
            .image(m)
            .ok_or_else(|| Error::Contract(alloc::format!("no {m} image supplied")))?;
        seqs.push(tokenize::embed(g, params, cfg, image, m)?);
    }
    let state = encoder::encode(g, params, cfg, &seqs)?;
    let head = HeadVars::bind(g, params)?;
    Ok(Forward { state, head })
}

/// [`MaVit::loss`] over a borrowed configuration and parameter store.
pub fn loss_with(cfg: &ModelConfig, params: &ParamStore, g: &mut Graph, sample: &Sample) -> Result<JointLoss> {
    for &m in &cfg.modalities {
        if sample.image(m).is_none() {
            return Err(Error::Contract(alloc::format!(
                "sample `{}` has no {m} image; training needs paired data",
                sample.id
            )));
        }
    }
    let fwd = forward_with(cfg, params, g, sample, &cfg.modalities)?;
    heads::total_loss(g, cfg, &fwd.state, &fwd.head, sample.y_cls)
}

fn breakdown(g: &Graph, loss: &JointLoss) -> LossBreakdown {
    LossBreakdown {
        total: g.value(loss.total).data()[0],
        terms: loss.terms.iter().map(|&(t, v)| (t, g.value(v).data()[0])).collect(),
        warnings: loss.warnings.clone(),
    }
}
