//! Scoring whole splits and turning path scores into metric inputs.

use std::fmt;

use mavit_core::metrics::ScoreSet;
use mavit_core::{MaVit, ModalImages, Modality, ModelConfig, PathScores, Result, Sample};
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathKey {
    Modal(Modality),
    Cross,
}

impl fmt::Display for PathKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathKey::Modal(m) => write!(f, "{m}"),
            PathKey::Cross => f.write_str("cross"),
        }
    }
}

impl PathKey {
    pub fn pick(self, s: &PathScores) -> Option<f64> {
        match self {
            PathKey::Modal(m) => s.modal(m),
            PathKey::Cross => s.cross,
        }
    }
}

/// Output paths for a test-time modality subset, in configuration order.
pub fn paths(cfg: &ModelConfig, subset: &[Modality]) -> Vec<PathKey> {
    let mut out: Vec<PathKey> = cfg
        .modalities
        .iter()
        .filter(|m| subset.contains(m))
        .map(|&m| PathKey::Modal(m))
        .collect();
    if out.len() == 2 && cfg.cross_modal() {
        out.push(PathKey::Cross);
    }
    out
}

/// Scores every sample; results keep the input order.
pub fn score_all<S: ModalImages + Sync>(model: &MaVit, samples: &[S], subset: &[Modality]) -> Result<Vec<PathScores>> {
    samples.par_iter().map(|s| model.infer(s, subset)).collect()
}

pub fn score_set(scores: &[PathScores], samples: &[Sample], key: PathKey) -> Result<ScoreSet> {
    let pairs: Vec<(f64, u8)> = scores
        .iter()
        .zip(samples)
        .map(|(p, s)| (key.pick(p).expect("path was scored"), s.y_cls))
        .collect();
    ScoreSet::from_pairs(&pairs)
}

/// Fraction of samples on the right side of 0.5.
pub fn accuracy(scores: &[PathScores], samples: &[Sample], key: PathKey) -> f64 {
    let right = scores
        .iter()
        .zip(samples)
        .filter(|(p, s)| (key.pick(p).expect("path was scored") >= 0.5) == (s.y_cls == 1))
        .count();
    right as f64 / samples.len().max(1) as f64
}

/// Parses `R,D`-style lists.
pub fn parse_modalities(list: &str) -> Result<Vec<Modality>> {
    list.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(str::parse)
        .collect()
}

pub fn format_modalities(ms: &[Modality]) -> String {
    ms.iter().map(|m| m.tag()).collect::<Vec<_>>().join(",")
}
