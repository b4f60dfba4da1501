//! Presentation-attack-detection error rates.
//!
//! Decision rule everywhere: a sample is accepted as bonafide iff
//! `score >= threshold`. Thresholds are swept over the midpoints between
//! consecutive distinct scores plus `-inf` (accept all) and `+inf`
//! (reject all).

use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scored {
    pub score: f64,
    pub bonafide: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreSet {
    records: Vec<Scored>,
}

impl ScoreSet {
    pub fn new(records: Vec<Scored>) -> Result<Self> {
        if let Some(r) = records.iter().find(|r| !r.score.is_finite()) {
            return Err(Error::NonFinite(alloc::format!("score {}", r.score)));
        }
        Ok(ScoreSet { records })
    }

    /// From `(score, y_cls)` pairs, `y_cls = 1` for bonafide.
    pub fn from_pairs(pairs: &[(f64, u8)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(score, y)| Scored {
                    score,
                    bonafide: y == 1,
                })
                .collect(),
        )
    }

    pub fn records(&self) -> &[Scored] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn attacks(&self) -> usize {
        self.records.iter().filter(|r| !r.bonafide).count()
    }

    pub fn bonafide(&self) -> usize {
        self.records.iter().filter(|r| r.bonafide).count()
    }

    fn require_both(&self) -> Result<()> {
        if self.attacks() == 0 || self.bonafide() == 0 {
            return Err(Error::Contract(alloc::format!(
                "need both classes, got {} attack and {} bonafide samples",
                self.attacks(),
                self.bonafide()
            )));
        }
        Ok(())
    }

    /// `(attacks accepted, bonafide rejected)` at `threshold`.
    fn error_counts(&self, threshold: f64) -> (usize, usize) {
        self.records.iter().fold((0, 0), |(fa, fr), r| {
            let accept = r.score >= threshold;
            match (r.bonafide, accept) {
                (false, true) => (fa + 1, fr),
                (true, false) => (fa, fr + 1),
                _ => (fa, fr),
            }
        })
    }

    /// `(APCER, BPCER)` without the class check; empty classes give 0.
    fn rates(&self, threshold: f64) -> (f64, f64) {
        let (fa, fr) = self.error_counts(threshold);
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        (ratio(fa, self.attacks()), ratio(fr, self.bonafide()))
    }
}

/// Candidate thresholds in ascending order.
pub fn threshold_candidates(set: &ScoreSet) -> Vec<f64> {
    let mut scores: Vec<f64> = set.records.iter().map(|r| r.score).collect();
    scores.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    scores.dedup();
    let mut out = Vec::with_capacity(scores.len() + 1);
    out.push(f64::NEG_INFINITY);
    out.extend(scores.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    out.push(f64::INFINITY);
    out
}

/// Attack acceptance and bonafide rejection rates at `threshold`.
pub fn apcer_bpcer(set: &ScoreSet, threshold: f64) -> Result<(f64, f64)> {
    set.require_both()?;
    Ok(set.rates(threshold))
}

pub fn acer(apcer: f64, bpcer: f64) -> f64 {
    (apcer + bpcer) / 2.0
}

/// Threshold where acceptance and rejection errors are closest, with the
/// equal error rate `(FAR + FRR) / 2` there. Ties go to the lower threshold.
pub fn eer_threshold(dev: &ScoreSet) -> Result<(f64, f64)> {
    dev.require_both()?;
    let mut best: Option<(f64, f64, f64)> = None;
    for t in threshold_candidates(dev) {
        let (far, frr) = dev.rates(t);
        let gap = (far - frr).abs();
        if best.is_none_or(|(g, _, _)| gap < g) {
            best = Some((gap, t, (far + frr) / 2.0));
        }
    }
    let (_, t, eer) = best.expect("candidate list is never empty");
    Ok((t, eer))
}

/// Strictest threshold whose bonafide rejection rate on `dev` stays within
/// `target`; the largest such candidate minimises attack acceptance.
pub fn bpcer_at(dev: &ScoreSet, target: f64) -> Result<f64> {
    if dev.bonafide() == 0 {
        return Err(Error::Contract("no bonafide samples".into()));
    }
    if !(target >= 0.0) {
        return Err(Error::Contract(alloc::format!(
            "BPCER target {target} is unattainable; the lowest achievable BPCER is 0"
        )));
    }
    let best = threshold_candidates(dev)
        .into_iter()
        .rfind(|&t| dev.rates(t).1 <= target)
        .expect("-inf always meets a non-negative target");
    Ok(best)
}

/// Half total error rate `(FAR + FRR) / 2` at a threshold fixed beforehand.
pub fn hter(test: &ScoreSet, threshold: f64) -> Result<f64> {
    let (far, frr) = apcer_bpcer(test, threshold)?;
    Ok((far + frr) / 2.0)
}

/// Bonafide acceptance rate at the most permissive threshold whose attack
/// acceptance rate stays within `fpr_target`.
pub fn tpr_at_fpr(test: &ScoreSet, fpr_target: f64) -> Result<f64> {
    test.require_both()?;
    for t in threshold_candidates(test) {
        let (far, frr) = test.rates(t);
        if far <= fpr_target {
            return Ok(1.0 - frr);
        }
    }
    Ok(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdPolicy {
    Eer,
    BpcerTarget(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub apcer: f64,
    pub bpcer: f64,
    pub acer: f64,
    /// Equal error rate on the dev set.
    pub eer: f64,
    pub hter: f64,
    pub tpr_at_fpr: f64,
    pub threshold: f64,
}

impl MetricReport {
    /// `(key, value)` pairs in report order.
    pub fn entries(&self) -> [(&'static str, f64); 7] {
        [
            ("apcer", self.apcer),
            ("bpcer", self.bpcer),
            ("acer", self.acer),
            ("eer", self.eer),
            ("hter", self.hter),
            ("tpr_at_fpr", self.tpr_at_fpr),
            ("threshold", self.threshold),
        ]
    }
}

/// Derives the threshold on `dev` and reports error rates on `test`.
pub fn evaluate(dev: &ScoreSet, test: &ScoreSet, policy: ThresholdPolicy, fpr_target: f64) -> Result<MetricReport> {
    let (eer_t, eer) = eer_threshold(dev)?;
    let threshold = match policy {
        ThresholdPolicy::Eer => eer_t,
        ThresholdPolicy::BpcerTarget(b) => bpcer_at(dev, b)?,
    };
    let (apcer, bpcer) = apcer_bpcer(test, threshold)?;
    Ok(MetricReport {
        apcer,
        bpcer,
        acer: acer(apcer, bpcer),
        eer,
        hter: hter(test, threshold)?,
        tpr_at_fpr: tpr_at_fpr(test, fpr_target)?,
        threshold,
    })
}
