//! Mini-batch Adam training over paired samples.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::model::{MaVit, Sample};
use crate::optim::{Adam, AdamConfig};
use crate::params::GradStore;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<u64>,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 8,
            epochs: 50,
            max_steps: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    /// Mean joint loss over the batch, before the update.
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub trace: Vec<StepRecord>,
}

impl TrainReport {
    pub fn steps(&self) -> u64 {
        self.trace.last().map_or(0, |r| r.step)
    }
}

/// Training stopped early. The model still holds the parameters of the
/// last completed step.
#[derive(Debug)]
pub struct TrainAbort {
    pub error: Error,
    pub report: TrainReport,
}

pub fn train(model: &mut MaVit, data: &[Sample], cfg: &TrainConfig) -> Result<TrainReport, TrainAbort> {
    train_with(model, data, cfg, |_| {})
}

/// [`train`] with a callback after every step.
pub fn train_with(
    model: &mut MaVit,
    data: &[Sample],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<TrainReport, TrainAbort> {
    let mut report = TrainReport::default();
    if data.is_empty() || cfg.batch_size == 0 {
        return Err(TrainAbort {
            error: Error::Contract("training needs a non-empty dataset and batch size".into()),
            report,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = Adam::new(cfg.adam);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grads = GradStore::new();
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| step >= m) {
                return Ok(report);
            }
            grads.clear();
            let scale = 1.0 / batch.len() as f64;
            let mut loss = 0.0;
            for &i in batch {
                match model.accumulate_grads(&data[i], &mut grads, scale) {
                    Ok(b) => loss += b.total * scale,
                    Err(error) => return Err(TrainAbort { error, report }),
                }
            }
            if !loss.is_finite() || grads.iter().any(|(_, g)| g.iter().any(|v| !v.is_finite())) {
                return Err(TrainAbort {
                    error: Error::NonFinite(alloc::format!("loss {loss} at step {}", step + 1)),
                    report,
                });
            }
            if let Err(error) = adam.step(model.params_mut(), &grads) {
                return Err(TrainAbort { error, report });
            }
            step += 1;
            let rec = StepRecord { step, epoch, loss };
            on_step(&rec);
            report.trace.push(rec);
        }
    }
    Ok(report)
}
