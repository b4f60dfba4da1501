use std::collections::BTreeMap;

use mavit_core::attention::top_mass;
use mavit_core::model::forward_with;
use mavit_core::synth::Split;
use mavit_core::{Graph, Modality, Sample};

use super::{create_dir, required, write_file, Failure, Outcome};
use crate::checkpoint_file;
use crate::manifest::{Manifest, ReadStats};
use crate::pgm;
use crate::report::Report;
use crate::run_config::{ConfigFile, MaskOptions};

/// The three grids written per modality and head.
pub const ROWS: [&str; 3] = ["modality", "cls", "informative"];

fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Grids of one sample at one block, keyed by (modality, head).
struct SampleMasks {
    grids: BTreeMap<(Modality, usize), [Vec<bool>; 3]>,
}

fn sample_masks(
    cfg: &mavit_core::ModelConfig,
    params: &mavit_core::params::ParamStore,
    sample: &Sample,
    layer: usize,
) -> Result<SampleMasks, Failure> {
    let mut g = Graph::new();
    let fwd = forward_with(cfg, params, &mut g, sample, &cfg.modalities)?;
    let mut grids = BTreeMap::new();
    for (m, out) in &fwd.state.trace[layer].mda {
        let weights = g.value(out.cls_weights);
        for h in 0..cfg.heads {
            let modality = out.mask.row(h).to_vec();
            let cls = top_mass(&softmax(out.cls_scores.row(h)), cfg.lambda);
            let informative = top_mass(weights.row(h), cfg.lambda);
            grids.insert((*m, h), [modality, cls, informative]);
        }
    }
    Ok(SampleMasks { grids })
}

/// Overlap of a selected set with the single cue patch.
pub fn cue_iou(selected: &[bool], cue: usize) -> f64 {
    let k = selected.iter().filter(|&&b| b).count();
    if selected[cue] {
        1.0 / k as f64
    } else {
        0.0
    }
}

pub fn run(flags: MaskOptions, file: &ConfigFile) -> Result<Outcome, Failure> {
    let o = flags.merge(file.dump_masks.clone());
    let ck = checkpoint_file::load(&required(o.checkpoint.clone(), "checkpoint")?)?;
    let data_dir = required(o.data.clone(), "data")?;
    let out = required(o.out.clone(), "out")?;
    let mut cfg = ck.model.config().clone();
    if !cfg.ablation.mda {
        return Err(Failure::Usage(format!(
            "model variant {} has no modal-disentangle attention",
            cfg.ablation.name()
        )));
    }
    let layer = o.layer.unwrap_or(cfg.blocks);
    if layer == 0 || layer > cfg.blocks {
        return Err(Failure::Usage(format!("--layer {layer} is outside 1..={}", cfg.blocks)));
    }
    if let Some(l) = o.lambda {
        cfg.lambda = l;
        cfg.validate()?;
    }
    let split: Option<Split> = o.split.as_deref().map(str::parse).transpose()?;

    let manifest = Manifest::read(&data_dir)?;
    let stats = ReadStats::default();
    let samples: Vec<Sample> = match &o.sample {
        Some(id) => {
            let rec = manifest
                .records
                .iter()
                .find(|r| &r.id == id && split.is_none_or(|s| s == r.split))
                .ok_or_else(|| Failure::Usage(format!("no sample `{id}` in {}", data_dir.display())))?;
            manifest
                .load_split(rec.split, &cfg.modalities, &stats)?
                .into_iter()
                .filter(|s| &s.id == id)
                .collect()
        }
        None => manifest
            .load_split(split.unwrap_or(Split::Test), &cfg.modalities, &stats)?
            .into_iter()
            .filter(|s| s.cue_patch.is_some())
            .collect(),
    };
    if samples.is_empty() {
        return Err(Failure::Usage("no samples with a planted cue to dump".into()));
    }

    create_dir(&out)?;
    let side = cfg.grid();
    let n = cfg.num_patches();
    let mut iou: BTreeMap<(Modality, usize), (f64, usize)> = BTreeMap::new();
    let mut files = 0usize;
    for sample in &samples {
        let masks = sample_masks(&cfg, ck.model.params(), sample, layer - 1)?;
        for (&(m, h), rows) in &masks.grids {
            for (name, cells) in ROWS.iter().zip(rows) {
                let path = out.join(format!("{}_L{layer}_{m}_h{h}_{name}.pgm", sample.id));
                write_file(&path, &pgm::binary_grid(side, cells))?;
                files += 1;
            }
            if let Some(cue) = sample.cue_patch {
                let e = iou.entry((m, h)).or_default();
                e.0 += cue_iou(&rows[2], cue);
                e.1 += 1;
            }
        }
    }

    let mut report = Report::new();
    report
        .set("layer", layer)
        .set("lambda", cfg.lambda)
        .set("samples", samples.len())
        .set("files", files)
        .set("patches", n);
    if !iou.is_empty() {
        let (sum, count) = iou.values().fold((0.0, 0), |a, v| (a.0 + v.0, a.1 + v.1));
        report
            .set("cue_samples", iou.values().next().map_or(0, |v| v.1))
            .set("mean_iou", sum / count as f64)
            .set("random_baseline", 1.0 / n as f64);
        for ((m, h), (s, c)) in &iou {
            report.set_in("iou", format!("{m}.h{h}"), s / *c as f64);
        }
    }
    Ok(Outcome::ok(report))
}
