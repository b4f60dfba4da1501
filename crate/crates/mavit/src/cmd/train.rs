use std::fmt::Write as _;

use mavit_core::checkpoint::Checkpoint;
use mavit_core::optim::AdamConfig;
use mavit_core::synth::Split;
use mavit_core::train::{train_with, TrainConfig};
use mavit_core::{Ablation, Error, MaVit, ModelConfig};

use super::{create_dir, required, write_file, Failure, Outcome, EXIT_NUMERIC};
use crate::checkpoint_file;
use crate::manifest::{Manifest, ReadStats};
use crate::report::Report;
use crate::run_config::{echo, resolve_seed, ConfigFile, TrainOptions};
use crate::scoring::{accuracy, format_modalities, parse_modalities, paths, score_all};

pub const CHECKPOINT: &str = "model.ckpt";
pub const TRACE: &str = "loss_trace.txt";
pub const REPORT: &str = "train_report.txt";

pub fn parse_ablation(s: &str) -> Result<Ablation, Failure> {
    match s {
        "none" | "full" => Ok(Ablation::FULL),
        "matb" | "vit" => Ok(Ablation::VIT),
        "mda" => Ok(Ablation { mda: false, cma: true }),
        "cma" => Ok(Ablation { mda: true, cma: false }),
        other => Err(Failure::Usage(format!(
            "unknown ablation `{other}` (expected none, matb, mda or cma)"
        ))),
    }
}

fn ablation_flag(a: Ablation) -> &'static str {
    match (a.mda, a.cma) {
        (true, true) => "none",
        (false, false) => "matb",
        (false, true) => "mda",
        (true, false) => "cma",
    }
}

pub fn run(flags: TrainOptions, file: &ConfigFile) -> Result<Outcome, Failure> {
    let o = flags.merge(file.train.clone());
    let data_dir = required(o.data.clone(), "data")?;
    let out = required(o.out.clone(), "out")?;
    let seed = resolve_seed(o.seed, file.seed).map_err(Failure::Usage)?;
    let manifest = Manifest::read(&data_dir)?;
    let modalities = match &o.modalities {
        Some(list) => parse_modalities(list)?,
        None => manifest.modalities.clone(),
    };
    let desk = ModelConfig::desk();
    let cfg = ModelConfig {
        image_size: manifest.image_size,
        patch_size: o.patch_size.unwrap_or(desk.patch_size),
        channels: desk.channels,
        dim: o.dim.unwrap_or(desk.dim),
        heads: o.heads.unwrap_or(desk.heads),
        blocks: o.blocks.unwrap_or(desk.blocks),
        mlp_ratio: o.mlp_ratio.unwrap_or(desk.mlp_ratio),
        lambda: o.lambda.unwrap_or(desk.lambda),
        modalities,
        ablation: parse_ablation(o.ablate.as_deref().unwrap_or("none"))?,
    };
    cfg.validate()?;
    let defaults = TrainConfig::default();
    let tc = TrainConfig {
        adam: AdamConfig {
            lr: o.lr.unwrap_or(defaults.adam.lr),
            ..defaults.adam
        },
        batch_size: o.batch_size.unwrap_or(defaults.batch_size),
        epochs: o.epochs.unwrap_or(defaults.epochs),
        max_steps: o.max_steps,
        seed,
    };
    if tc.batch_size == 0 {
        return Err(Failure::Usage("--batch-size must be positive".into()));
    }
    let samples = manifest.load_split(Split::Train, &cfg.modalities, &ReadStats::default())?;
    if samples.is_empty() {
        return Err(Failure::Usage(format!(
            "{} has no training samples",
            data_dir.display()
        )));
    }

    create_dir(&out)?;
    let resolved = TrainOptions {
        data: Some(data_dir),
        out: None,
        seed: Some(seed),
        epochs: Some(tc.epochs),
        max_steps: tc.max_steps,
        batch_size: Some(tc.batch_size),
        lr: Some(tc.adam.lr),
        ablate: Some(ablation_flag(cfg.ablation).to_string()),
        dim: Some(cfg.dim),
        heads: Some(cfg.heads),
        blocks: Some(cfg.blocks),
        lambda: Some(cfg.lambda),
        mlp_ratio: Some(cfg.mlp_ratio),
        patch_size: Some(cfg.patch_size),
        modalities: Some(format_modalities(&cfg.modalities)),
    };
    echo(&out, "train", &resolved)?;

    let mut model = MaVit::new(cfg.clone(), seed)?;
    let mut trace = String::new();
    let result = train_with(&mut model, &samples, &tc, |r| {
        writeln!(trace, "{} {} {}", r.step, r.epoch, r.loss).unwrap();
        if r.step % 100 == 0 {
            eprintln!("step {} epoch {} loss {:.6}", r.step, r.epoch, r.loss);
        }
    });
    write_file(&out.join(TRACE), &trace)?;
    let (steps, abort) = match result {
        Ok(rep) => (rep.steps(), None),
        Err(a) => (a.report.steps(), Some(a.error)),
    };
    checkpoint_file::save(
        &out.join(CHECKPOINT),
        &Checkpoint {
            model: model.clone(),
            seed,
            step: steps,
        },
    )?;

    let mut report = Report::new();
    report
        .set("variant", cfg.ablation.name())
        .set("modalities", format_modalities(&cfg.modalities))
        .set("seed", seed)
        .set("steps", steps)
        .set("params", model.count_params())
        .set("macs", MaVit::flops_formula(&cfg));
    if let Some(last) = trace.lines().last() {
        let loss = last.rsplit(' ').next().unwrap_or_default();
        report.set("final_loss", loss.to_string());
    }
    if let Some(err) = abort {
        report.set("status", "aborted").set("error", err.to_string());
        write_file(&out.join(REPORT), &report.to_text())?;
        return match err {
            Error::NonFinite(_) => Ok(Outcome {
                report,
                exit_code: EXIT_NUMERIC,
            }),
            other => Err(other.into()),
        };
    }
    report.set("status", "ok");
    let scores = score_all(&model, &samples, &cfg.modalities)?;
    for key in paths(&cfg, &cfg.modalities) {
        report.set(format!("train_accuracy.{key}"), accuracy(&scores, &samples, key));
    }
    write_file(&out.join(REPORT), &report.to_text())?;
    Ok(Outcome::ok(report))
}
