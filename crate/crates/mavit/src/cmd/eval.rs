use std::fmt::Write as _;
use std::path::Path;

use mavit_core::metrics::{apcer_bpcer, eer_threshold, evaluate, hter, ThresholdPolicy};
use mavit_core::synth::Split;
use mavit_core::{MaVit, Modality, PathScores, Sample};

use super::{create_dir, required, write_file, Failure, Outcome};
use crate::checkpoint_file;
use crate::manifest::{Manifest, ReadStats};
use crate::report::Report;
use crate::run_config::{ConfigFile, CrossEvalOptions, EvalOptions};
use crate::scoring::{format_modalities, parse_modalities, paths, score_all, score_set, PathKey};

pub const SCORES: &str = "scores.txt";
pub const REPORT: &str = "report.txt";
pub const DEFAULT_FPR: f64 = 1e-4;

pub fn parse_policy(s: &str) -> Result<ThresholdPolicy, Failure> {
    let bad = || Failure::Usage(format!("unknown policy `{s}` (expected eer or bpcer=<rate>)"));
    if s == "eer" {
        return Ok(ThresholdPolicy::Eer);
    }
    let rate: f64 = s.strip_prefix("bpcer=").ok_or_else(bad)?.parse().map_err(|_| bad())?;
    if !(0.0..=1.0).contains(&rate) {
        return Err(Failure::Usage(format!("bpcer target {rate} is outside [0, 1]")));
    }
    Ok(ThresholdPolicy::BpcerTarget(rate))
}

fn policy_name(p: ThresholdPolicy) -> String {
    match p {
        ThresholdPolicy::Eer => "eer".into(),
        ThresholdPolicy::BpcerTarget(r) => format!("bpcer={r}"),
    }
}

/// Test-time modalities, checked against what the model was trained on.
fn subset(model: &MaVit, flag: Option<&str>) -> Result<Vec<Modality>, Failure> {
    let trained = &model.config().modalities;
    let Some(list) = flag else {
        return Ok(trained.clone());
    };
    let chosen = parse_modalities(list)?;
    if chosen.is_empty() {
        return Err(Failure::Usage("--modalities is empty".into()));
    }
    for m in &chosen {
        if !trained.contains(m) {
            return Err(Failure::Usage(format!(
                "modality {m} was not trained (model has {})",
                format_modalities(trained)
            )));
        }
    }
    Ok(chosen)
}

fn load_model(path: &Path) -> Result<MaVit, Failure> {
    Ok(checkpoint_file::load(path)?.model)
}

fn scores_table(samples: &[Sample], scores: &[PathScores], keys: &[PathKey]) -> String {
    let mut out = String::from("# id y_cls");
    for k in keys {
        write!(out, " {k}").unwrap();
    }
    out.push('\n');
    for (s, p) in samples.iter().zip(scores) {
        write!(out, "{} {}", s.id, s.y_cls).unwrap();
        for k in keys {
            write!(out, " {}", k.pick(p).expect("path was scored")).unwrap();
        }
        out.push('\n');
    }
    out
}

fn finish(report: Report, out: Option<&Path>, extra: Option<(&str, String)>) -> Result<Outcome, Failure> {
    if let Some(dir) = out {
        create_dir(dir)?;
        if let Some((name, text)) = extra {
            write_file(&dir.join(name), &text)?;
        }
        write_file(&dir.join(REPORT), &report.to_text())?;
    }
    Ok(Outcome::ok(report))
}

pub fn run(flags: EvalOptions, file: &ConfigFile) -> Result<Outcome, Failure> {
    let o = flags.merge(file.eval.clone());
    let model = load_model(&required(o.checkpoint.clone(), "checkpoint")?)?;
    let data_dir = required(o.data.clone(), "data")?;
    let subset = subset(&model, o.modalities.as_deref())?;
    let policy = parse_policy(o.policy.as_deref().unwrap_or("eer"))?;
    let fpr = o.fpr.unwrap_or(DEFAULT_FPR);
    if !(0.0..=1.0).contains(&fpr) {
        return Err(Failure::Usage(format!("--fpr {fpr} is outside [0, 1]")));
    }

    let manifest = Manifest::read(&data_dir)?;
    let stats = ReadStats::default();
    let dev = manifest.load_split(Split::Dev, &subset, &stats)?;
    let test = manifest.load_split(Split::Test, &subset, &stats)?;
    let dev_scores = score_all(&model, &dev, &subset)?;
    let test_scores = score_all(&model, &test, &subset)?;
    let keys = paths(model.config(), &subset);

    let mut report = Report::new();
    report
        .set("variant", model.config().ablation.name())
        .set("modalities", format_modalities(&subset))
        .set("policy", policy_name(policy))
        .set("fpr_target", fpr)
        .set("dev_samples", dev.len())
        .set("test_samples", test.len());
    for m in Modality::ALL {
        report.set(format!("tensor_reads.{m}"), stats.reads(m));
    }
    for &key in &keys {
        let metrics = evaluate(
            &score_set(&dev_scores, &dev, key)?,
            &score_set(&test_scores, &test, key)?,
            policy,
            fpr,
        )?;
        let section = key.to_string();
        for (name, value) in metrics.entries() {
            report.set_in(&section, name, value);
        }
    }
    let table = scores_table(&test, &test_scores, &keys);
    finish(report, o.out.as_deref(), Some((SCORES, table)))
}

pub fn run_cross(flags: CrossEvalOptions, file: &ConfigFile) -> Result<Outcome, Failure> {
    let o = flags.merge(file.cross_eval.clone());
    let model = load_model(&required(o.checkpoint.clone(), "checkpoint")?)?;
    let home_dir = required(o.dev.clone(), "dev")?;
    let foreign_dir = required(o.test.clone(), "test")?;
    let subset = subset(&model, o.modalities.as_deref())?;

    let stats = ReadStats::default();
    let dev = Manifest::read(&home_dir)?.load_split(Split::Dev, &subset, &stats)?;
    let test = Manifest::read(&foreign_dir)?.load_split(Split::Test, &subset, &stats)?;
    let dev_scores = score_all(&model, &dev, &subset)?;
    let test_scores = score_all(&model, &test, &subset)?;

    let mut report = Report::new();
    report
        .set("variant", model.config().ablation.name())
        .set("modalities", format_modalities(&subset))
        .set("dev_samples", dev.len())
        .set("test_samples", test.len());
    for key in paths(model.config(), &subset) {
        let dev_set = score_set(&dev_scores, &dev, key)?;
        let test_set = score_set(&test_scores, &test, key)?;
        let (threshold, dev_eer) = eer_threshold(&dev_set)?;
        let (apcer, bpcer) = apcer_bpcer(&test_set, threshold)?;
        let section = key.to_string();
        report
            .set_in(&section, "threshold", threshold)
            .set_in(&section, "hter", hter(&test_set, threshold)?)
            .set_in(&section, "dev_eer", dev_eer)
            .set_in(&section, "apcer", apcer)
            .set_in(&section, "bpcer", bpcer);
    }
    finish(report, o.out.as_deref(), None)
}
