use mavit_core::gradcheck::{grad_check, GradCheckOptions as CheckOptions};
use mavit_core::model::loss_with;
use mavit_core::synth::{generate, Split, SynthConfig};
use mavit_core::{MaVit, ModelConfig};

use super::{create_dir, write_file, Failure, Outcome, EXIT_CHECK};
use crate::report::Report;
use crate::run_config::{resolve_seed, ConfigFile, GradCheckOptions};

pub const REPORT: &str = "grad_check.txt";

/// Checks the full model on one synthetic sample. `corrupt_backward` swaps
/// in a wrong backward rule so the check can be seen to fail.
pub fn run(flags: GradCheckOptions, corrupt_backward: bool, file: &ConfigFile) -> Result<Outcome, Failure> {
    let o = flags.merge(file.grad_check.clone());
    let seed = resolve_seed(o.seed, file.seed).map_err(Failure::Usage)?;
    let tiny = ModelConfig::tiny();
    let cfg = ModelConfig {
        image_size: o.image_size.unwrap_or(tiny.image_size),
        patch_size: o.patch_size.unwrap_or(tiny.patch_size),
        dim: o.dim.unwrap_or(tiny.dim),
        heads: o.heads.unwrap_or(tiny.heads),
        blocks: o.blocks.unwrap_or(tiny.blocks),
        lambda: o.lambda.unwrap_or(tiny.lambda),
        ..tiny
    };
    cfg.validate()?;
    let defaults = CheckOptions::default();
    let opts = CheckOptions {
        step: o.step.unwrap_or(defaults.step),
        tolerance: o.tolerance.unwrap_or(defaults.tolerance),
        corrupt_backward,
        ..defaults
    };
    if !(opts.step > 0.0 && opts.tolerance > 0.0) {
        return Err(Failure::Usage("--step and --tolerance must be positive".into()));
    }

    let data = generate(&SynthConfig {
        train: 2,
        dev: 2,
        test: 2,
        image_size: cfg.image_size,
        patch_size: cfg.patch_size,
        modalities: cfg.modalities.clone(),
        seed,
        ..SynthConfig::default()
    })?;
    let sample = &data.split(Split::Train)[0];
    let model = MaVit::new(cfg.clone(), seed)?;
    let result = grad_check(model.params(), |g, p| Ok(loss_with(&cfg, p, g, sample)?.total), &opts)?;

    let mut report = Report::new();
    report
        .set("passed", result.passed())
        .set("tolerance", opts.tolerance)
        .set("step", opts.step)
        .set("params", result.params.len())
        .set("max_rel_error", result.max_rel_error());
    let failed: Vec<&str> = result.failures().map(|p| p.name.as_str()).collect();
    if !failed.is_empty() {
        report.set("failed", failed.join(","));
    }
    for p in &result.params {
        report.set_in("rel_error", p.name.clone(), p.max_rel_error);
    }
    if let Some(dir) = &o.out {
        create_dir(dir)?;
        write_file(&dir.join(REPORT), &report.to_text())?;
    }
    let exit_code = if result.passed() { 0 } else { EXIT_CHECK };
    Ok(Outcome { report, exit_code })
}
