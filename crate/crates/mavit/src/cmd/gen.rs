use mavit_core::synth::{generate, Split, SynthConfig};

use super::{required, Failure, Outcome};
use crate::manifest::export;
use crate::report::Report;
use crate::run_config::{echo, resolve_seed, ConfigFile, GenOptions};
use crate::scoring::{format_modalities, parse_modalities};

pub fn run(flags: GenOptions, file: &ConfigFile) -> Result<Outcome, Failure> {
    let o = flags.merge(file.gen.clone());
    let out = required(o.out.clone(), "out")?;
    let seed = resolve_seed(o.seed, file.seed).map_err(Failure::Usage)?;
    let samples = o.samples.unwrap_or(256);
    let defaults = SynthConfig::default();
    let cfg = SynthConfig {
        train: samples,
        dev: o.dev.unwrap_or((samples / 4).max(2)),
        test: o.test.unwrap_or((samples / 4).max(2)),
        image_size: o.image_size.unwrap_or(defaults.image_size),
        patch_size: o.patch_size.unwrap_or(defaults.patch_size),
        modalities: match &o.modalities {
            Some(list) => parse_modalities(list)?,
            None => defaults.modalities.clone(),
        },
        live_ratio: o.live_ratio.unwrap_or(defaults.live_ratio),
        cue_strength: o.cue_strength.unwrap_or(defaults.cue_strength),
        nuisance_strength: o.nuisance_strength.unwrap_or(defaults.nuisance_strength),
        domain_shift: o.domain_shift.unwrap_or(defaults.domain_shift),
        seed,
    };
    let data = generate(&cfg)?;
    export(&data, &out)?;
    let resolved = GenOptions {
        out: None,
        seed: Some(seed),
        samples: Some(cfg.train),
        dev: Some(cfg.dev),
        test: Some(cfg.test),
        image_size: Some(cfg.image_size),
        patch_size: Some(cfg.patch_size),
        live_ratio: Some(cfg.live_ratio),
        cue_strength: Some(cfg.cue_strength),
        nuisance_strength: Some(cfg.nuisance_strength),
        domain_shift: Some(cfg.domain_shift),
        modalities: Some(format_modalities(&cfg.modalities)),
    };
    echo(&out, "gen", &resolved)?;

    let mut report = Report::new();
    report
        .set("seed", seed)
        .set("modalities", format_modalities(&cfg.modalities))
        .set("image_size", cfg.image_size);
    for split in Split::ALL {
        let s = data.split(split);
        report.set_in(split.name(), "samples", s.len()).set_in(
            split.name(),
            "bonafide",
            s.iter().filter(|x| x.y_cls == 1).count(),
        );
    }
    Ok(Outcome::ok(report))
}
