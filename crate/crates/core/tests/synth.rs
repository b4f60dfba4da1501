use std::collections::BTreeSet;

use mavit_core::synth::{generate, live_count, Split, SynthConfig};
use mavit_core::{Modality, Sample};

/// Largest per-cell checkerboard correlation of the first channel, and the
/// cell where it occurs.
fn checker_energy(s: &Sample, m: Modality, p: usize) -> (usize, f64) {
    let img = &s.images[&m];
    let n = img.shape()[2];
    let grid = n / p;
    let mut best = (0, f64::MIN);
    for cell in 0..grid * grid {
        let (r0, c0) = ((cell / grid) * p, (cell % grid) * p);
        let mut acc = 0.0;
        for i in 0..p {
            for j in 0..p {
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * img.data()[(r0 + i) * n + c0 + j];
            }
        }
        let e = (acc / (p * p) as f64).abs();
        if e > best.1 {
            best = (cell, e);
        }
    }
    best
}

fn hand_rule_accuracy(cfg: &SynthConfig) -> f64 {
    let data = generate(cfg).unwrap();
    let mut right = 0;
    let mut total = 0;
    for split in Split::ALL {
        for s in data.split(split) {
            let (_, e) = checker_energy(s, Modality::Rgb, cfg.patch_size);
            let predicted_attack = e > 0.15;
            right += usize::from(predicted_attack == (s.y_cls == 0));
            total += 1;
        }
    }
    right as f64 / total as f64
}

#[test]
fn hand_rule_separates_classes_at_full_cue() {
    let cfg = SynthConfig {
        train: 600,
        dev: 200,
        test: 200,
        ..SynthConfig::default()
    };
    let acc = hand_rule_accuracy(&cfg);
    assert!(acc >= 0.99, "hand rule accuracy {acc}");
}

#[test]
fn hand_rule_locates_the_cue_in_every_modality() {
    let data = generate(&SynthConfig::default()).unwrap();
    for s in data.split(Split::Train).iter().filter(|s| s.y_cls == 0) {
        for m in [Modality::Rgb, Modality::Depth] {
            assert_eq!(Some(checker_energy(s, m, 8).0), s.cue_patch, "{} {m}", s.id);
        }
    }
}

#[test]
fn no_cue_means_no_signal() {
    let cfg = SynthConfig {
        cue_strength: 0.0,
        train: 400,
        ..SynthConfig::default()
    };
    let acc = hand_rule_accuracy(&cfg);
    assert!((acc - 0.5).abs() < 0.1, "accuracy {acc}");
}

#[test]
fn generation_is_bit_identical_for_a_seed() {
    let cfg = SynthConfig::default();
    assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
    let other = generate(&SynthConfig { seed: 8, ..cfg }).unwrap();
    assert_ne!(generate(&SynthConfig::default()).unwrap(), other);
}

#[test]
fn splits_are_disjoint_and_balanced() {
    let cfg = SynthConfig {
        train: 101,
        dev: 33,
        test: 20,
        live_ratio: 0.3,
        ..SynthConfig::default()
    };
    let data = generate(&cfg).unwrap();
    let mut ids = BTreeSet::new();
    for split in Split::ALL {
        let samples = data.split(split);
        assert_eq!(samples.len(), cfg.count(split));
        for s in samples {
            assert!(ids.insert(s.id.clone()), "duplicate id {}", s.id);
        }
        let live = samples.iter().filter(|s| s.y_cls == 1).count();
        let expected = cfg.count(split) as f64 * cfg.live_ratio;
        assert!((live as f64 - expected).abs() <= 1.0);
        assert_eq!(live, live_count(cfg.count(split), cfg.live_ratio));
    }
    // dev and test come from different streams
    assert_ne!(data.split(Split::Dev)[0].images, data.split(Split::Test)[0].images);
}

#[test]
fn image_shapes_follow_modalities() {
    let cfg = SynthConfig {
        modalities: vec![Modality::Rgb, Modality::Depth, Modality::Ir],
        train: 4,
        ..SynthConfig::default()
    };
    let data = generate(&cfg).unwrap();
    let s = &data.split(Split::Train)[0];
    assert_eq!(s.images[&Modality::Rgb].shape(), &[3, 32, 32]);
    assert_eq!(s.images[&Modality::Depth].shape(), &[1, 32, 32]);
    assert_eq!(s.images[&Modality::Ir].shape(), &[1, 32, 32]);
}
