use std::fs;

use mavit::manifest::{export, load, Manifest, ReadStats};
use mavit::{pgm, tensor_file, IoError};
use mavit_core::synth::{generate, Split, SynthConfig};
use mavit_core::{Modality, Tensor};

fn small() -> SynthConfig {
    SynthConfig {
        train: 6,
        dev: 4,
        test: 4,
        image_size: 16,
        patch_size: 4,
        seed: 5,
        ..SynthConfig::default()
    }
}

#[test]
fn exported_dataset_loads_back_identically() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(&small()).unwrap();
    export(&data, dir.path()).unwrap();
    let back = load(dir.path()).unwrap();
    assert_eq!(back, data);
}

#[test]
fn tensor_file_round_trips_f32_values() {
    let t = Tensor::new(vec![2, 3], vec![0.0, 0.5, -1.25, 3.0, 1e-3_f32 as f64, 7.0]).unwrap();
    assert_eq!(tensor_file::decode(&tensor_file::encode(&t)).unwrap(), t);
}

#[test]
fn truncated_tensor_names_the_sample() {
    let dir = tempfile::tempdir().unwrap();
    export(&generate(&small()).unwrap(), dir.path()).unwrap();
    let victim = dir.path().join("dev/dev-00002.D.tensor");
    let bytes = fs::read(&victim).unwrap();
    fs::write(&victim, &bytes[..bytes.len() - 7]).unwrap();
    let m = Manifest::read(dir.path()).unwrap();
    let err = m.load_split(Split::Dev, &[Modality::Rgb, Modality::Depth], &ReadStats::default());
    match err {
        Err(IoError::Load { items, .. }) => {
            assert_eq!(items.len(), 1, "{items:?}");
            assert!(items[0].contains("dev-00002") && items[0].contains("D"), "{}", items[0]);
        }
        other => panic!("expected a load error, got {other:?}"),
    }
    // the RGB half of the same split is intact
    let rgb = m
        .load_split(Split::Dev, &[Modality::Rgb], &ReadStats::default())
        .unwrap();
    assert_eq!(rgb.len(), 4);
}

#[test]
fn manifest_problems_are_itemized() {
    let dir = tempfile::tempdir().unwrap();
    export(&generate(&small()).unwrap(), dir.path()).unwrap();
    let file = dir.path().join("manifest.toml");
    let text = fs::read_to_string(&file).unwrap();
    let broken = text
        .replacen("R = \"train/train-00001.R.tensor\"", "I = \"x\"", 1)
        .replacen("split = \"test\"", "split = \"holdout\"", 1);
    fs::write(&file, broken).unwrap();
    let Err(IoError::Load { items, .. }) = Manifest::read(dir.path()) else {
        panic!("manifest should be rejected");
    };
    assert!(
        items
            .iter()
            .any(|i| i.contains("train-00001") && i.contains("not listed")),
        "{items:?}"
    );
    assert!(
        items
            .iter()
            .any(|i| i.contains("train-00001") && i.contains("no R file")),
        "{items:?}"
    );
    assert!(items.iter().any(|i| i.contains("holdout")), "{items:?}");
}

#[test]
fn reads_are_counted_per_modality() {
    let dir = tempfile::tempdir().unwrap();
    export(&generate(&small()).unwrap(), dir.path()).unwrap();
    let stats = ReadStats::default();
    Manifest::read(dir.path())
        .unwrap()
        .load_split(Split::Test, &[Modality::Depth], &stats)
        .unwrap();
    assert_eq!(stats.reads(Modality::Depth), 4);
    assert_eq!(stats.reads(Modality::Rgb), 0);
}

#[test]
fn pgm_grid_has_one_pixel_per_patch() {
    let cells: Vec<bool> = (0..16).map(|i| i % 3 == 0).collect();
    let (w, h, px) = pgm::parse(&pgm::binary_grid(4, &cells)).unwrap();
    assert_eq!((w, h, px.len()), (4, 4, 16));
    assert_eq!(px.iter().filter(|&&p| p == 1).count(), 6);
}
