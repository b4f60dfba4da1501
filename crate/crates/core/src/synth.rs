//! Seeded synthetic face presentation-attack data.
//!
//! Every image is a smooth face-like blob with modality-specific nuisance
//! on top. Bonafide captures carry a faint horizontal line texture in every
//! modality; attacks carry a checkerboard in one patch-aligned cell, placed
//! identically in every modality. Pixel values are clamped to `[0, 1]` and
//! rounded to 32-bit floats so that they survive the on-disk format exactly.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Modality;
use crate::error::{Error, Result};
use crate::model::Sample;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Split::Train => 11,
            Split::Dev => 12,
            Split::Test => 13,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown split `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub image_size: usize,
    /// Cell size of the spoof cue; matches the model's patch size.
    pub patch_size: usize,
    pub modalities: Vec<Modality>,
    /// Fraction of bonafide samples in every split.
    pub live_ratio: f64,
    pub cue_strength: f64,
    pub nuisance_strength: f64,
    /// Appearance shift for foreign-domain sets; 0 is the home domain.
    pub domain_shift: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            train: 256,
            dev: 64,
            test: 64,
            image_size: 32,
            patch_size: 8,
            modalities: alloc::vec![Modality::Rgb, Modality::Depth],
            live_ratio: 0.5,
            cue_strength: 1.0,
            nuisance_strength: 1.0,
            domain_shift: 0.0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("synthetic data: {msg}")));
        if self.patch_size == 0 || self.image_size == 0 || !self.image_size.is_multiple_of(self.patch_size) {
            return bad("image size must be a positive multiple of the patch size");
        }
        if !self.patch_size.is_multiple_of(2) {
            return bad("patch size must be even");
        }
        if self.modalities.is_empty() {
            return bad("no modality selected");
        }
        if !(0.0..=1.0).contains(&self.live_ratio) {
            return bad("live ratio must lie in [0, 1]");
        }
        for (name, v) in [
            ("cue strength", self.cue_strength),
            ("nuisance strength", self.nuisance_strength),
            ("domain shift", self.domain_shift),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Dev => self.dev,
            Split::Test => self.test,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub modalities: Vec<Modality>,
    pub image_size: usize,
    pub splits: BTreeMap<Split, Vec<Sample>>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[Sample] {
        self.splits.get(&split).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.splits.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Number of bonafide samples in a split of `count`.
pub fn live_count(count: usize, live_ratio: f64) -> usize {
    libm::round(count as f64 * live_ratio) as usize
}

pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut splits = BTreeMap::new();
    for split in Split::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(split.stream());
        let count = cfg.count(split);
        let live = live_count(count, cfg.live_ratio);
        let mut labels: Vec<u8> = (0..count).map(|i| u8::from(i < live)).collect();
        labels.shuffle(&mut rng);
        let samples = labels
            .into_iter()
            .enumerate()
            .map(|(i, y)| sample(cfg, &mut rng, format!("{}-{i:05}", split.name()), y))
            .collect();
        splits.insert(split, samples);
    }
    Ok(Dataset {
        modalities: cfg.modalities.clone(),
        image_size: cfg.image_size,
        splits,
    })
}

struct Face {
    cx: f64,
    cy: f64,
    radius: f64,
    tint: [f64; 3],
}

fn sample(cfg: &SynthConfig, rng: &mut ChaCha8Rng, id: alloc::string::String, y_cls: u8) -> Sample {
    let s = cfg.image_size as f64;
    let face = Face {
        cx: s * rng.gen_range(0.4..0.6),
        cy: s * rng.gen_range(0.4..0.6),
        radius: s * rng.gen_range(0.25..0.4),
        tint: [
            rng.gen_range(0.7..1.0),
            rng.gen_range(0.5..0.8),
            rng.gen_range(0.4..0.7),
        ],
    };
    let grid = cfg.image_size / cfg.patch_size;
    let cue_patch = (y_cls == 0).then(|| rng.gen_range(0..grid * grid));
    let line_phase = rng.gen_range(0..2usize);
    let mut images = BTreeMap::new();
    for &m in &cfg.modalities {
        let mut img = base_image(cfg, rng, &face, m);
        let c = m.native_channels();
        let hw = cfg.image_size * cfg.image_size;
        for ch in 0..c {
            let plane = &mut img[ch * hw..(ch + 1) * hw];
            match cue_patch {
                Some(p) => plant_checkerboard(cfg, plane, p),
                None => plant_lines(cfg, plane, line_phase),
            }
        }
        for v in img.iter_mut() {
            *v = f64::from(v.clamp(0.0, 1.0) as f32);
        }
        let t =
            Tensor::new(alloc::vec![c, cfg.image_size, cfg.image_size], img).expect("generator shapes are consistent");
        images.insert(m, t);
    }
    Sample {
        id,
        images,
        y_cls,
        cue_patch,
    }
}

fn blob(face: &Face, x: f64, y: f64) -> f64 {
    let dx = (x - face.cx) / face.radius;
    let dy = (y - face.cy) / (1.25 * face.radius);
    libm::exp(-(dx * dx + dy * dy))
}

fn base_image(cfg: &SynthConfig, rng: &mut ChaCha8Rng, face: &Face, m: Modality) -> Vec<f64> {
    let n = cfg.image_size;
    let s = n as f64;
    let a = 0.15 * cfg.nuisance_strength;
    let shift = cfg.domain_shift;
    let contrast = 0.5 * (1.0 - 0.4 * shift.min(1.0));
    let offset = 0.2 + 0.15 * shift;
    let mut out = Vec::with_capacity(m.native_channels() * n * n);
    match m {
        Modality::Rgb => {
            // illumination gradient and a low-frequency colour wave
            let gx = rng.gen_range(-1.0..1.0);
            let gy = rng.gen_range(-1.0..1.0);
            let freq = rng.gen_range(1.0..3.0) * core::f64::consts::TAU / s;
            let phase = rng.gen_range(0.0..core::f64::consts::TAU);
            for ch in 0..3 {
                for i in 0..n {
                    for j in 0..n {
                        let (x, y) = (j as f64 + 0.5, i as f64 + 0.5);
                        let light = a * (gx * (x / s - 0.5) + gy * (y / s - 0.5));
                        let wave = a * libm::sin(freq * (x + y) + phase + ch as f64);
                        out.push(offset + contrast * face.tint[ch] * blob(face, x, y) + light + wave);
                    }
                }
            }
        }
        Modality::Depth => {
            // sensor speckle over a depth profile
            for i in 0..n {
                for j in 0..n {
                    let (x, y) = (j as f64 + 0.5, i as f64 + 0.5);
                    let speckle = 0.3 * a * rng.gen_range(-1.0..1.0);
                    out.push(offset + contrast * libm::sqrt(blob(face, x, y)) + speckle);
                }
            }
        }
        Modality::Ir => {
            // vertical banding from the emitter
            let freq = rng.gen_range(2.0..4.0) * core::f64::consts::TAU / s;
            let phase = rng.gen_range(0.0..core::f64::consts::TAU);
            for i in 0..n {
                for j in 0..n {
                    let (x, y) = (j as f64 + 0.5, i as f64 + 0.5);
                    let band = a * libm::sin(freq * x + phase);
                    out.push(offset + 0.8 * contrast * blob(face, x, y) + band);
                }
            }
        }
    }
    out
}

fn plant_checkerboard(cfg: &SynthConfig, plane: &mut [f64], patch: usize) {
    let (n, p) = (cfg.image_size, cfg.patch_size);
    let grid = n / p;
    let (r0, c0) = ((patch / grid) * p, (patch % grid) * p);
    let amp = 0.4 * cfg.cue_strength;
    for i in 0..p {
        for j in 0..p {
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            plane[(r0 + i) * n + c0 + j] += sign * amp;
        }
    }
}

fn plant_lines(cfg: &SynthConfig, plane: &mut [f64], phase: usize) {
    let n = cfg.image_size;
    let amp = 0.05 * cfg.cue_strength;
    for i in 0..n {
        let sign = if (i + phase).is_multiple_of(2) { 1.0 } else { -1.0 };
        for v in &mut plane[i * n..(i + 1) * n] {
            *v += sign * amp;
        }
    }
}
