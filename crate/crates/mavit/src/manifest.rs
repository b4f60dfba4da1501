//! Dataset directories: a `manifest.toml` listing every sample plus one raw
//! tensor file per sample and modality.
//!
//! ```toml
//! version = 1
//! modalities = ["R", "D"]
//! image_size = 32
//!
//! [[samples]]
//! id = "train-00000"
//! split = "train"
//! y_cls = 0
//! cue_patch = 5
//!
//! [samples.files]
//! R = "train/train-00000.R.tensor"
//! D = "train/train-00000.D.tensor"
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use mavit_core::synth::{Dataset, Split};
use mavit_core::{Modality, Sample};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{tensor_file, IoError};

pub const FILE_NAME: &str = "manifest.toml";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct RawManifest {
    version: u32,
    modalities: Vec<String>,
    image_size: usize,
    #[serde(default)]
    samples: Vec<RawRecord>,
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    id: String,
    split: String,
    y_cls: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cue_patch: Option<usize>,
    files: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub id: String,
    pub split: Split,
    pub y_cls: u8,
    pub cue_patch: Option<usize>,
    /// Tensor file per modality, relative to the manifest directory.
    pub files: BTreeMap<Modality, PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub modalities: Vec<Modality>,
    pub image_size: usize,
    pub records: Vec<Record>,
}

/// Number of tensor files read per modality.
#[derive(Debug, Default)]
pub struct ReadStats {
    counts: [AtomicUsize; 3],
}

impl ReadStats {
    fn slot(m: Modality) -> usize {
        Modality::ALL.iter().position(|&x| x == m).unwrap()
    }

    pub fn record(&self, m: Modality) {
        self.counts[Self::slot(m)].fetch_add(1, Ordering::Relaxed);
    }

    pub fn reads(&self, m: Modality) -> usize {
        self.counts[Self::slot(m)].load(Ordering::Relaxed)
    }
}

fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(FILE_NAME)
    } else {
        path.to_path_buf()
    }
}

impl Manifest {
    /// Parses and validates a manifest; `path` is the dataset directory or
    /// the manifest file itself. All problems are reported together.
    pub fn read(path: &Path) -> Result<Self, IoError> {
        let file = manifest_path(path);
        let text = fs::read_to_string(&file).map_err(|e| IoError::io(&file, e))?;
        let raw: RawManifest = toml::from_str(&text).map_err(|e| IoError::Format {
            path: file.clone(),
            msg: e.to_string(),
        })?;
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut errors = Vec::new();
        if raw.version != VERSION {
            errors.push(format!("unsupported manifest version {}", raw.version));
        }
        let mut modalities = Vec::new();
        for tag in &raw.modalities {
            match tag.parse::<Modality>() {
                Ok(m) if !modalities.contains(&m) => modalities.push(m),
                Ok(m) => errors.push(format!("modality {m} listed twice")),
                Err(e) => errors.push(e.to_string()),
            }
        }
        let mut seen = BTreeSet::new();
        let mut records = Vec::with_capacity(raw.samples.len());
        for r in raw.samples {
            let at = |msg: String| format!("sample `{}`: {msg}", r.id);
            if !seen.insert(r.id.clone()) {
                errors.push(at("duplicate id".into()));
            }
            let split = match r.split.parse::<Split>() {
                Ok(s) => s,
                Err(e) => {
                    errors.push(at(e.to_string()));
                    continue;
                }
            };
            if r.y_cls > 1 {
                errors.push(at(format!("y_cls {} is not 0 or 1", r.y_cls)));
            }
            let mut files = BTreeMap::new();
            for (tag, f) in &r.files {
                match tag.parse::<Modality>() {
                    Ok(m) if modalities.contains(&m) => {
                        files.insert(m, PathBuf::from(f));
                    }
                    Ok(m) => errors.push(at(format!("modality {m} is not listed in the manifest"))),
                    Err(e) => errors.push(at(e.to_string())),
                }
            }
            for m in &modalities {
                if !r.files.keys().any(|t| t.parse::<Modality>().ok() == Some(*m)) {
                    errors.push(at(format!("no {m} file")));
                }
            }
            records.push(Record {
                id: r.id,
                split,
                y_cls: r.y_cls,
                cue_patch: r.cue_patch,
                files,
            });
        }
        if !errors.is_empty() {
            return Err(IoError::Load {
                path: file,
                items: errors,
            });
        }
        Ok(Manifest {
            root,
            modalities,
            image_size: raw.image_size,
            records,
        })
    }

    pub fn records(&self, split: Split) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Loads the samples of one split, reading only the tensor files of
    /// `modalities`. Failures are collected per sample.
    pub fn load_split(&self, split: Split, modalities: &[Modality], stats: &ReadStats) -> Result<Vec<Sample>, IoError> {
        for m in modalities {
            if !self.modalities.contains(m) {
                return Err(IoError::Load {
                    path: self.root.join(FILE_NAME),
                    items: vec![format!("dataset has no {m} images")],
                });
            }
        }
        let records: Vec<&Record> = self.records(split).collect();
        let loaded: Vec<Result<Sample, Vec<String>>> = records
            .par_iter()
            .map(|r| self.load_record(r, modalities, stats))
            .collect();
        let mut samples = Vec::with_capacity(loaded.len());
        let mut errors = Vec::new();
        for r in loaded {
            match r {
                Ok(s) => samples.push(s),
                Err(e) => errors.extend(e),
            }
        }
        if !errors.is_empty() {
            return Err(IoError::Load {
                path: self.root.join(FILE_NAME),
                items: errors,
            });
        }
        Ok(samples)
    }

    fn load_record(&self, r: &Record, modalities: &[Modality], stats: &ReadStats) -> Result<Sample, Vec<String>> {
        let mut images = BTreeMap::new();
        let mut errors = Vec::new();
        for &m in modalities {
            let path = self.root.join(&r.files[&m]);
            stats.record(m);
            match tensor_file::read(&path) {
                Ok(t) => {
                    let want = [m.native_channels(), self.image_size, self.image_size];
                    if t.shape() != want {
                        errors.push(format!(
                            "sample `{}` ({m}): shape {:?} does not match the declared {want:?}",
                            r.id,
                            t.shape()
                        ));
                    } else {
                        images.insert(m, t);
                    }
                }
                Err(e) => errors.push(format!("sample `{}` ({m}): {e}", r.id)),
            }
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        Ok(Sample {
            id: r.id.clone(),
            images,
            y_cls: r.y_cls,
            cue_patch: r.cue_patch,
        })
    }

    /// Loads every split with every modality.
    pub fn load_all(&self, stats: &ReadStats) -> Result<Dataset, IoError> {
        let mut splits = BTreeMap::new();
        for split in Split::ALL {
            splits.insert(split, self.load_split(split, &self.modalities, stats)?);
        }
        Ok(Dataset {
            modalities: self.modalities.clone(),
            image_size: self.image_size,
            splits,
        })
    }
}

pub fn load(path: &Path) -> Result<Dataset, IoError> {
    Manifest::read(path)?.load_all(&ReadStats::default())
}

/// Writes `data` under `dir` (created if needed) and returns its manifest.
pub fn export(data: &Dataset, dir: &Path) -> Result<Manifest, IoError> {
    let mut raw = RawManifest {
        version: VERSION,
        modalities: data.modalities.iter().map(|m| m.tag().to_string()).collect(),
        image_size: data.image_size,
        samples: Vec::with_capacity(data.len()),
    };
    for split in Split::ALL {
        let sub = dir.join(split.name());
        fs::create_dir_all(&sub).map_err(|e| IoError::io(&sub, e))?;
        for s in data.split(split) {
            let mut files = BTreeMap::new();
            for (m, t) in &s.images {
                let rel = format!("{}/{}.{}.tensor", split.name(), s.id, m.tag());
                tensor_file::write(&dir.join(&rel), t)?;
                files.insert(m.tag().to_string(), rel);
            }
            raw.samples.push(RawRecord {
                id: s.id.clone(),
                split: split.name().to_string(),
                y_cls: s.y_cls,
                cue_patch: s.cue_patch,
                files,
            });
        }
    }
    let text = toml::to_string(&raw).map_err(|e| IoError::Format {
        path: dir.join(FILE_NAME),
        msg: e.to_string(),
    })?;
    let file = dir.join(FILE_NAME);
    fs::write(&file, text).map_err(|e| IoError::io(&file, e))?;
    Manifest::read(&file)
}
