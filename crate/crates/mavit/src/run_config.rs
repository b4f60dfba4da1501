//! Command options. Every option can come from a flag or from a section of
//! a TOML config file; flags win. The seed falls back to the file's
//! top-level `seed`, then to `MAVIT_SEED`, then to [`DEFAULT_SEED`].
//!
//! ```toml
//! seed = 7
//!
//! [gen]
//! samples = 256
//!
//! [train]
//! data = "data"
//! max_steps = 2000
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::IoError;

pub const DEFAULT_SEED: u64 = 7;
pub const SEED_ENV: &str = "MAVIT_SEED";
pub const ECHO_FILE: &str = "effective_config.toml";

macro_rules! options {
    (
        $(#[$meta:meta])*
        pub struct $name:ident {
            $( $(#[$fmeta:meta])* pub $field:ident : Option<$ty:ty>, )*
        }
    ) => {
        $(#[$meta])*
        #[derive(Clone, Debug, Default, PartialEq, clap::Args, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $( $(#[$fmeta])* #[serde(skip_serializing_if = "Option::is_none")] pub $field: Option<$ty>, )*
        }

        impl $name {
            /// Fills every option missing here from `file`.
            pub fn merge(self, file: Self) -> Self {
                $name { $( $field: self.$field.or(file.$field), )* }
            }
        }
    };
}

options! {
    /// `mavit gen`
    pub struct GenOptions {
        /// Output directory for the dataset.
        #[arg(long)]
        pub out: Option<PathBuf>,
        #[arg(long)]
        pub seed: Option<u64>,
        /// Training samples; dev and test default to a quarter of this.
        #[arg(long)]
        pub samples: Option<usize>,
        #[arg(long)]
        pub dev: Option<usize>,
        #[arg(long)]
        pub test: Option<usize>,
        #[arg(long)]
        pub image_size: Option<usize>,
        #[arg(long)]
        pub patch_size: Option<usize>,
        #[arg(long)]
        pub live_ratio: Option<f64>,
        #[arg(long)]
        pub cue_strength: Option<f64>,
        #[arg(long)]
        pub nuisance_strength: Option<f64>,
        #[arg(long)]
        pub domain_shift: Option<f64>,
        /// Comma-separated modality tags, e.g. `R,D`.
        #[arg(long)]
        pub modalities: Option<String>,
    }
}

options! {
    /// `mavit train`
    pub struct TrainOptions {
        /// Dataset directory.
        #[arg(long)]
        pub data: Option<PathBuf>,
        /// Output directory for the checkpoint, loss trace and reports.
        #[arg(long)]
        pub out: Option<PathBuf>,
        #[arg(long)]
        pub seed: Option<u64>,
        #[arg(long)]
        pub epochs: Option<usize>,
        #[arg(long)]
        pub max_steps: Option<u64>,
        #[arg(long)]
        pub batch_size: Option<usize>,
        #[arg(long)]
        pub lr: Option<f64>,
        /// Structural variant: `none`, `matb` (plain ViT), `mda` or `cma`.
        #[arg(long)]
        pub ablate: Option<String>,
        #[arg(long)]
        pub dim: Option<usize>,
        #[arg(long)]
        pub heads: Option<usize>,
        #[arg(long)]
        pub blocks: Option<usize>,
        #[arg(long)]
        pub lambda: Option<f64>,
        #[arg(long)]
        pub mlp_ratio: Option<f64>,
        #[arg(long)]
        pub patch_size: Option<usize>,
        #[arg(long)]
        pub modalities: Option<String>,
    }
}

options! {
    /// `mavit eval`
    pub struct EvalOptions {
        #[arg(long)]
        pub checkpoint: Option<PathBuf>,
        #[arg(long)]
        pub data: Option<PathBuf>,
        /// Modalities supplied at test time; defaults to all trained ones.
        #[arg(long)]
        pub modalities: Option<String>,
        /// `eer` or `bpcer=<rate>`.
        #[arg(long)]
        pub policy: Option<String>,
        /// False positive rate for the TPR@FPR entry.
        #[arg(long)]
        pub fpr: Option<f64>,
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

options! {
    /// `mavit cross-eval`
    pub struct CrossEvalOptions {
        #[arg(long)]
        pub checkpoint: Option<PathBuf>,
        /// Training-domain dataset; its dev split fixes the threshold.
        #[arg(long)]
        pub dev: Option<PathBuf>,
        /// Foreign dataset; its test split is scored.
        #[arg(long)]
        pub test: Option<PathBuf>,
        #[arg(long)]
        pub modalities: Option<String>,
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

options! {
    /// `mavit dump-masks`
    pub struct MaskOptions {
        #[arg(long)]
        pub checkpoint: Option<PathBuf>,
        #[arg(long)]
        pub data: Option<PathBuf>,
        /// Sample id; every sample with a planted cue when omitted.
        #[arg(long)]
        pub sample: Option<String>,
        #[arg(long)]
        pub split: Option<String>,
        /// Block, counted from 1.
        #[arg(long)]
        pub layer: Option<usize>,
        /// Overrides the checkpoint's threshold.
        #[arg(long)]
        pub lambda: Option<f64>,
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

options! {
    /// `mavit grad-check`
    pub struct GradCheckOptions {
        #[arg(long)]
        pub seed: Option<u64>,
        #[arg(long)]
        pub dim: Option<usize>,
        #[arg(long)]
        pub heads: Option<usize>,
        #[arg(long)]
        pub blocks: Option<usize>,
        #[arg(long)]
        pub image_size: Option<usize>,
        #[arg(long)]
        pub patch_size: Option<usize>,
        #[arg(long)]
        pub lambda: Option<f64>,
        #[arg(long)]
        pub tolerance: Option<f64>,
        /// Central-difference step.
        #[arg(long)]
        pub step: Option<f64>,
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    #[serde(default)]
    pub gen: GenOptions,
    #[serde(default)]
    pub train: TrainOptions,
    #[serde(default)]
    pub eval: EvalOptions,
    #[serde(default, rename = "cross-eval")]
    pub cross_eval: CrossEvalOptions,
    #[serde(default, rename = "dump-masks")]
    pub dump_masks: MaskOptions,
    #[serde(default, rename = "grad-check")]
    pub grad_check: GradCheckOptions,
}

impl ConfigFile {
    pub fn read(path: &Path) -> Result<Self, IoError> {
        let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        toml::from_str(&text).map_err(|e| IoError::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }
}

/// Flag, then the command's section, then the file's top level, then the
/// environment, then the built-in default.
pub fn resolve_seed(merged: Option<u64>, file_top: Option<u64>) -> Result<u64, String> {
    if let Some(s) = merged.or(file_top) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| format!("{SEED_ENV}={v:?} is not an unsigned integer")),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

/// Writes the resolved options of one command as `[section]` TOML.
pub fn echo<T: Serialize>(dir: &Path, section: &str, opts: &T) -> Result<(), IoError> {
    let mut table = toml::Table::new();
    let value = toml::Value::try_from(opts).map_err(|e| IoError::Format {
        path: dir.join(ECHO_FILE),
        msg: e.to_string(),
    })?;
    table.insert(section.to_string(), value);
    let path = dir.join(ECHO_FILE);
    fs::write(&path, toml::to_string(&table).unwrap()).map_err(|e| IoError::io(&path, e))
}
