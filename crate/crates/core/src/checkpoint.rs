//! Self-describing binary snapshot of a model.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "MAVITCKP"
//! version   u32
//! config    u32 image, patch, channels, dim, heads, blocks
//!           f64 mlp_ratio, lambda
//!           u32 modality count, then one u8 tag byte per modality
//!           u8 mda, u8 cma
//! seed      u64
//! step      u64
//! params    u32 count, then per tensor: name, u32 ndim, u32 dims, f64 data
//! aliases   u32 count, then per link: name, target
//! ```
//!
//! Strings are a u32 byte length followed by UTF-8.

use alloc::string::String;
use alloc::vec::Vec;

use crate::config::{Ablation, Modality, ModelConfig};
use crate::error::{Error, Result};
use crate::model::MaVit;
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"MAVITCKP";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: MaVit,
    pub seed: u64,
    pub step: u64,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("checkpoint field exceeds u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(alloc::format!("checkpoint truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Format("checkpoint string is not UTF-8".into()))
    }
    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Format(alloc::format!("bad flag byte {b}"))),
        }
    }
}

fn modality_byte(m: Modality) -> u8 {
    m.tag().as_bytes()[0]
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION as usize);
        let c = self.model.config();
        for v in [c.image_size, c.patch_size, c.channels, c.dim, c.heads, c.blocks] {
            w.u32(v);
        }
        w.f64(c.mlp_ratio);
        w.f64(c.lambda);
        w.u32(c.modalities.len());
        for &m in &c.modalities {
            w.u8(modality_byte(m));
        }
        w.u8(u8::from(c.ablation.mda));
        w.u8(u8::from(c.ablation.cma));
        w.u64(self.seed);
        w.u64(self.step);
        let params = self.model.params();
        w.u32(params.len());
        for (name, t) in params.iter() {
            w.str(name);
            w.u32(t.shape().len());
            for &d in t.shape() {
                w.u32(d);
            }
            for &v in t.data() {
                w.f64(v);
            }
        }
        let aliases: Vec<(&str, &str)> = params.aliases().collect();
        w.u32(aliases.len());
        for (name, target) in aliases {
            w.str(name);
            w.str(target);
        }
        w.0
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION as usize {
            return Err(Error::Format(alloc::format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = r.u32()?;
        }
        let mlp_ratio = r.f64()?;
        let lambda = r.f64()?;
        let count = r.u32()?;
        let mut modalities = Vec::with_capacity(count.min(4));
        for _ in 0..count {
            let b = r.u8()?;
            modalities.push(core::str::from_utf8(&[b]).unwrap_or("?").parse::<Modality>()?);
        }
        let ablation = Ablation {
            mda: r.bool()?,
            cma: r.bool()?,
        };
        let config = ModelConfig {
            image_size: dims[0],
            patch_size: dims[1],
            channels: dims[2],
            dim: dims[3],
            heads: dims[4],
            blocks: dims[5],
            mlp_ratio,
            lambda,
            modalities,
            ablation,
        };
        config.validate()?;
        let seed = r.u64()?;
        let step = r.u64()?;
        let mut params = ParamStore::new();
        for _ in 0..r.u32()? {
            let name = r.str()?;
            let ndim = r.u32()?;
            let mut shape = Vec::with_capacity(ndim.min(8));
            for _ in 0..ndim {
                shape.push(r.u32()?);
            }
            let numel: usize = shape.iter().product();
            if numel.saturating_mul(8) > bytes.len() {
                return Err(Error::Format(alloc::format!("tensor `{name}` larger than the file")));
            }
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                data.push(r.f64()?);
            }
            params.insert(name, Tensor::new(shape, data)?)?;
        }
        for _ in 0..r.u32()? {
            let name = r.str()?;
            let target = r.str()?;
            params.alias(name, &target)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(Checkpoint {
            model: MaVit::from_parts(config, params)?,
            seed,
            step,
        })
    }
}
