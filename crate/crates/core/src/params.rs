//! Named parameter registry with explicit sharing.
//!
//! Every tensor lives in exactly one canonical slot. An alias is a second
//! name for an existing canonical slot; aliases never point at other
//! aliases, so resolution is a single lookup and can never cycle.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
    aliases: BTreeMap<String, String>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.aliases.contains_key(&name) || self.tensors.contains_key(&name) {
            return Err(Error::Contract(alloc::format!("parameter `{name}` registered twice")));
        }
        self.tensors.insert(name, value);
        Ok(())
    }

    /// Registers `name` as another name for `target`. The target may itself
    /// be an alias; the link is stored against its canonical slot.
    pub fn alias(&mut self, name: impl Into<String>, target: &str) -> Result<()> {
        let name = name.into();
        let canonical = self.resolve(target)?.to_string();
        if self.tensors.contains_key(&name) || self.aliases.contains_key(&name) {
            return Err(Error::Contract(alloc::format!("parameter `{name}` registered twice")));
        }
        self.aliases.insert(name, canonical);
        Ok(())
    }

    pub fn resolve<'a>(&'a self, name: &'a str) -> Result<&'a str> {
        if self.tensors.contains_key(name) {
            return Ok(name);
        }
        self.aliases
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        let c = self.resolve(name)?;
        Ok(&self.tensors[c])
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        let c = self.resolve(name)?.to_string();
        Ok(self.tensors.get_mut(&c).expect("resolved name exists"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.resolve(name).is_ok()
    }

    /// Whether two names refer to the same storage slot.
    pub fn shares_storage(&self, a: &str, b: &str) -> bool {
        matches!((self.resolve(a), self.resolve(b)), (Ok(x), Ok(y)) if x == y)
    }

    /// Canonical parameters in name order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn aliases(&self) -> impl Iterator<Item = (&str, &str)> {
        self.aliases.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.tensors.keys().map(String::as_str).collect()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Scalar parameter count; aliases add nothing.
    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }
}

/// Gradient accumulators keyed by canonical parameter name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradStore {
    grads: BTreeMap<String, Vec<f64>>,
}

impl GradStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accumulate(&mut self, name: &str, grad: &[f64], scale: f64) {
        let slot = self
            .grads
            .entry(name.to_string())
            .or_insert_with(|| vec![0.0; grad.len()]);
        slot.iter_mut().zip(grad).for_each(|(a, g)| *a += g * scale);
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.grads.get(name).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn clear(&mut self) {
        self.grads.clear();
    }
}
