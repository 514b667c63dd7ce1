//! Named parameter store and its binary checkpoint format.
//!
//! Layout (little-endian): magic `SSRW`, `u32` version, then for each parameter
//! `u32` name length, UTF-8 name, `u32` rank, `rank × u32` extents, `f32` payload.
//! Entries run to end of file.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result, TensorError};
use crate::tensor::{Gradients, Graph, Real, Tensor, Var};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SSRW";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Ordered collection of named tensors. Names under `meta.` are stored but never trained.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelParams {
    entries: Vec<(String, Tensor<f32>)>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_trainable(name: &str) -> bool {
        !name.starts_with("meta.")
    }

    /// Insert or replace.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<f32>) {
        let name = name.into();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((name, value)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<f32>> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<f32>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<f32>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of trainable scalars.
    pub fn num_scalars(&self) -> usize {
        self.iter().filter(|(n, _)| Self::is_trainable(n)).map(|(_, t)| t.len()).sum()
    }

    /// Zero tensors with the same names and shapes.
    pub fn zeros_like(&self) -> Self {
        Self { entries: self.entries.iter().map(|(n, t)| (n.clone(), Tensor::zeros(t.shape().to_vec()))).collect() }
    }

    /// Elementwise `self += other` over matching names.
    pub fn accumulate(&mut self, other: &ModelParams) {
        for (name, t) in self.entries.iter_mut() {
            if let Some(o) = other.get(name) {
                for (a, b) in t.data_mut().iter_mut().zip(o.data()) {
                    *a += *b;
                }
            }
        }
    }

    pub fn scale(&mut self, s: f32) {
        for (_, t) in self.entries.iter_mut() {
            for v in t.data_mut() {
                *v *= s;
            }
        }
    }

    /// Register a 3×3 conv layer with He-normal weights and zero bias.
    pub fn init_conv(&mut self, name: &str, in_ch: usize, out_ch: usize, rng: &mut impl Rng) {
        let std = (2.0 / (in_ch as f64 * 9.0)).sqrt();
        let w = Tensor::from_fn(vec![out_ch, in_ch, 3, 3], |_| (Distribution::<f64>::sample(&StandardNormal, rng) * std) as f32);
        self.insert(format!("{name}.weight"), w);
        self.insert(format!("{name}.bias"), Tensor::zeros(vec![out_ch]));
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &e in t.shape() {
                out.extend_from_slice(&(e as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0, path };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(r.error(0, "bad magic, expected SSRW"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(r.error(4, &format!("unsupported version {version}")));
        }
        let mut params = ModelParams::new();
        while r.pos < bytes.len() {
            let start = r.pos;
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| r.error(start as u64 + 4, "parameter name is not UTF-8"))?
                .to_string();
            let rank = r.u32()? as usize;
            if rank > 8 {
                return Err(r.error(start as u64, &format!("implausible rank {rank} for `{name}`")));
            }
            let shape: Vec<usize> = (0..rank).map(|_| r.u32().map(|e| e as usize)).collect::<Result<_>>()?;
            let n: usize = shape.iter().product();
            let payload = r.take(n.checked_mul(4).ok_or_else(|| r.error(start as u64, "extent overflow"))?)?;
            let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            params.insert(name, Tensor::new(shape, data)?);
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteReader<'a> {
    fn error(&self, offset: u64, detail: &str) -> Error {
        Error::Format { path: self.path.to_path_buf(), offset, detail: detail.to_string() }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.error(self.pos as u64, &format!("truncated: need {} bytes, {} left", n, self.bytes.len() - self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parameters registered as leaves of one graph, looked up by name.
pub struct Bound {
    vars: Vec<(String, Var)>,
}

impl Bound {
    /// Register every parameter; `meta.` entries become constants.
    pub fn new<T: Real>(g: &mut Graph<T>, params: &ModelParams) -> Result<Self> {
        let mut vars = Vec::with_capacity(params.len());
        for (name, t) in params.iter() {
            let v = if ModelParams::is_trainable(name) { g.param(t.cast())? } else { g.constant(t.cast())? };
            vars.push((name.to_string(), v));
        }
        Ok(Self { vars })
    }

    /// Bind names to variables that already live in a graph (used by gradient checks).
    pub fn from_vars(names: &[String], vars: &[Var]) -> Self {
        Self { vars: names.iter().cloned().zip(vars.iter().copied()).collect() }
    }

    pub fn get(&self, name: &str) -> Result<Var, TensorError> {
        self.vars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| TensorError::UnknownParameter { name: name.to_string() })
    }

    /// 3×3 convolution using `{name}.weight` and `{name}.bias`.
    pub fn conv<T: Real>(&self, g: &mut Graph<T>, name: &str, x: Var) -> Result<Var, TensorError> {
        let w = self.get(&format!("{name}.weight"))?;
        let b = self.get(&format!("{name}.bias"))?;
        g.conv2d(x, w, b)
    }

    /// Gradients of every bound parameter, as a parameter set shaped like `params` (zero where unreached).
    pub fn gradients(&self, grads: &Gradients<f32>, params: &ModelParams) -> ModelParams {
        let mut out = params.zeros_like();
        for (name, var) in &self.vars {
            if let (Some(g), Some(slot)) = (grads.get(*var), out.get_mut(name)) {
                *slot = g.clone();
            }
        }
        out
    }
}
