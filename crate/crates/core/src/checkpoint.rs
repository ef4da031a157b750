//! Versioned binary checkpoints holding every parameter, the optimizer state
//! and the run configuration they were trained with.
//!
//! Layout (little endian): magic `UNCK`, `u32` version, 32-byte SHA-256 of the
//! configuration text, `u64` length plus UTF-8 configuration text, `u64`
//! training step, parameter records, then an optional Adam block. Values are
//! stored as `f64` so a reload is bit-exact.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::binio::{read_file, Reader};
use crate::error::{Error, Result};
use crate::numerics::adam::{AdamConfig, AdamState};
use crate::numerics::{ParamStore, Tensor};

pub const VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"UNCK";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_text: String,
    /// Optimizer steps taken so far.
    pub step: u64,
    /// Parameters in store order.
    pub params: Vec<(String, Tensor)>,
    pub adam: Option<AdamState>,
}

/// Hex SHA-256 of a configuration text.
pub fn config_hash(text: &str) -> String {
    hex(&Sha256::digest(text.as_bytes()))
}

/// Hex SHA-256 of a file's bytes.
pub fn file_hash(path: &Path) -> Result<String> {
    Ok(hex(&Sha256::digest(read_file(path)?)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor) {
    put_u64(out, t.shape().len() as u64);
    for &d in t.shape() {
        put_u64(out, d as u64);
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn get_len(r: &mut Reader<'_>) -> Result<usize> {
    let v = r.u64()?;
    usize::try_from(v).map_err(|_| r.fail(format!("length {v} does not fit in memory")))
}

fn get_tensor(r: &mut Reader<'_>) -> Result<Tensor> {
    let rank = get_len(r)?;
    if rank > 8 {
        return Err(r.fail(format!("tensor rank {rank} is implausible")));
    }
    let shape = (0..rank).map(|_| get_len(r)).collect::<Result<Vec<_>>>()?;
    let n = shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| r.fail("tensor size overflows"))?;
    Tensor::new(shape, r.f64s(n)?)
}

fn get_string(r: &mut Reader<'_>) -> Result<String> {
    let n = get_len(r)?;
    let b = r.bytes(n)?;
    String::from_utf8(b.to_vec()).map_err(|_| r.fail("text is not UTF-8"))
}

fn put_string(out: &mut Vec<u8>, s: &str) {
    put_u64(out, s.len() as u64);
    out.extend_from_slice(s.as_bytes());
}

impl Checkpoint {
    pub fn capture(config_text: &str, step: u64, store: &ParamStore, adam: Option<&AdamState>) -> Self {
        Checkpoint {
            config_text: config_text.to_string(),
            step,
            params: store.iter().map(|(_, p)| (p.name.clone(), p.value.clone())).collect(),
            adam: adam.cloned(),
        }
    }

    pub fn config_hash(&self) -> String {
        config_hash(&self.config_text)
    }

    /// Copies saved values into a store holding the same parameter names and shapes.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.params.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} parameters, model has {}",
                self.params.len(),
                store.len()
            )));
        }
        for (name, value) in &self.params {
            let id = store
                .id(name)
                .ok_or_else(|| Error::Config(format!("model has no parameter {name}")))?;
            if store.value(id).shape() != value.shape() {
                return Err(Error::dim(format!(
                    "parameter {name}: checkpoint shape {:?}, model shape {:?}",
                    value.shape(),
                    store.value(id).shape()
                )));
            }
            store.set_value(id, value.clone())?;
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&Sha256::digest(self.config_text.as_bytes()));
        put_string(&mut out, &self.config_text);
        put_u64(&mut out, self.step);
        put_u64(&mut out, self.params.len() as u64);
        for (name, t) in &self.params {
            put_string(&mut out, name);
            put_tensor(&mut out, t);
        }
        match &self.adam {
            None => out.push(0),
            Some(a) => {
                out.push(1);
                let c = a.config;
                for v in [c.lr, c.beta1, c.beta2, c.eps, c.weight_decay] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                put_u64(&mut out, a.step_count());
                put_u64(&mut out, a.first_moments().len() as u64);
                for (m, v) in a.first_moments().iter().zip(a.second_moments()) {
                    put_tensor(&mut out, m);
                    put_tensor(&mut out, v);
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(bytes, path);
        r.magic(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.fail(format!("checkpoint version {version}, expected {VERSION}")));
        }
        let digest = r.bytes(32)?.to_vec();
        let config_text = get_string(&mut r)?;
        if Sha256::digest(config_text.as_bytes()).as_slice() != digest.as_slice() {
            return Err(r.fail("configuration hash does not match its text"));
        }
        let step = r.u64()?;
        let n = get_len(&mut r)?;
        let mut params = Vec::new();
        for _ in 0..n {
            let name = get_string(&mut r)?;
            params.push((name, get_tensor(&mut r)?));
        }
        let adam = match r.u8()? {
            0 => None,
            1 => {
                let v = r.f64s(5)?;
                let config = AdamConfig {
                    lr: v[0],
                    beta1: v[1],
                    beta2: v[2],
                    eps: v[3],
                    weight_decay: v[4],
                };
                let adam_step = r.u64()?;
                let m = get_len(&mut r)?;
                let (mut first, mut second) = (Vec::new(), Vec::new());
                for _ in 0..m {
                    first.push(get_tensor(&mut r)?);
                    second.push(get_tensor(&mut r)?);
                }
                Some(AdamState::from_parts(config, adam_step, first, second)?)
            }
            t => return Err(r.fail(format!("unknown optimizer tag {t}"))),
        };
        r.finish()?;
        Ok(Checkpoint {
            config_text,
            step,
            params,
            adam,
        })
    }

    /// Writes to a temporary sibling and renames it over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        std::fs::write(&tmp, self.encode()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?, path)
    }
}
