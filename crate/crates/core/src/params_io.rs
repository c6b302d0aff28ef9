//! Binary parameter files.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        8 bytes   "HYBGNNP\0"
//! version      u32       FORMAT_VERSION
//! config_len   u64
//! config       config_len bytes of UTF-8 JSON (ModelConfig)
//! n_tensors    u32
//! n_tensors × {
//!     name_len u32, name (UTF-8),
//!     rank u32, dims rank × u64,
//!     offset u64            element offset into the data block
//! }
//! n_values     u64
//! data         n_values × f64, row-major
//! ```
//!
//! A file is parsed completely before anything is returned, so a truncated
//! or inconsistent file never yields partially loaded parameters.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{ModelConfig, ModelParams};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"HYBGNNP\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ParamFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a parameter file (bad magic)")]
    BadMagic,
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt parameter file: {0}")]
    Corrupt(String),
    #[error("tensor {name}: file has shape {found:?}, configuration implies {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("stored model configuration differs from the requested one: {0}")]
    ConfigMismatch(String),
}

fn corrupt(msg: impl Into<String>) -> ParamFileError {
    ParamFileError::Corrupt(msg.into())
}

pub fn encode(config: &ModelConfig, params: &ModelParams) -> Vec<u8> {
    let config_json = serde_json::to_vec(config).expect("config serializes");
    let named = params.named_tensors();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(config_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&config_json);
    out.extend_from_slice(&(named.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for (name, t) in &named {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += t.numel() as u64;
    }
    out.extend_from_slice(&offset.to_le_bytes());
    for (_, t) in &named {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], ParamFileError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| corrupt(format!("truncated while reading {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, ParamFileError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64, ParamFileError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &str) -> Result<usize, ParamFileError> {
        let v = self.u64(what)?;
        usize::try_from(v)
            .ok()
            .filter(|&v| v <= self.buf.len())
            .ok_or_else(|| corrupt(format!("{what} {v} exceeds file size")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<(ModelConfig, ModelParams), ParamFileError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if bytes.len() < MAGIC.len() || r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(ParamFileError::BadMagic);
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(ParamFileError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let config_len = r.len("config length")?;
    let config: ModelConfig =
        serde_json::from_slice(r.take(config_len, "config")?).map_err(|e| corrupt(format!("config: {e}")))?;

    let count = r.u32("tensor count")? as usize;
    let mut table = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| corrupt("tensor name is not UTF-8"))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        if rank > 8 {
            return Err(corrupt(format!("{name}: implausible rank {rank}")));
        }
        let dims = (0..rank).map(|_| r.len("dimension")).collect::<Result<Vec<_>, _>>()?;
        let offset = r.len("offset")?;
        table.push((name, dims, offset));
    }
    let n_values = r.len("value count")?;
    let data = r.take(n_values * 8, "tensor data")?;
    if r.pos != bytes.len() {
        return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }

    let mut tensors = Vec::with_capacity(table.len());
    for (name, dims, offset) in table {
        let numel: usize = dims.iter().product();
        let end = offset
            .checked_add(numel)
            .filter(|&e| e <= n_values)
            .ok_or_else(|| corrupt(format!("{name}: data range out of bounds")))?;
        let values = data[offset * 8..end * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push((name, Tensor::new(dims, values).expect("numel matches")));
    }

    // A freshly initialized model fixes the expected names and shapes.
    let mut rng = crate::rng::stream(0, "params-io");
    let mut params =
        ModelParams::init(&config, &mut rng).map_err(|e| ParamFileError::ConfigMismatch(e.to_string()))?;
    let expected = params.named_tensors();
    if expected.len() != tensors.len() {
        return Err(corrupt(format!(
            "configuration implies {} tensors, file has {}",
            expected.len(),
            tensors.len()
        )));
    }
    for ((want_name, want), (name, got)) in expected.iter().zip(&tensors) {
        if want_name != name {
            return Err(corrupt(format!("expected tensor {want_name}, found {name}")));
        }
        if want.shape() != got.shape() {
            return Err(ParamFileError::ShapeMismatch {
                name: name.clone(),
                expected: want.shape().to_vec(),
                found: got.shape().to_vec(),
            });
        }
    }
    let values: Vec<Tensor> = tensors.into_iter().map(|(_, t)| t).collect();
    params
        .set_tensors(&values)
        .map_err(|e| corrupt(e.to_string()))?;
    Ok((config, params))
}

/// Writes atomically: the data goes to a sibling temp file that is renamed into place.
pub fn save_params(path: &Path, config: &ModelConfig, params: &ModelParams) -> Result<(), ParamFileError> {
    let io = |source| ParamFileError::Io {
        path: path.to_path_buf(),
        source,
    };
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(&encode(config, params)).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn load_params(path: &Path) -> Result<(ModelConfig, ModelParams), ParamFileError> {
    let bytes = fs::read(path).map_err(|source| ParamFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}

/// Loads and checks the stored configuration against the one the caller runs with.
pub fn load_params_for(path: &Path, expected: &ModelConfig) -> Result<ModelParams, ParamFileError> {
    let (stored, params) = load_params(path)?;
    if &stored != expected {
        let what = if stored.channels != expected.channels {
            format!("channels {} vs {}", stored.channels, expected.channels)
        } else {
            "architecture fields differ".to_string()
        };
        return Err(ParamFileError::ConfigMismatch(what));
    }
    Ok(params)
}
