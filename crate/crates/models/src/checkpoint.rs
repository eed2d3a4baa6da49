//! Versioned binary checkpoint container.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes   "GEOCKPT\0"
//! version   u16       currently 1
//! seed      u64       originating init seed
//! cfg_len   u32       length of the config text
//! cfg       bytes     flat key = value config (UTF-8)
//! n_tensors u32
//! per tensor:
//!   name_len u32, name bytes (UTF-8)
//!   ndim     u32, dims u64 x ndim
//!   data     f64 x product(dims), little-endian, row-major
//! ```
//!
//! Loading a checkpoint and saving it again reproduces the file byte for
//! byte; loading restores parameter values bit-exactly.

use crate::config::ModelConfig;
use crate::model::Model;
use crate::ModelError;
use nn::ParamSet;
use numkit::Tensor;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"GEOCKPT\0";
const VERSION: u16 = 1;

pub fn write_checkpoint(model: &Model, path: &Path) -> Result<(), ModelError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&model.seed.to_le_bytes());
    let cfg = model.config.to_kv_string();
    buf.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    buf.extend_from_slice(cfg.as_bytes());
    buf.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for entry in model.params.entries() {
        buf.extend_from_slice(&(entry.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(entry.name.as_bytes());
        buf.extend_from_slice(&(entry.value.shape().len() as u32).to_le_bytes());
        for &d in entry.value.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in entry.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(&buf)?;
    f.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Model, ModelError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    let magic = cur.take(8)?;
    if magic != MAGIC {
        return Err(ModelError::Format("bad checkpoint magic".into()));
    }
    let version = cur.u16()?;
    if version != VERSION {
        return Err(ModelError::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let seed = cur.u64()?;
    let cfg_len = cur.u32()? as usize;
    let cfg_text = std::str::from_utf8(cur.take(cfg_len)?)
        .map_err(|_| ModelError::Format("config is not UTF-8".into()))?;
    let config = ModelConfig::from_kv_str(cfg_text)?;
    let n_tensors = cur.u32()? as usize;
    let mut params = ParamSet::new();
    for _ in 0..n_tensors {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| ModelError::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let ndim = cur.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cur.u64()? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(cur.f64()?);
        }
        params.push(
            &name,
            Tensor::new(shape, data).map_err(|e| ModelError::Format(e.to_string()))?,
        );
    }
    Ok(Model {
        config,
        params,
        seed,
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.bytes.len() {
            return Err(ModelError::Format("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
