//! On-disk dataset container, byte-exact round trip.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! magic    6 bytes  "EDGEO1"
//! version  u16      currently 1
//! d        u32      task dimension
//! T        u32      sequence length
//! N        u64      example count
//! seed     u64      generator seed
//! name_len u32, name bytes (UTF-8)
//! inputs   f64 x N*T*d, row-major little-endian
//! targets  f64 x N*T*d, row-major little-endian
//! ```

use crate::{Dataset, DatasetError};
use numkit::Tensor;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 6] = b"EDGEO1";
const VERSION: u16 = 1;

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(ds.task_dim as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.seq_len as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.count as u64).to_le_bytes());
    buf.extend_from_slice(&ds.seed.to_le_bytes());
    buf.extend_from_slice(&(ds.name.len() as u32).to_le_bytes());
    buf.extend_from_slice(ds.name.as_bytes());
    for v in ds.inputs.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in ds.targets.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(&buf)?;
    f.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 6 || &bytes[..6] != MAGIC {
        return Err(DatasetError::Format("bad magic".into()));
    }
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 6,
    };
    let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(DatasetError::Format(format!("unsupported version {version}")));
    }
    let d = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
    let t = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
    let n = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
    let seed = u64::from_le_bytes(cur.take(8)?.try_into().unwrap());
    let name_len = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
    let name = std::str::from_utf8(cur.take(name_len)?)
        .map_err(|_| DatasetError::Format("name is not UTF-8".into()))?
        .to_string();
    let count = n * t * d;
    let inputs = cur.read_f64_block(count, n, "inputs")?;
    let targets = cur.read_f64_block(count, n, "targets")?;
    Ok(Dataset::new(
        name,
        d,
        t,
        Tensor::new(vec![n, t, d], inputs).map_err(|e| DatasetError::Format(e.to_string()))?,
        Tensor::new(vec![n, t, d], targets).map_err(|e| DatasetError::Format(e.to_string()))?,
        seed,
    ))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DatasetError> {
        if self.pos + n > self.bytes.len() {
            return Err(DatasetError::Truncated(format!(
                "needed {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn read_f64_block(
        &mut self,
        count: usize,
        n_declared: usize,
        label: &str,
    ) -> Result<Vec<f64>, DatasetError> {
        let raw = self.take(count * 8).map_err(|_| {
            DatasetError::Truncated(format!(
                "header says {n_declared} examples but the {label} payload is short"
            ))
        })?;
        let mut out = Vec::with_capacity(count);
        for chunk in raw.chunks_exact(8) {
            out.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        Ok(out)
    }
}
