//! Binary dataset container.
//!
//! Layout: magic `TCLD`, version u16 LE, n_a u16, n_t u16, sample_count
//! u32, lo f64 LE, hi f64 LE, then per sample the real plane followed by
//! the imaginary plane as row-major f32 LE.

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::{CsiError, NormalizationMeta, RealCsiTensor, Result};

const MAGIC: &[u8; 4] = b"TCLD";
const VERSION: u16 = 1;

/// A set of equally shaped normalized samples plus their shared range.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<RealCsiTensor>,
    pub meta: NormalizationMeta,
    pub n_a: usize,
    pub n_t: usize,
}

impl Dataset {
    pub fn new(samples: Vec<RealCsiTensor>, meta: NormalizationMeta, n_a: usize, n_t: usize) -> Result<Self> {
        for s in &samples {
            if s.n_a() != n_a || s.n_t() != n_t {
                return Err(CsiError::InvalidParameter("inconsistent sample shapes".into()));
            }
        }
        Ok(Self { samples, meta, n_a, n_t })
    }
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    w.write_u16::<LittleEndian>(ds.n_a as u16)?;
    w.write_u16::<LittleEndian>(ds.n_t as u16)?;
    w.write_u32::<LittleEndian>(ds.samples.len() as u32)?;
    w.write_f64::<LittleEndian>(ds.meta.lo)?;
    w.write_f64::<LittleEndian>(ds.meta.hi)?;
    for s in &ds.samples {
        for v in s.data() {
            w.write_f32::<LittleEndian>(*v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| CsiError::Format("file too short for header".into()))?;
    if &magic != MAGIC {
        return Err(CsiError::Format("bad magic".into()));
    }
    let version = r.read_u16::<LittleEndian>().map_err(truncated)?;
    if version != VERSION {
        return Err(CsiError::Format(format!("unsupported version {version}")));
    }
    let n_a = r.read_u16::<LittleEndian>().map_err(truncated)? as usize;
    let n_t = r.read_u16::<LittleEndian>().map_err(truncated)? as usize;
    let count = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let lo = r.read_f64::<LittleEndian>().map_err(truncated)?;
    let hi = r.read_f64::<LittleEndian>().map_err(truncated)?;
    if n_a == 0 || n_t == 0 {
        return Err(CsiError::Format("zero sample dimensions".into()));
    }
    let meta = NormalizationMeta::new(lo, hi)
        .map_err(|_| CsiError::Format(format!("invalid range [{lo}, {hi}]")))?;

    let plane = n_a * n_t;
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let mut data = vec![0f32; 2 * plane];
        for v in data.iter_mut() {
            *v = r.read_f32::<LittleEndian>().map_err(truncated)?;
        }
        samples.push(
            RealCsiTensor::from_raw(n_a, n_t, data, meta)
                .map_err(|e| CsiError::Format(format!("invalid sample: {e}")))?,
        );
    }
    // Trailing bytes mean the declared count is wrong.
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(CsiError::Format("trailing bytes after last sample".into()));
    }
    Dataset::new(samples, meta, n_a, n_t)
}

fn truncated(_: std::io::Error) -> CsiError {
    CsiError::Format("truncated file".into())
}
