//! Weight checkpoint container.
//!
//! Layout: magic `TCLW`, version u16 LE, then one entry per parameter:
//! name length u16 LE + UTF-8 name, rank u8, dims u32 LE each, values as
//! f32 LE. Entries run to end of file in store order.

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::params::ParamStore;
use crate::{NnError, Result, Tensor};

const MAGIC: &[u8; 4] = b"TCLW";
const VERSION: u16 = 1;

pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    for id in store.ids() {
        let name = store.name(id).as_bytes();
        let value = store.value(id);
        w.write_u16::<LittleEndian>(name.len() as u16)?;
        w.write_all(name)?;
        w.write_u8(value.rank() as u8)?;
        for d in value.shape() {
            w.write_u32::<LittleEndian>(*d as u32)?;
        }
        for v in value.data() {
            w.write_f32::<LittleEndian>(*v as f32)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Load a checkpoint into an existing store; every stored parameter must
/// be present with a matching shape, and the file may not contain extras.
pub fn load_checkpoint_into(store: &mut ParamStore, path: &Path) -> Result<()> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| NnError::Format("file too short".into()))?;
    if &magic != MAGIC {
        return Err(NnError::Format("bad magic".into()));
    }
    let version = r.read_u16::<LittleEndian>().map_err(truncated)?;
    if version != VERSION {
        return Err(NnError::Format(format!("unsupported version {version}")));
    }

    let mut entries: HashMap<String, Tensor> = HashMap::new();
    loop {
        let name_len = match r.read_u16::<LittleEndian>() {
            Ok(n) => n as usize,
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        };
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| NnError::Format("non-UTF-8 name".into()))?;
        let rank = r.read_u8().map_err(truncated)? as usize;
        if rank > 4 {
            return Err(NnError::Format(format!("rank {rank} above 4")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.read_u32::<LittleEndian>().map_err(truncated)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(r.read_f32::<LittleEndian>().map_err(truncated)? as f64);
        }
        if entries.insert(name.clone(), Tensor::from_vec(&shape, data)?).is_some() {
            return Err(NnError::Format(format!("duplicate parameter {name}")));
        }
    }

    for id in store.ids().collect::<Vec<_>>() {
        let name = store.name(id).to_string();
        let tensor = entries
            .remove(&name)
            .ok_or_else(|| NnError::Format(format!("missing parameter {name}")))?;
        if tensor.shape() != store.value(id).shape() {
            return Err(NnError::Format(format!(
                "shape mismatch for {name}: file {:?} vs model {:?}",
                tensor.shape(),
                store.value(id).shape()
            )));
        }
        *store.value_mut(id) = tensor;
    }
    if let Some(name) = entries.keys().next() {
        return Err(NnError::Format(format!("unknown parameter {name}")));
    }
    Ok(())
}

pub fn sha256_hex_of_file(path: &Path) -> Result<String> {
    let mut f = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn truncated(_: std::io::Error) -> NnError {
    NnError::Format("truncated file".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip() {
        let dir = std::env::temp_dir().join("nn_core_ckpt");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("w.tclw");

        let mut store = ParamStore::new();
        store
            .add("a.w", Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap())
            .unwrap();
        store.add("a.b", Tensor::from_vec(&[2], vec![-1.0, 0.5]).unwrap()).unwrap();
        save_checkpoint(&store, &path).unwrap();

        let mut other = ParamStore::new();
        other.add("a.w", Tensor::zeros(&[2, 2])).unwrap();
        other.add("a.b", Tensor::zeros(&[2])).unwrap();
        load_checkpoint_into(&mut other, &path).unwrap();
        assert_eq!(other.value(other.find("a.w").unwrap()).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn missing_parameter_is_a_format_error() {
        let dir = std::env::temp_dir().join("nn_core_ckpt_missing");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("w.tclw");

        let mut store = ParamStore::new();
        store.add("x", Tensor::zeros(&[1])).unwrap();
        save_checkpoint(&store, &path).unwrap();

        let mut other = ParamStore::new();
        other.add("x", Tensor::zeros(&[1])).unwrap();
        other.add("y", Tensor::zeros(&[1])).unwrap();
        assert!(matches!(load_checkpoint_into(&mut other, &path), Err(NnError::Format(_))));
    }

    #[test]
    fn hash_is_stable() {
        let dir = std::env::temp_dir().join("nn_core_ckpt_hash");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("w.tclw");
        let mut store = ParamStore::new();
        store.add("x", Tensor::from_vec(&[1], vec![0.25]).unwrap()).unwrap();
        save_checkpoint(&store, &path).unwrap();
        let h1 = sha256_hex_of_file(&path).unwrap();
        let h2 = sha256_hex_of_file(&path).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(h1.len(), 64);
    }
}
