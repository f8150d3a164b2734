//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"YNET"
//! version u32
//! count   u64
//! count x [ name_len u16 | name utf-8 | dtype u8 | rank u8 | dims u64 x rank | payload ]
//! config  u64 length | utf-8 json
//! ```
//!
//! dtype 0 is f32 (the training dtype); f64 writes dtype 1. Tensor order is
//! whatever the caller passes, so saving the same state twice yields
//! byte-identical files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{ModelError, Result};
use ynet_tensor::{Scalar, Tensor};

const MAGIC: &[u8; 4] = b"YNET";
const VERSION: u32 = 1;

pub fn save<T: Scalar>(
    path: &Path,
    entries: &[(String, Tensor<T>)],
    config_json: &str,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(entries.len() as u64).to_le_bytes())?;
    for (name, tensor) in entries {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u16::MAX as usize {
            return Err(ModelError::Checkpoint(format!("tensor name too long: {name}")));
        }
        w.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
        w.write_all(name_bytes)?;
        w.write_all(&[T::DTYPE_CODE])?;
        let shape = tensor.shape();
        w.write_all(&[shape.len() as u8])?;
        for &dim in shape {
            w.write_all(&(dim as u64).to_le_bytes())?;
        }
        for &v in tensor.data().iter() {
            w.write_all(&v.to_le_bytes_vec())?;
        }
    }
    let cfg = config_json.as_bytes();
    w.write_all(&(cfg.len() as u64).to_le_bytes())?;
    w.write_all(cfg)?;
    w.flush()?;
    Ok(())
}

pub struct Loaded<T> {
    pub tensors: Vec<(String, Vec<T>, Vec<usize>)>,
    pub config_json: String,
}

pub fn load<T: Scalar>(path: &Path) -> Result<Loaded<T>> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ModelError::Checkpoint(format!(
            "{} is not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let count = read_u64(&mut r)? as usize;

    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u16(&mut r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| ModelError::Checkpoint("tensor name is not utf-8".into()))?;

        let mut dtype = [0u8; 1];
        r.read_exact(&mut dtype)?;
        if dtype[0] != T::DTYPE_CODE {
            return Err(ModelError::Checkpoint(format!(
                "tensor `{name}` has dtype code {}, expected {}",
                dtype[0],
                T::DTYPE_CODE
            )));
        }
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank)?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            shape.push(read_u64(&mut r)? as usize);
        }
        let len: usize = shape.iter().product();
        let mut payload = vec![0u8; len * T::BYTE_WIDTH];
        r.read_exact(&mut payload)?;
        let data: Vec<T> = payload
            .chunks_exact(T::BYTE_WIDTH)
            .map(T::from_le_slice)
            .collect();
        tensors.push((name, data, shape));
    }

    let cfg_len = read_u64(&mut r)? as usize;
    let mut cfg = vec![0u8; cfg_len];
    r.read_exact(&mut cfg)?;
    let config_json = String::from_utf8(cfg)
        .map_err(|_| ModelError::Checkpoint("embedded config is not utf-8".into()))?;

    Ok(Loaded {
        tensors,
        config_json,
    })
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
