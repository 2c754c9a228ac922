//! Flat binary checkpoint format for named parameter tensors.
//!
//! Layout (all integers little-endian u32):
//! version, entry count, then per entry: name length + UTF-8 bytes,
//! rank, dims, and the f32 data. Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Tensor;

const FORMAT_VERSION: u32 = 1;

pub fn save(path: &Path, entries: &[(String, &Tensor<f32>)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(entries.len() as u32).to_le_bytes()).map_err(io_err)?;
    for (name, tensor) in entries {
        let name_bytes = name.as_bytes();
        w.write_all(&(name_bytes.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(name_bytes).map_err(io_err)?;
        w.write_all(&(tensor.shape().len() as u32).to_le_bytes()).map_err(io_err)?;
        for &d in tensor.shape() {
            w.write_all(&(d as u32).to_le_bytes()).map_err(io_err)?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
        Ok(u32::from_le_bytes(buf))
    }

    let version = read_u32(&mut r, path)?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let count = read_u32(&mut r, path)? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r, path)? as usize;
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf).map_err(|e| Error::io(path, e))?;
        let name = String::from_utf8(name_buf)
            .map_err(|_| Error::Checkpoint("parameter name is not valid UTF-8".into()))?;
        let rank = read_u32(&mut r, path)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r, path)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut buf = [0u8; 4];
        for _ in 0..n {
            r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
            data.push(f32::from_le_bytes(buf));
        }
        entries.push((name, Tensor::from_vec(&shape, data)?));
    }
    Ok(entries)
}
