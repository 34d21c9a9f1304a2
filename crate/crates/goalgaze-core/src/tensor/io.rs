//! Flat binary tensor files. Layout: magic `GGTN`, format version (u32 LE),
//! rank (u32 LE), one u32 LE extent per dimension, then the data as
//! little-endian f32. Every weight file in the artifact uses this format.

use super::Tensor;
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"GGTN";
pub const VERSION: u32 = 1;

pub fn write_tensor<W: Write>(w: &mut W, t: &Tensor<f32>) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor<f32>> {
    let mut offset = 0u64;
    let mut magic = [0u8; 4];
    read_exact_at(r, &mut magic, &mut offset, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format { offset: 0, msg: format!("bad magic {magic:?}, expected GGTN") });
    }
    let version = read_u32(r, &mut offset, "version")?;
    if version != VERSION {
        return Err(Error::Format { offset: 4, msg: format!("unsupported version {version}") });
    }
    let rank = read_u32(r, &mut offset, "rank")? as usize;
    if rank == 0 || rank > 8 {
        return Err(Error::Format { offset: 8, msg: format!("implausible rank {rank}") });
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u32(r, &mut offset, "extent")? as usize);
    }
    let numel: usize = shape.iter().product();
    let mut data = vec![0f32; numel];
    for v in data.iter_mut() {
        let mut buf = [0u8; 4];
        read_exact_at(r, &mut buf, &mut offset, "data")?;
        *v = f32::from_le_bytes(buf);
    }
    // Trailing bytes mean the header lied about the shape.
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format { offset, msg: "trailing bytes after tensor data".into() });
    }
    Tensor::new(shape, data)
}

pub fn save_tensor(path: &Path, t: &Tensor<f32>) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_tensor(&mut f, t)
}

pub fn load_tensor(path: &Path) -> Result<Tensor<f32>> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_tensor(&mut f)
}

fn read_u32<R: Read>(r: &mut R, offset: &mut u64, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact_at(r, &mut buf, offset, what)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_exact_at<R: Read>(r: &mut R, buf: &mut [u8], offset: &mut u64, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| Error::Format {
        offset: *offset,
        msg: format!("truncated while reading {what}: {e}"),
    })?;
    *offset += buf.len() as u64;
    Ok(())
}
