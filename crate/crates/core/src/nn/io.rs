//! Parameter files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! u64 tensor_count
//! repeat tensor_count: u64 rank, then `rank` x u64 dims
//! f64 data of every tensor, concatenated in header order
//! ```

use std::fs;
use std::path::Path;

use super::mlp::Mlp;
use crate::{Error, Result};

pub type ShapedData = (Vec<usize>, Vec<f64>);

pub fn encode_tensors(tensors: &[(&[usize], &[f64])]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    for (shape, data) in tensors {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeData {
                shape: shape.to_vec(),
                expected: n,
                actual: data.len(),
            });
        }
        buf.extend_from_slice(&(shape.len() as u64).to_le_bytes());
        for &d in *shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for (_, data) in tensors {
        for v in *data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<ShapedData>> {
    let mut cursor = 0usize;
    let mut next_u64 = |what: &str| -> Result<u64> {
        let chunk = bytes.get(cursor..cursor + 8).ok_or_else(|| Error::Parse {
            what: "parameter file",
            line: 0,
            reason: format!("truncated while reading {what}"),
        })?;
        cursor += 8;
        Ok(u64::from_le_bytes(chunk.try_into().unwrap()))
    };
    let count = next_u64("tensor count")? as usize;
    let mut shapes = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let rank = next_u64("rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            shape.push(next_u64("dimension")? as usize);
        }
        shapes.push(shape);
    }
    let mut out = Vec::with_capacity(shapes.len());
    for shape in shapes {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_bits(next_u64("data")?));
        }
        out.push((shape, data));
    }
    if cursor != bytes.len() {
        return Err(Error::Parse {
            what: "parameter file",
            line: 0,
            reason: format!("{} trailing bytes", bytes.len() - cursor),
        });
    }
    Ok(out)
}

impl Mlp {
    pub fn save(&self, path: &Path) -> Result<()> {
        let shapes = self.param_shapes();
        let mut tensors = Vec::with_capacity(shapes.len());
        let mut offset = 0;
        for shape in &shapes {
            let n: usize = shape.iter().product();
            tensors.push((shape.as_slice(), &self.params()[offset..offset + n]));
            offset += n;
        }
        let bytes = encode_tensors(&tensors)?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Overwrite this network's parameters from a file written by [`Mlp::save`].
    /// The stored shapes must match the architecture exactly.
    pub fn load_params(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let tensors = decode_tensors(&bytes)?;
        let expected = self.param_shapes();
        if tensors.len() != expected.len() || tensors.iter().zip(&expected).any(|((s, _), e)| s != e) {
            return Err(Error::invalid(format!(
                "{}: stored shapes do not match network {:?}",
                path.display(),
                self.widths()
            )));
        }
        let flat: Vec<f64> = tensors.into_iter().flat_map(|(_, d)| d).collect();
        self.set_params(&flat)
    }
}
