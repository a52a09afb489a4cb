//! Binary model checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! b"SGNN" | version: u32 | n_dims: u32 | dims: n_dims × u32
//! | input scaling: dims[0] × (lo: f64, hi: f64)
//! | per layer: weights (out × in, row-major) f64, biases (out) f64
//! | seed: u64 | epoch: u64 | loss: f64
//! ```

use std::io::{self, Read, Write};

use super::{param_count, InputScaling, MLPParams};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SGNN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: MLPParams,
    pub scaling: InputScaling,
    pub epoch: u64,
    pub loss: f64,
}

pub fn write_checkpoint<W: Write>(ck: &Checkpoint, mut out: W) -> io::Result<()> {
    let p = &ck.params;
    let mut buf = Vec::with_capacity(64 + 8 * p.len());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(p.layer_dims.len() as u32).to_le_bytes());
    for &d in &p.layer_dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for k in 0..p.input_dim() {
        buf.extend_from_slice(&ck.scaling.lo[k].to_le_bytes());
        buf.extend_from_slice(&ck.scaling.hi[k].to_le_bytes());
    }
    for v in &p.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&p.seed.to_le_bytes());
    buf.extend_from_slice(&ck.epoch.to_le_bytes());
    buf.extend_from_slice(&ck.loss.to_le_bytes());
    out.write_all(&buf)
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> io::Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| invalid("checkpoint truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> io::Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> io::Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> io::Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint<R: Read>(mut input: R) -> io::Result<Checkpoint> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(4)? != CHECKPOINT_MAGIC {
        return Err(invalid("not a checkpoint (bad magic)"));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(invalid(format!("unsupported checkpoint version {version}")));
    }
    let n_dims = c.u32()? as usize;
    if !(2..=64).contains(&n_dims) {
        return Err(invalid(format!("implausible layer count {n_dims}")));
    }
    let dims = (0..n_dims).map(|_| c.u32().map(|d| d as usize)).collect::<io::Result<Vec<_>>>()?;
    if dims.contains(&0) {
        return Err(invalid("zero-width layer"));
    }
    let mut lo = Vec::with_capacity(dims[0]);
    let mut hi = Vec::with_capacity(dims[0]);
    for _ in 0..dims[0] {
        lo.push(c.f64()?);
        hi.push(c.f64()?);
    }
    let count = param_count(&dims);
    if count.checked_mul(8).is_none_or(|b| b > bytes.len()) {
        return Err(invalid("checkpoint truncated"));
    }
    let values = (0..count).map(|_| c.f64()).collect::<io::Result<Vec<_>>>()?;
    let seed = c.u64()?;
    let epoch = c.u64()?;
    let loss = c.f64()?;
    if c.pos != bytes.len() {
        return Err(invalid("trailing bytes after checkpoint"));
    }
    Ok(Checkpoint {
        params: MLPParams {
            layer_dims: dims,
            values,
            seed,
        },
        scaling: InputScaling { lo, hi },
        epoch,
        loss,
    })
}
