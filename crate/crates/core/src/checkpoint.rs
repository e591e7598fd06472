//! Binary model checkpoints.
//!
//! Layout (all integers u32 little-endian, reals f64 little-endian):
//!
//! ```text
//! "VKMN0001"
//! d, d_j, d_e, d_w, M, K
//! V                                  word vocabulary size
//! word_table, W_t, W_e, W_u, A_sr, A_st, A_rt, W_o   row-major
//! V words, K answers                 each as u32 length + UTF-8 bytes
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelDims, ModelParams, ParamSet};
use crate::numeric::Matrix;

pub const MAGIC: &[u8; 8] = b"VKMN0001";

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    put_u32(out, s.len())?;
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

pub fn to_bytes(params: &ModelParams) -> Result<Vec<u8>> {
    let d = &params.dims;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    for v in [d.d, d.d_j, d.d_e, d.d_w, d.slots, d.answers, params.words.len()] {
        put_u32(&mut out, v)?;
    }
    for m in params.tensors.iter() {
        for x in m.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    for s in params.words.iter().chain(&params.answers) {
        put_str(&mut out, s)?;
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|e| Error::Checkpoint(format!("invalid UTF-8: {e}")))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let dims = ModelDims {
        d: r.u32()?,
        d_j: r.u32()?,
        d_e: r.u32()?,
        d_w: r.u32()?,
        slots: r.u32()?,
        answers: r.u32()?,
    };
    let vocab = r.u32()?;
    let shapes: Vec<(usize, usize)> = ParamSet::zeros(&ModelDims { answers: 0, ..dims }, 0)
        .iter()
        .map(Matrix::shape)
        .collect();
    let mut mats = Vec::with_capacity(shapes.len());
    for (i, (rows, cols)) in shapes.into_iter().enumerate() {
        let rows = match i {
            0 => vocab,
            7 => dims.answers,
            _ => rows,
        };
        let n = rows
            .checked_mul(cols)
            .filter(|&n| n.saturating_mul(8) <= buf.len())
            .ok_or_else(|| Error::Checkpoint("matrix size exceeds file".into()))?;
        let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        mats.push(Matrix::from_vec(rows, cols, data)?);
    }
    let words = (0..vocab).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    let answers = (0..dims.answers).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    if r.pos != buf.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    ModelParams::from_parts(dims, words, answers, ParamSet::from_slice(&mats)?)
}

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(params)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    from_bytes(&fs::read(path)?)
}
