//! Binary checkpoint file.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic    "CSQK"            4 bytes
//! version  u16               currently 1
//! header   u32 len + UTF-8   free-form `key = value` lines (model/config)
//! steps    u64               Adam step counter
//! groups   u32 count, then per group: u16 len + UTF-8 name, u8 frozen
//! params   u32 count, then per parameter:
//!            u16 len + UTF-8 name, u16 len + UTF-8 group,
//!            u32 ndim, ndim × u32 dims,
//!            values, first moments, second moments as f32
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::params::{Param, ParamSet};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CSQK";
const VERSION: u16 = 1;
const KIND: &str = "checkpoint";

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| Error::format(KIND, "name too long"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn write_f32s<W: Write, T: Real>(w: &mut W, t: &Tensor<T>) -> Result<()> {
    let mut buf = Vec::with_capacity(t.len() * 4);
    for x in t.data() {
        buf.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_checkpoint<W: Write, T: Real>(
    w: &mut W,
    header: &str,
    params: &ParamSet<T>,
) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let hlen = u32::try_from(header.len()).map_err(|_| Error::format(KIND, "header too long"))?;
    w.write_all(&hlen.to_le_bytes())?;
    w.write_all(header.as_bytes())?;
    w.write_all(&params.adam_steps().to_le_bytes())?;

    let groups = params.frozen_map();
    w.write_all(&(groups.len() as u32).to_le_bytes())?;
    for (name, &frozen) in groups {
        write_str(w, name)?;
        w.write_all(&[frozen as u8])?;
    }

    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (_, p) in params.iter() {
        write_str(w, &p.name)?;
        write_str(w, &p.group)?;
        let shape = p.value.shape();
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &d in shape {
            let d = u32::try_from(d).map_err(|_| Error::format(KIND, "dimension overflow"))?;
            w.write_all(&d.to_le_bytes())?;
        }
        write_f32s(w, &p.value)?;
        write_f32s(w, &p.first_moment)?;
        write_f32s(w, &p.second_moment)?;
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::format(KIND, "truncated file"),
            _ => Error::Io(e),
        })?;
        Ok(buf)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let v = self.bytes(N)?;
        Ok(v.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn string(&mut self, len: usize) -> Result<String> {
        String::from_utf8(self.bytes(len)?).map_err(|_| Error::format(KIND, "invalid UTF-8"))
    }

    fn short_string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        self.string(len)
    }

    fn tensor<T: Real>(&mut self, shape: &[usize], len: usize) -> Result<Tensor<T>> {
        let raw = self.bytes(len * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| T::of_f64(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect();
        Tensor::new(shape.to_vec(), data)
    }
}

/// Reads a checkpoint, returning its header text and parameters.
pub fn read_checkpoint<R: Read, T: Real>(r: R) -> Result<(String, ParamSet<T>)> {
    let mut rd = Reader { inner: r };
    if &rd.array::<4>()? != MAGIC {
        return Err(Error::format(KIND, "bad magic"));
    }
    let version = rd.u16()?;
    if version != VERSION {
        return Err(Error::format(KIND, format!("unsupported version {version}")));
    }
    let hlen = rd.u32()? as usize;
    let header = rd.string(hlen)?;
    let step = rd.u64()?;

    let ngroups = rd.u32()?;
    let mut frozen = BTreeMap::new();
    for _ in 0..ngroups {
        let name = rd.short_string()?;
        frozen.insert(name, rd.u8()? != 0);
    }

    let nparams = rd.u32()?;
    let mut params = Vec::with_capacity(nparams.min(1024) as usize);
    for _ in 0..nparams {
        let name = rd.short_string()?;
        let group = rd.short_string()?;
        let ndim = rd.u32()? as usize;
        if ndim > 8 {
            return Err(Error::format(KIND, format!("`{name}` has {ndim} dimensions")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(rd.u32()? as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= (1 << 30))
            .ok_or_else(|| Error::format(KIND, format!("`{name}` dimension overflow")))?;
        let value = rd.tensor(&shape, len)?;
        let first_moment = rd.tensor(&shape, len)?;
        let second_moment = rd.tensor(&shape, len)?;
        frozen.entry(group.clone()).or_insert(false);
        params.push(Param {
            name,
            group,
            value,
            grad: None,
            first_moment,
            second_moment,
        });
    }
    Ok((header, ParamSet::from_parts(params, frozen, step)))
}
