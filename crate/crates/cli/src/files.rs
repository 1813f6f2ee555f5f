//! Codeword and bit-stream files exchanged by `quantize` / `dequantize`.
//!
//! Codeword file: magic `CSCW`, version u16, count u32, width u32, then
//! `count × width` values as f64. Bit-stream file: magic `CSBS`, version u16,
//! bits u8, companding mode u8 (0 exact, 1 uniform, 2 polyline), segments u16,
//! μ f64, count u32, width u32, bit length u64, then the packed bytes.
//! Everything is little-endian.

use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use csiq_core::quant::{BitStream, CompandMode, QuantizerConfig};

const CODEWORD_MAGIC: &[u8; 4] = b"CSCW";
const STREAM_MAGIC: &[u8; 4] = b"CSBS";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CodewordFile {
    pub width: usize,
    pub values: Vec<f64>,
}

impl CodewordFile {
    pub fn count(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.values.len() / self.width
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(14 + 8 * self.values.len());
        out.extend_from_slice(CODEWORD_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.count() as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, CODEWORD_MAGIC)?;
        let count = r.u32()? as usize;
        let width = r.u32()? as usize;
        let n = count.checked_mul(width).context("codeword file dimensions overflow")?;
        ensure!(
            r.remaining() == n * 8,
            "codeword file holds {} bytes of values, header promises {}",
            r.remaining(),
            n * 8
        );
        let values = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        Ok(Self { width, values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamFile {
    pub quantizer: QuantizerConfig,
    pub count: usize,
    pub width: usize,
    pub stream: BitStream,
}

impl StreamFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let (mode, segments) = match self.quantizer.mode {
            CompandMode::Exact => (0u8, 0u16),
            CompandMode::Uniform => (1, 0),
            CompandMode::Polyline { segments } => (2, segments as u16),
        };
        let mut out = Vec::with_capacity(38 + self.stream.bytes().len());
        out.extend_from_slice(STREAM_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.quantizer.bits as u8);
        out.push(mode);
        out.extend_from_slice(&segments.to_le_bytes());
        out.extend_from_slice(&self.quantizer.mu.to_le_bytes());
        out.extend_from_slice(&(self.count as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.stream.bit_len() as u64).to_le_bytes());
        out.extend_from_slice(self.stream.bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, STREAM_MAGIC)?;
        let bits = u32::from(r.u8()?);
        let mode = match (r.u8()?, r.u16()?) {
            (0, _) => CompandMode::Exact,
            (1, _) => CompandMode::Uniform,
            (2, s) => CompandMode::Polyline { segments: s as usize },
            (m, _) => bail!("unknown companding mode {m}"),
        };
        let mu = r.f64()?;
        let count = r.u32()? as usize;
        let width = r.u32()? as usize;
        let bit_len = r.u64()? as usize;
        ensure!(
            count.checked_mul(width).and_then(|n| n.checked_mul(bits as usize)) == Some(bit_len),
            "bit length {bit_len} does not match {count} codewords of {width} {bits}-bit values"
        );
        let stream = BitStream::from_bytes(r.rest().to_vec(), bit_len)?;
        let quantizer = QuantizerConfig { mu, bits, mode };
        quantizer.validate()?;
        Ok(Self {
            quantizer,
            count,
            width,
            stream,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        let mut r = Self { bytes, pos: 0 };
        let found = r.take(4)?;
        ensure!(found == magic, "bad magic {:?}, expected {:?}", found, magic);
        let version = r.u16()?;
        ensure!(version == VERSION, "unsupported version {version}");
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        ensure!(self.remaining() >= n, "file truncated at byte {}", self.pos);
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into()?))
    }
}
