//! Normalised angular-delay datasets and their binary file format.
//!
//! File layout, little-endian:
//!
//! ```text
//! magic   "CSIQ"   4 bytes
//! version u16      1
//! N       u32      sample count
//! Nc      u16      retained delay rows
//! Nt      u16      antennas
//! scale   f64      normalisation factor applied to every sample
//! body    N × Nc × Nt complex entries, row-major, each (re, im) as f32
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path as FsPath;

use num_complex::{Complex32, Complex64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::matrix::CMatrix;
use super::paths::{generate_paths_with, synthesize_raw, Scenario};
use super::transform::{truncate, AngularDelayPlan};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CSIQ";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 2 + 2 + 8;
const KIND: &str = "dataset";

/// One truncated, normalised angular-delay matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub matrix: CMatrix,
    /// Dataset-level factor that was applied to the raw matrix.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: usize,
    cols: usize,
    scale: f64,
    entries: Vec<Complex32>,
}

impl Dataset {
    /// Normalises truncated matrices with one global scale so that the largest
    /// real or imaginary component becomes 1. An all-zero set keeps scale 1.
    pub fn from_matrices(matrices: &[CMatrix]) -> Result<Self> {
        let first = matrices.first().ok_or(Error::Empty("dataset"))?;
        let (rows, cols) = (first.rows(), first.cols());
        if let Some(bad) = matrices.iter().find(|m| (m.rows(), m.cols()) != (rows, cols)) {
            return Err(Error::shape(
                "dataset",
                format!("{}x{} among {rows}x{cols}", bad.rows(), bad.cols()),
            ));
        }
        let peak = matrices
            .iter()
            .map(CMatrix::max_component)
            .fold(0.0, f64::max);
        if !peak.is_finite() {
            return Err(Error::NonFinite { op: "dataset" });
        }
        let scale = if peak > 0.0 { 1.0 / peak } else { 1.0 };
        let entries = matrices
            .iter()
            .flat_map(|m| m.data().iter())
            .map(|z| {
                let s = z * scale;
                Complex32::new(s.re as f32, s.im as f32)
            })
            .collect();
        Ok(Self {
            rows,
            cols,
            scale,
            entries,
        })
    }

    /// Builds a dataset from already-normalised entries.
    pub fn from_normalized(
        rows: usize,
        cols: usize,
        scale: f64,
        entries: Vec<Complex32>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || entries.len() % (rows * cols) != 0 {
            return Err(Error::shape(
                "dataset",
                format!("{} entries do not tile {rows}x{cols}", entries.len()),
            ));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Config(format!("dataset scale must be positive, got {scale}")));
        }
        Ok(Self {
            rows,
            cols,
            scale,
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len() / (self.rows * self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Retained delay rows `Nc`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Antennas `Nt`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Reals per sample, `2·Nc·Nt`.
    pub fn sample_width(&self) -> usize {
        2 * self.rows * self.cols
    }

    pub fn entries(&self) -> &[Complex32] {
        &self.entries
    }

    pub fn sample(&self, i: usize) -> ChannelSample {
        let n = self.rows * self.cols;
        let data = self.entries[i * n..(i + 1) * n]
            .iter()
            .map(|z| Complex64::new(z.re as f64, z.im as f64))
            .collect();
        ChannelSample {
            matrix: CMatrix::from_vec(self.rows, self.cols, data).expect("consistent shape"),
            scale: self.scale,
        }
    }

    /// Samples in `range` as real vectors `[real plane | imaginary plane]`.
    pub fn real_planes(&self, range: Range<usize>) -> Vec<f32> {
        let n = self.rows * self.cols;
        let mut out = Vec::with_capacity(range.len() * 2 * n);
        for i in range {
            let sample = &self.entries[i * n..(i + 1) * n];
            out.extend(sample.iter().map(|z| z.re));
            out.extend(sample.iter().map(|z| z.im));
        }
        out
    }

    /// Consecutive, non-overlapping subsets of the given sizes.
    pub fn split(&self, sizes: &[usize]) -> Result<Vec<Dataset>> {
        let total: usize = sizes.iter().sum();
        if total > self.len() {
            return Err(Error::Config(format!(
                "split sizes sum to {total} but the dataset has {} samples",
                self.len()
            )));
        }
        let n = self.rows * self.cols;
        let mut start = 0;
        Ok(sizes
            .iter()
            .map(|&size| {
                let part = Dataset {
                    rows: self.rows,
                    cols: self.cols,
                    scale: self.scale,
                    entries: self.entries[start * n..(start + size) * n].to_vec(),
                };
                start += size;
                part
            })
            .collect())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let overflow = |what: &str| Error::format(KIND, format!("dimension overflow: {what}"));
        let n = u32::try_from(self.len()).map_err(|_| overflow("sample count"))?;
        let rows = u16::try_from(self.rows).map_err(|_| overflow("Nc"))?;
        let cols = u16::try_from(self.cols).map_err(|_| overflow("Nt"))?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&n.to_le_bytes())?;
        w.write_all(&rows.to_le_bytes())?;
        w.write_all(&cols.to_le_bytes())?;
        w.write_all(&self.scale.to_le_bytes())?;
        let mut body = Vec::with_capacity(self.entries.len() * 8);
        for z in &self.entries {
            body.extend_from_slice(&z.re.to_le_bytes());
            body.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&body)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        read_exact(r, &mut header)?;
        if &header[0..4] != MAGIC {
            return Err(Error::format(KIND, "bad magic"));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != VERSION {
            return Err(Error::format(KIND, format!("unsupported version {version}")));
        }
        let n = u32::from_le_bytes(header[6..10].try_into().unwrap()) as usize;
        let rows = u16::from_le_bytes([header[10], header[11]]) as usize;
        let cols = u16::from_le_bytes([header[12], header[13]]) as usize;
        let scale = f64::from_le_bytes(header[14..22].try_into().unwrap());
        let body_len = n
            .checked_mul(rows)
            .and_then(|x| x.checked_mul(cols))
            .and_then(|x| x.checked_mul(8))
            .ok_or_else(|| Error::format(KIND, "dimension overflow"))?;
        let mut body = Vec::new();
        r.take(body_len as u64).read_to_end(&mut body)?;
        if body.len() != body_len {
            return Err(Error::format(
                KIND,
                format!("truncated body: {} of {body_len} bytes", body.len()),
            ));
        }
        let entries = body
            .chunks_exact(8)
            .map(|c| {
                Complex32::new(
                    f32::from_le_bytes(c[0..4].try_into().unwrap()),
                    f32::from_le_bytes(c[4..8].try_into().unwrap()),
                )
            })
            .collect();
        if rows == 0 || cols == 0 {
            return Err(Error::format(KIND, "zero dimension"));
        }
        Dataset::from_normalized(rows, cols, scale, entries)
            .map_err(|e| Error::format(KIND, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<FsPath>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    /// SHA-256 of the serialised dataset, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        let digest = Sha256::digest(&buf);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format(KIND, "truncated header"),
        _ => Error::Io(e),
    })
}

/// Geometry and sparsity of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    /// `Ñc`.
    pub subcarriers: usize,
    /// `Nt`.
    pub antennas: usize,
    /// `Nc`.
    pub rows: usize,
    pub spacing_hz: f64,
    pub num_paths: usize,
    pub scenario: Scenario,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            subcarriers: 256,
            antennas: 32,
            rows: 32,
            spacing_hz: 15e3,
            num_paths: 6,
            scenario: Scenario::Concentrated,
        }
    }
}

impl ChannelConfig {
    /// Delay span that maps onto the retained rows, `Nc / (Ñc·Δf)`.
    pub fn delay_window(&self) -> f64 {
        self.rows as f64 / (self.subcarriers as f64 * self.spacing_hz)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.rows > self.subcarriers {
            return Err(Error::Config(format!(
                "need 0 < Nc <= Ñc, got Nc={} Ñc={}",
                self.rows, self.subcarriers
            )));
        }
        if self.antennas == 0 {
            return Err(Error::Config("need at least one antenna".into()));
        }
        if !(self.spacing_hz.is_finite() && self.spacing_hz > 0.0) {
            return Err(Error::Config("sub-carrier spacing must be positive".into()));
        }
        Ok(())
    }
}

/// Generates one truncated (not yet normalised) angular-delay matrix per
/// sample; sample `i` draws from stream `i` of the seed.
pub fn generate_matrices(
    config: &ChannelConfig,
    seed: u64,
    count: usize,
) -> Result<(Vec<CMatrix>, Vec<f64>)> {
    config.validate()?;
    let plan = AngularDelayPlan::new(config.subcarriers, config.antennas)?;
    let window = config.delay_window();
    let mut matrices = Vec::with_capacity(count);
    let mut retained = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let paths = generate_paths_with(&mut rng, config.num_paths, config.scenario, window)?;
        let raw = synthesize_raw(&paths, config.subcarriers, config.antennas, config.spacing_hz)?;
        let full = plan.forward(&raw.matrix)?;
        let (kept, ratio) = truncate(&full, config.rows)?;
        matrices.push(kept);
        retained.push(ratio);
    }
    Ok((matrices, retained))
}

/// Generates and normalises a dataset; also returns the mean retained-energy
/// ratio of the truncation.
pub fn generate_dataset(config: &ChannelConfig, seed: u64, count: usize) -> Result<(Dataset, f64)> {
    let (matrices, retained) = generate_matrices(config, seed, count)?;
    let mean = retained.iter().sum::<f64>() / retained.len().max(1) as f64;
    Ok((Dataset::from_matrices(&matrices)?, mean))
}
