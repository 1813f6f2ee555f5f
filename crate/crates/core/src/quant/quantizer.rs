//! Sign-magnitude scalar quantizer with μ-law (or uniform) companding.
//!
//! A `B`-bit code holds one sign bit (MSB, set for negative values) and a
//! `B − 1`-bit magnitude cell `k = min(⌊Φ(|v|)·L⌋, L − 1)`, `L = 2^(B−1)`.
//! Cell `k` reconstructs to `Φ⁻¹((k + ½)/L)`, the midpoint of the cell in the
//! companded domain.

use super::companding::{check_mu, compand_unchecked, expand_unchecked, Polyline};
use crate::error::{Error, Result};

/// How magnitudes are mapped onto the uniform grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CompandMode {
    /// The closed-form μ-law curve.
    Exact,
    /// Segmented polyline through `segments + 1` knots of the μ-law curve.
    Polyline { segments: usize },
    /// No companding; a plain uniform quantizer used as a reference.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerConfig {
    pub mu: f64,
    pub bits: u32,
    pub mode: CompandMode,
}

impl QuantizerConfig {
    pub const DEFAULT_MU: f64 = 50.0;
    pub const DEFAULT_SEGMENTS: usize = 8;

    pub fn mu_law(bits: u32) -> Self {
        Self {
            mu: Self::DEFAULT_MU,
            bits,
            mode: CompandMode::Exact,
        }
    }

    pub fn uniform(bits: u32) -> Self {
        Self {
            mu: Self::DEFAULT_MU,
            bits,
            mode: CompandMode::Uniform,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_mu(self.mu)?;
        if !(2..=16).contains(&self.bits) {
            return Err(Error::Config(format!(
                "bit width must be in 2..=16, got {}",
                self.bits
            )));
        }
        if let CompandMode::Polyline { segments } = self.mode {
            if segments < 2 {
                return Err(Error::Config(format!(
                    "polyline needs at least 2 segments, got {segments}"
                )));
            }
        }
        Ok(())
    }
}

/// A codeword: `M` real values in `[−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codeword {
    values: Vec<f64>,
}

impl Codeword {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Domain {
                op: "codeword",
                value: bad,
            });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedCodeword {
    pub indices: Vec<u32>,
    pub reconstruction: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Curve {
    MuLaw(f64),
    Polyline(Polyline),
    Identity,
}

impl Curve {
    fn compand(&self, x: f64) -> f64 {
        match self {
            Curve::MuLaw(mu) => compand_unchecked(x, *mu),
            Curve::Polyline(p) => p.compand_unchecked(x),
            Curve::Identity => x,
        }
    }

    fn expand(&self, y: f64) -> f64 {
        match self {
            Curve::MuLaw(mu) => expand_unchecked(y, *mu),
            Curve::Polyline(p) => p.expand_unchecked(y),
            Curve::Identity => y,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Quantizer {
    config: QuantizerConfig,
    curve: Curve,
    /// Magnitude reconstruction per cell.
    levels: Vec<f64>,
}

impl Quantizer {
    pub fn new(config: QuantizerConfig) -> Result<Self> {
        config.validate()?;
        let curve = match config.mode {
            CompandMode::Exact => Curve::MuLaw(config.mu),
            CompandMode::Polyline { segments } => {
                Curve::Polyline(Polyline::new(config.mu, segments)?)
            }
            CompandMode::Uniform => Curve::Identity,
        };
        let cells = 1usize << (config.bits - 1);
        let levels = (0..cells)
            .map(|k| curve.expand((k as f64 + 0.5) / cells as f64))
            .collect();
        Ok(Self {
            config,
            curve,
            levels,
        })
    }

    pub fn config(&self) -> &QuantizerConfig {
        &self.config
    }

    pub fn bits(&self) -> u32 {
        self.config.bits
    }

    /// Magnitude cells, `2^(B−1)`.
    pub fn cells(&self) -> usize {
        self.levels.len()
    }

    pub fn compand(&self, x: f64) -> f64 {
        self.curve.compand(x)
    }

    pub fn expand(&self, y: f64) -> f64 {
        self.curve.expand(y)
    }

    /// Magnitude boundaries `[lo, hi]` of cell `k` in the value domain.
    pub fn cell_bounds(&self, k: usize) -> (f64, f64) {
        let l = self.cells() as f64;
        (
            self.curve.expand(k as f64 / l),
            self.curve.expand((k + 1) as f64 / l),
        )
    }

    /// Magnitude reconstruction level of cell `k`.
    pub fn level(&self, k: usize) -> f64 {
        self.levels[k]
    }

    pub fn quantize_value(&self, v: f64) -> Result<u32> {
        if !(-1.0..=1.0).contains(&v) {
            return Err(Error::Domain {
                op: "quantize",
                value: v,
            });
        }
        let cells = self.cells();
        let y = self.curve.compand(v.abs());
        let k = ((y * cells as f64).floor() as usize).min(cells - 1);
        let sign = u32::from(v < 0.0);
        Ok((sign << (self.config.bits - 1)) | k as u32)
    }

    pub fn dequantize_value(&self, index: u32) -> Result<f64> {
        let bits = self.config.bits;
        if u64::from(index) >= 1u64 << bits {
            return Err(Error::IndexRange { index, bits });
        }
        let magnitude = self.levels[(index & ((1 << (bits - 1)) - 1)) as usize];
        Ok(if index >> (bits - 1) == 1 {
            -magnitude
        } else {
            magnitude
        })
    }

    /// Quantizes and reconstructs a value in one go.
    pub fn round_trip(&self, v: f64) -> Result<f64> {
        self.dequantize_value(self.quantize_value(v)?)
    }

    pub fn quantize(&self, v: &Codeword) -> Result<QuantizedCodeword> {
        let indices = v
            .values()
            .iter()
            .map(|&x| self.quantize_value(x))
            .collect::<Result<Vec<_>>>()?;
        let reconstruction = indices
            .iter()
            .map(|&i| self.dequantize_value(i))
            .collect::<Result<Vec<_>>>()?;
        Ok(QuantizedCodeword {
            indices,
            reconstruction,
        })
    }

    pub fn dequantize(&self, indices: &[u32]) -> Result<Codeword> {
        let values = indices
            .iter()
            .map(|&i| self.dequantize_value(i))
            .collect::<Result<Vec<_>>>()?;
        Ok(Codeword { values })
    }

    /// Worst-case magnitude error of the round trip.
    ///
    /// Each companded cell is split at its reconstruction point into two
    /// half-cells; the bound is the widest half-cell once mapped back through
    /// the expander.
    pub fn max_round_trip_error(&self) -> f64 {
        (0..self.cells())
            .map(|k| {
                let (lo, hi) = self.cell_bounds(k);
                let mid = self.levels[k];
                (mid - lo).max(hi - mid)
            })
            .fold(0.0, f64::max)
    }

    /// Width of the widest cell in the value domain.
    pub fn max_cell_width(&self) -> f64 {
        (0..self.cells())
            .map(|k| {
                let (lo, hi) = self.cell_bounds(k);
                hi - lo
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mu_law(bits: u32) -> Quantizer {
        Quantizer::new(QuantizerConfig::mu_law(bits)).unwrap()
    }

    #[test]
    fn zero_maps_to_first_positive_cell() {
        let q = mu_law(2);
        assert_eq!(q.quantize_value(0.0).unwrap(), 0);
        // Φ⁻¹(0.25) = (51^0.25 − 1)/50
        let expected = (51f64.powf(0.25) - 1.0) / 50.0;
        assert!((q.round_trip(0.0).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.033446).abs() < 1e-6);
    }

    #[test]
    fn half_maps_to_upper_cell_for_two_bits() {
        let q = mu_law(2);
        // Φ(0.5) = ln 26 / ln 51 ≈ 0.82862 → cell 1 → Φ⁻¹(0.75).
        assert_eq!(q.quantize_value(0.5).unwrap(), 1);
        let expected = (51f64.powf(0.75) - 1.0) / 50.0;
        assert!((q.round_trip(0.5).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.361688).abs() < 1e-6);
    }

    #[test]
    fn sign_symmetry() {
        let q = mu_law(4);
        for &x in &[0.01, 0.2, 0.5, 0.99, 1.0] {
            assert_eq!(q.round_trip(-x).unwrap(), -q.round_trip(x).unwrap());
        }
    }

    #[test]
    fn all_zero_indices_decode_to_first_level() {
        let q = mu_law(6);
        let cw = q.dequantize(&[0; 5]).unwrap();
        let expected = (51f64.powf(0.5 / 32.0) - 1.0) / 50.0;
        for &v in cw.values() {
            assert!((v - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn max_positive_index_is_last_midpoint() {
        let q = mu_law(4);
        let v = q.dequantize_value(7).unwrap();
        let expected = (51f64.powf(1.0 - 0.5 / 8.0) - 1.0) / 50.0;
        assert!((v - expected).abs() < 1e-15);
        assert!(v < 1.0);
    }

    #[test]
    fn rejects_out_of_range() {
        let q = mu_law(4);
        assert!(matches!(q.dequantize_value(16), Err(Error::IndexRange { .. })));
        assert!(matches!(q.quantize_value(1.01), Err(Error::Domain { .. })));
        assert!(q.quantize_value(f64::NAN).is_err());
        assert!(Quantizer::new(QuantizerConfig::mu_law(1)).is_err());
        assert!(Quantizer::new(QuantizerConfig::mu_law(17)).is_err());
    }

    #[test]
    fn polyline_mode_quantizes_consistently() {
        let q = Quantizer::new(QuantizerConfig {
            mu: 50.0,
            bits: 6,
            mode: CompandMode::Polyline { segments: 8 },
        })
        .unwrap();
        for i in 0..=200 {
            let v = -1.0 + i as f64 / 100.0;
            let idx = q.quantize_value(v).unwrap();
            let back = q.dequantize_value(idx).unwrap();
            assert_eq!(q.quantize_value(back).unwrap(), idx);
        }
    }
}
