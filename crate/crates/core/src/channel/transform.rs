//! Angular-delay transform `H = F_d · H̃ · F_aᴴ` with unitary DFT matrices,
//! and delay-row truncation.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::matrix::CMatrix;
use super::paths::RawChannel;
use crate::error::{Error, Result};

/// FFT plans for one `(Ñc, Nt)` geometry.
pub struct AngularDelayPlan {
    subcarriers: usize,
    antennas: usize,
    delay_fwd: Arc<dyn Fft<f64>>,
    delay_inv: Arc<dyn Fft<f64>>,
    angle_fwd: Arc<dyn Fft<f64>>,
    angle_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for AngularDelayPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AngularDelayPlan")
            .field("subcarriers", &self.subcarriers)
            .field("antennas", &self.antennas)
            .finish()
    }
}

impl AngularDelayPlan {
    pub fn new(subcarriers: usize, antennas: usize) -> Result<Self> {
        if subcarriers == 0 || antennas == 0 {
            return Err(Error::Config("transform dimensions must be positive".into()));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            subcarriers,
            antennas,
            delay_fwd: planner.plan_fft_forward(subcarriers),
            delay_inv: planner.plan_fft_inverse(subcarriers),
            angle_fwd: planner.plan_fft_forward(antennas),
            angle_inv: planner.plan_fft_inverse(antennas),
        })
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    fn check(&self, m: &CMatrix) -> Result<()> {
        if m.rows() != self.subcarriers || m.cols() != self.antennas {
            return Err(Error::shape(
                "angular_delay_transform",
                format!(
                    "plan is {}x{}, matrix is {}x{}",
                    self.subcarriers,
                    self.antennas,
                    m.rows(),
                    m.cols()
                ),
            ));
        }
        Ok(())
    }

    /// Applies `col_fft` down every column and `row_fft` along every row, then
    /// scales by `1/√(Ñc·Nt)`.
    fn apply(&self, m: &CMatrix, col_fft: &dyn Fft<f64>, row_fft: &dyn Fft<f64>) -> CMatrix {
        let (rows, cols) = (self.subcarriers, self.antennas);
        let mut out = m.clone();
        let mut column = vec![Complex64::new(0.0, 0.0); rows];
        for c in 0..cols {
            for (r, slot) in column.iter_mut().enumerate() {
                *slot = out.data()[r * cols + c];
            }
            col_fft.process(&mut column);
            for (r, v) in column.iter().enumerate() {
                out.data_mut()[r * cols + c] = *v;
            }
        }
        for row in out.data_mut().chunks_exact_mut(cols) {
            row_fft.process(row);
        }
        let norm = 1.0 / ((rows * cols) as f64).sqrt();
        for z in out.data_mut() {
            *z *= norm;
        }
        out
    }

    /// `F_d · H̃ · F_aᴴ`: forward DFT over subcarriers, inverse DFT over
    /// antennas, both unitary.
    pub fn forward(&self, raw: &CMatrix) -> Result<CMatrix> {
        self.check(raw)?;
        Ok(self.apply(raw, self.delay_fwd.as_ref(), self.angle_inv.as_ref()))
    }

    /// `F_dᴴ · H · F_a`.
    pub fn inverse(&self, ad: &CMatrix) -> Result<CMatrix> {
        self.check(ad)?;
        Ok(self.apply(ad, self.delay_inv.as_ref(), self.angle_fwd.as_ref()))
    }
}

pub fn angular_delay_transform(raw: &RawChannel, plan: &AngularDelayPlan) -> Result<CMatrix> {
    plan.forward(&raw.matrix)
}

/// Keeps the first `rows` delay rows and reports the retained energy share.
///
/// An all-zero input retains ratio 1.
pub fn truncate(full: &CMatrix, rows: usize) -> Result<(CMatrix, f64)> {
    let kept = full.top_rows(rows)?;
    let total = full.energy();
    let ratio = if total > 0.0 { kept.energy() / total } else { 1.0 };
    Ok((kept, ratio))
}
