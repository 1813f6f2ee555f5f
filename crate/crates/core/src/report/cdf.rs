use std::io::Write;

use crate::error::{Error, Result};

/// Empirical CDF of codeword elements.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfCurve {
    /// Distinct sample values, ascending.
    pub values: Vec<f64>,
    /// `P(X ≤ values[i])`.
    pub probabilities: Vec<f64>,
    /// `P(|X| < 0.1)`.
    pub near_zero: f64,
}

pub const NEAR_ZERO: f64 = 0.1;

/// CDF over every element of every codeword.
pub fn codeword_cdf(elements: &[f64]) -> Result<CdfCurve> {
    if elements.is_empty() {
        return Err(Error::Empty("codeword_cdf"));
    }
    if elements.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { op: "codeword_cdf" });
    }
    let mut sorted = elements.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut values = Vec::new();
    let mut probabilities = Vec::new();
    for (i, &x) in sorted.iter().enumerate() {
        if sorted.get(i + 1) == Some(&x) {
            continue;
        }
        values.push(x);
        probabilities.push((i + 1) as f64 / n);
    }
    let near = elements.iter().filter(|x| x.abs() < NEAR_ZERO).count();
    Ok(CdfCurve {
        values,
        probabilities,
        near_zero: near as f64 / n,
    })
}

impl CdfCurve {
    /// `P(X ≤ x)`, right-continuous.
    pub fn at(&self, x: f64) -> f64 {
        match self.values.partition_point(|&v| v <= x) {
            0 => 0.0,
            k => self.probabilities[k - 1],
        }
    }

    /// Two-column `value,probability` CSV.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "value,probability")?;
        for (v, p) in self.values.iter().zip(&self.probabilities) {
            writeln!(w, "{v},{p}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero_is_a_step() {
        let c = codeword_cdf(&[0.0; 10]).unwrap();
        assert_eq!(c.values, vec![0.0]);
        assert_eq!(c.probabilities, vec![1.0]);
        assert_eq!(c.near_zero, 1.0);
        assert_eq!(c.at(-1e-9), 0.0);
        assert_eq!(c.at(0.0), 1.0);
    }

    #[test]
    fn uniform_grid_near_zero_share() {
        // Midpoints of 2000 equal cells on [−1, 1].
        let xs: Vec<f64> = (0..2000).map(|i| -1.0 + (i as f64 + 0.5) / 1000.0).collect();
        let c = codeword_cdf(&xs).unwrap();
        assert!((c.near_zero - 0.1).abs() < 1e-12);
        assert!((c.at(0.0) - 0.5).abs() < 1e-12);
        assert_eq!(*c.probabilities.last().unwrap(), 1.0);
        assert!(c.probabilities.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(codeword_cdf(&[]).is_err());
    }

    #[test]
    fn csv_export() {
        let c = codeword_cdf(&[0.5, -0.5]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "value,probability\n-0.5,0.5\n0.5,1\n");
    }
}
