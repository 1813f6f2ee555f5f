use crate::error::{Error, Result};

/// How a batch expectation of an energy ratio is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Expectation {
    /// Mean of per-sample ratios.
    #[default]
    PerSample,
    /// Ratio of summed numerators to summed denominators.
    RatioOfMeans,
}

/// Batch-averaged energy ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioStats {
    pub linear: f64,
    /// Samples dropped because their denominator was zero.
    pub excluded: usize,
    pub samples: usize,
}

impl RatioStats {
    pub fn db(&self) -> f64 {
        to_db(self.linear)
    }
}

/// `10·log₁₀(x)`; `0 → −∞`, `+∞ → +∞`.
pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub(crate) fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Averages `numerator / denominator` pairs. If every sample is excluded the
/// result is `+∞`.
pub(crate) fn batch_ratio(
    pairs: impl IntoIterator<Item = (f64, f64)>,
    expectation: Expectation,
) -> RatioStats {
    let (mut sum, mut num_sum, mut den_sum) = (0.0, 0.0, 0.0);
    let (mut used, mut excluded) = (0usize, 0usize);
    for (num, den) in pairs {
        if den > 0.0 {
            sum += num / den;
            num_sum += num;
            den_sum += den;
            used += 1;
        } else {
            excluded += 1;
        }
    }
    let linear = if used == 0 {
        f64::INFINITY
    } else {
        match expectation {
            Expectation::PerSample => sum / used as f64,
            Expectation::RatioOfMeans => num_sum / den_sum,
        }
    };
    RatioStats {
        linear,
        excluded,
        samples: used + excluded,
    }
}

fn check_batch(op: &'static str, a: &[f64], b: &[f64], width: usize) -> Result<()> {
    if width == 0 || a.len() % width != 0 {
        return Err(Error::shape(op, format!("{} values in rows of {width}", a.len())));
    }
    if a.len() != b.len() {
        return Err(Error::shape(op, format!("{} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Empty(op));
    }
    Ok(())
}

/// Normalised MSE `E[‖H − Ĥ‖² / ‖H‖²]` over rows of `width` reals.
///
/// Rows whose reference is all zero are excluded and counted.
pub fn nmse(
    reference: &[f64],
    estimate: &[f64],
    width: usize,
    expectation: Expectation,
) -> Result<RatioStats> {
    check_batch("nmse", reference, estimate, width)?;
    let stats = batch_ratio(
        reference
            .chunks_exact(width)
            .zip(estimate.chunks_exact(width))
            .map(|(h, e)| (sq_dist(h, e), sq_norm(h))),
        expectation,
    );
    if stats.excluded == stats.samples {
        return Err(Error::Empty("nmse (every reference is zero)"));
    }
    Ok(stats)
}

/// Quantization SNR `E[‖v‖² / ‖v − v_q‖²]` over rows of `width` values.
///
/// Rows reconstructed without error have an infinite ratio; they are
/// excluded and counted. If all rows are exact the result is `+∞`.
pub fn qsnr(
    original: &[f64],
    quantized: &[f64],
    width: usize,
    expectation: Expectation,
) -> Result<RatioStats> {
    check_batch("qsnr", original, quantized, width)?;
    Ok(batch_ratio(
        original
            .chunks_exact(width)
            .zip(quantized.chunks_exact(width))
            .map(|(v, q)| (sq_norm(v), sq_dist(v, q))),
        expectation,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qsnr_reference_values() {
        let s = qsnr(&[1.0, 0.0], &[0.9, 0.0], 2, Expectation::PerSample).unwrap();
        assert!((s.linear - 100.0).abs() < 1e-9);
        assert!((s.db() - 20.0).abs() < 1e-9);

        let exact = qsnr(&[0.3, 0.4], &[0.3, 0.4], 2, Expectation::PerSample).unwrap();
        assert_eq!(exact.linear, f64::INFINITY);
        assert_eq!(exact.excluded, 1);
    }

    #[test]
    fn qsnr_batch_mean_of_ratios() {
        // Ratios 100 and 300 → 200.
        let v = [1.0, 0.0, 3f64.sqrt(), 0.0];
        let q = [0.9, 0.0, 3f64.sqrt() - 0.1, 0.0];
        let s = qsnr(&v, &q, 2, Expectation::PerSample).unwrap();
        assert!((s.linear - 200.0).abs() < 1e-6);
        assert!((s.db() - 23.0103).abs() < 1e-4);
    }

    #[test]
    fn qsnr_excludes_exact_rows_from_mean() {
        let v = [1.0, 0.0, 0.5, 0.5];
        let q = [0.9, 0.0, 0.5, 0.5];
        let s = qsnr(&v, &q, 2, Expectation::PerSample).unwrap();
        assert_eq!(s.excluded, 1);
        assert!((s.linear - 100.0).abs() < 1e-9);
    }

    #[test]
    fn nmse_reference_values() {
        let h = [0.3, -0.2, 0.1, 0.7];
        let exact = nmse(&h, &h, 4, Expectation::PerSample).unwrap();
        assert_eq!(exact.linear, 0.0);
        assert_eq!(exact.db(), f64::NEG_INFINITY);

        let zero = nmse(&h, &[0.0; 4], 4, Expectation::PerSample).unwrap();
        assert!((zero.linear - 1.0).abs() < 1e-15);
        assert_eq!(zero.db(), 0.0);

        let scaled: Vec<f64> = h.iter().map(|x| 0.9 * x).collect();
        let s = nmse(&h, &scaled, 4, Expectation::PerSample).unwrap();
        assert!((s.linear - 0.01).abs() < 1e-12);
        assert!((s.db() + 20.0).abs() < 1e-9);
    }

    #[test]
    fn db_of_one_hundredth_is_exact() {
        assert_eq!(to_db(0.01), -20.0);
    }

    #[test]
    fn nmse_zero_reference_rows_are_counted() {
        let h = [0.0, 0.0, 1.0, 0.0];
        let e = [0.5, 0.5, 0.0, 0.0];
        let s = nmse(&h, &e, 2, Expectation::PerSample).unwrap();
        assert_eq!(s.excluded, 1);
        assert!((s.linear - 1.0).abs() < 1e-15);
        assert!(nmse(&[0.0; 2], &[1.0; 2], 2, Expectation::PerSample).is_err());
    }

    #[test]
    fn ratio_of_means_differs_from_mean_of_ratios() {
        let v = [1.0, 0.0, 3f64.sqrt(), 0.0];
        let q = [0.9, 0.0, 3f64.sqrt() - 0.1, 0.0];
        let s = qsnr(&v, &q, 2, Expectation::RatioOfMeans).unwrap();
        // (1 + 3) / (0.01 + 0.01)
        assert!((s.linear - 200.0).abs() < 1e-6);
        let v2 = [1.0, 0.0, 1.0, 0.0];
        let q2 = [0.9, 0.0, 0.8, 0.0];
        let per = qsnr(&v2, &q2, 2, Expectation::PerSample).unwrap();
        let rom = qsnr(&v2, &q2, 2, Expectation::RatioOfMeans).unwrap();
        assert!((per.linear - 62.5).abs() < 1e-9);
        assert!((rom.linear - 40.0).abs() < 1e-9);
    }
}
