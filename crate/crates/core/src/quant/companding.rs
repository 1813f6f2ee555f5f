//! μ-law companding on magnitudes in `[0, 1]`.

use crate::error::{Error, Result};

fn check_unit(op: &'static str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain { op, value: x })
    }
}

pub(crate) fn check_mu(mu: f64) -> Result<()> {
    if mu.is_finite() && mu > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("mu must be positive, got {mu}")))
    }
}

/// `Φ(x) = ln(1 + μx) / ln(1 + μ)` for `x ∈ [0, 1]`.
pub fn compand(x: f64, mu: f64) -> Result<f64> {
    check_unit("compand", x)?;
    check_mu(mu)?;
    Ok(compand_unchecked(x, mu))
}

/// `Φ⁻¹(y) = ((1 + μ)^y − 1) / μ` for `y ∈ [0, 1]`.
pub fn expand(y: f64, mu: f64) -> Result<f64> {
    check_unit("expand", y)?;
    check_mu(mu)?;
    Ok(expand_unchecked(y, mu))
}

#[inline]
pub(crate) fn compand_unchecked(x: f64, mu: f64) -> f64 {
    (mu * x).ln_1p() / mu.ln_1p()
}

#[inline]
pub(crate) fn expand_unchecked(y: f64, mu: f64) -> f64 {
    (y * mu.ln_1p()).exp_m1() / mu
}

/// Piecewise-linear approximation of `Φ` through `K + 1` knots uniform in `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    mu: f64,
    knots_y: Vec<f64>,
}

impl Polyline {
    pub fn new(mu: f64, segments: usize) -> Result<Self> {
        check_mu(mu)?;
        if segments < 2 {
            return Err(Error::Config(format!(
                "polyline needs at least 2 segments, got {segments}"
            )));
        }
        let knots_y = (0..=segments)
            .map(|k| compand_unchecked(k as f64 / segments as f64, mu))
            .collect();
        Ok(Self { mu, knots_y })
    }

    pub fn segments(&self) -> usize {
        self.knots_y.len() - 1
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn compand(&self, x: f64) -> Result<f64> {
        check_unit("polyline_compand", x)?;
        Ok(self.compand_unchecked(x))
    }

    pub fn expand(&self, y: f64) -> Result<f64> {
        check_unit("polyline_expand", y)?;
        Ok(self.expand_unchecked(y))
    }

    pub(crate) fn compand_unchecked(&self, x: f64) -> f64 {
        let k = self.segments();
        let pos = x * k as f64;
        let i = (pos.floor() as usize).min(k - 1);
        let t = pos - i as f64;
        self.knots_y[i] + t * (self.knots_y[i + 1] - self.knots_y[i])
    }

    /// Exact inverse of [`Polyline::compand`].
    pub(crate) fn expand_unchecked(&self, y: f64) -> f64 {
        let k = self.segments();
        // First segment whose upper knot reaches y.
        let i = self.knots_y[1..]
            .partition_point(|&upper| upper < y)
            .min(k - 1);
        let (y0, y1) = (self.knots_y[i], self.knots_y[i + 1]);
        let t = if y1 > y0 { (y - y0) / (y1 - y0) } else { 0.0 };
        (i as f64 + t) / k as f64
    }

    /// Largest `|polyline(x) − Φ(x)|` over `[0, 1]`.
    ///
    /// `Φ` is concave, so on each segment the chord lies below it and the gap
    /// peaks where `Φ'(x)` equals the chord slope:
    /// `x* = 1 / (s · ln(1 + μ)) − 1 / μ`. For `μ = 50, K = 8` this is
    /// `0.1185045…`, attained in the first segment.
    pub fn max_deviation(&self) -> f64 {
        let k = self.segments();
        let log_term = self.mu.ln_1p();
        (0..k)
            .map(|i| {
                let a = i as f64 / k as f64;
                let b = (i + 1) as f64 / k as f64;
                let (ya, yb) = (self.knots_y[i], self.knots_y[i + 1]);
                let slope = (yb - ya) / (b - a);
                let x = (1.0 / (slope * log_term) - 1.0 / self.mu).clamp(a, b);
                compand_unchecked(x, self.mu) - (ya + slope * (x - a))
            })
            .fold(0.0, f64::max)
    }
}

/// Convenience wrapper: `K`-segment polyline companding of a single value.
pub fn polyline_compand(x: f64, mu: f64, segments: usize) -> Result<f64> {
    Polyline::new(mu, segments)?.compand(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        assert_eq!(compand(0.0, 50.0).unwrap(), 0.0);
        assert_eq!(compand(1.0, 50.0).unwrap(), 1.0);
        assert_eq!(expand(0.0, 50.0).unwrap(), 0.0);
        assert!((expand(1.0, 50.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reference_value() {
        // Independent evaluation: ln 6 / ln 51.
        let expected = 6f64.ln() / 51f64.ln();
        assert!((compand(0.1, 50.0).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.455_706_7).abs() < 1e-7);
    }

    #[test]
    fn round_trip_at_reference_point() {
        let y = compand(0.37, 50.0).unwrap();
        assert!((expand(y, 50.0).unwrap() - 0.37).abs() < 1e-9);
    }

    #[test]
    fn domain_violations() {
        assert!(matches!(compand(1.5, 50.0), Err(Error::Domain { .. })));
        assert!(matches!(expand(-0.1, 50.0), Err(Error::Domain { .. })));
        assert!(compand(0.5, 0.0).is_err());
        assert!(Polyline::new(50.0, 1).is_err());
    }

    #[test]
    fn polyline_passes_through_knots() {
        let p = Polyline::new(50.0, 8).unwrap();
        assert_eq!(p.compand(0.0).unwrap(), 0.0);
        assert_eq!(p.compand(1.0).unwrap(), 1.0);
        for k in 0..=8 {
            let x = k as f64 / 8.0;
            assert!((p.compand(x).unwrap() - compand(x, 50.0).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn polyline_inverse_round_trips() {
        let p = Polyline::new(50.0, 8).unwrap();
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            let back = p.expand(p.compand(x).unwrap()).unwrap();
            assert!((back - x).abs() < 1e-12, "x={x} back={back}");
        }
    }

    #[test]
    fn documented_bound_for_default_polyline() {
        let bound = Polyline::new(50.0, 8).unwrap().max_deviation();
        assert!((bound - 0.118_504_54).abs() < 1e-7, "{bound}");
    }
}
