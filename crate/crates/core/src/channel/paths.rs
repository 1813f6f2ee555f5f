//! Synthetic sparse multipath channels on a uniform linear array.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::matrix::CMatrix;
use crate::error::{Error, Result};

/// Sparsity preset for generated channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Short delay spread and a narrow angular cluster (indoor-like).
    Concentrated,
    /// Delays across most of the window and wide angles (outdoor-like).
    Dispersed,
}

impl Scenario {
    /// Fraction of the delay window that path delays are drawn from.
    fn delay_fraction(self) -> f64 {
        match self {
            Scenario::Concentrated => 0.25,
            Scenario::Dispersed => 0.8,
        }
    }

    /// Decay constant of the exponential power-delay profile, as a fraction of
    /// the window.
    fn decay_fraction(self) -> f64 {
        match self {
            Scenario::Concentrated => 0.08,
            Scenario::Dispersed => 0.3,
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concentrated" | "indoor" => Ok(Scenario::Concentrated),
            "dispersed" | "outdoor" => Ok(Scenario::Dispersed),
            other => Err(Error::Config(format!("unknown scenario `{other}`"))),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scenario::Concentrated => "concentrated",
            Scenario::Dispersed => "dispersed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub gain: Complex64,
    /// Seconds.
    pub delay: f64,
    /// Radians from broadside.
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Draws `num_paths` paths with delays inside `delay_window` seconds. Gains
/// are scaled so that the total path power is 1.
///
/// The window is the span whose delays land in the retained delay rows,
/// `Nc / (Ñc·Δf)`.
pub fn generate_paths(
    seed: u64,
    num_paths: usize,
    scenario: Scenario,
    delay_window: f64,
) -> Result<PathSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_paths_with(&mut rng, num_paths, scenario, delay_window)
}

pub(crate) fn generate_paths_with<R: Rng>(
    rng: &mut R,
    num_paths: usize,
    scenario: Scenario,
    delay_window: f64,
) -> Result<PathSet> {
    if num_paths == 0 {
        return Err(Error::Config("a channel needs at least one path".into()));
    }
    if !(delay_window.is_finite() && delay_window > 0.0) {
        return Err(Error::Config(format!(
            "delay window must be positive, got {delay_window}"
        )));
    }
    let max_delay = scenario.delay_fraction() * delay_window;
    let decay = scenario.decay_fraction() * delay_window;
    let cluster = rng.random_range(-PI / 12.0..PI / 12.0);

    let mut paths = Vec::with_capacity(num_paths);
    for _ in 0..num_paths {
        let delay = rng.random_range(0.0..max_delay);
        let angle = match scenario {
            Scenario::Concentrated => cluster + rng.random_range(-0.1..0.1),
            Scenario::Dispersed => rng.random_range(-PI / 2.0 * 0.9..PI / 2.0 * 0.9),
        };
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        let amplitude = (-delay / decay).exp().sqrt() / 2f64.sqrt();
        paths.push(Path {
            gain: Complex64::new(re, im) * amplitude,
            delay,
            angle,
        });
    }
    let power: f64 = paths.iter().map(|p| p.gain.norm_sqr()).sum();
    if power > 0.0 {
        let norm = power.sqrt().recip();
        for p in &mut paths {
            p.gain *= norm;
        }
    }
    Ok(PathSet { paths })
}

/// Spatial-frequency CSI `H̃` of shape `Ñc × Nt`.
///
/// Row `n` holds `h_nᴴ`, the conjugate transpose of the per-subcarrier
/// channel vector `h_n = Σ_l g_l · e^{−j2π n τ_l Δf} · a(θ_l)`, with the
/// half-wavelength ULA steering vector `a(θ)_t = e^{−jπ t sin θ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawChannel {
    pub matrix: CMatrix,
}

impl RawChannel {
    pub fn subcarriers(&self) -> usize {
        self.matrix.rows()
    }

    pub fn antennas(&self) -> usize {
        self.matrix.cols()
    }
}

pub fn synthesize_raw(
    paths: &PathSet,
    subcarriers: usize,
    antennas: usize,
    spacing_hz: f64,
) -> Result<RawChannel> {
    if subcarriers == 0 || antennas == 0 {
        return Err(Error::Config("channel dimensions must be positive".into()));
    }
    let mut m = CMatrix::zeros(subcarriers, antennas);
    for p in &paths.paths {
        let steering: Vec<Complex64> = (0..antennas)
            .map(|t| Complex64::from_polar(1.0, -PI * t as f64 * p.angle.sin()))
            .collect();
        for n in 0..subcarriers {
            let phase = Complex64::from_polar(1.0, -2.0 * PI * n as f64 * p.delay * spacing_hz);
            let coeff = p.gain * phase;
            let row = &mut m.data_mut()[n * antennas..(n + 1) * antennas];
            for (h, a) in row.iter_mut().zip(&steering) {
                *h += (coeff * a).conj();
            }
        }
    }
    if !m.is_finite() {
        return Err(Error::NonFinite { op: "synthesize_raw" });
    }
    Ok(RawChannel { matrix: m })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(gain: Complex64, delay: f64, angle: f64) -> PathSet {
        PathSet {
            paths: vec![Path { gain, delay, angle }],
        }
    }

    #[test]
    fn rejects_zero_paths() {
        assert!(generate_paths(7, 0, Scenario::Concentrated, 1e-6).is_err());
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = generate_paths(7, 8, Scenario::Dispersed, 1e-6).unwrap();
        let b = generate_paths(7, 8, Scenario::Dispersed, 1e-6).unwrap();
        let c = generate_paths(8, 8, Scenario::Dispersed, 1e-6).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        assert_ne!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&c).unwrap()
        );
    }

    #[test]
    fn delays_respect_the_window() {
        let window = 2e-6;
        for scenario in [Scenario::Concentrated, Scenario::Dispersed] {
            let ps = generate_paths(3, 50, scenario, window).unwrap();
            assert!(ps.paths.iter().all(|p| (0.0..window).contains(&p.delay)));
        }
    }

    #[test]
    fn broadside_path_has_constant_rows() {
        let raw = synthesize_raw(&single(Complex64::new(0.5, -0.2), 3e-7, 0.0), 16, 8, 15e3).unwrap();
        for n in 0..16 {
            let row = raw.matrix.row(n);
            assert!(row.iter().all(|z| (z - row[0]).norm() < 1e-12));
        }
    }

    #[test]
    fn zero_delay_gives_identical_rows() {
        let raw = synthesize_raw(&single(Complex64::new(1.0, 0.3), 0.0, 0.4), 16, 8, 15e3).unwrap();
        for n in 1..16 {
            assert_eq!(raw.matrix.row(n), raw.matrix.row(0));
        }
    }

    #[test]
    fn synthesis_is_a_superposition_of_paths() {
        let ps = generate_paths(11, 3, Scenario::Dispersed, 2e-6).unwrap();
        let whole = synthesize_raw(&ps, 32, 8, 15e3).unwrap();
        let mut sum = CMatrix::zeros(32, 8);
        for p in &ps.paths {
            let part = synthesize_raw(&PathSet { paths: vec![*p] }, 32, 8, 15e3).unwrap();
            sum = &sum + &part.matrix;
        }
        assert!(whole.matrix.distance(&sum) < 1e-12);
    }
}
