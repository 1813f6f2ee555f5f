use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::engine::{LrKind, LrSchedule};
use crate::error::{Error, Result};
use crate::kv;
use crate::models::AdaptorKind;
use crate::quant::{CompandMode, QuantizerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// End-to-end MSE with the quantizer in the loop.
    Stage1,
    /// Frozen encoder; adaptor and decoder finetuned with the quantization
    /// regularizer.
    Stage2,
    /// Single stage, MSE plus an L1 penalty on the codeword.
    L1,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Stage1 => "stage1",
            Regime::Stage2 => "stage2",
            Regime::L1 => "l1",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stage1" => Ok(Regime::Stage1),
            "stage2" => Ok(Regime::Stage2),
            "l1" => Ok(Regime::L1),
            other => Err(Error::Config(format!("unknown regime `{other}`"))),
        }
    }
}

/// Per-epoch weight of the stage-2 quantization regularizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaScheduler {
    /// Linear `start → peak` over the first half, then linear `peak → 0`.
    Piecewise { start: f64, peak: f64 },
    Constant(f64),
    /// Linear `start → 0`.
    Decreasing { start: f64 },
}

impl AlphaScheduler {
    pub const PIECEWISE: AlphaScheduler = AlphaScheduler::Piecewise {
        start: 0.01,
        peak: 0.05,
    };
    pub const CONSTANT: AlphaScheduler = AlphaScheduler::Constant(0.03);
    pub const DECREASING: AlphaScheduler = AlphaScheduler::Decreasing { start: 0.05 };

    /// `α` at `epoch` of a span ending at `total`.
    pub fn alpha_at(&self, epoch: usize, total: usize) -> Result<f64> {
        if epoch > total {
            return Err(Error::Config(format!("epoch {epoch} beyond span {total}")));
        }
        if let AlphaScheduler::Constant(c) = *self {
            return Ok(c);
        }
        if total == 0 {
            return Err(Error::Config("scheduler span must be positive".into()));
        }
        let (e, t) = (epoch as f64, total as f64);
        Ok(match *self {
            AlphaScheduler::Piecewise { start, peak } => {
                let mid = t / 2.0;
                if e < mid {
                    start + (peak - start) * e / mid
                } else {
                    peak * (t - e) / (t - mid)
                }
            }
            AlphaScheduler::Decreasing { start } => start * (t - e) / t,
            AlphaScheduler::Constant(_) => unreachable!(),
        })
    }
}

impl fmt::Display for AlphaScheduler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            s if s == Self::PIECEWISE => f.write_str("piecewise"),
            s if s == Self::DECREASING => f.write_str("decreasing"),
            AlphaScheduler::Constant(c) => write!(f, "constant:{c}"),
            AlphaScheduler::Piecewise { start, peak } => write!(f, "piecewise:{start}:{peak}"),
            AlphaScheduler::Decreasing { start } => write!(f, "decreasing:{start}"),
        }
    }
}

impl FromStr for AlphaScheduler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad alpha scheduler `{s}`"));
        let num = |x: &str| x.parse::<f64>().map_err(|_| bad());
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["piecewise"] => Ok(Self::PIECEWISE),
            ["piecewise", a, b] => Ok(AlphaScheduler::Piecewise {
                start: num(a)?,
                peak: num(b)?,
            }),
            ["constant"] => Ok(Self::CONSTANT),
            ["constant", c] => Ok(AlphaScheduler::Constant(num(c)?)),
            ["decreasing"] => Ok(Self::DECREASING),
            ["decreasing", a] => Ok(AlphaScheduler::Decreasing { start: num(a)? }),
            _ => Err(bad()),
        }
    }
}

/// Orientation of the stage-2 regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    /// `‖v − a‖² / ‖v‖²`, penalising quantization error.
    Reciprocal,
    /// `‖v‖² / ‖v − a‖²`, the literal signal-to-noise form.
    AsPrinted,
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regularizer::Reciprocal => "reciprocal",
            Regularizer::AsPrinted => "as-printed",
        })
    }
}

impl FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reciprocal" => Ok(Regularizer::Reciprocal),
            "as-printed" => Ok(Regularizer::AsPrinted),
            other => Err(Error::Config(format!("unknown regularizer `{other}`"))),
        }
    }
}

fn compand_name(mode: CompandMode) -> String {
    match mode {
        CompandMode::Exact => "exact".into(),
        CompandMode::Uniform => "uniform".into(),
        CompandMode::Polyline { segments } => format!("polyline:{segments}"),
    }
}

pub fn parse_compand(s: &str) -> Result<CompandMode> {
    match s.split_once(':') {
        None if s == "exact" => Ok(CompandMode::Exact),
        None if s == "uniform" => Ok(CompandMode::Uniform),
        None if s == "polyline" => Ok(CompandMode::Polyline {
            segments: QuantizerConfig::DEFAULT_SEGMENTS,
        }),
        Some(("polyline", k)) => Ok(CompandMode::Polyline {
            segments: k
                .parse()
                .map_err(|_| Error::Config(format!("bad segment count `{k}`")))?,
        }),
        _ => Err(Error::Config(format!("unknown compand mode `{s}`"))),
    }
}

/// Everything that determines a training run besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub regime: Regime,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub cr: usize,
    pub hidden: Vec<usize>,
    /// Quantizer bits in the loop; `None` trains without quantization.
    pub bits: Option<u32>,
    pub mu: f64,
    pub compand: CompandMode,
    pub adaptor: AdaptorKind,
    pub alpha: AlphaScheduler,
    pub regularizer: Regularizer,
    pub lambda: f64,
    pub lr_kind: LrKind,
    pub lr_max: f64,
    pub lr_min: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            regime: Regime::Stage1,
            epochs: 100,
            batch_size: 200,
            seed: 1,
            cr: 16,
            hidden: vec![1024],
            bits: Some(4),
            mu: QuantizerConfig::DEFAULT_MU,
            compand: CompandMode::Exact,
            adaptor: AdaptorKind::None,
            alpha: AlphaScheduler::PIECEWISE,
            regularizer: Regularizer::Reciprocal,
            lambda: DEFAULT_LAMBDA,
            lr_kind: LrKind::Cosine,
            lr_max: 1e-3,
            lr_min: 1e-5,
        }
    }
}

/// L1 weight chosen by the desk-scale sweep.
pub const DEFAULT_LAMBDA: f64 = 0.01;

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("λ must be ≥ 0, got {}", self.lambda)));
        }
        if !(self.lr_max > 0.0 && self.lr_min >= 0.0 && self.lr_min <= self.lr_max) {
            return Err(Error::Config("need 0 ≤ lr_min ≤ lr_max, lr_max > 0".into()));
        }
        if let Some(q) = self.quantizer_config() {
            q.validate()?;
        }
        match self.regime {
            Regime::Stage2 if self.adaptor == AdaptorKind::None => Err(Error::Config(
                "stage 2 needs a network adaptor".into(),
            )),
            Regime::Stage2 if self.bits.is_none() => {
                Err(Error::Config("stage 2 needs a quantizer".into()))
            }
            Regime::L1 if self.adaptor != AdaptorKind::None => Err(Error::Config(
                "the L1 regime has no network adaptor".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn quantizer_config(&self) -> Option<QuantizerConfig> {
        self.bits.map(|bits| QuantizerConfig {
            mu: self.mu,
            bits,
            mode: self.compand,
        })
    }

    pub fn lr_schedule(&self, total_steps: usize) -> LrSchedule {
        match self.lr_kind {
            LrKind::Cosine => LrSchedule::cosine(self.lr_max, self.lr_min, total_steps),
            LrKind::Constant => LrSchedule::constant(self.lr_max, total_steps),
        }
    }

    /// Canonical `key = value` text; parsing it gives back the same config.
    pub fn to_text(&self) -> String {
        let lines = [
            ("regime", self.regime.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("seed", self.seed.to_string()),
            ("cr", self.cr.to_string()),
            ("hidden", kv::format_list(&self.hidden)),
            ("bits", self.bits.map_or("none".into(), |b| b.to_string())),
            ("mu", self.mu.to_string()),
            ("compand", compand_name(self.compand)),
            ("adaptor", self.adaptor.to_string()),
            ("alpha", self.alpha.to_string()),
            ("regularizer", self.regularizer.to_string()),
            ("lambda", self.lambda.to_string()),
            (
                "lr_schedule",
                match self.lr_kind {
                    LrKind::Cosine => "cosine".into(),
                    LrKind::Constant => "constant".into(),
                },
            ),
            ("lr_max", self.lr_max.to_string()),
            ("lr_min", self.lr_min.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Parses config text. Missing keys take their default values.
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_map(&kv::parse(text)?, "")
    }

    pub(crate) fn from_map(
        map: &std::collections::BTreeMap<String, String>,
        prefix: &str,
    ) -> Result<Self> {
        let known = [
            "regime", "epochs", "batch_size", "seed", "cr", "hidden", "bits", "mu", "compand",
            "adaptor", "alpha", "regularizer", "lambda", "lr_schedule", "lr_max", "lr_min",
        ];
        for key in map.keys() {
            if let Some(k) = key.strip_prefix(prefix) {
                if !known.contains(&k) {
                    return Err(Error::Config(format!("unknown config key `{key}`")));
                }
            }
        }
        let key = |k: &str| format!("{prefix}{k}");
        let mut c = Self::default();
        if let Some(v) = kv::get(map, &key("regime"))? {
            c.regime = v;
        }
        if let Some(v) = kv::get(map, &key("epochs"))? {
            c.epochs = v;
        }
        if let Some(v) = kv::get(map, &key("batch_size"))? {
            c.batch_size = v;
        }
        if let Some(v) = kv::get(map, &key("seed"))? {
            c.seed = v;
        }
        if let Some(v) = kv::get(map, &key("cr"))? {
            c.cr = v;
        }
        if let Some(v) = map.get(&key("hidden")) {
            c.hidden = kv::parse_list(v)?;
        }
        if let Some(v) = map.get(&key("bits")) {
            c.bits = if v == "none" {
                None
            } else {
                Some(
                    v.parse()
                        .map_err(|_| Error::Config(format!("bad bit width `{v}`")))?,
                )
            };
        }
        if let Some(v) = kv::get(map, &key("mu"))? {
            c.mu = v;
        }
        if let Some(v) = map.get(&key("compand")) {
            c.compand = parse_compand(v)?;
        }
        if let Some(v) = kv::get(map, &key("adaptor"))? {
            c.adaptor = v;
        }
        if let Some(v) = kv::get(map, &key("alpha"))? {
            c.alpha = v;
        }
        if let Some(v) = kv::get(map, &key("regularizer"))? {
            c.regularizer = v;
        }
        if let Some(v) = kv::get(map, &key("lambda"))? {
            c.lambda = v;
        }
        if let Some(v) = map.get(&key("lr_schedule")) {
            c.lr_kind = match v.as_str() {
                "cosine" => LrKind::Cosine,
                "constant" => LrKind::Constant,
                other => return Err(Error::Config(format!("unknown lr schedule `{other}`"))),
            };
        }
        if let Some(v) = kv::get(map, &key("lr_max"))? {
            c.lr_max = v;
        }
        if let Some(v) = kv::get(map, &key("lr_min"))? {
            c.lr_min = v;
        }
        c.validate()?;
        Ok(c)
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_text().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_reference_points() {
        let s = AlphaScheduler::PIECEWISE;
        assert_eq!(s.alpha_at(0, 100).unwrap(), 0.01);
        assert_eq!(s.alpha_at(50, 100).unwrap(), 0.05);
        assert_eq!(s.alpha_at(100, 100).unwrap(), 0.0);
        assert!((s.alpha_at(25, 100).unwrap() - 0.03).abs() < 1e-15);
        assert!((s.alpha_at(75, 100).unwrap() - 0.025).abs() < 1e-15);
        assert!(s.alpha_at(101, 100).is_err());
    }

    #[test]
    fn piecewise_is_continuous_at_the_peak() {
        let s = AlphaScheduler::PIECEWISE;
        // Odd span: the peak falls between epochs.
        let below = s.alpha_at(24, 49).unwrap();
        let above = s.alpha_at(25, 49).unwrap();
        assert!(below < 0.05 && above < 0.05);
        assert!((below - above).abs() < 0.004);
    }

    #[test]
    fn constant_and_decreasing() {
        for e in 0..=10 {
            assert_eq!(AlphaScheduler::CONSTANT.alpha_at(e, 10).unwrap(), 0.03);
        }
        let d = AlphaScheduler::DECREASING;
        assert_eq!(d.alpha_at(0, 10).unwrap(), 0.05);
        assert_eq!(d.alpha_at(10, 10).unwrap(), 0.0);
        assert!((d.alpha_at(5, 10).unwrap() - 0.025).abs() < 1e-15);
    }

    #[test]
    fn scheduler_text_round_trip() {
        for s in [
            AlphaScheduler::PIECEWISE,
            AlphaScheduler::CONSTANT,
            AlphaScheduler::DECREASING,
            AlphaScheduler::Constant(0.0),
            AlphaScheduler::Piecewise {
                start: 0.02,
                peak: 0.1,
            },
        ] {
            assert_eq!(s.to_string().parse::<AlphaScheduler>().unwrap(), s);
        }
        assert!("sometimes".parse::<AlphaScheduler>().is_err());
    }

    #[test]
    fn config_text_round_trip() {
        let c = TrainConfig {
            regime: Regime::Stage2,
            adaptor: AdaptorKind::ParaBottleFc,
            bits: Some(6),
            compand: CompandMode::Polyline { segments: 8 },
            alpha: AlphaScheduler::Constant(0.03),
            hidden: vec![256, 64],
            ..TrainConfig::default()
        };
        let back = TrainConfig::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        let nq = TrainConfig {
            bits: None,
            ..TrainConfig::default()
        };
        assert_eq!(TrainConfig::from_text(&nq.to_text()).unwrap(), nq);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::from_text("regime = stage2\nadaptor = none").is_err());
        assert!(TrainConfig::from_text("regime = l1\nadaptor = bottle_fc").is_err());
        assert!(TrainConfig::from_text("lambda = -1").is_err());
        assert!(TrainConfig::from_text("bogus = 1").is_err());
        assert!(TrainConfig::from_text("bits = 1").is_err());
        assert_eq!(TrainConfig::from_text("").unwrap(), TrainConfig::default());
    }
}
