use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv;

/// Slope of the leaky ReLU between hidden layers.
pub const LEAKY_SLOPE: f64 = 0.3;

/// Network adaptor placed between the dequantizer and the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AdaptorKind {
    None,
    /// One residual bottleneck branch of width `M/8`.
    BottleFc,
    /// Two parallel residual bottleneck branches of widths `M/8` and `M/16`.
    ParaBottleFc,
    /// Three full-width layers with a residual connection.
    OffsetNet,
}

impl AdaptorKind {
    pub const ALL: [AdaptorKind; 4] = [
        AdaptorKind::None,
        AdaptorKind::BottleFc,
        AdaptorKind::ParaBottleFc,
        AdaptorKind::OffsetNet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AdaptorKind::None => "none",
            AdaptorKind::BottleFc => "bottle_fc",
            AdaptorKind::ParaBottleFc => "para_bottle_fc",
            AdaptorKind::OffsetNet => "offset_net",
        }
    }
}

impl fmt::Display for AdaptorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdaptorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AdaptorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown adaptor `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdaptorSpec {
    pub kind: AdaptorKind,
    /// Codeword length `M`.
    pub m: usize,
}

impl AdaptorSpec {
    pub fn new(kind: AdaptorKind, m: usize) -> Result<Self> {
        let spec = Self { kind, m };
        for d in spec.bottleneck_divisors() {
            if m % d != 0 {
                return Err(Error::Config(format!(
                    "{kind} needs M divisible by {d}, got {m}"
                )));
            }
        }
        if m == 0 {
            return Err(Error::Config("codeword length must be positive".into()));
        }
        Ok(spec)
    }

    /// Bottleneck widths as divisors of `M`.
    pub fn bottleneck_divisors(&self) -> &'static [usize] {
        match self.kind {
            AdaptorKind::BottleFc => &[8],
            AdaptorKind::ParaBottleFc => &[8, 16],
            AdaptorKind::None | AdaptorKind::OffsetNet => &[],
        }
    }

    /// Layer widths of each residual branch, input first.
    pub fn branches(&self) -> Vec<Vec<usize>> {
        let m = self.m;
        match self.kind {
            AdaptorKind::None => Vec::new(),
            AdaptorKind::OffsetNet => vec![vec![m, m, m, m]],
            _ => self
                .bottleneck_divisors()
                .iter()
                .map(|d| vec![m, m / d, m])
                .collect(),
        }
    }

    /// Weights plus biases.
    pub fn param_count(&self) -> usize {
        self.branches().iter().map(|b| layers_params(b)).sum()
    }

    /// Weight multiply-accumulates per sample; biases are not counted.
    pub fn flop_count(&self) -> usize {
        self.branches().iter().map(|b| layers_macs(b)).sum()
    }

    pub fn weight_count(&self) -> usize {
        self.flop_count()
    }
}

fn layers_params(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn layers_macs(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1]).sum()
}

/// Dense encoder `2·Nc·Nt → hidden… → M`; the decoder mirrors it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderSpec {
    /// Retained delay rows `Nc`.
    pub rows: usize,
    /// Antennas `Nt`.
    pub cols: usize,
    /// Codeword length `M`.
    pub m: usize,
    pub hidden: Vec<usize>,
}

impl EncoderSpec {
    /// `M = 2·Nc·Nt / CR`, which must be an integer.
    pub fn for_ratio(rows: usize, cols: usize, cr: usize, hidden: Vec<usize>) -> Result<Self> {
        let input = 2 * rows * cols;
        if cr == 0 || input == 0 || input % cr != 0 {
            return Err(Error::Config(format!(
                "compression ratio {cr} does not divide 2·{rows}·{cols}"
            )));
        }
        Self::new(rows, cols, input / cr, hidden)
    }

    pub fn new(rows: usize, cols: usize, m: usize, hidden: Vec<usize>) -> Result<Self> {
        if rows == 0 || cols == 0 || m == 0 || hidden.contains(&0) {
            return Err(Error::Config("network widths must be positive".into()));
        }
        Ok(Self {
            rows,
            cols,
            m,
            hidden,
        })
    }

    pub fn input_width(&self) -> usize {
        2 * self.rows * self.cols
    }

    pub fn compression_ratio(&self) -> f64 {
        self.input_width() as f64 / self.m as f64
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width()];
        w.extend(&self.hidden);
        w.push(self.m);
        w
    }

    pub fn decoder(&self) -> DecoderSpec {
        let mut widths = self.widths();
        widths.reverse();
        DecoderSpec { widths }
    }

    pub fn param_count(&self) -> usize {
        layers_params(&self.widths())
    }

    pub fn flop_count(&self) -> usize {
        layers_macs(&self.widths())
    }
}

/// Decoder layer widths, `M` first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderSpec {
    pub widths: Vec<usize>,
}

impl DecoderSpec {
    pub fn param_count(&self) -> usize {
        layers_params(&self.widths)
    }

    pub fn flop_count(&self) -> usize {
        layers_macs(&self.widths)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub encoder: EncoderSpec,
    pub adaptor: AdaptorSpec,
}

impl ModelSpec {
    pub fn new(encoder: EncoderSpec, kind: AdaptorKind) -> Result<Self> {
        let adaptor = AdaptorSpec::new(kind, encoder.m)?;
        Ok(Self { encoder, adaptor })
    }

    pub fn m(&self) -> usize {
        self.encoder.m
    }

    pub fn decoder(&self) -> DecoderSpec {
        self.encoder.decoder()
    }

    pub fn with_adaptor(&self, kind: AdaptorKind) -> Result<Self> {
        Self::new(self.encoder.clone(), kind)
    }

    /// Encoder, adaptor and decoder parameters.
    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.adaptor.param_count() + self.decoder().param_count()
    }

    pub fn flop_count(&self) -> usize {
        self.encoder.flop_count() + self.adaptor.flop_count() + self.decoder().flop_count()
    }

    /// `model.*` header lines.
    pub fn to_header(&self) -> String {
        format!(
            "model.rows = {}\nmodel.cols = {}\nmodel.m = {}\nmodel.hidden = {}\nmodel.adaptor = {}\nmodel.leaky_slope = {}\n",
            self.encoder.rows,
            self.encoder.cols,
            self.encoder.m,
            kv::format_list(&self.encoder.hidden),
            self.adaptor.kind,
            LEAKY_SLOPE,
        )
    }

    pub fn from_header(text: &str) -> Result<Self> {
        Self::from_map(&kv::parse(text)?)
    }

    pub(crate) fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let hidden = kv::parse_list(&kv::require::<String>(map, "model.hidden")?)?;
        let encoder = EncoderSpec::new(
            kv::require(map, "model.rows")?,
            kv::require(map, "model.cols")?,
            kv::require(map, "model.m")?,
            hidden,
        )?;
        let kind: AdaptorKind = kv::require(map, "model.adaptor")?;
        if let Some(slope) = kv::get::<f64>(map, "model.leaky_slope")? {
            if slope != LEAKY_SLOPE {
                return Err(Error::Config(format!("unsupported leaky slope {slope}")));
            }
        }
        Self::new(encoder, kind)
    }
}
