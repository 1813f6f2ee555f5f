//! The `csiq` command line: dataset generation, training, evaluation, bit-stream conversion,
//! complexity accounting and grid reproduction.

pub mod files;
pub mod manifest;
pub mod repro;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use csiq_core::channel::{generate_dataset, ChannelConfig, Dataset, Scenario};
use csiq_core::models::{AdaptorKind, AdaptorSpec};
use csiq_core::quant::{pack_bits, unpack_bits, Codeword, Quantizer, QuantizerConfig};
use csiq_core::report::{codeword_cdf, Method};
use csiq_core::training::{
    evaluate, parse_compand, train_l1, train_stage1, train_stage2, write_history, Checkpoint,
    Preset, Regime, TrainConfig,
};

use files::{CodewordFile, StreamFile};
use manifest::{beside, Manifest};

#[derive(Parser)]
#[command(name = "csiq", version, about = "Bit-level CSI feedback laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic angular-delay dataset.
    Gen(GenArgs),
    /// Train one stage of a model.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split.
    Eval(EvalArgs),
    /// Quantize a codeword file into a bit-stream file.
    Quantize(QuantizeArgs),
    /// Reconstruct a codeword file from a bit-stream file.
    Dequantize(DequantizeArgs),
    /// Print adaptor weight, parameter and FLOP counts.
    Complexity(ComplexityArgs),
    /// Empirical CDF of a codeword file.
    Cdf(CdfArgs),
    /// Train and evaluate a whole preset grid and render the tables.
    Repro(ReproArgs),
}

#[derive(Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of samples.
    #[arg(long, default_value_t = 7000)]
    num: usize,
    /// Paths per channel.
    #[arg(long, default_value_t = 6)]
    paths: usize,
    /// `concentrated` or `dispersed`.
    #[arg(long, default_value = "concentrated")]
    scenario: Scenario,
    /// Retained delay rows.
    #[arg(long, default_value_t = 32)]
    nc: usize,
    /// Antennas.
    #[arg(long, default_value_t = 32)]
    nt: usize,
    /// Sub-carriers.
    #[arg(long, default_value_t = 256)]
    nsub: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct DataArgs {
    /// Dataset file written by `gen`.
    #[arg(long)]
    data: PathBuf,
    /// Train, validation and test sizes; defaults to a 10:3:2 split.
    #[arg(long, value_delimiter = ',')]
    split: Option<Vec<usize>>,
}

impl DataArgs {
    fn load(&self) -> Result<(Dataset, Vec<Dataset>)> {
        let ds = Dataset::load(&self.data).with_context(|| format!("loading {}", self.data.display()))?;
        let sizes = match &self.split {
            Some(s) => {
                ensure!(s.len() == 3, "--split takes three sizes");
                s.clone()
            }
            None => {
                let train = ds.len() * 10 / 15;
                let val = ds.len() * 3 / 15;
                vec![train, val, ds.len() - train - val]
            }
        };
        let parts = ds.split(&sizes)?;
        Ok((ds, parts))
    }
}

#[derive(Args)]
pub struct TrainArgs {
    /// Key-value configuration file; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured regime: stage1, stage2 or l1.
    #[arg(long)]
    stage: Option<Regime>,
    /// Configuration override `key=value`, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Stage-1 checkpoint, required for stage 2.
    #[arg(long)]
    init: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "4,6")]
    bits: Vec<u32>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct QuantizeArgs {
    /// Codeword file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    bits: u32,
    #[arg(long, default_value_t = QuantizerConfig::DEFAULT_MU)]
    mu: f64,
    /// `exact`, `uniform` or `polyline[:K]`.
    #[arg(long, default_value = "exact")]
    compand: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct DequantizeArgs {
    /// Bit-stream file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct ComplexityArgs {
    /// Codeword lengths.
    #[arg(long, value_delimiter = ',', required = true)]
    m: Vec<usize>,
}

#[derive(Args)]
pub struct CdfArgs {
    #[arg(long)]
    input: PathBuf,
    /// CSV output with columns `value,probability`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct ReproArgs {
    /// smoke, desk or full.
    #[arg(long, default_value = "desk")]
    preset: String,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    crs: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    bits: Option<Vec<u32>>,
    /// Overrides the single-stage / first-stage epoch budget.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    stage2_epochs: Option<usize>,
    #[arg(long)]
    scenario: Option<Scenario>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args` (without the program name) and runs the command.
pub fn run_args<I, S>(args: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("csiq")).chain(args.into_iter().map(Into::into));
    run(Cli::try_parse_from(argv)?.command)
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Quantize(a) => quantize(a),
        Command::Dequantize(a) => dequantize(a),
        Command::Complexity(a) => complexity(a),
        Command::Cdf(a) => cdf(a),
        Command::Repro(a) => reproduce(a),
    }
}

fn gen(a: GenArgs) -> Result<()> {
    let cfg = ChannelConfig {
        subcarriers: a.nsub,
        antennas: a.nt,
        rows: a.nc,
        num_paths: a.paths,
        scenario: a.scenario,
        ..ChannelConfig::default()
    };
    let (ds, retained) = generate_dataset(&cfg, a.seed, a.num)?;
    let config = format!(
        "seed = {}\nnum = {}\npaths = {}\nscenario = {}\nnc = {}\nnt = {}\nnsub = {}\nspacing_hz = {}\n",
        a.seed, a.num, a.paths, a.scenario, a.nc, a.nt, a.nsub, cfg.spacing_hz
    );
    let mut manifest = Manifest::new("gen", config, Some(a.seed));
    let mut bytes = Vec::new();
    ds.write_to(&mut bytes)?;
    manifest.write(&a.out, &bytes)?;
    manifest.save(&beside(&a.out))?;
    println!(
        "{} samples of {}x{}, retained energy {:.4}, fingerprint {}",
        ds.len(),
        ds.rows(),
        ds.cols(),
        retained,
        ds.fingerprint()
    );
    Ok(())
}

/// Applies `key=value` overrides to the canonical config text.
fn apply_overrides(text: &str, overrides: &[String]) -> Result<String> {
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .with_context(|| format!("override `{o}` is not key=value"))?;
        let (k, v) = (k.trim(), v.trim());
        let line = lines
            .iter_mut()
            .find(|l| l.split('=').next().map(str::trim) == Some(k))
            .with_context(|| format!("unknown config key `{k}`"))?;
        *line = format!("{k} = {v}");
    }
    Ok(lines.join("\n") + "\n")
}

fn method_label(c: &TrainConfig) -> &'static str {
    match (c.regime, c.adaptor, c.bits) {
        (Regime::L1, _, _) => Method::L1Adaptor.name(),
        (_, AdaptorKind::OffsetNet, _) => Method::OffsetNet.name(),
        (_, AdaptorKind::BottleFc, _) => Method::BottleFC.name(),
        (_, AdaptorKind::ParaBottleFc, _) => Method::ParaBottleFC.name(),
        (_, AdaptorKind::None, None) => Method::Nq.name(),
        (_, AdaptorKind::None, Some(_)) => Method::MuLaw.name(),
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let base = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            TrainConfig::from_text(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => TrainConfig::default(),
    };
    let mut overrides = a.overrides.clone();
    if let Some(stage) = a.stage {
        overrides.push(format!("regime={stage}"));
    }
    let config = TrainConfig::from_text(&apply_overrides(&base.to_text(), &overrides)?)?;
    let (_, parts) = a.data.load()?;
    let (train, val) = (&parts[0], &parts[1]);

    let mut manifest = Manifest::new("train", config.to_text(), Some(config.seed));
    manifest.input(&a.data.data)?;
    let outcome = match config.regime {
        Regime::Stage1 => train_stage1::<f32>(&config, train, val)?,
        Regime::L1 => train_l1::<f32>(&config, train, val)?,
        Regime::Stage2 => {
            let init = a.init.as_ref().context("stage 2 needs --init <stage-1 checkpoint>")?;
            manifest.input(init)?;
            let ckpt = Checkpoint::<f32>::load(init)?;
            train_stage2(&config, ckpt.model, train, val)?
        }
    };
    let ckpt = Checkpoint {
        model: outcome.model,
        config: config.clone(),
        method: method_label(&config).to_string(),
    };
    let mut model_bytes = Vec::new();
    ckpt.write_to(&mut model_bytes)?;
    manifest.write(&a.out.join("model.ckpt"), &model_bytes)?;
    let mut history = Vec::new();
    write_history(&mut history, &outcome.history)?;
    manifest.write(&a.out.join("history.jsonl"), &history)?;
    manifest.write(&a.out.join("config.txt"), config.to_text().as_bytes())?;
    manifest.save(&a.out.join("manifest.json"))?;
    if let Some(last) = outcome.history.last() {
        println!(
            "{} epochs, final loss {:.6}, validation NMSE {:.3} dB",
            outcome.history.len(),
            last.loss_total,
            last.val_nmse_db
        );
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::<f32>::load(&a.ckpt).with_context(|| format!("loading checkpoint {}", a.ckpt.display()))?;
    let (_, parts) = a.data.load()?;
    let test = &parts[2];
    let e = evaluate(&ckpt.model, &ckpt.config, test, &a.bits)?;
    let cdf = codeword_cdf(&e.codewords)?;

    let mut manifest = Manifest::new("eval", ckpt.config.to_text(), Some(ckpt.config.seed));
    manifest.input(&a.ckpt)?;
    manifest.input(&a.data.data)?;
    let per_bits: Vec<_> = e
        .per_bits
        .iter()
        .map(|b| {
            serde_json::json!({
                "bits": b.bits,
                "nmse_db": db_json(b.nmse.db()),
                "qsnr_db": db_json(b.qsnr.db()),
                "qsnr_excluded": b.qsnr.excluded,
            })
        })
        .collect();
    let summary = serde_json::json!({
        "method": ckpt.method,
        "test_samples": test.len(),
        "nq_nmse_db": db_json(e.nq_nmse.db()),
        "nmse_excluded": e.nq_nmse.excluded,
        "per_bits": per_bits,
        "p_abs_below_0_1": cdf.near_zero,
    });
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    manifest.write(&a.out.join("eval.json"), text.as_bytes())?;
    let codewords = CodewordFile {
        width: ckpt.model.spec().m(),
        values: e.codewords.clone(),
    };
    manifest.write(&a.out.join("codewords.cscw"), &codewords.to_bytes())?;
    manifest.save(&a.out.join("manifest.json"))?;
    print!("{text}");
    Ok(())
}

fn db_json(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else if x > 0.0 {
        serde_json::json!("+inf")
    } else {
        serde_json::json!("-inf")
    }
}

fn quantize(a: QuantizeArgs) -> Result<()> {
    let input = CodewordFile::load(&a.input)?;
    let config = QuantizerConfig {
        mu: a.mu,
        bits: a.bits,
        mode: parse_compand(&a.compand)?,
    };
    let q = Quantizer::new(config)?;
    let mut indices = Vec::with_capacity(input.values.len());
    for chunk in input.values.chunks(input.width.max(1)) {
        indices.extend(q.quantize(&Codeword::new(chunk.to_vec())?)?.indices);
    }
    let file = StreamFile {
        quantizer: config,
        count: input.count(),
        width: input.width,
        stream: pack_bits(&indices, a.bits)?,
    };
    let mut manifest = Manifest::new(
        "quantize",
        format!("bits = {}\nmu = {}\ncompand = {}\n", a.bits, a.mu, a.compand),
        None,
    );
    manifest.input(&a.input)?;
    manifest.write(&a.out, &file.to_bytes())?;
    manifest.save(&beside(&a.out))?;
    println!(
        "{} codewords x {} values -> {} bits",
        file.count,
        file.width,
        file.stream.bit_len()
    );
    Ok(())
}

fn dequantize(a: DequantizeArgs) -> Result<()> {
    let file = StreamFile::load(&a.input)?;
    let q = Quantizer::new(file.quantizer)?;
    let indices = unpack_bits(&file.stream, file.count * file.width, file.quantizer.bits)?;
    let values = q.dequantize(&indices)?.into_values();
    let out = CodewordFile {
        width: file.width,
        values,
    };
    let mut manifest = Manifest::new("dequantize", String::new(), None);
    manifest.input(&a.input)?;
    manifest.write(&a.out, &out.to_bytes())?;
    manifest.save(&beside(&a.out))?;
    println!("{} codewords x {} values", out.count(), out.width);
    Ok(())
}

fn complexity(a: ComplexityArgs) -> Result<()> {
    println!("{:>6}  {:<16}{:>10}{:>10}{:>10}", "M", "adaptor", "weights", "params", "flops");
    for &m in &a.m {
        for kind in [AdaptorKind::OffsetNet, AdaptorKind::BottleFc, AdaptorKind::ParaBottleFc] {
            let spec = AdaptorSpec::new(kind, m)?;
            println!(
                "{m:>6}  {:<16}{:>10}{:>10}{:>10}",
                kind.name(),
                spec.weight_count(),
                spec.param_count(),
                spec.flop_count()
            );
        }
    }
    Ok(())
}

fn cdf(a: CdfArgs) -> Result<()> {
    let input = CodewordFile::load(&a.input)?;
    let curve = codeword_cdf(&input.values)?;
    let mut csv = Vec::new();
    curve.write_csv(&mut csv)?;
    let mut manifest = Manifest::new("cdf", String::new(), None);
    manifest.input(&a.input)?;
    manifest.write(&a.out, &csv)?;
    manifest.save(&beside(&a.out))?;
    println!("P(|v| < 0.1) = {:.6}", curve.near_zero);
    Ok(())
}

fn reproduce(a: ReproArgs) -> Result<()> {
    let mut preset = Preset::by_name(&a.preset)?;
    if let Some(s) = a.seeds {
        preset.seeds = s;
    }
    if let Some(m) = a.methods {
        preset.methods = m;
    }
    if let Some(c) = a.crs {
        preset.crs = c;
    }
    if let Some(b) = a.bits {
        preset.bits = b;
    }
    if let Some(e) = a.epochs {
        preset.recipe.base.epochs = e;
    }
    if let Some(e) = a.stage2_epochs {
        preset.recipe.stage2_epochs = e;
    }
    if let Some(s) = a.scenario {
        preset = preset.with_scenario(s);
    }
    if preset.cells().is_empty() {
        bail!("the selected grid is empty");
    }
    ensure_dir(&a.out)?;
    repro::run(&preset, &a.out, repro::worker_count()?)
}

fn ensure_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_replace_canonical_lines() {
        let text = TrainConfig::default().to_text();
        let out = apply_overrides(&text, &["epochs=7".into(), "bits = none".into()]).unwrap();
        let c = TrainConfig::from_text(&out).unwrap();
        assert_eq!((c.epochs, c.bits), (7, None));
        assert!(apply_overrides(&text, &["nope=1".into()]).is_err());
        assert!(apply_overrides(&text, &["epochs".into()]).is_err());
    }

    #[test]
    fn labels_follow_regime_and_adaptor() {
        let mut c = TrainConfig::default();
        assert_eq!(method_label(&c), "mu-law");
        c.bits = None;
        assert_eq!(method_label(&c), "NQ");
        c.adaptor = AdaptorKind::BottleFc;
        assert_eq!(method_label(&c), "BottleFC");
    }
}
