//! Training recipes for each compared method and their table records.

use super::config::{Regime, TrainConfig, DEFAULT_LAMBDA};
use super::history::EpochRecord;
use super::run::{evaluate, train_l1, train_stage1, train_stage2, Evaluation, TrainOutcome};
use crate::channel::{generate_dataset, ChannelConfig, Dataset, Scenario};
use crate::engine::Real;
use crate::error::{Error, Result};
use crate::models::{AdaptorKind, Model};
use crate::report::{Method, Record};

/// Shared settings of one experiment grid.
///
/// `base` carries the seed, architecture, optimiser, λ, α scheduler and
/// regularizer; its `epochs` is the single-stage (or first-stage) budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Recipe {
    pub base: TrainConfig,
    pub stage2_epochs: usize,
    pub stage2_lr_max: f64,
}

impl Recipe {
    /// First-stage (or only) configuration for `method` at `bits`.
    ///
    /// NQ trains without a quantizer. OffsetNet trains its adaptor jointly
    /// with the autoencoder in one end-to-end stage. BottleFC and
    /// ParaBottleFC carry their adaptor through stage 1 and continue in
    /// stage 2.
    pub fn first_stage(&self, method: Method, bits: Option<u32>) -> Result<TrainConfig> {
        let mut c = self.base.clone();
        c.bits = bits;
        c.adaptor = AdaptorKind::None;
        c.regime = Regime::Stage1;
        match method {
            Method::Nq => c.bits = None,
            Method::MuLaw => {}
            Method::OffsetNet => c.adaptor = AdaptorKind::OffsetNet,
            Method::L1Adaptor => c.regime = Regime::L1,
            Method::BottleFC => c.adaptor = AdaptorKind::BottleFc,
            Method::ParaBottleFC => c.adaptor = AdaptorKind::ParaBottleFc,
        }
        if method != Method::Nq && bits.is_none() {
            return Err(Error::Config(format!("{method} needs a bit width")));
        }
        Ok(c)
    }

    /// Second-stage configuration, for the methods that have one.
    pub fn second_stage(&self, method: Method, bits: Option<u32>) -> Result<Option<TrainConfig>> {
        if !matches!(method, Method::BottleFC | Method::ParaBottleFC) {
            return Ok(None);
        }
        let mut c = self.first_stage(method, bits)?;
        c.regime = Regime::Stage2;
        c.epochs = self.stage2_epochs;
        c.lr_max = self.stage2_lr_max;
        c.lr_min = c.lr_min.min(self.stage2_lr_max);
        Ok(Some(c))
    }
}

/// A trained method: the final model, its configuration and the history of
/// every stage.
#[derive(Debug, Clone)]
pub struct MethodRun<T: Real> {
    pub method: Method,
    pub bits: Option<u32>,
    pub model: Model<T>,
    /// Configuration of the last stage; evaluation uses its μ and companding.
    pub config: TrainConfig,
    pub stage1_history: Vec<EpochRecord>,
    pub stage2_history: Vec<EpochRecord>,
}

pub fn train_method<T: Real>(
    recipe: &Recipe,
    method: Method,
    bits: Option<u32>,
    train: &Dataset,
    val: &Dataset,
) -> Result<MethodRun<T>> {
    let first = recipe.first_stage(method, bits)?;
    let stage1: TrainOutcome<T> = match first.regime {
        Regime::L1 => train_l1(&first, train, val)?,
        _ => train_stage1(&first, train, val)?,
    };
    let second = recipe.second_stage(method, bits)?;
    continue_method(method, bits, first, stage1, second, train, val)
}

/// Runs stage 2 (if any) from an already trained first stage.
pub fn continue_method<T: Real>(
    method: Method,
    bits: Option<u32>,
    first: TrainConfig,
    stage1: TrainOutcome<T>,
    second: Option<TrainConfig>,
    train: &Dataset,
    val: &Dataset,
) -> Result<MethodRun<T>> {
    match second {
        None => Ok(MethodRun {
            method,
            bits,
            model: stage1.model,
            config: first,
            stage1_history: stage1.history,
            stage2_history: Vec::new(),
        }),
        Some(config) => {
            let out = train_stage2(&config, stage1.model, train, val)?;
            Ok(MethodRun {
                method,
                bits,
                model: out.model,
                config,
                stage1_history: stage1.history,
                stage2_history: out.history,
            })
        }
    }
}

impl<T: Real> MethodRun<T> {
    /// Evaluates on `test` at the run's own bit width.
    pub fn evaluate(&self, test: &Dataset) -> Result<Evaluation> {
        let bits: Vec<u32> = self.bits.into_iter().collect();
        evaluate(&self.model, &self.config, test, &bits)
    }

    pub fn record(&self, eval: &Evaluation) -> Record {
        let spec = self.model.spec();
        let (nmse_db, qsnr_db) = match (self.method, eval.per_bits.first()) {
            (Method::Nq, _) | (_, None) => (Some(eval.nq_nmse.db()), None),
            (_, Some(b)) => (Some(b.nmse.db()), Some(b.qsnr.db())),
        };
        Record {
            method: self.method,
            cr: self.config.cr,
            bits: if self.method == Method::Nq { None } else { self.bits },
            seed: self.config.seed,
            nmse_db,
            qsnr_db,
            params: spec.param_count(),
            flops: spec.flop_count(),
        }
    }
}

/// One cell of an experiment grid. `bits` is `None` only for NQ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Cell {
    pub method: Method,
    pub cr: usize,
    pub bits: Option<u32>,
    pub seed: u64,
}

/// A complete experiment: dataset, splits, recipe and grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub channel: ChannelConfig,
    pub dataset_seed: u64,
    /// Train, validation and test sizes.
    pub split: [usize; 3],
    pub recipe: Recipe,
    pub methods: Vec<Method>,
    pub crs: Vec<usize>,
    pub bits: Vec<u32>,
    pub seeds: Vec<u64>,
}

/// Stage-2 peak learning rate of the built-in presets.
pub const STAGE2_LR: f64 = 1e-3;

impl Preset {
    pub const NAMES: [&'static str; 3] = ["smoke", "desk", "full"];

    /// Seconds-scale run on tiny channels, for checking the plumbing.
    pub fn smoke() -> Self {
        Self {
            name: "smoke",
            channel: ChannelConfig {
                subcarriers: 64,
                antennas: 8,
                rows: 16,
                num_paths: 4,
                ..ChannelConfig::default()
            },
            dataset_seed: 7,
            split: [200, 50, 50],
            recipe: Recipe {
                base: TrainConfig {
                    epochs: 8,
                    batch_size: 50,
                    hidden: vec![64],
                    ..TrainConfig::default()
                },
                stage2_epochs: 4,
                stage2_lr_max: STAGE2_LR,
            },
            methods: Method::ALL.to_vec(),
            crs: vec![4, 8, 16],
            bits: vec![4, 6],
            seeds: vec![1],
        }
    }

    /// Laptop-CPU scale: 32×32 channels, 5000 training samples, 100 + 41
    /// epochs.
    pub fn desk() -> Self {
        Self {
            name: "desk",
            channel: ChannelConfig::default(),
            dataset_seed: 7,
            split: [5000, 1000, 1000],
            recipe: Recipe {
                base: TrainConfig {
                    epochs: 100,
                    lambda: DEFAULT_LAMBDA,
                    ..TrainConfig::default()
                },
                stage2_epochs: 41,
                stage2_lr_max: STAGE2_LR,
            },
            methods: Method::ALL.to_vec(),
            crs: vec![4, 8, 16],
            bits: vec![4, 6],
            seeds: vec![1],
        }
    }

    /// Full scale: 1024 sub-carriers, 150 000 samples, 1000 + 400
    /// epochs. Days of CPU time.
    pub fn full() -> Self {
        Self {
            name: "full",
            channel: ChannelConfig {
                subcarriers: 1024,
                ..ChannelConfig::default()
            },
            dataset_seed: 7,
            split: [100_000, 30_000, 20_000],
            recipe: Recipe {
                base: TrainConfig {
                    epochs: 1000,
                    ..TrainConfig::default()
                },
                stage2_epochs: 400,
                stage2_lr_max: STAGE2_LR,
            },
            methods: Method::ALL.to_vec(),
            crs: vec![4, 8, 16],
            bits: vec![4, 6],
            seeds: vec![1],
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "smoke" => Ok(Self::smoke()),
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            other => Err(Error::Config(format!(
                "unknown preset `{other}`, expected one of {}",
                Self::NAMES.join(", ")
            ))),
        }
    }

    pub fn with_scenario(mut self, scenario: Scenario) -> Self {
        self.channel.scenario = scenario;
        self
    }

    /// Generates the dataset and returns the train, validation and test
    /// splits.
    pub fn dataset(&self) -> Result<(Dataset, Vec<Dataset>)> {
        let total = self.split.iter().sum();
        let (ds, _) = generate_dataset(&self.channel, self.dataset_seed, total)?;
        let parts = ds.split(&self.split)?;
        Ok((ds, parts))
    }

    /// Every grid cell, NQ once per CR and seed.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &seed in &self.seeds {
            for &cr in &self.crs {
                for &method in &self.methods {
                    if method == Method::Nq {
                        cells.push(Cell { method, cr, bits: None, seed });
                        continue;
                    }
                    for &b in &self.bits {
                        cells.push(Cell { method, cr, bits: Some(b), seed });
                    }
                }
            }
        }
        cells.sort();
        cells
    }

    /// The recipe specialised to one cell's CR and seed.
    pub fn recipe_for(&self, cell: &Cell) -> Recipe {
        let mut r = self.recipe.clone();
        r.base.cr = cell.cr;
        r.base.seed = cell.seed;
        r
    }

    /// Trains and evaluates one cell.
    pub fn run_cell<T: Real>(
        &self,
        cell: &Cell,
        train: &Dataset,
        val: &Dataset,
        test: &Dataset,
    ) -> Result<(MethodRun<T>, Evaluation, Record)> {
        let run = train_method::<T>(&self.recipe_for(cell), cell.method, cell.bits, train, val)?;
        let eval = run.evaluate(test)?;
        let record = run.record(&eval);
        Ok((run, eval, record))
    }
}
