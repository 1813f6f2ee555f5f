use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Regime, Regularizer, TrainConfig};
use super::history::EpochRecord;
use crate::channel::Dataset;
use crate::engine::{Adam, RatioForm, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::models::{EncoderSpec, Model, ModelSpec, ENCODER};
use crate::quant::{quantize_ste, quantize_tensor, Quantizer};
use crate::report::{nmse, qsnr, Expectation, RatioStats};

/// Stream of the seed used for minibatch shuffling; parameter
/// initialisation uses the default stream.
const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Real> {
    pub model: Model<T>,
    pub history: Vec<EpochRecord>,
}

/// Every sample of `ds` as one `[N × 2·Nc·Nt]` tensor.
pub fn dataset_tensor<T: Real>(ds: &Dataset) -> Tensor<T> {
    let data = ds
        .real_planes(0..ds.len())
        .into_iter()
        .map(|x| T::of_f64(x as f64))
        .collect();
    Tensor::new([ds.len(), ds.sample_width()], data).expect("consistent shape")
}

fn gather<T: Real>(src: &Tensor<T>, rows: &[usize]) -> Tensor<T> {
    let width = src.shape()[1];
    let mut out = Vec::with_capacity(rows.len() * width);
    for &r in rows {
        out.extend_from_slice(src.row(r));
    }
    Tensor::new([rows.len(), width], out).expect("consistent shape")
}

fn mean_abs<T: Real>(t: &Tensor<T>) -> f64 {
    t.data().iter().map(|x| x.as_f64().abs()).sum::<f64>() / t.len().max(1) as f64
}

fn diverged(epoch: usize, batch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { .. } => Error::Diverged {
            epoch,
            batch,
            detail: e.to_string(),
        },
        other => other,
    }
}

fn check_dims(spec: &ModelSpec, ds: &Dataset) -> Result<()> {
    let e = &spec.encoder;
    if (e.rows, e.cols) != (ds.rows(), ds.cols()) {
        return Err(Error::Config(format!(
            "model expects {}x{} samples, dataset has {}x{}",
            e.rows,
            e.cols,
            ds.rows(),
            ds.cols()
        )));
    }
    Ok(())
}

fn build_quantizer(config: &TrainConfig) -> Result<Option<Quantizer>> {
    config.quantizer_config().map(Quantizer::new).transpose()
}

/// Validation NMSE of `decode(adapt(Q(encode(x))))`.
fn validation_nmse<T: Real>(model: &Model<T>, x: &Tensor<T>, q: Option<&Quantizer>) -> Result<f64> {
    let v = model.encode_batch(x)?;
    let v = match q {
        Some(q) => quantize_tensor(&v, q)?,
        None => v,
    };
    nmse_of(model, x, &v)
}

fn nmse_of<T: Real>(model: &Model<T>, x: &Tensor<T>, v_q: &Tensor<T>) -> Result<f64> {
    let y = model.decode_batch(&model.adapt_batch(v_q)?)?;
    Ok(nmse(&x.to_f64_vec(), &y.to_f64_vec(), x.shape()[1], Expectation::PerSample)?.db())
}

struct Epoch {
    mse: f64,
    reg: f64,
    abs: f64,
    samples: usize,
    codeword_values: usize,
}

impl Epoch {
    fn new() -> Self {
        Self {
            mse: 0.0,
            reg: 0.0,
            abs: 0.0,
            samples: 0,
            codeword_values: 0,
        }
    }

    fn record(&self, epoch: usize, lr: f64, alpha: f64, weight: f64, val_nmse_db: f64) -> EpochRecord {
        let n = self.samples as f64;
        let (loss_mse, loss_reg) = (self.mse / n, self.reg / n);
        EpochRecord {
            epoch,
            lr,
            alpha,
            loss_total: loss_mse + weight * loss_reg,
            loss_mse,
            loss_reg,
            val_nmse_db,
            mean_abs_codeword: self.abs / self.codeword_values.max(1) as f64,
        }
    }
}

/// Stage 1: every parameter trained end to end on the MSE with the
/// quantizer in the loop.
pub fn train_stage1<T: Real>(
    config: &TrainConfig,
    train: &Dataset,
    val: &Dataset,
) -> Result<TrainOutcome<T>> {
    if config.regime != Regime::Stage1 {
        return Err(Error::Config(format!("train_stage1 got regime {}", config.regime)));
    }
    train_end_to_end(config, train, val)
}

/// Single-stage MSE plus `λ · (1/N) Σ ‖v‖₁`.
pub fn train_l1<T: Real>(
    config: &TrainConfig,
    train: &Dataset,
    val: &Dataset,
) -> Result<TrainOutcome<T>> {
    if config.regime != Regime::L1 {
        return Err(Error::Config(format!("train_l1 got regime {}", config.regime)));
    }
    train_end_to_end(config, train, val)
}

fn train_end_to_end<T: Real>(
    config: &TrainConfig,
    train: &Dataset,
    val: &Dataset,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let encoder = EncoderSpec::for_ratio(train.rows(), train.cols(), config.cr, config.hidden.clone())?;
    let spec = ModelSpec::new(encoder, config.adaptor)?;
    check_dims(&spec, val)?;
    let mut model = Model::<T>::init(spec, config.seed)?;
    let quantizer = build_quantizer(config)?;
    let lambda = if config.regime == Regime::L1 { config.lambda } else { 0.0 };

    let x_train = dataset_tensor::<T>(train);
    let x_val = dataset_tensor::<T>(val);
    let steps_per_epoch = train.len().div_ceil(config.batch_size);
    let schedule = config.lr_schedule(config.epochs * steps_per_epoch);
    let adam = Adam::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let epoch_lr = schedule.lr_at(step)?;
        let mut acc = Epoch::new();
        for (b, rows) in order.chunks(config.batch_size).enumerate() {
            let lr = schedule.lr_at(step)?;
            let xb = gather(&x_train, rows);
            let grads = (|| {
                let mut tape = Tape::new(model.params());
                let x = tape.input(xb);
                let v = model.encode(&mut tape, x)?;
                acc.abs += mean_abs(tape.value(v)) * tape.value(v).len() as f64;
                acc.codeword_values += tape.value(v).len();
                let v_q = match &quantizer {
                    Some(q) => quantize_ste(&mut tape, v, q)?,
                    None => v,
                };
                let z = model.adapt(&mut tape, v_q)?;
                let y = model.decode(&mut tape, z)?;
                let mse = tape.mse(y, x)?;
                let mut loss = mse;
                if config.regime == Regime::L1 {
                    let l1 = tape.l1(v)?;
                    let l1 = tape.scale(l1, 1.0 / rows.len() as f64)?;
                    acc.reg += tape.scalar_value(l1) * rows.len() as f64;
                    let weighted = tape.scale(l1, lambda)?;
                    loss = tape.add_scalars(mse, weighted)?;
                }
                acc.mse += tape.scalar_value(mse) * rows.len() as f64;
                Ok(tape.backward(loss)?.into_param_grads())
            })()
            .map_err(diverged(epoch, b))?;
            acc.samples += rows.len();
            model.params_mut().set_grads(grads)?;
            adam.step(model.params_mut(), lr).map_err(diverged(epoch, b))?;
            step += 1;
        }
        let val_db = validation_nmse(&model, &x_val, quantizer.as_ref())
            .map_err(diverged(epoch, steps_per_epoch))?;
        history.push(acc.record(epoch, epoch_lr, 0.0, lambda, val_db));
    }
    Ok(TrainOutcome { model, history })
}

/// Stage 2: the encoder is frozen, an identity-initialised adaptor is added
/// if the stage-1 model has none, and adaptor plus decoder are trained on
/// `MSE + α(epoch) · R`, with `R` the configured regularizer between the
/// codeword and the adaptor output.
pub fn train_stage2<T: Real>(
    config: &TrainConfig,
    stage1: Model<T>,
    train: &Dataset,
    val: &Dataset,
) -> Result<TrainOutcome<T>> {
    if config.regime != Regime::Stage2 {
        return Err(Error::Config(format!("train_stage2 got regime {}", config.regime)));
    }
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let mut model = stage1.with_adaptor(config.adaptor, config.seed)?;
    check_dims(model.spec(), train)?;
    check_dims(model.spec(), val)?;
    let expected_m = model.spec().encoder.input_width() / config.cr;
    if model.spec().m() != expected_m || model.spec().encoder.input_width() % config.cr != 0 {
        return Err(Error::Config(format!(
            "checkpoint has M = {}, configuration CR {} needs {expected_m}",
            model.spec().m(),
            config.cr
        )));
    }
    let quantizer = build_quantizer(config)?.expect("validated: stage 2 has a quantizer");
    model.params_mut().set_frozen(ENCODER, true);
    let frozen_before = model.params().group_bytes(ENCODER);

    let x_train = dataset_tensor::<T>(train);
    let x_val = dataset_tensor::<T>(val);
    // The encoder no longer changes, so codewords are computed once.
    let v_train = model.encode_batch(&x_train)?;
    let vq_train = quantize_tensor(&v_train, &quantizer)?;
    let vq_val = quantize_tensor(&model.encode_batch(&x_val)?, &quantizer)?;
    let train_abs = mean_abs(&v_train);

    let form = match config.regularizer {
        Regularizer::Reciprocal => RatioForm::NoiseOverSignal,
        Regularizer::AsPrinted => RatioForm::SignalOverNoise,
    };
    let span = (config.epochs - 1).max(1);
    let steps_per_epoch = train.len().div_ceil(config.batch_size);
    let schedule = config.lr_schedule(config.epochs * steps_per_epoch);
    let adam = Adam::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let alpha = config.alpha.alpha_at(epoch, span)?;
        let epoch_lr = schedule.lr_at(step)?;
        let mut acc = Epoch::new();
        for (b, rows) in order.chunks(config.batch_size).enumerate() {
            let lr = schedule.lr_at(step)?;
            let (xb, vb, vqb) = (gather(&x_train, rows), gather(&v_train, rows), gather(&vq_train, rows));
            let grads = (|| {
                let mut tape = Tape::new(model.params());
                let x = tape.input(xb);
                let v = tape.input(vb);
                let v_q = tape.input(vqb);
                let z = model.adapt(&mut tape, v_q)?;
                let y = model.decode(&mut tape, z)?;
                let mse = tape.mse(y, x)?;
                let reg = tape.energy_ratio(v, z, form)?;
                let weighted = tape.scale(reg, alpha)?;
                let loss: Var = tape.add_scalars(mse, weighted)?;
                acc.mse += tape.scalar_value(mse) * rows.len() as f64;
                acc.reg += tape.scalar_value(reg) * rows.len() as f64;
                Ok(tape.backward(loss)?.into_param_grads())
            })()
            .map_err(diverged(epoch, b))?;
            acc.samples += rows.len();
            model.params_mut().set_grads(grads)?;
            adam.step(model.params_mut(), lr).map_err(diverged(epoch, b))?;
            step += 1;
        }
        acc.abs = train_abs;
        acc.codeword_values = 1;
        let val_db = nmse_of(&model, &x_val, &vq_val).map_err(diverged(epoch, steps_per_epoch))?;
        history.push(acc.record(epoch, epoch_lr, alpha, alpha, val_db));
    }
    if model.params().group_bytes(ENCODER) != frozen_before {
        return Err(Error::Config("encoder parameters changed during stage 2".into()));
    }
    Ok(TrainOutcome { model, history })
}

/// Metrics at one bit width.
#[derive(Debug, Clone, PartialEq)]
pub struct BitsEvaluation {
    pub bits: u32,
    pub nmse: RatioStats,
    /// Between the codeword and the adaptor output fed to the decoder.
    pub qsnr: RatioStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Quantizer bypassed.
    pub nq_nmse: RatioStats,
    pub per_bits: Vec<BitsEvaluation>,
    /// Every codeword element of the test split, sample-major.
    pub codewords: Vec<f64>,
}

/// Test-split NMSE and QSNR for each bit width in `bits`, plus the
/// unquantized NMSE. The quantizer uses the μ and companding of `config`.
pub fn evaluate<T: Real>(
    model: &Model<T>,
    config: &TrainConfig,
    test: &Dataset,
    bits: &[u32],
) -> Result<Evaluation> {
    check_dims(model.spec(), test)?;
    if test.is_empty() {
        return Err(Error::Empty("test split"));
    }
    let x = dataset_tensor::<T>(test);
    let reference = x.to_f64_vec();
    let width = x.shape()[1];
    let m = model.spec().m();
    let v = model.encode_batch(&x)?;
    let decode = |z: &Tensor<T>| -> Result<Vec<f64>> { Ok(model.decode_batch(z)?.to_f64_vec()) };

    let nq = decode(&model.adapt_batch(&v)?)?;
    let nq_nmse = nmse(&reference, &nq, width, Expectation::PerSample)?;
    let codewords = v.to_f64_vec();

    let mut per_bits = Vec::with_capacity(bits.len());
    for &b in bits {
        let q = Quantizer::new(crate::quant::QuantizerConfig {
            mu: config.mu,
            bits: b,
            mode: config.compand,
        })?;
        let adapted = model.adapt_batch(&quantize_tensor(&v, &q)?)?;
        let y = decode(&adapted)?;
        per_bits.push(BitsEvaluation {
            bits: b,
            nmse: nmse(&reference, &y, width, Expectation::PerSample)?,
            qsnr: qsnr(&codewords, &adapted.to_f64_vec(), m, Expectation::PerSample)?,
        });
    }
    Ok(Evaluation {
        nq_nmse,
        per_bits,
        codewords,
    })
}
