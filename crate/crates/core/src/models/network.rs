use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::spec::{AdaptorKind, ModelSpec, LEAKY_SLOPE};
use crate::channel::{CMatrix, ChannelSample};
use crate::engine::{Activation, ParamId, ParamSet, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::quant::Codeword;

pub const ENCODER: &str = "encoder";
pub const ADAPTOR: &str = "adaptor";
pub const DECODER: &str = "decoder";

/// Initial scale of the decoder output layer relative to Xavier, so that an
/// untrained model reconstructs with roughly unit NMSE.
const OUTPUT_GAIN: f64 = 0.05;

/// Rows processed per inference chunk.
const CHUNK: usize = 500;

#[derive(Debug, Clone, Copy)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

/// Encoder, optional adaptor and decoder over one parameter set.
#[derive(Debug, Clone)]
pub struct Model<T: Real> {
    spec: ModelSpec,
    params: ParamSet<T>,
    encoder: Vec<Dense>,
    adaptor: Vec<Vec<Dense>>,
    decoder: Vec<Dense>,
}

fn xavier(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn layer_name(prefix: &str, i: usize) -> (String, String) {
    (format!("{prefix}.{i}.w"), format!("{prefix}.{i}.b"))
}

fn adaptor_prefix(branch: usize) -> String {
    format!("{ADAPTOR}.{branch}")
}

fn insert_stack<T: Real>(
    params: &mut ParamSet<T>,
    prefix: &str,
    group: &str,
    widths: &[usize],
    last_gain: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Dense>> {
    let n = widths.len() - 1;
    (0..n)
        .map(|i| {
            let (wn, bn) = layer_name(prefix, i);
            let (fi, fo) = (widths[i], widths[i + 1]);
            let gain = if i + 1 == n { last_gain } else { 1.0 };
            let w = if gain == 0.0 {
                params.insert(&wn, group, Tensor::zeros([fi, fo]))?
            } else {
                params.insert_uniform(&wn, group, &[fi, fo], gain * xavier(fi, fo), rng)?
            };
            let b = params.insert(&bn, group, Tensor::zeros([fo]))?;
            Ok(Dense { w, b })
        })
        .collect()
}

fn lookup_stack<T: Real>(params: &ParamSet<T>, prefix: &str, widths: &[usize]) -> Result<Vec<Dense>> {
    (0..widths.len() - 1)
        .map(|i| {
            let (wn, bn) = layer_name(prefix, i);
            let w = params.id(&wn)?;
            let b = params.id(&bn)?;
            let expect_w = [widths[i], widths[i + 1]];
            if params.value(w).shape() != expect_w || params.value(b).shape() != [widths[i + 1]] {
                return Err(Error::shape(
                    "model",
                    format!("`{wn}` is {:?}, expected {:?}", params.value(w).shape(), expect_w),
                ));
            }
            Ok(Dense { w, b })
        })
        .collect()
}

fn stack<T: Real>(
    tape: &mut Tape<'_, T>,
    layers: &[Dense],
    mut x: Var,
    last: Activation,
) -> Result<Var> {
    for (i, layer) in layers.iter().enumerate() {
        let w = tape.param(layer.w);
        let b = tape.param(layer.b);
        x = tape.dense(x, w, b)?;
        let act = if i + 1 == layers.len() {
            last
        } else {
            Activation::LeakyRelu(LEAKY_SLOPE)
        };
        if act != Activation::Identity {
            x = tape.activation(x, act)?;
        }
    }
    Ok(x)
}

impl<T: Real> Model<T> {
    /// Fresh parameters. Every adaptor branch starts with a zero output
    /// layer, so the adaptor is the identity at initialisation.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let encoder = insert_stack(&mut params, ENCODER, ENCODER, &spec.encoder.widths(), 1.0, &mut rng)?;
        let decoder = insert_stack(
            &mut params,
            DECODER,
            DECODER,
            &spec.decoder().widths,
            OUTPUT_GAIN,
            &mut rng,
        )?;
        let mut model = Self {
            spec,
            params,
            encoder,
            adaptor: Vec::new(),
            decoder,
        };
        model.adaptor = model.insert_adaptor(&mut rng)?;
        Ok(model)
    }

    fn insert_adaptor(&mut self, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<Dense>>> {
        self.spec
            .adaptor
            .branches()
            .iter()
            .enumerate()
            .map(|(i, widths)| insert_stack(&mut self.params, &adaptor_prefix(i), ADAPTOR, widths, 0.0, rng))
            .collect()
    }

    /// Binds an existing parameter set, checking every name and shape.
    pub fn from_params(spec: ModelSpec, params: ParamSet<T>) -> Result<Self> {
        let encoder = lookup_stack(&params, ENCODER, &spec.encoder.widths())?;
        let decoder = lookup_stack(&params, DECODER, &spec.decoder().widths)?;
        let adaptor = spec
            .adaptor
            .branches()
            .iter()
            .enumerate()
            .map(|(i, w)| lookup_stack(&params, &adaptor_prefix(i), w))
            .collect::<Result<Vec<_>>>()?;
        let expected = spec.param_count();
        if params.count(None) != expected {
            return Err(Error::shape(
                "model",
                format!("{} parameters, spec needs {expected}", params.count(None)),
            ));
        }
        Ok(Self {
            spec,
            params,
            encoder,
            adaptor,
            decoder,
        })
    }

    /// Adds an identity-initialised adaptor to a model that has none.
    /// A model that already carries `kind` is returned unchanged.
    pub fn with_adaptor(mut self, kind: AdaptorKind, seed: u64) -> Result<Self> {
        if self.spec.adaptor.kind == kind {
            return Ok(self);
        }
        if self.spec.adaptor.kind != AdaptorKind::None {
            return Err(Error::Config(format!(
                "model already has adaptor {}",
                self.spec.adaptor.kind
            )));
        }
        self.spec = self.spec.with_adaptor(kind)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.adaptor = self.insert_adaptor(&mut rng)?;
        Ok(self)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamSet<T> {
        self.params
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            spec: self.spec.clone(),
            params: self.params.cast(),
            encoder: self.encoder.clone(),
            adaptor: self.adaptor.clone(),
            decoder: self.decoder.clone(),
        }
    }

    /// `x: [batch × 2·Nc·Nt] → v: [batch × M]`, bounded by `tanh`.
    pub fn encode(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let width = tape.value(x).dims2()?.1;
        if width != self.spec.encoder.input_width() {
            return Err(Error::shape(
                "encode",
                format!("input width {width}, model expects {}", self.spec.encoder.input_width()),
            ));
        }
        stack(tape, &self.encoder, x, Activation::Tanh)
    }

    /// `v + Σ branch(v)`; the identity when there is no adaptor.
    pub fn adapt(&self, tape: &mut Tape<'_, T>, v: Var) -> Result<Var> {
        self.check_codeword("adapt", tape, v)?;
        let mut out = v;
        for branch in &self.adaptor {
            let h = stack(tape, branch, v, Activation::Identity)?;
            out = tape.add(out, h)?;
        }
        Ok(out)
    }

    /// Output of one adaptor branch alone, without the residual.
    pub fn adaptor_branch(&self, tape: &mut Tape<'_, T>, v: Var, branch: usize) -> Result<Var> {
        self.check_codeword("adaptor_branch", tape, v)?;
        let layers = self
            .adaptor
            .get(branch)
            .ok_or_else(|| Error::Config(format!("no adaptor branch {branch}")))?;
        stack(tape, layers, v, Activation::Identity)
    }

    /// `[batch × M] → [batch × 2·Nc·Nt]`, linear output.
    pub fn decode(&self, tape: &mut Tape<'_, T>, v: Var) -> Result<Var> {
        self.check_codeword("decode", tape, v)?;
        stack(tape, &self.decoder, v, Activation::Identity)
    }

    fn check_codeword(&self, op: &'static str, tape: &Tape<'_, T>, v: Var) -> Result<()> {
        let width = tape.value(v).dims2()?.1;
        if width != self.spec.m() {
            return Err(Error::shape(op, format!("codeword width {width}, M = {}", self.spec.m())));
        }
        Ok(())
    }

    fn run_chunked(
        &self,
        x: &Tensor<T>,
        out_width: usize,
        f: impl Fn(&Self, &mut Tape<'_, T>, Var) -> Result<Var>,
    ) -> Result<Tensor<T>> {
        let (rows, cols) = x.dims2()?;
        let mut out = Vec::with_capacity(rows * out_width);
        for start in (0..rows).step_by(CHUNK) {
            let end = (start + CHUNK).min(rows);
            let chunk = Tensor::new([end - start, cols], x.data()[start * cols..end * cols].to_vec())?;
            let mut tape = Tape::inference(&self.params);
            let input = tape.input(chunk);
            let y = f(self, &mut tape, input)?;
            out.extend_from_slice(tape.value(y).data());
        }
        Tensor::new([rows, out_width], out)
    }

    pub fn encode_batch(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.run_chunked(x, self.spec.m(), |m, t, v| m.encode(t, v))
    }

    pub fn adapt_batch(&self, v: &Tensor<T>) -> Result<Tensor<T>> {
        if self.adaptor.is_empty() {
            self.check_batch_width("adapt", v, self.spec.m())?;
            return Ok(v.clone());
        }
        self.run_chunked(v, self.spec.m(), |m, t, x| m.adapt(t, x))
    }

    pub fn decode_batch(&self, v: &Tensor<T>) -> Result<Tensor<T>> {
        self.run_chunked(v, self.spec.encoder.input_width(), |m, t, x| m.decode(t, x))
    }

    fn check_batch_width(&self, op: &'static str, t: &Tensor<T>, width: usize) -> Result<()> {
        let got = t.dims2()?.1;
        if got != width {
            return Err(Error::shape(op, format!("width {got}, expected {width}")));
        }
        Ok(())
    }

    /// Codeword of one sample.
    pub fn encode_sample(&self, sample: &ChannelSample) -> Result<Codeword> {
        let x = sample_to_reals(sample);
        let t = Tensor::from_f64([1, x.len()], &x)?;
        Codeword::new(self.encode_batch(&t)?.to_f64_vec())
    }

    /// Reconstructed sample from one (dequantized) codeword.
    pub fn decode_codeword(&self, v: &Codeword) -> Result<ChannelSample> {
        let t = Tensor::from_f64([1, v.len()], v.values())?;
        let y = self.decode_batch(&t)?.to_f64_vec();
        reals_to_sample(&y, self.spec.encoder.rows, self.spec.encoder.cols, 1.0)
    }
}

/// `[real plane | imaginary plane]`, the network input layout.
pub fn sample_to_reals(sample: &ChannelSample) -> Vec<f64> {
    let data = sample.matrix.data();
    data.iter().map(|z| z.re).chain(data.iter().map(|z| z.im)).collect()
}

pub fn reals_to_sample(x: &[f64], rows: usize, cols: usize, scale: f64) -> Result<ChannelSample> {
    let n = rows * cols;
    if x.len() != 2 * n {
        return Err(Error::shape("reals_to_sample", format!("{} reals for {rows}x{cols}", x.len())));
    }
    let data = (0..n).map(|i| Complex64::new(x[i], x[n + i])).collect();
    Ok(ChannelSample {
        matrix: CMatrix::from_vec(rows, cols, data)?,
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::spec::EncoderSpec;

    fn spec(kind: AdaptorKind) -> ModelSpec {
        ModelSpec::new(EncoderSpec::for_ratio(4, 4, 2, vec![24]).unwrap(), kind).unwrap()
    }

    fn input(rows: usize, width: usize) -> Tensor<f64> {
        let data: Vec<f64> = (0..rows * width).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect();
        Tensor::new([rows, width], data).unwrap()
    }

    #[test]
    fn parameter_count_matches_spec() {
        for kind in AdaptorKind::ALL {
            let m = Model::<f64>::init(spec(kind), 1).unwrap();
            assert_eq!(m.params().count(None), m.spec().param_count());
            assert_eq!(m.params().count(Some(ADAPTOR)), m.spec().adaptor.param_count());
        }
    }

    #[test]
    fn codewords_are_bounded_and_deterministic() {
        let m = Model::<f64>::init(spec(AdaptorKind::None), 2).unwrap();
        let x = input(3, 32).map(|v| v * 1e3);
        let v = m.encode_batch(&x).unwrap();
        assert_eq!(v.shape(), [3, 16]);
        assert!(v.data().iter().all(|x| x.abs() <= 1.0));
        assert_eq!(v, m.encode_batch(&x).unwrap());
    }

    #[test]
    fn fresh_adaptor_is_identity() {
        for kind in AdaptorKind::ALL {
            let m = Model::<f64>::init(spec(kind), 3).unwrap();
            let v = input(4, 16);
            assert_eq!(m.adapt_batch(&v).unwrap(), v, "{kind}");
        }
    }

    #[test]
    fn para_bottle_is_sum_of_branches() {
        let mut m = Model::<f64>::init(spec(AdaptorKind::ParaBottleFc), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ids: Vec<ParamId> = m
            .params()
            .iter()
            .filter(|(_, p)| p.group == ADAPTOR)
            .map(|(id, _)| id)
            .collect();
        for id in ids {
            let shape = m.params().value(id).shape().to_vec();
            let len = shape.iter().product();
            let data = (0..len).map(|_| rand::Rng::random_range(&mut rng, -0.5..0.5)).collect();
            m.params_mut().get_mut(id).value = Tensor::new(shape, data).unwrap();
        }
        let v = input(2, 16);
        let whole = m.adapt_batch(&v).unwrap();

        let mut tape = Tape::inference(m.params());
        let x = tape.input(v.clone());
        let b0 = m.adaptor_branch(&mut tape, x, 0).unwrap();
        let b1 = m.adaptor_branch(&mut tape, x, 1).unwrap();
        for i in 0..v.len() {
            let expected = v.data()[i] + tape.value(b0).data()[i] + tape.value(b1).data()[i];
            assert!((whole.data()[i] - expected).abs() < 1e-12);
        }
        assert_ne!(whole, v);
    }

    #[test]
    fn zeroed_adaptor_is_exact_identity() {
        let mut m = Model::<f64>::init(spec(AdaptorKind::OffsetNet), 5).unwrap();
        let ids: Vec<ParamId> = m.params().iter().filter(|(_, p)| p.group == ADAPTOR).map(|(id, _)| id).collect();
        for id in ids {
            let shape = m.params().value(id).shape().to_vec();
            m.params_mut().get_mut(id).value = Tensor::zeros(shape);
        }
        let v = input(3, 16);
        assert_eq!(m.adapt_batch(&v).unwrap(), v);
    }

    #[test]
    fn decoder_output_shape_and_finiteness() {
        let m = Model::<f64>::init(spec(AdaptorKind::None), 6).unwrap();
        let y = m.decode_batch(&Tensor::zeros([1, 16])).unwrap();
        assert_eq!(y.shape(), [1, 32]);
        assert!(y.is_finite());
    }

    #[test]
    fn width_mismatches_are_rejected() {
        let m = Model::<f64>::init(spec(AdaptorKind::BottleFc), 7).unwrap();
        assert!(m.encode_batch(&Tensor::zeros([1, 31])).is_err());
        assert!(m.decode_batch(&Tensor::zeros([1, 15])).is_err());
        assert!(m.adapt_batch(&Tensor::zeros([1, 17])).is_err());
    }

    #[test]
    fn adding_an_adaptor_keeps_the_trunk() {
        let base = Model::<f64>::init(spec(AdaptorKind::None), 8).unwrap();
        let enc = base.params().group_bytes(ENCODER);
        let with = base.clone().with_adaptor(AdaptorKind::BottleFc, 1).unwrap();
        assert_eq!(with.params().group_bytes(ENCODER), enc);
        assert_eq!(with.spec().adaptor.kind, AdaptorKind::BottleFc);
        assert!(with.clone().with_adaptor(AdaptorKind::OffsetNet, 1).is_err());
        let rebound = Model::from_params(with.spec().clone(), with.params().clone()).unwrap();
        assert_eq!(rebound.params().count(None), with.params().count(None));
        assert!(Model::from_params(base.spec().clone(), with.into_params()).is_err());
    }

    #[test]
    fn sample_layout_round_trip() {
        let x: Vec<f64> = (0..8).map(f64::from).collect();
        let s = reals_to_sample(&x, 2, 2, 1.0).unwrap();
        assert_eq!(s.matrix.get(0, 1), Complex64::new(1.0, 5.0));
        assert_eq!(sample_to_reals(&s), x);
    }
}
