//! Finite-difference checks of every tape op in `f64`.

use csiq_core::engine::{Activation, ParamSet, RatioForm, Tape, Tensor, Var};
use csiq_core::quant::{quantize_ste, quantize_tensor, Quantizer, QuantizerConfig};
use csiq_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn random(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero, for ops with a kink there.
fn away_from_zero(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.2..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-10 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

type Build = dyn Fn(&mut Tape<'_, f64>, &[Var]) -> Result<Var>;

fn eval(inputs: &[Tensor<f64>], build: &Build) -> f64 {
    let ps = ParamSet::new();
    let mut tape = Tape::new(&ps);
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let loss = build(&mut tape, &vars).unwrap();
    tape.scalar_value(loss)
}

/// Largest relative error between the tape gradient and central differences
/// over every element of every input.
fn check_inputs(inputs: Vec<Tensor<f64>>, build: &Build) -> f64 {
    let ps = ParamSet::new();
    let mut tape = Tape::new(&ps);
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input_with_grad(t.clone())).collect();
    let loss = build(&mut tape, &vars).unwrap();
    let grads = tape.backward(loss).unwrap();

    let mut worst: f64 = 0.0;
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var).expect("input gradient").clone();
        for i in 0..inputs[k].len() {
            let mut plus = inputs.clone();
            plus[k].data_mut()[i] += STEP;
            let mut minus = inputs.clone();
            minus[k].data_mut()[i] -= STEP;
            let numeric = (eval(&plus, build) - eval(&minus, build)) / (2.0 * STEP);
            worst = worst.max(rel_err(analytic.data()[i], numeric));
        }
    }
    worst
}

fn target(shape: &[usize]) -> Tensor<f64> {
    random(shape, 999, -1.0, 1.0)
}

#[test]
fn dense_inputs_weights_and_bias() {
    let t = target(&[3, 4]);
    let err = check_inputs(
        vec![random(&[3, 5], 1, -1.0, 1.0), random(&[5, 4], 2, -1.0, 1.0), random(&[4], 3, -1.0, 1.0)],
        &move |tape, v| {
            let y = tape.dense(v[0], v[1], v[2])?;
            let t = tape.input(t.clone());
            tape.mse(y, t)
        },
    );
    assert!(err < TOL, "{err}");
}

#[test]
fn dense_parameters_through_param_set() {
    let mut ps = ParamSet::<f64>::new();
    let w = ps.insert("w", "g", random(&[4, 3], 4, -1.0, 1.0)).unwrap();
    let b = ps.insert("b", "g", random(&[3], 5, -1.0, 1.0)).unwrap();
    let x = random(&[2, 4], 6, -1.0, 1.0);
    let t = target(&[2, 3]);
    let loss_of = |ps: &ParamSet<f64>| -> (f64, Vec<(csiq_core::engine::ParamId, Tensor<f64>)>) {
        let mut tape = Tape::new(ps);
        let xv = tape.input(x.clone());
        let (wv, bv) = (tape.param(w), tape.param(b));
        let y = tape.dense(xv, wv, bv).unwrap();
        let y = tape.activation(y, Activation::Tanh).unwrap();
        let tv = tape.input(t.clone());
        let l = tape.mse(y, tv).unwrap();
        let value = tape.scalar_value(l);
        (value, tape.backward(l).unwrap().into_param_grads())
    };
    let (_, grads) = loss_of(&ps);
    assert_eq!(grads.len(), 2);
    let mut worst: f64 = 0.0;
    for (id, g) in grads {
        for i in 0..g.len() {
            let mut plus = ps.clone();
            plus.get_mut(id).value.data_mut()[i] += STEP;
            let mut minus = ps.clone();
            minus.get_mut(id).value.data_mut()[i] -= STEP;
            let numeric = (loss_of(&plus).0 - loss_of(&minus).0) / (2.0 * STEP);
            worst = worst.max(rel_err(g.data()[i], numeric));
        }
    }
    assert!(worst < TOL, "{worst}");
}

#[test]
fn activations() {
    for act in [Activation::Tanh, Activation::LeakyRelu(0.3), Activation::Identity] {
        let t = target(&[2, 6]);
        let err = check_inputs(vec![away_from_zero(&[2, 6], 7)], &move |tape, v| {
            let y = tape.activation(v[0], act)?;
            let t = tape.input(t.clone());
            tape.mse(y, t)
        });
        assert!(err < TOL, "{act:?}: {err}");
    }
}

#[test]
fn add_and_scale() {
    let t = target(&[3, 3]);
    let err = check_inputs(
        vec![random(&[3, 3], 8, -1.0, 1.0), random(&[3, 3], 9, -1.0, 1.0)],
        &move |tape, v| {
            let s = tape.add(v[0], v[1])?;
            let s = tape.scale(s, -1.7)?;
            let t = tape.input(t.clone());
            tape.mse(s, t)
        },
    );
    assert!(err < TOL, "{err}");
}

#[test]
fn mse_both_arguments() {
    let err = check_inputs(
        vec![random(&[4, 3], 10, -1.0, 1.0), random(&[4, 3], 11, -1.0, 1.0)],
        &|tape, v| tape.mse(v[0], v[1]),
    );
    assert!(err < TOL, "{err}");
}

#[test]
fn l1_away_from_the_kink() {
    let err = check_inputs(vec![away_from_zero(&[3, 5], 12)], &|tape, v| {
        let l = tape.l1(v[0])?;
        tape.scale(l, 0.25)
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn energy_ratio_both_forms_and_arguments() {
    for form in [RatioForm::NoiseOverSignal, RatioForm::SignalOverNoise] {
        let err = check_inputs(
            vec![random(&[3, 4], 13, -1.0, 1.0), random(&[3, 4], 14, -1.0, 1.0)],
            &move |tape, v| tape.energy_ratio(v[0], v[1], form),
        );
        assert!(err < TOL, "{form:?}: {err}");
    }
}

#[test]
fn scalar_sum() {
    let err = check_inputs(
        vec![random(&[2, 2], 15, -1.0, 1.0), random(&[2, 2], 16, -1.0, 1.0)],
        &|tape, v| {
            let a = tape.mse(v[0], v[1])?;
            let b = tape.l1(v[1])?;
            let b = tape.scale(b, 0.1)?;
            tape.add_scalars(a, b)
        },
    );
    assert!(err < TOL, "{err}");
}

/// Two-layer toy network with the quantizer between the layers.
struct Toy {
    ps: ParamSet<f64>,
    x: Tensor<f64>,
    t: Tensor<f64>,
}

impl Toy {
    fn new() -> Self {
        let mut ps = ParamSet::new();
        ps.insert("w0", "g", random(&[6, 4], 20, -0.8, 0.8)).unwrap();
        ps.insert("b0", "g", random(&[4], 21, -0.1, 0.1)).unwrap();
        ps.insert("w1", "g", random(&[4, 6], 22, -0.8, 0.8)).unwrap();
        ps.insert("b1", "g", random(&[6], 23, -0.1, 0.1)).unwrap();
        Self {
            ps,
            x: random(&[5, 6], 24, -1.0, 1.0),
            t: random(&[5, 6], 25, -1.0, 1.0),
        }
    }

    /// `substitute`: replace the STE node by `v + (Q(v) − v)` with the
    /// offset held constant, i.e. identity in the backward pass by
    /// construction.
    fn grads(&self, ps: &ParamSet<f64>, q: &Quantizer, substitute: bool) -> (f64, Vec<Tensor<f64>>) {
        let mut tape = Tape::new(ps);
        let x = tape.input(self.x.clone());
        let p = |name: &str| ps.id(name).unwrap();
        let (w0, b0, w1, b1) = (tape.param(p("w0")), tape.param(p("b0")), tape.param(p("w1")), tape.param(p("b1")));
        let h = tape.dense(x, w0, b0).unwrap();
        let v = tape.activation(h, Activation::Tanh).unwrap();
        let vq = if substitute {
            let value = tape.value(v).clone();
            let quantized = quantize_tensor(&value, q).unwrap();
            let mut offset = quantized.clone();
            for (o, (a, b)) in offset.data_mut().iter_mut().zip(quantized.data().iter().zip(value.data())) {
                *o = a - b;
            }
            let c = tape.input(offset);
            tape.add(v, c).unwrap()
        } else {
            quantize_ste(&mut tape, v, q).unwrap()
        };
        let y = tape.dense(vq, w1, b1).unwrap();
        let t = tape.input(self.t.clone());
        let loss = tape.mse(y, t).unwrap();
        let value = tape.scalar_value(loss);
        let mut grads = tape.backward(loss).unwrap().into_param_grads();
        grads.sort_by_key(|(id, _)| id.index());
        (value, grads.into_iter().map(|(_, g)| g).collect())
    }
}

#[test]
fn ste_matches_identity_backward_substitution() {
    let toy = Toy::new();
    let q = Quantizer::new(QuantizerConfig::mu_law(4)).unwrap();
    let (l_ste, g_ste) = toy.grads(&toy.ps, &q, false);
    let (l_sub, g_sub) = toy.grads(&toy.ps, &q, true);
    assert!((l_ste - l_sub).abs() < 1e-12);
    assert_eq!(g_ste.len(), 4);
    for (a, b) in g_ste.iter().zip(&g_sub) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
        }
    }
}

#[test]
fn substituted_graph_passes_finite_differences() {
    // With the offset frozen the substituted graph is smooth, so its
    // gradient can be checked numerically; the STE gradient equals it.
    let toy = Toy::new();
    let q = Quantizer::new(QuantizerConfig::mu_law(4)).unwrap();
    let (_, g_ste) = toy.grads(&toy.ps, &q, false);

    let value = {
        let mut tape = Tape::inference(&toy.ps);
        let x = tape.input(toy.x.clone());
        let p = |n: &str| toy.ps.id(n).unwrap();
        let (w0, b0) = (tape.param(p("w0")), tape.param(p("b0")));
        let h = tape.dense(x, w0, b0).unwrap();
        let v = tape.activation(h, Activation::Tanh).unwrap();
        tape.value(v).clone()
    };
    let quantized = quantize_tensor(&value, &q).unwrap();
    let offset: Vec<f64> = quantized.data().iter().zip(value.data()).map(|(a, b)| a - b).collect();
    let offset = Tensor::new(value.shape().to_vec(), offset).unwrap();

    let frozen_loss = |ps: &ParamSet<f64>| -> f64 {
        let mut tape = Tape::inference(ps);
        let x = tape.input(toy.x.clone());
        let p = |n: &str| ps.id(n).unwrap();
        let (w0, b0, w1, b1) = (tape.param(p("w0")), tape.param(p("b0")), tape.param(p("w1")), tape.param(p("b1")));
        let h = tape.dense(x, w0, b0).unwrap();
        let v = tape.activation(h, Activation::Tanh).unwrap();
        let c = tape.input(offset.clone());
        let vq = tape.add(v, c).unwrap();
        let y = tape.dense(vq, w1, b1).unwrap();
        let t = tape.input(toy.t.clone());
        let l = tape.mse(y, t).unwrap();
        tape.scalar_value(l)
    };

    let mut worst: f64 = 0.0;
    for (k, name) in ["w0", "b0", "w1", "b1"].iter().enumerate() {
        let id = toy.ps.id(name).unwrap();
        for i in 0..g_ste[k].len() {
            let mut plus = toy.ps.clone();
            plus.get_mut(id).value.data_mut()[i] += STEP;
            let mut minus = toy.ps.clone();
            minus.get_mut(id).value.data_mut()[i] -= STEP;
            let numeric = (frozen_loss(&plus) - frozen_loss(&minus)) / (2.0 * STEP);
            worst = worst.max(rel_err(g_ste[k].data()[i], numeric));
        }
    }
    assert!(worst < TOL, "{worst}");
}
