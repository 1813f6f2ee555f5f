//! Reverse-mode tape over dense tensors.
//!
//! A [`Tape`] records one forward pass against a borrowed [`ParamSet`].
//! Parameter leaves are not copied; their values are read from the set.
//! Every recorded op checks its output for non-finite values and fails with
//! [`Error::NonFinite`] instead of propagating them.

use super::params::{ParamId, ParamSet};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Tanh,
    LeakyRelu(f64),
    Identity,
}

/// Which way round the per-sample energy ratio is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioForm {
    /// `‖a − b‖² / ‖a‖²`: noise over signal.
    NoiseOverSignal,
    /// `‖a‖² / ‖a − b‖²`: signal over noise.
    SignalOverNoise,
}

enum Op<T> {
    Input,
    Param(ParamId),
    Dense { x: Var, w: Var, b: Var },
    Act { x: Var, act: Activation },
    Add(Var, Var),
    Scale(Var, T),
    Ste(Var),
    Mse { pred: Var, target: Var },
    L1(Var),
    Ratio { reference: Var, approx: Var, form: RatioForm },
}

struct Node<T> {
    op: Op<T>,
    value: Option<Tensor<T>>,
    requires_grad: bool,
}

pub struct Tape<'p, T: Real> {
    params: &'p ParamSet<T>,
    nodes: Vec<Node<T>>,
    track_params: bool,
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    by_node: Vec<Option<Tensor<T>>>,
    params: Vec<(ParamId, usize)>,
}

impl<T: Real> Gradients<T> {
    pub fn wrt(&self, var: Var) -> Option<&Tensor<T>> {
        self.by_node[var.0].as_ref()
    }

    /// Gradients of every trainable parameter that took part in the pass.
    pub fn into_param_grads(mut self) -> Vec<(ParamId, Tensor<T>)> {
        let mut out = Vec::with_capacity(self.params.len());
        for (id, node) in self.params {
            if let Some(g) = self.by_node[node].take() {
                out.push((id, g));
            }
        }
        out
    }
}

fn check_finite<T: Real>(op: &'static str, t: &Tensor<T>) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

fn row_sq_norm<T: Real>(row: &[T]) -> f64 {
    row.iter().map(|&x| x.as_f64() * x.as_f64()).sum()
}

fn row_sq_dist<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum()
}

/// Rows of a batch tensor: the leading dimension, or 1 for vectors.
fn batch_rows<T: Real>(t: &Tensor<T>) -> usize {
    if t.shape().len() >= 2 {
        t.shape()[0]
    } else {
        1
    }
}

impl<'p, T: Real> Tape<'p, T> {
    /// A tape that records gradients for non-frozen parameters.
    pub fn new(params: &'p ParamSet<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            track_params: true,
        }
    }

    /// A forward-only tape; nothing requires gradients.
    pub fn inference(params: &'p ParamSet<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            track_params: false,
        }
    }

    fn push(&mut self, op: Op<T>, value: Option<Tensor<T>>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        match (&self.nodes[v.0].op, &self.nodes[v.0].value) {
            (Op::Param(id), _) => self.params.value(*id),
            (_, Some(t)) => t,
            (_, None) => unreachable!("non-parameter node without a value"),
        }
    }

    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(Op::Input, Some(t), false)
    }

    /// An input whose gradient is wanted, e.g. for finite-difference checks.
    pub fn input_with_grad(&mut self, t: Tensor<T>) -> Var {
        self.push(Op::Input, Some(t), true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let requires = self.track_params && !self.params.is_frozen(id);
        self.push(Op::Param(id), None, requires)
    }

    /// `y = x·W + b` for `x: [batch×in]`, `W: [in×out]`, `b: [out]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xv = self.value(x);
        let wv = self.value(w);
        let bv = self.value(b);
        let (batch, fan_in) = xv.dims2()?;
        let (w_in, fan_out) = wv.dims2()?;
        if fan_in != w_in || bv.shape() != [fan_out] {
            return Err(Error::shape(
                "dense",
                format!(
                    "x {:?}, W {:?}, b {:?}",
                    xv.shape(),
                    wv.shape(),
                    bv.shape()
                ),
            ));
        }
        let mut out = Tensor::zeros([batch, fan_out]);
        {
            let bias = bv.data();
            for row in out.data_mut().chunks_exact_mut(fan_out) {
                row.copy_from_slice(bias);
            }
        }
        T::gemm(
            batch,
            fan_in,
            fan_out,
            T::one(),
            xv.data(),
            fan_in as isize,
            1,
            wv.data(),
            fan_out as isize,
            1,
            T::one(),
            out.data_mut(),
        );
        check_finite("dense", &out)?;
        let rg = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(Op::Dense { x, w, b }, Some(out), rg))
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Result<Var> {
        let out = match act {
            Activation::Tanh => self.value(x).map(|v| v.tanh()),
            Activation::LeakyRelu(slope) => {
                let s = T::of_f64(slope);
                self.value(x)
                    .map(|v| if v > T::zero() { v } else { v * s })
            }
            Activation::Identity => self.value(x).clone(),
        };
        check_finite("activation", &out)?;
        let rg = self.needs(x);
        Ok(self.push(Op::Act { x, act }, Some(out), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(
                "add",
                format!("{:?} vs {:?}", av.shape(), bv.shape()),
            ));
        }
        let mut out = av.clone();
        out.add_assign(bv);
        check_finite("add", &out)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), Some(out), rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let c = T::of_f64(c);
        let out = self.value(x).map(|v| v * c);
        check_finite("scale", &out)?;
        let rg = self.needs(x);
        Ok(self.push(Op::Scale(x, c), Some(out), rg))
    }

    /// Straight-through node: the forward value comes from `f`, the backward
    /// pass treats the node as the identity.
    pub fn straight_through(
        &mut self,
        x: Var,
        f: impl FnOnce(&Tensor<T>) -> Result<Tensor<T>>,
    ) -> Result<Var> {
        let out = f(self.value(x))?;
        if out.shape() != self.value(x).shape() {
            return Err(Error::shape("straight_through", "forward changed the shape"));
        }
        check_finite("straight_through", &out)?;
        let rg = self.needs(x);
        Ok(self.push(Op::Ste(x), Some(out), rg))
    }

    /// `(1/N) Σᵢ ‖predᵢ − targetᵢ‖²` with `N` the number of rows.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return Err(Error::shape(
                "mse",
                format!("{:?} vs {:?}", p.shape(), t.shape()),
            ));
        }
        let n = batch_rows(p);
        let total = row_sq_dist(p.data(), t.data());
        let out = Tensor::scalar(T::of_f64(total / n as f64));
        check_finite("mse", &out)?;
        let rg = self.needs(pred) || self.needs(target);
        Ok(self.push(Op::Mse { pred, target }, Some(out), rg))
    }

    /// `Σ |xᵢ|` over every element.
    pub fn l1(&mut self, x: Var) -> Result<Var> {
        let total: f64 = self.value(x).data().iter().map(|v| v.as_f64().abs()).sum();
        let out = Tensor::scalar(T::of_f64(total));
        check_finite("l1", &out)?;
        let rg = self.needs(x);
        Ok(self.push(Op::L1(x), Some(out), rg))
    }

    /// Batch mean of a per-row energy ratio between `reference` and `approx`.
    pub fn energy_ratio(&mut self, reference: Var, approx: Var, form: RatioForm) -> Result<Var> {
        let (r, a) = (self.value(reference), self.value(approx));
        if r.shape() != a.shape() {
            return Err(Error::shape(
                "energy_ratio",
                format!("{:?} vs {:?}", r.shape(), a.shape()),
            ));
        }
        let rows = batch_rows(r);
        let cols = r.len() / rows.max(1);
        let mut total = 0.0;
        for i in 0..rows {
            let rr = &r.data()[i * cols..(i + 1) * cols];
            let ar = &a.data()[i * cols..(i + 1) * cols];
            let signal = row_sq_norm(rr);
            let noise = row_sq_dist(rr, ar);
            total += match form {
                RatioForm::NoiseOverSignal => noise / signal,
                RatioForm::SignalOverNoise => signal / noise,
            };
        }
        let out = Tensor::scalar(T::of_f64(total / rows as f64));
        check_finite("energy_ratio", &out)?;
        let rg = self.needs(reference) || self.needs(approx);
        Ok(self.push(
            Op::Ratio {
                reference,
                approx,
                form,
            },
            Some(out),
            rg,
        ))
    }

    /// Sum of two scalars, a convenience over [`Tape::add`].
    pub fn add_scalars(&mut self, a: Var, b: Var) -> Result<Var> {
        self.add(a, b)
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.value(v).data()[0].as_f64()
    }

    /// Back-propagates from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape("backward", "loss must be a scalar"));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor<T>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape().to_vec(), T::one()));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let contributions = self.local_backward(idx, &g)?;
            grads[idx] = Some(g);
            for (target, contrib) in contributions {
                if !self.nodes[target.0].requires_grad {
                    continue;
                }
                check_finite("backward", &contrib)?;
                match &mut grads[target.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
        }

        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, node)| match node.op {
                Op::Param(id) if node.requires_grad => Some((id, i)),
                _ => None,
            })
            .collect();
        Ok(Gradients {
            by_node: grads,
            params,
        })
    }

    fn local_backward(&self, idx: usize, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let node = &self.nodes[idx];
        let out = match node.op {
            Op::Input | Op::Param(_) => Vec::new(),
            Op::Dense { x, w, b } => {
                let xv = self.value(x);
                let wv = self.value(w);
                let (batch, fan_in) = xv.dims2()?;
                let fan_out = wv.shape()[1];
                let mut out = Vec::with_capacity(3);
                if self.needs(x) {
                    // dx = g · Wᵀ
                    let mut dx = Tensor::zeros([batch, fan_in]);
                    T::gemm(
                        batch,
                        fan_out,
                        fan_in,
                        T::one(),
                        g.data(),
                        fan_out as isize,
                        1,
                        wv.data(),
                        1,
                        fan_out as isize,
                        T::zero(),
                        dx.data_mut(),
                    );
                    out.push((x, dx));
                }
                if self.needs(w) {
                    // dW = xᵀ · g
                    let mut dw = Tensor::zeros([fan_in, fan_out]);
                    T::gemm(
                        fan_in,
                        batch,
                        fan_out,
                        T::one(),
                        xv.data(),
                        1,
                        fan_in as isize,
                        g.data(),
                        fan_out as isize,
                        1,
                        T::zero(),
                        dw.data_mut(),
                    );
                    out.push((w, dw));
                }
                if self.needs(b) {
                    let mut acc = vec![0.0f64; fan_out];
                    for row in g.data().chunks_exact(fan_out) {
                        for (a, &v) in acc.iter_mut().zip(row) {
                            *a += v.as_f64();
                        }
                    }
                    out.push((b, Tensor::from_f64([fan_out], &acc)?));
                }
                out
            }
            Op::Act { x, act } => {
                let grad = match act {
                    Activation::Tanh => {
                        let y = node.value.as_ref().expect("activation output");
                        let data = g
                            .data()
                            .iter()
                            .zip(y.data())
                            .map(|(&gi, &yi)| gi * (T::one() - yi * yi))
                            .collect();
                        Tensor::new(g.shape().to_vec(), data)?
                    }
                    Activation::LeakyRelu(slope) => {
                        let s = T::of_f64(slope);
                        let data = g
                            .data()
                            .iter()
                            .zip(self.value(x).data())
                            .map(|(&gi, &xi)| if xi > T::zero() { gi } else { gi * s })
                            .collect();
                        Tensor::new(g.shape().to_vec(), data)?
                    }
                    Activation::Identity => g.clone(),
                };
                vec![(x, grad)]
            }
            Op::Add(a, b) => vec![(a, g.clone()), (b, g.clone())],
            Op::Scale(x, c) => vec![(x, g.map(|v| v * c))],
            Op::Ste(x) => vec![(x, g.clone())],
            Op::Mse { pred, target } => {
                let (p, t) = (self.value(pred), self.value(target));
                let n = batch_rows(p) as f64;
                let scale = 2.0 * g.data()[0].as_f64() / n;
                let dp: Vec<T> = p
                    .data()
                    .iter()
                    .zip(t.data())
                    .map(|(&pi, &ti)| T::of_f64(scale * (pi.as_f64() - ti.as_f64())))
                    .collect();
                let dp = Tensor::new(p.shape().to_vec(), dp)?;
                let dt = dp.map(|v| -v);
                vec![(pred, dp), (target, dt)]
            }
            Op::L1(x) => {
                let gs = g.data()[0];
                let dx = self.value(x).map(|v| {
                    if v > T::zero() {
                        gs
                    } else if v < T::zero() {
                        -gs
                    } else {
                        T::zero()
                    }
                });
                vec![(x, dx)]
            }
            Op::Ratio {
                reference,
                approx,
                form,
            } => {
                let (r, a) = (self.value(reference), self.value(approx));
                let rows = batch_rows(r);
                let cols = r.len() / rows.max(1);
                let gs = g.data()[0].as_f64() / rows as f64;
                let mut dr = vec![T::zero(); r.len()];
                let mut da = vec![T::zero(); a.len()];
                for i in 0..rows {
                    let span = i * cols..(i + 1) * cols;
                    let rr = &r.data()[span.clone()];
                    let ar = &a.data()[span.clone()];
                    let s = row_sq_norm(rr);
                    let q = row_sq_dist(rr, ar);
                    // ratio = num/den with num, den ∈ {s, q};
                    // ∂s/∂r = 2r, ∂q/∂r = 2(r−a), ∂q/∂a = −2(r−a).
                    let (d_num_coef, d_den_coef, num_is_noise) = match form {
                        RatioForm::NoiseOverSignal => (1.0 / s, -q / (s * s), true),
                        RatioForm::SignalOverNoise => (1.0 / q, -s / (q * q), false),
                    };
                    let (coef_q, coef_s) = if num_is_noise {
                        (d_num_coef, d_den_coef)
                    } else {
                        (d_den_coef, d_num_coef)
                    };
                    for j in 0..cols {
                        let rj = rr[j].as_f64();
                        let diff = rj - ar[j].as_f64();
                        let d_ref = gs * (coef_q * 2.0 * diff + coef_s * 2.0 * rj);
                        let d_app = gs * (-coef_q * 2.0 * diff);
                        dr[span.start + j] = T::of_f64(d_ref);
                        da[span.start + j] = T::of_f64(d_app);
                    }
                }
                vec![
                    (reference, Tensor::new(r.shape().to_vec(), dr)?),
                    (approx, Tensor::new(a.shape().to_vec(), da)?),
                ]
            }
        };
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn dense_with_identity_weight_is_passthrough() {
        let mut ps = ParamSet::<f64>::new();
        let w = ps
            .insert("w", "g", t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]))
            .unwrap();
        let b = ps.insert("b", "g", Tensor::zeros([2])).unwrap();
        let mut tape = Tape::new(&ps);
        let x = tape.input(t(&[1, 2], &[3.0, -4.0]));
        let (wv, bv) = (tape.param(w), tape.param(b));
        let y = tape.dense(x, wv, bv).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, -4.0]);
    }

    #[test]
    fn dense_of_zero_input_is_bias() {
        let mut ps = ParamSet::<f64>::new();
        let w = ps.insert("w", "g", t(&[2, 3], &[1.0; 6])).unwrap();
        let b = ps.insert("b", "g", t(&[3], &[0.5, -1.0, 2.0])).unwrap();
        let mut tape = Tape::new(&ps);
        let x = tape.input(Tensor::zeros([2, 2]));
        let (wv, bv) = (tape.param(w), tape.param(b));
        let y = tape.dense(x, wv, bv).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
    }

    #[test]
    fn activations_at_reference_points() {
        let ps = ParamSet::<f64>::new();
        let mut tape = Tape::new(&ps);
        let x = tape.input(t(&[2], &[0.0, -1.0]));
        let th = tape.activation(x, Activation::Tanh).unwrap();
        let lr = tape.activation(x, Activation::LeakyRelu(0.3)).unwrap();
        assert_eq!(tape.value(th).data()[0], 0.0);
        assert!((tape.value(lr).data()[1] + 0.3).abs() < 1e-15);
    }

    #[test]
    fn mse_of_unit_residual_sums_elements() {
        let ps = ParamSet::<f64>::new();
        let mut tape = Tape::new(&ps);
        let p = tape.input(Tensor::full([1, 2048], 1.0));
        let q = tape.input(Tensor::zeros([1, 2048]));
        let loss = tape.mse(p, q).unwrap();
        assert_eq!(tape.scalar_value(loss), 2048.0);
        let z = tape.mse(p, p).unwrap();
        assert_eq!(tape.scalar_value(z), 0.0);
    }

    #[test]
    fn l1_reference_values() {
        let ps = ParamSet::<f64>::new();
        let mut tape = Tape::new(&ps);
        let a = tape.input(Tensor::zeros([3]));
        let b = tape.input(t(&[2], &[0.5, -0.5]));
        let la = tape.l1(a).unwrap();
        let lb = tape.l1(b).unwrap();
        assert_eq!(tape.scalar_value(la), 0.0);
        assert_eq!(tape.scalar_value(lb), 1.0);
    }

    #[test]
    fn l1_subgradient_at_zero_is_zero() {
        let ps = ParamSet::<f64>::new();
        let mut tape = Tape::new(&ps);
        let x = tape.input_with_grad(t(&[3], &[0.0, 2.0, -1.0]));
        let l = tape.l1(x).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[0.0, 1.0, -1.0]);
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let ps = ParamSet::<f64>::new();
        let mut tape = Tape::new(&ps);
        let x = tape.input(t(&[1], &[1e308]));
        assert!(matches!(tape.scale(x, 10.0), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn straight_through_passes_gradient_unchanged() {
        let ps = ParamSet::<f64>::new();
        let mut tape = Tape::new(&ps);
        let x = tape.input_with_grad(t(&[1, 3], &[0.1, -0.7, 0.33]));
        let q = tape
            .straight_through(x, |v| Ok(v.map(|e| (e * 4.0).round() / 4.0)))
            .unwrap();
        assert_eq!(tape.value(q).data(), &[0.0, -0.75, 0.25]);
        let s = tape.l1(q).unwrap();
        let g = tape.backward(s).unwrap();
        // d/dx Σ|q| = sign(q) passed straight through; q₀ = 0 gives 0.
        assert_eq!(g.wrt(x).unwrap().data(), &[0.0, -1.0, 1.0]);
    }

    #[test]
    fn frozen_parameters_receive_no_gradient() {
        let mut ps = ParamSet::<f64>::new();
        let w = ps.insert("w", "enc", t(&[1, 1], &[2.0])).unwrap();
        let b = ps.insert("b", "enc", t(&[1], &[0.0])).unwrap();
        ps.set_frozen("enc", true);
        let mut tape = Tape::new(&ps);
        let x = tape.input(t(&[1, 1], &[1.0]));
        let (wv, bv) = (tape.param(w), tape.param(b));
        let y = tape.dense(x, wv, bv).unwrap();
        let l = tape.l1(y).unwrap();
        assert!(tape.backward(l).unwrap().into_param_grads().is_empty());
    }
}
