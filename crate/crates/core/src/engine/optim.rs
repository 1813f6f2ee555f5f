use std::f64::consts::PI;

use super::params::ParamSet;
use super::tensor::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    /// One bias-corrected Adam update of every non-frozen parameter.
    ///
    /// Frozen groups are skipped entirely: values and moments stay untouched.
    /// Every trainable parameter must carry a gradient.
    pub fn step<T: Real>(&self, params: &mut ParamSet<T>, lr: f64) -> Result<()> {
        let trainable: Vec<bool> = params.iter().map(|(id, _)| !params.is_frozen(id)).collect();
        for (p, &train) in params.params_mut().iter().zip(&trainable) {
            if train && p.grad.is_none() {
                return Err(Error::MissingGradient(p.name.clone()));
            }
        }
        params.step += 1;
        let t = params.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::of_f64(self.beta1), T::of_f64(self.beta2));
        let (one_b1, one_b2) = (T::of_f64(1.0 - self.beta1), T::of_f64(1.0 - self.beta2));

        for (p, &train) in params.params_mut().iter_mut().zip(&trainable) {
            if !train {
                continue;
            }
            let grad = p.grad.as_ref().expect("checked above");
            let m = p.first_moment.data_mut();
            for (mi, &gi) in m.iter_mut().zip(grad.data()) {
                *mi = b1 * *mi + one_b1 * gi;
            }
            let v = p.second_moment.data_mut();
            for (vi, &gi) in v.iter_mut().zip(grad.data()) {
                *vi = b2 * *vi + one_b2 * gi * gi;
            }
            let (m, v) = (p.first_moment.data(), p.second_moment.data());
            for ((w, &mi), &vi) in p.value.data_mut().iter_mut().zip(m).zip(v) {
                let m_hat = mi.as_f64() / bc1;
                let v_hat = vi.as_f64() / bc2;
                let update = lr * m_hat / (v_hat.sqrt() + self.eps);
                *w = T::of_f64(w.as_f64() - update);
            }
            if !p.value.is_finite() {
                return Err(Error::NonFinite { op: "adam" });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrKind {
    Constant,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub kind: LrKind,
    pub max: f64,
    pub min: f64,
    pub total_steps: usize,
}

impl LrSchedule {
    pub fn cosine(max: f64, min: f64, total_steps: usize) -> Self {
        Self {
            kind: LrKind::Cosine,
            max,
            min,
            total_steps,
        }
    }

    pub fn constant(lr: f64, total_steps: usize) -> Self {
        Self {
            kind: LrKind::Constant,
            max: lr,
            min: lr,
            total_steps,
        }
    }

    pub fn lr_at(&self, step: usize) -> Result<f64> {
        if step > self.total_steps {
            return Err(Error::Config(format!(
                "lr step {step} beyond schedule length {}",
                self.total_steps
            )));
        }
        Ok(match self.kind {
            LrKind::Constant => self.max,
            LrKind::Cosine if self.total_steps == 0 => self.max,
            LrKind::Cosine => {
                let progress = step as f64 / self.total_steps as f64;
                self.min + 0.5 * (self.max - self.min) * (1.0 + (PI * progress).cos())
            }
        })
    }
}
