use std::collections::BTreeMap;

use rand::Rng;

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable tensor with its gradient and Adam moment buffers.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub group: String,
    pub value: Tensor<T>,
    pub grad: Option<Tensor<T>>,
    pub first_moment: Tensor<T>,
    pub second_moment: Tensor<T>,
}

/// Named parameters, grouped for freezing (e.g. `encoder`, `adaptor`, `decoder`).
#[derive(Debug, Clone)]
pub struct ParamSet<T> {
    params: Vec<Param<T>>,
    frozen: BTreeMap<String, bool>,
    /// Adam step counter shared by all parameters.
    pub(crate) step: u64,
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            frozen: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn insert(&mut self, name: &str, group: &str, value: Tensor<T>) -> Result<ParamId> {
        if self.find(name).is_some() {
            return Err(Error::Config(format!("duplicate parameter `{name}`")));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "param insert" });
        }
        let shape = value.shape().to_vec();
        self.params.push(Param {
            name: name.to_owned(),
            group: group.to_owned(),
            value,
            grad: None,
            first_moment: Tensor::zeros(shape.clone()),
            second_moment: Tensor::zeros(shape),
        });
        self.frozen.entry(group.to_owned()).or_insert(false);
        Ok(ParamId(self.params.len() - 1))
    }

    /// Inserts a uniformly initialised parameter in `[-bound, bound]`.
    pub fn insert_uniform<R: Rng>(
        &mut self,
        name: &str,
        group: &str,
        shape: &[usize],
        bound: f64,
        rng: &mut R,
    ) -> Result<ParamId> {
        let len = shape.iter().product();
        let data = (0..len)
            .map(|_| T::of_f64(rng.random_range(-bound..=bound)))
            .collect();
        self.insert(name, group, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.find(name)
            .ok_or_else(|| Error::UnknownParam(name.to_owned()))
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn adam_steps(&self) -> u64 {
        self.step
    }

    pub fn groups(&self) -> impl Iterator<Item = (&str, bool)> {
        self.frozen.iter().map(|(g, &f)| (g.as_str(), f))
    }

    pub fn set_frozen(&mut self, group: &str, frozen: bool) {
        self.frozen.insert(group.to_owned(), frozen);
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.frozen
            .get(&self.params[id.0].group)
            .copied()
            .unwrap_or(false)
    }

    /// Total number of scalar values, optionally restricted to one group.
    pub fn count(&self, group: Option<&str>) -> usize {
        self.params
            .iter()
            .filter(|p| group.is_none_or(|g| p.group == g))
            .map(|p| p.value.len())
            .sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Stores freshly computed gradients, replacing any previous ones.
    pub fn set_grads(&mut self, grads: Vec<(ParamId, Tensor<T>)>) -> Result<()> {
        for (id, g) in grads {
            let p = &mut self.params[id.0];
            if g.shape() != p.value.shape() {
                return Err(Error::shape(
                    "set_grads",
                    format!("`{}`: {:?} vs {:?}", p.name, g.shape(), p.value.shape()),
                ));
            }
            p.grad = Some(g);
        }
        Ok(())
    }

    /// Little-endian bytes of every parameter in `group`, in insertion order.
    pub fn group_bytes(&self, group: &str) -> Vec<u8> {
        let mut out = Vec::new();
        for p in self.params.iter().filter(|p| p.group == group) {
            for x in p.value.data() {
                out.extend_from_slice(&x.as_f64().to_le_bytes());
            }
        }
        out
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    group: p.group.clone(),
                    value: p.value.cast(),
                    grad: p.grad.as_ref().map(Tensor::cast),
                    first_moment: p.first_moment.cast(),
                    second_moment: p.second_moment.cast(),
                })
                .collect(),
            frozen: self.frozen.clone(),
            step: self.step,
        }
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub(crate) fn frozen_map(&self) -> &BTreeMap<String, bool> {
        &self.frozen
    }

    pub(crate) fn from_parts(
        params: Vec<Param<T>>,
        frozen: BTreeMap<String, bool>,
        step: u64,
    ) -> Self {
        Self {
            params,
            frozen,
            step,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_are_rejected() {
        let mut ps = ParamSet::<f32>::new();
        ps.insert("a", "g", Tensor::zeros([2])).unwrap();
        assert!(ps.insert("a", "g", Tensor::zeros([2])).is_err());
    }

    #[test]
    fn counts_by_group() {
        let mut ps = ParamSet::<f32>::new();
        ps.insert("a", "enc", Tensor::zeros([2, 3])).unwrap();
        ps.insert("b", "dec", Tensor::zeros([4])).unwrap();
        assert_eq!(ps.count(None), 10);
        assert_eq!(ps.count(Some("enc")), 6);
    }
}
