//! Named trainable parameters and their registry.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Role of a parameter; decides weight-decay eligibility and initialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    /// Convolution kernel or linear weight.
    Weight,
    Bias,
    /// Layer-norm affine (gamma or beta).
    Norm,
    /// Relative position bias table.
    RelativeBias,
}

impl ParamKind {
    pub fn decays(self) -> bool {
        self == ParamKind::Weight
    }
}

#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub name: String,
    pub tensor: Tensor<T>,
    /// Same shape as `tensor`; written by backward, cleared by `zero_grad`.
    pub grad: Tensor<T>,
    pub kind: ParamKind,
    pub trainable: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered parameter registry. Registration order is the checkpoint order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
    by_name: HashMap<String, ParamId>,
}

pub fn validate_name(name: &str) -> Result<()> {
    if name.is_empty() || name.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("invalid parameter path `{name}`")));
    }
    Ok(())
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new(), by_name: HashMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>, kind: ParamKind) -> Result<ParamId> {
        let name = name.into();
        validate_name(&name)?;
        if self.by_name.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter path `{name}`")));
        }
        let id = ParamId(self.params.len());
        let grad = Tensor::zeros(tensor.shape());
        self.params.push(Parameter { name: name.clone(), tensor, grad, kind, trainable: true });
        self.by_name.insert(name, id);
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].tensor
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].tensor
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    /// Total number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.tensor.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(T::zero());
        }
    }

    /// Same parameters in another precision.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    tensor: p.tensor.cast(),
                    grad: p.grad.cast(),
                    kind: p.kind,
                    trainable: p.trainable,
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }
}

/// Builds dotted parameter paths while constructing a model.
pub struct Builder<'a, T, R: ?Sized> {
    pub store: &'a mut ParamStore<T>,
    pub rng: &'a mut R,
}

impl<'a, T: Scalar, R: Rng + ?Sized> Builder<'a, T, R> {
    pub fn new(store: &'a mut ParamStore<T>, rng: &'a mut R) -> Self {
        Builder { store, rng }
    }

    /// He-normal conv kernel `(out, in/groups, kh, kw)`.
    pub fn conv(&mut self, name: &str, out: usize, in_per_group: usize, kh: usize, kw: usize) -> Result<ParamId> {
        let fan_in = in_per_group * kh * kw;
        let t = Tensor::randn(&[out, in_per_group, kh, kw], (2.0 / fan_in as f64).sqrt(), self.rng);
        self.store.add(name, t, ParamKind::Weight)
    }

    /// He-normal linear weight `(out, in)`.
    pub fn linear(&mut self, name: &str, out: usize, inp: usize) -> Result<ParamId> {
        let t = Tensor::randn(&[out, inp], (2.0 / inp as f64).sqrt(), self.rng);
        self.store.add(name, t, ParamKind::Weight)
    }

    /// Zero-initialised linear weight `(out, in)`, for output layers whose
    /// initial predictions should be uniform.
    pub fn zero_linear(&mut self, name: &str, out: usize, inp: usize) -> Result<ParamId> {
        self.store.add(name, Tensor::zeros(&[out, inp]), ParamKind::Weight)
    }

    pub fn bias(&mut self, name: &str, len: usize) -> Result<ParamId> {
        self.store.add(name, Tensor::zeros(&[len]), ParamKind::Bias)
    }

    pub fn norm(&mut self, name: &str, len: usize) -> Result<(ParamId, ParamId)> {
        let g = self.store.add(format!("{name}.gamma"), Tensor::ones(&[len]), ParamKind::Norm)?;
        let b = self.store.add(format!("{name}.beta"), Tensor::zeros(&[len]), ParamKind::Norm)?;
        Ok((g, b))
    }

    pub fn relative_bias(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.store.add(name, Tensor::zeros(shape), ParamKind::RelativeBias)
    }
}
