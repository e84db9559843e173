//! Flat parameter storage. Layers refer to their tensors by slot index so the
//! optimizer can walk one contiguous list.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ConvSpec, Graph, Tensor, Var};
use crate::error::{Error, Result};

/// What a parameter belongs to, for curriculum freezing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Backbone,
    /// DGM branch of curriculum stage `k` (0-based).
    Dgm(usize),
    /// Fusion score of curriculum stage `k` (0-based).
    FusionScore(usize),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    roles: Vec<ParamRole>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor, role: ParamRole) -> usize {
        self.names.push(name.into());
        self.roles.push(role);
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn roles(&self) -> &[ParamRole] {
        &self.roles
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(move |i| &mut self.tensors[i])
    }

    pub fn element_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        self.names.iter().cloned().zip(self.tensors.iter()).collect()
    }

    /// Overwrites every tensor from `(name, tensor)` pairs; names and shapes
    /// must match exactly.
    pub fn assign(&mut self, named: Vec<(String, Tensor)>) -> Result<()> {
        if named.len() != self.len() {
            return Err(Error::Corrupt(format!(
                "checkpoint has {} tensors, model has {}",
                named.len(),
                self.len()
            )));
        }
        for (name, t) in named {
            let i = self
                .names
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::Corrupt(format!("unknown tensor '{name}' in checkpoint")))?;
            if t.shape() != self.tensors[i].shape() {
                return Err(Error::Corrupt(format!(
                    "tensor '{name}' has shape {:?}, expected {:?}",
                    t.shape(),
                    self.tensors[i].shape()
                )));
            }
            self.tensors[i] = t;
        }
        Ok(())
    }

    /// Puts every parameter on the tape; `trainable(role)` decides which ones
    /// receive gradients.
    pub fn bind(&self, g: &mut Graph, trainable: impl Fn(ParamRole) -> bool) -> Vec<Var> {
        self.tensors
            .iter()
            .zip(&self.roles)
            .map(|(t, &r)| g.leaf(t.clone(), trainable(r)))
            .collect()
    }
}

fn he_uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub name: String,
    pub spec: ConvSpec,
    pub weight: usize,
    pub bias: usize,
}

impl ConvLayer {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        spec: ConvSpec,
        role: ParamRole,
    ) -> Result<Self> {
        spec.validate()?;
        let w = he_uniform(rng, &spec.weight_shape(), spec.fan_in());
        let weight = store.push(format!("{name}.weight"), w, role);
        let bias = store.push(format!("{name}.bias"), Tensor::zeros(&[spec.out_channels]), role);
        Ok(Self {
            name: name.to_string(),
            spec,
            weight,
            bias,
        })
    }

    pub fn apply(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        g.conv2d(x, vars[self.weight], Some(vars[self.bias]), &self.spec)
    }

    pub fn weight_count(&self) -> usize {
        self.spec.param_count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub name: String,
    pub in_features: usize,
    pub out_features: usize,
    pub weight: usize,
    pub bias: usize,
}

impl LinearLayer {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_features: usize,
        out_features: usize,
    ) -> Self {
        let w = he_uniform(rng, &[in_features, out_features], in_features);
        let weight = store.push(format!("{name}.weight"), w, ParamRole::Backbone);
        let bias = store.push(
            format!("{name}.bias"),
            Tensor::zeros(&[out_features]),
            ParamRole::Backbone,
        );
        Self {
            name: name.to_string(),
            in_features,
            out_features,
            weight,
            bias,
        }
    }

    pub fn apply(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        g.linear(x, vars[self.weight], Some(vars[self.bias]))
    }
}
