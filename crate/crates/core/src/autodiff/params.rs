use rand::Rng;
use rand_distr::StandardNormal;

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors with their gradient accumulators.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T = f32> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    grads: Vec<Vec<T>>,
}

/// Fan-in gain for GELU networks (the ReLU value; GELU behaves alike for
/// positive inputs and this keeps activations at unit scale).
pub const INIT_GAIN: f64 = std::f64::consts::SQRT_2;

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter name {name}");
        self.grads.push(vec![T::zero(); value.len()]);
        self.values.push(value);
        self.names.push(name);
        ParamId(self.values.len() - 1)
    }

    /// Kaiming fan-in normal initialization: `N(0, (gain / √fan_in)²)`.
    pub fn add_kaiming(&mut self, name: impl Into<String>, shape: Vec<usize>, fan_in: usize, rng: &mut impl Rng) -> ParamId {
        let std = INIT_GAIN / (fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| T::from_f64(std * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        self.add(name, Tensor::new(shape, data))
    }

    pub fn add_filled(&mut self, name: impl Into<String>, shape: Vec<usize>, v: f64) -> ParamId {
        let n = shape.iter().product();
        self.add(name, Tensor::new(shape, vec![T::from_f64(v); n]))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &[T] {
        &self.grads[id.0]
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn add_grad(&mut self, id: ParamId, g: &[T]) -> Result<()> {
        let acc = self
            .grads
            .get_mut(id.0)
            .ok_or_else(|| Error::Graph(format!("unknown parameter {}", id.0)))?;
        if acc.len() != g.len() {
            return Err(Error::Graph(format!(
                "gradient for {} has {} values, expected {}",
                self.names[id.0],
                g.len(),
                acc.len()
            )));
        }
        acc.iter_mut().zip(g).for_each(|(a, &v)| *a = *a + v);
        Ok(())
    }

    /// Multiplies every accumulated gradient by `s` (e.g. `1 / batch`).
    pub fn scale_grads(&mut self, s: f64) {
        let s = T::from_f64(s);
        for g in &mut self.grads {
            g.iter_mut().for_each(|v| *v = *v * s);
        }
    }

    /// Same names and values in another precision; gradients are reset.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            grads: self.values.iter().map(|v| vec![U::zero(); v.len()]).collect(),
        }
    }

    /// `(name, tensor)` pairs in insertion order.
    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }
}

/// Adam hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam optimizer state, one first/second moment buffer per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<T: Scalar>(config: AdamConfig, store: &ParamStore<T>) -> Self {
        let zeros = || store.values.iter().map(|t| vec![0.0; t.len()]).collect::<Vec<_>>();
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Number of updates applied so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    /// Restores a saved state; shapes must match the current buffers.
    pub fn restore(&mut self, step: u64, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> Result<()> {
        let same = |a: &[Vec<f64>], b: &[Vec<f64>]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.len() == y.len());
        if !same(&m, &self.m) || !same(&v, &self.v) {
            return Err(Error::Graph("optimizer state does not match the parameter layout".into()));
        }
        self.step = step;
        self.m = m;
        self.v = v;
        Ok(())
    }

    /// One bias-corrected Adam update from the gradients in `store`.
    ///
    /// Any non-finite gradient aborts before a single parameter changes.
    pub fn step<T: Scalar>(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        if store.values.len() != self.m.len() {
            return Err(Error::Graph("optimizer was built for a different parameter store".into()));
        }
        for (i, g) in store.grads.iter().enumerate() {
            if g.iter().any(|v| !v.as_f64().is_finite()) {
                return Err(Error::Diverged {
                    what: format!("gradient of {}", store.names[i]),
                    step: self.step,
                });
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
        for (i, value) in store.values.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[i], &mut self.v[i], &store.grads[i]);
            for j in 0..value.data.len() {
                let gj = g[j].as_f64();
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let update = lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
                value.data[j] = T::from_f64(value.data[j].as_f64() - update);
            }
        }
        Ok(())
    }
}
