//! Named trainable parameters and first-order optimizers.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Gradients, Graph};
use crate::rng::Rng;
use crate::tensor::{Init, Scalar, Tensor};

/// Moment buffers kept per parameter by [`Optimizer::Adam`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub first_moment: Tensor<T>,
    pub second_moment: Tensor<T>,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T: Scalar = f32> {
    name: String,
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    state: Option<OptimizerState<T>>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        Self {
            name: name.into(),
            value,
            grad: None,
            state: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Tensor<T> {
        &mut self.value
    }

    pub fn grad(&self) -> Option<&Tensor<T>> {
        self.grad.as_ref()
    }

    pub fn state(&self) -> Option<&OptimizerState<T>> {
        self.state.as_ref()
    }

    pub fn accumulate_grad(&mut self, g: &Tensor<T>) -> Result<()> {
        match &mut self.grad {
            Some(acc) => acc.add_assign(g),
            None => {
                self.value.expect_same_shape(g)?;
                self.grad = Some(g.clone());
                Ok(())
            }
        }
    }
}

/// An ordered, name-indexed collection of parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<T: Scalar = f32> {
    params: Vec<Parameter<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, p: Parameter<T>) -> Result<usize> {
        if self.index.contains_key(p.name()) {
            return Err(Error::Config(format!("duplicate parameter name {}", p.name())));
        }
        self.index.insert(p.name().to_string(), self.params.len());
        self.params.push(p);
        Ok(self.params.len() - 1)
    }

    /// Create and insert a freshly initialised parameter.
    pub fn create(&mut self, name: impl Into<String>, shape: &[usize], init: Init, rng: &mut Rng) -> Result<usize> {
        let value = Tensor::alloc(shape, init, rng)?;
        self.insert(Parameter::new(name, value))
    }

    pub fn get(&self, name: &str) -> Option<&Parameter<T>> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Parameter<T>> {
        self.index.get(name).map(|&i| &mut self.params[i])
    }

    pub fn by_index(&self, i: usize) -> &Parameter<T> {
        &self.params[i]
    }

    pub fn by_index_mut(&mut self, i: usize) -> &mut Parameter<T> {
        &mut self.params[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar weights.
    pub fn element_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Reset every gradient buffer to zeros.
    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad = Some(Tensor::zeros(p.value.shape()));
        }
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Add the gradients of every parameter of this store that is bound on
    /// `graph`. Bindings belonging to other stores are ignored.
    pub fn accumulate(&mut self, graph: &Graph<T>, grads: &Gradients<T>) -> Result<()> {
        for (var, name) in graph.bindings() {
            let Some(&i) = self.index.get(name) else { continue };
            if let Some(g) = grads.get(*var) {
                self.params[i].accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    /// Copy of the values in another precision, without gradients or
    /// optimizer state.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for p in &self.params {
            out.insert(Parameter::new(p.name.clone(), p.value.cast()))
                .expect("names are already unique");
        }
        out
    }
}

/// Parameter update rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Optimizer {
    pub fn learning_rate(&self) -> f64 {
        match *self {
            Optimizer::Sgd { lr } | Optimizer::Adam { lr, .. } => lr,
        }
    }

    pub fn with_learning_rate(self, lr: f64) -> Self {
        match self {
            Optimizer::Sgd { .. } => Optimizer::Sgd { lr },
            Optimizer::Adam { beta1, beta2, eps, .. } => Optimizer::Adam { lr, beta1, beta2, eps },
        }
    }

    /// Update every parameter of `store` from its gradient, then clear the
    /// gradients. Fails without modifying anything if a gradient is missing.
    pub fn step<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<()> {
        if let Some(p) = store.params.iter().find(|p| p.grad.is_none()) {
            return Err(Error::Contract(format!("parameter {} has no gradient", p.name)));
        }
        for p in &mut store.params {
            let g = p.grad.take().expect("checked above");
            self.update(p, &g);
        }
        Ok(())
    }

    fn update<T: Scalar>(&self, p: &mut Parameter<T>, g: &Tensor<T>) {
        match *self {
            Optimizer::Sgd { lr } => {
                let lr = T::from_f64(lr);
                for (w, &gv) in p.value.data_mut().iter_mut().zip(g.data()) {
                    *w -= lr * gv;
                }
            }
            Optimizer::Adam { lr, beta1, beta2, eps } => {
                let state = p.state.get_or_insert_with(|| OptimizerState {
                    first_moment: Tensor::zeros(p.value.shape()),
                    second_moment: Tensor::zeros(p.value.shape()),
                    steps: 0,
                });
                state.steps += 1;
                let t = state.steps as i32;
                let c1 = T::from_f64(1.0 - beta1.powi(t));
                let c2 = T::from_f64(1.0 - beta2.powi(t));
                let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
                let (lr, eps) = (T::from_f64(lr), T::from_f64(eps));
                let m = state.first_moment.data_mut();
                let v = state.second_moment.data_mut();
                for (i, w) in p.value.data_mut().iter_mut().enumerate() {
                    let gv = g.data()[i];
                    m[i] = b1 * m[i] + (T::one() - b1) * gv;
                    v[i] = b2 * v[i] + (T::one() - b2) * gv * gv;
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}
