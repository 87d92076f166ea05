//! Central finite-difference verification of tape gradients.
//!
//! The error measure for each element is
//! `|analytic - numeric| / max(|analytic|, |numeric|, floor)`; the floor
//! keeps vanishing gradients from turning rounding noise into huge relative
//! errors.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::param::ParamStore;
use crate::rng::Rng;
use crate::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    pub floor: f64,
    /// Parameters with more elements are checked on a random subsample of
    /// this size.
    pub max_elements: usize,
    pub seed: u64,
}

impl GradCheckConfig {
    /// Defaults for 32-bit graphs: step 1e-2, tolerance 1e-3.
    pub fn single() -> Self {
        Self {
            step: 1e-2,
            tolerance: 1e-3,
            floor: 1.0,
            max_elements: 1000,
            seed: 0,
        }
    }

    /// Defaults for 64-bit graphs: step 1e-5, tolerance 1e-6.
    pub fn double() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-6,
            floor: 1e-3,
            max_elements: 1000,
            seed: 0,
        }
    }

    pub fn for_scalar<T: Scalar>() -> Self {
        if std::mem::size_of::<T>() == 4 {
            Self::single()
        } else {
            Self::double()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub elements_checked: usize,
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn max_relative_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_relative_error)
            .fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| !p.passed)
    }
}

fn evaluate<T, F>(builder: &F, params: &ParamStore<T>) -> Result<f64>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &ParamStore<T>) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = builder(&mut g, params)?;
    Ok(g.value(loss).item()?.to_f64())
}

/// Run the builder once and return a copy of `params` holding the tape
/// gradients.
pub fn analytic_gradients<T, F>(builder: &F, params: &ParamStore<T>) -> Result<ParamStore<T>>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &ParamStore<T>) -> Result<Var>,
{
    let mut store = params.clone();
    store.clear_grads();
    let mut g = Graph::new();
    let loss = builder(&mut g, &store)?;
    g.backward_into(loss, &mut store)?;
    Ok(store)
}

/// Compare the gradients held by `analytic` against central differences of
/// the builder's loss around `params`.
pub fn compare_with_finite_differences<T, F>(
    builder: &F,
    params: &ParamStore<T>,
    analytic: &ParamStore<T>,
    config: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &ParamStore<T>) -> Result<Var>,
{
    let mut rng = Rng::new(config.seed);
    let mut probe = params.clone();
    let mut checks = Vec::with_capacity(params.len());
    for pi in 0..params.len() {
        let name = params.by_index(pi).name().to_string();
        let n = params.by_index(pi).value().len();
        let grad = analytic
            .get(&name)
            .and_then(|p| p.grad())
            .ok_or_else(|| Error::Contract(format!("no analytic gradient for {name}")))?
            .clone();
        let indices: Vec<usize> = if n > config.max_elements {
            let mut all: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut all);
            all.truncate(config.max_elements);
            all.sort_unstable();
            all
        } else {
            (0..n).collect()
        };
        let (mut max_rel, mut max_abs) = (0.0f64, 0.0f64);
        for &i in &indices {
            let original = probe.by_index(pi).value().data()[i];
            let h = T::from_f64(config.step);
            let plus = original + h;
            let minus = original - h;
            probe.by_index_mut(pi).value_mut().data_mut()[i] = plus;
            let f_plus = evaluate(builder, &probe)?;
            probe.by_index_mut(pi).value_mut().data_mut()[i] = minus;
            let f_minus = evaluate(builder, &probe)?;
            probe.by_index_mut(pi).value_mut().data_mut()[i] = original;
            // Divide by the step actually taken after rounding.
            let numeric = (f_plus - f_minus) / (plus.to_f64() - minus.to_f64());
            let a = grad.data()[i].to_f64();
            let abs_err = (a - numeric).abs();
            let rel_err = abs_err / a.abs().max(numeric.abs()).max(config.floor);
            max_abs = max_abs.max(abs_err);
            max_rel = max_rel.max(rel_err);
        }
        checks.push(ParamCheck {
            name,
            elements_checked: indices.len(),
            max_relative_error: max_rel,
            max_absolute_error: max_abs,
            passed: max_rel < config.tolerance,
        });
    }
    Ok(GradCheckReport {
        tolerance: config.tolerance,
        params: checks,
    })
}

/// Check every parameter gradient of a deterministic scalar graph.
pub fn grad_check<T, F>(builder: F, params: &ParamStore<T>, config: &GradCheckConfig) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &ParamStore<T>) -> Result<Var>,
{
    let analytic = analytic_gradients(&builder, params)?;
    compare_with_finite_differences(&builder, params, &analytic, config)
}
