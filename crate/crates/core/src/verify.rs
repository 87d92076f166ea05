//! Randomized gradient verification of every differentiable operation.
//!
//! Each instance draws random inputs (and, for convolutions, random
//! geometry), applies one operation, contracts the output with a fixed
//! random probe tensor into the scalar `sum(op(x) * probe)`, and compares
//! the tape gradient with central finite differences.

use serde::Serialize;

use crate::error::Result;
use crate::gradcheck::{grad_check, GradCheckConfig};
use crate::graph::{Graph, Var};
use crate::nn::lookup;
use crate::param::{ParamStore, Parameter};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteOp {
    Conv2d,
    ConvTranspose2d,
    Up2,
    Down2,
    LeakyRelu,
    Tanh,
    Sigmoid,
    Concat,
    Mean,
    Add,
    Sub,
    Mul,
    Affine,
    ClampedLog,
    Abs,
    Reshape,
}

impl SuiteOp {
    pub const ALL: [SuiteOp; 16] = [
        SuiteOp::Conv2d,
        SuiteOp::ConvTranspose2d,
        SuiteOp::Up2,
        SuiteOp::Down2,
        SuiteOp::LeakyRelu,
        SuiteOp::Tanh,
        SuiteOp::Sigmoid,
        SuiteOp::Concat,
        SuiteOp::Mean,
        SuiteOp::Add,
        SuiteOp::Sub,
        SuiteOp::Mul,
        SuiteOp::Affine,
        SuiteOp::ClampedLog,
        SuiteOp::Abs,
        SuiteOp::Reshape,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SuiteOp::Conv2d => "conv2d",
            SuiteOp::ConvTranspose2d => "conv2d_transpose",
            SuiteOp::Up2 => "up2_nearest",
            SuiteOp::Down2 => "down2_average",
            SuiteOp::LeakyRelu => "leaky_relu",
            SuiteOp::Tanh => "tanh",
            SuiteOp::Sigmoid => "sigmoid",
            SuiteOp::Concat => "concat_channels",
            SuiteOp::Mean => "mean",
            SuiteOp::Add => "add",
            SuiteOp::Sub => "sub",
            SuiteOp::Mul => "mul",
            SuiteOp::Affine => "affine",
            SuiteOp::ClampedLog => "clamped_log",
            SuiteOp::Abs => "abs",
            SuiteOp::Reshape => "reshape",
        }
    }
}

/// Random geometry and coefficients of one instance.
#[derive(Debug, Clone)]
struct Instance<T: Scalar> {
    op: SuiteOp,
    params: ParamStore<T>,
    stride: usize,
    padding: usize,
    slope: f64,
    scale: f64,
    shift: f64,
    probe: Option<Tensor<T>>,
}

fn uniform<T: Scalar>(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(rng.uniform(lo, hi))).collect();
    Tensor::from_vec(shape, data).expect("consistent shape")
}

/// Values with magnitude in `[0.05, 1]` and random sign, away from kinks.
fn off_kink<T: Scalar>(shape: &[usize], rng: &mut Rng) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.uniform(0.05, 1.0);
            T::from_f64(if rng.next_f64() < 0.5 { -m } else { m })
        })
        .collect();
    Tensor::from_vec(shape, data).expect("consistent shape")
}

fn pick(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

fn add_param<T: Scalar>(store: &mut ParamStore<T>, name: &str, value: Tensor<T>) {
    store.insert(Parameter::new(name, value)).expect("fresh names");
}

fn new_instance<T: Scalar>(op: SuiteOp, rng: &mut Rng) -> Result<Instance<T>> {
    let mut params = ParamStore::new();
    let mut inst = Instance {
        op,
        params: ParamStore::new(),
        stride: 1,
        padding: 0,
        slope: 0.2,
        scale: 1.0,
        shift: 0.0,
        probe: None,
    };
    let b = pick(rng, 1, 2);
    let c = pick(rng, 1, 3);
    match op {
        SuiteOp::Conv2d => {
            let cout = pick(rng, 1, 3);
            let k = pick(rng, 1, 3);
            inst.stride = pick(rng, 1, 2);
            inst.padding = pick(rng, 0, 1);
            let h = pick(rng, k.max(2), 6);
            let w = pick(rng, k.max(2), 6);
            add_param(&mut params, "x", uniform(&[b, c, h, w], -1.0, 1.0, rng));
            add_param(&mut params, "k", uniform(&[cout, c, k, k], -1.0, 1.0, rng));
            add_param(&mut params, "b", uniform(&[cout], -1.0, 1.0, rng));
        }
        SuiteOp::ConvTranspose2d => {
            let cout = pick(rng, 1, 3);
            let k = pick(rng, 2, 4);
            inst.stride = pick(rng, 1, 2);
            inst.padding = pick(rng, 0, 1);
            let h = pick(rng, 2, 4);
            let w = pick(rng, 2, 4);
            add_param(&mut params, "x", uniform(&[b, c, h, w], -1.0, 1.0, rng));
            add_param(&mut params, "k", uniform(&[c, cout, k, k], -1.0, 1.0, rng));
            add_param(&mut params, "b", uniform(&[cout], -1.0, 1.0, rng));
        }
        SuiteOp::Up2 => {
            let (h, w) = (pick(rng, 1, 4), pick(rng, 1, 4));
            add_param(&mut params, "x", uniform(&[b, c, h, w], -1.0, 1.0, rng));
        }
        SuiteOp::Down2 => {
            let (h, w) = (2 * pick(rng, 1, 3), 2 * pick(rng, 1, 3));
            add_param(&mut params, "x", uniform(&[b, c, h, w], -1.0, 1.0, rng));
        }
        SuiteOp::LeakyRelu | SuiteOp::Abs => {
            inst.slope = rng.uniform(0.05, 0.5);
            add_param(&mut params, "x", off_kink(&[b, c, 3, 3], rng));
        }
        SuiteOp::Tanh | SuiteOp::Sigmoid => {
            add_param(&mut params, "x", uniform(&[b, c, 3, 3], -2.0, 2.0, rng));
        }
        SuiteOp::Concat => {
            let c2 = pick(rng, 1, 3);
            add_param(&mut params, "x", uniform(&[b, c, 3, 2], -1.0, 1.0, rng));
            add_param(&mut params, "y", uniform(&[b, c2, 3, 2], -1.0, 1.0, rng));
        }
        SuiteOp::Mean | SuiteOp::Reshape => {
            add_param(&mut params, "x", uniform(&[b, c, 2, 3], -1.0, 1.0, rng));
        }
        SuiteOp::Add | SuiteOp::Sub | SuiteOp::Mul => {
            add_param(&mut params, "x", uniform(&[b, c, 3, 3], -1.0, 1.0, rng));
            add_param(&mut params, "y", uniform(&[b, c, 3, 3], -1.0, 1.0, rng));
        }
        SuiteOp::Affine => {
            inst.scale = rng.uniform(-2.0, 2.0);
            inst.shift = rng.uniform(-1.0, 1.0);
            add_param(&mut params, "x", uniform(&[b, c, 3, 3], -1.0, 1.0, rng));
        }
        SuiteOp::ClampedLog => {
            add_param(&mut params, "x", uniform(&[b, c, 3, 3], 0.3, 0.9, rng));
        }
    }
    inst.params = params;
    let mut g = Graph::new();
    let out = apply(&inst, &mut g, &inst.params)?;
    let shape = g.value(out).shape().to_vec();
    inst.probe = Some(uniform(&shape, -1.0, 1.0, rng));
    Ok(inst)
}

fn apply<T: Scalar>(inst: &Instance<T>, g: &mut Graph<T>, params: &ParamStore<T>) -> Result<Var> {
    let mut p = |name: &str| -> Result<Var> { Ok(g.param(lookup(params, name)?)) };
    let x = p("x")?;
    let y = if params.get("y").is_some() { Some(p("y")?) } else { None };
    let (k, b) = if params.get("k").is_some() {
        (Some(p("k")?), Some(p("b")?))
    } else {
        (None, None)
    };
    match inst.op {
        SuiteOp::Conv2d => g.conv2d(x, k.unwrap(), b, inst.stride, inst.padding),
        SuiteOp::ConvTranspose2d => g.conv2d_transpose(x, k.unwrap(), b, inst.stride, inst.padding),
        SuiteOp::Up2 => g.up2(x),
        SuiteOp::Down2 => g.down2(x),
        SuiteOp::LeakyRelu => g.leaky_relu(x, inst.slope),
        SuiteOp::Tanh => Ok(g.tanh(x)),
        SuiteOp::Sigmoid => Ok(g.sigmoid(x)),
        SuiteOp::Concat => g.concat_channels(x, y.unwrap()),
        SuiteOp::Mean => Ok(g.mean(x)),
        SuiteOp::Add => g.add(x, y.unwrap()),
        SuiteOp::Sub => g.sub(x, y.unwrap()),
        SuiteOp::Mul => g.mul(x, y.unwrap()),
        SuiteOp::Affine => Ok(g.affine(x, inst.scale, inst.shift)),
        SuiteOp::ClampedLog => Ok(g.clamped_log(x, 1e-7)),
        SuiteOp::Abs => Ok(g.abs(x)),
        SuiteOp::Reshape => {
            let n = g.value(x).len();
            g.reshape(x, &[n])
        }
    }
}

fn contracted<T: Scalar>(inst: &Instance<T>, g: &mut Graph<T>, params: &ParamStore<T>) -> Result<Var> {
    let out = apply(inst, g, params)?;
    let probe = g.constant(inst.probe.clone().expect("probe set on construction"));
    let prod = g.mul(out, probe)?;
    let n = g.value(prod).len() as f64;
    let m = g.mean(prod);
    Ok(g.affine(m, n, 0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpReport {
    pub op: SuiteOp,
    pub instances: usize,
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Check `op` on `instances` random instances at precision `T`.
pub fn check_op<T: Scalar>(op: SuiteOp, instances: usize, seed: u64) -> Result<OpReport> {
    let config = GradCheckConfig::for_scalar::<T>();
    let mut rng = Rng::new(seed).derive(op as u64);
    let mut worst = 0.0f64;
    let mut passed = true;
    for _ in 0..instances {
        let inst = new_instance::<T>(op, &mut rng)?;
        let report = grad_check(|g, p| contracted(&inst, g, p), &inst.params, &config)?;
        worst = worst.max(report.max_relative_error());
        passed &= report.passed();
    }
    Ok(OpReport {
        op,
        instances,
        max_relative_error: worst,
        tolerance: config.tolerance,
        passed,
    })
}

/// Every operation in [`SuiteOp::ALL`] at precision `T`.
pub fn check_all<T: Scalar>(instances: usize, seed: u64) -> Result<Vec<OpReport>> {
    SuiteOp::ALL.iter().map(|&op| check_op::<T>(op, instances, seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_passes_a_few_instances() {
        for report in check_all::<f64>(3, 1).unwrap() {
            assert!(report.passed, "{report:?}");
        }
        for report in check_all::<f32>(3, 1).unwrap() {
            assert!(report.passed, "{report:?}");
        }
    }
}
