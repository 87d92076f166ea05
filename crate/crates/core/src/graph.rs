//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied during a forward pass.
//! [`Graph::backward`] replays the tape in reverse and returns the adjoint of
//! every node that depends on a differentiable leaf. Parameters enter the tape
//! through [`Graph::param`], which remembers the parameter's name so the
//! resulting gradients can be accumulated into a [`ParamStore`].

use crate::error::{Error, Result};
use crate::ops::{self, Activation};
use crate::param::{ParamStore, Parameter};
use crate::tensor::{Scalar, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    },
    ConvTranspose2d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    },
    Up2(Var),
    Down2(Var),
    Activation(Var, Activation),
    Concat(Var, Var),
    Mean(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine { input: Var, scale: f64 },
    ClampedLog { input: Var, eps: f64 },
    Abs(Var),
    Reshape(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
    needs_grad: bool,
}

/// Recorded forward computation.
pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    bindings: Vec<(Var, String)>,
}

/// Adjoints produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            bindings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A differentiable leaf that is not a named parameter.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Bind a parameter into the graph under its name.
    pub fn param(&mut self, p: &Parameter<T>) -> Var {
        let v = self.push(p.value().clone(), Op::Leaf, true);
        self.bindings.push((v, p.name().to_string()));
        v
    }

    /// Names and nodes of every bound parameter, in binding order.
    pub fn bindings(&self) -> &[(Var, String)] {
        &self.bindings
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let value = ops::conv2d(
            self.value(input),
            self.value(kernel),
            bias.map(|b| self.value(b)),
            stride,
            padding,
        )?;
        let needs = self.needs(input) || self.needs(kernel) || bias.is_some_and(|b| self.needs(b));
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
                padding,
            },
            needs,
        ))
    }

    pub fn conv2d_transpose(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let value = ops::conv2d_transpose(
            self.value(input),
            self.value(kernel),
            bias.map(|b| self.value(b)),
            stride,
            padding,
        )?;
        let needs = self.needs(input) || self.needs(kernel) || bias.is_some_and(|b| self.needs(b));
        Ok(self.push(
            value,
            Op::ConvTranspose2d {
                input,
                kernel,
                bias,
                stride,
                padding,
            },
            needs,
        ))
    }

    pub fn up2(&mut self, input: Var) -> Result<Var> {
        let value = ops::up2_nearest(self.value(input))?;
        let needs = self.needs(input);
        Ok(self.push(value, Op::Up2(input), needs))
    }

    pub fn down2(&mut self, input: Var) -> Result<Var> {
        let value = ops::down2_average(self.value(input))?;
        let needs = self.needs(input);
        Ok(self.push(value, Op::Down2(input), needs))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Result<Var> {
        let value = ops::activation(self.value(input), kind)?;
        let needs = self.needs(input);
        Ok(self.push(value, Op::Activation(input, kind), needs))
    }

    pub fn leaky_relu(&mut self, input: Var, slope: f64) -> Result<Var> {
        self.activation(input, Activation::LeakyRelu(slope))
    }

    pub fn tanh(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Tanh)
            .expect("tanh has no preconditions")
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Sigmoid)
            .expect("sigmoid has no preconditions")
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = ops::concat_channels(self.value(a), self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Concat(a, b), needs))
    }

    /// Mean of all elements, as a one-element tensor.
    pub fn mean(&mut self, input: Var) -> Var {
        let value = Tensor::scalar(self.value(input).mean());
        let needs = self.needs(input);
        self.push(value, Op::Mean(input), needs)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(T, T) -> T) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), f)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, op, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// `scale * x + shift` with constant coefficients.
    pub fn affine(&mut self, input: Var, scale: f64, shift: f64) -> Var {
        let (s, c) = (T::from_f64(scale), T::from_f64(shift));
        let value = self.value(input).map(|v| s * v + c);
        let needs = self.needs(input);
        self.push(
            value,
            Op::Affine { input, scale },
            needs,
        )
    }

    /// `ln(clamp(x, eps, 1 - eps))`; the gradient vanishes where the clamp is
    /// active.
    pub fn clamped_log(&mut self, input: Var, eps: f64) -> Var {
        let (lo, hi) = (T::from_f64(eps), T::from_f64(1.0 - eps));
        let value = self.value(input).map(|v| clamp(v, lo, hi).ln());
        let needs = self.needs(input);
        self.push(value, Op::ClampedLog { input, eps }, needs)
    }

    pub fn abs(&mut self, input: Var) -> Var {
        let value = self.value(input).map(|v| v.abs());
        let needs = self.needs(input);
        self.push(value, Op::Abs(input), needs)
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(input).reshape(shape)?;
        let needs = self.needs(input);
        Ok(self.push(value, Op::Reshape(input), needs))
    }

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(lv.shape(), T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Backward sweep followed by accumulation into `store` for every
    /// parameter of `store` bound on this graph.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore<T>) -> Result<Gradients<T>> {
        let grads = self.backward(loss)?;
        store.accumulate(self, &grads)?;
        Ok(grads)
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let mut send = |v: Var, contribution: Tensor<T>| -> Result<()> {
            if !self.nodes[v.0].needs_grad {
                return Ok(());
            }
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&contribution),
                slot @ None => {
                    *slot = Some(contribution);
                    Ok(())
                }
            }
        };
        match node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
                padding,
            } => {
                let (dx, dk, db) =
                    ops::conv2d_backward(self.value(input), self.value(kernel), g, stride, padding)?;
                send(input, dx)?;
                send(kernel, dk)?;
                if let Some(b) = bias {
                    send(b, db)?;
                }
            }
            Op::ConvTranspose2d {
                input,
                kernel,
                bias,
                stride,
                padding,
            } => {
                let (dx, dk, db) = ops::conv2d_transpose_backward(
                    self.value(input),
                    self.value(kernel),
                    g,
                    stride,
                    padding,
                )?;
                send(input, dx)?;
                send(kernel, dk)?;
                if let Some(b) = bias {
                    send(b, db)?;
                }
            }
            Op::Up2(input) => send(input, ops::up2_nearest_backward(g)?)?,
            Op::Down2(input) => send(input, ops::down2_average_backward(g)?)?,
            Op::Activation(input, kind) => {
                let x = self.value(input);
                let d = x
                    .zip_map(&node.value, |xv, yv| kind.derivative(xv, yv))?
                    .zip_map(g, |d, gv| d * gv)?;
                send(input, d)?;
            }
            Op::Concat(a, b) => {
                let ca = self.value(a).shape()[1];
                let c = g.shape()[1];
                send(a, g.slice_channels(0..ca)?)?;
                send(b, g.slice_channels(ca..c)?)?;
            }
            Op::Mean(input) => {
                let x = self.value(input);
                let share = g.data()[0] / T::from_f64(x.len() as f64);
                send(input, Tensor::full(x.shape(), share))?;
            }
            Op::Add(a, b) => {
                send(a, g.clone())?;
                send(b, g.clone())?;
            }
            Op::Sub(a, b) => {
                send(a, g.clone())?;
                send(b, g.map(|v| -v))?;
            }
            Op::Mul(a, b) => {
                send(a, g.zip_map(self.value(b), |gv, bv| gv * bv)?)?;
                send(b, g.zip_map(self.value(a), |gv, av| gv * av)?)?;
            }
            Op::Affine { input, scale, .. } => {
                let s = T::from_f64(scale);
                send(input, g.map(|v| v * s))?;
            }
            Op::ClampedLog { input, eps } => {
                let (lo, hi) = (T::from_f64(eps), T::from_f64(1.0 - eps));
                let d = self.value(input).zip_map(g, |x, gv| {
                    if x < lo || x > hi {
                        T::zero()
                    } else {
                        gv / x
                    }
                })?;
                send(input, d)?;
            }
            Op::Abs(input) => {
                let d = self.value(input).zip_map(g, |x, gv| {
                    if x > T::zero() {
                        gv
                    } else if x < T::zero() {
                        -gv
                    } else {
                        T::zero()
                    }
                })?;
                send(input, d)?;
            }
            Op::Reshape(input) => {
                send(input, g.reshape(self.value(input).shape())?)?;
            }
        }
        Ok(())
    }
}

fn clamp<T: Scalar>(v: T, lo: T, hi: T) -> T {
    if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::Parameter;

    #[test]
    fn scalar_weight_linear_case() {
        // loss = mean(w * x) with a scalar weight applied as a 1x1 kernel.
        let mut store = ParamStore::<f64>::new();
        store
            .insert(Parameter::new("w", Tensor::from_vec(&[1, 1, 1, 1], vec![0.7]).unwrap()))
            .unwrap();
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, -2.0, 4.0, 0.5]).unwrap();
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let w = g.param(store.get("w").unwrap());
        let y = g.conv2d(xv, w, None, 1, 0).unwrap();
        let loss = g.mean(y);
        g.backward_into(loss, &mut store).unwrap();
        assert_eq!(store.get("w").unwrap().grad().unwrap().data()[0], x.mean());
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut store = ParamStore::<f64>::new();
        store
            .insert(Parameter::new("w", Tensor::from_vec(&[1, 1, 1, 1], vec![2.0]).unwrap()))
            .unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(&[1, 1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap());
        let w = g.param(store.get("w").unwrap());
        let y = g.conv2d(x, w, None, 1, 0).unwrap();
        let t = g.tanh(y);
        let loss = g.mean(t);
        g.backward_into(loss, &mut store).unwrap();
        let once = store.get("w").unwrap().grad().unwrap().data()[0];
        g.backward_into(loss, &mut store).unwrap();
        let twice = store.get("w").unwrap().grad().unwrap().data()[0];
        assert_eq!(twice, 2.0 * once);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::<f32>::new();
        let x = g.input(Tensor::zeros(&[2]));
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::<f64>::new();
        let c = g.constant(Tensor::full(&[3], 2.0));
        let x = g.input(Tensor::full(&[3], 1.0));
        let p = g.mul(c, x).unwrap();
        let loss = g.mean(p);
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(x).unwrap().data(), &[2.0 / 3.0; 3]);
    }

    #[test]
    fn shared_node_gradients_add() {
        // loss = mean(x + x) => d/dx = 2/N
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::full(&[4], 1.0));
        let s = g.add(x, x).unwrap();
        let loss = g.mean(s);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.5; 4]);
    }
}
