//! Reverse-mode autodiff on a tape of eagerly evaluated ops.
//!
//! A [`Graph`] owns every intermediate tensor of one forward pass. Ops append
//! nodes in creation order, which doubles as the topological order, so
//! backward is a single reverse sweep that visits each node exactly once.
//! Gradients of a leaf used several times accumulate additively.

mod backward;
mod gradcheck;
mod ops;

pub use gradcheck::{grad_check, grad_check_multi};
pub use ops::PoolTarget;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node of one [`Graph`]. Never mix handles across graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
pub(crate) enum BinKind {
    Add,
    Sub,
    Mul,
    Div,
    Maximum,
}

#[derive(Debug, Clone)]
pub(crate) enum UnKind<S> {
    Neg,
    Abs,
    Exp,
    Ln,
    Sqrt,
    Sin,
    Cos,
    Tanh,
    Sigmoid,
    Selu,
    Square,
    Acos,
    SincPi,
    Scale(S),
    AddScalar(S),
    Clamp(S, S),
    /// Squares the input but reports a deliberately wrong derivative; the
    /// negative control proving the gradient checker can fail.
    #[cfg(test)]
    BadSquareGrad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ReduceKind {
    Sum,
    Mean,
    Max,
}

#[derive(Debug, Clone)]
pub(crate) enum Op<S> {
    Leaf,
    Bin(BinKind, Var, Var),
    Un(UnKind<S>, Var),
    Reduce {
        kind: ReduceKind,
        a: Var,
        kept_shape: Vec<usize>,
        count: usize,
        argmax: Option<Vec<usize>>,
    },
    Reshape(Var),
    Concat {
        axis: usize,
        inputs: Vec<Var>,
    },
    Slice {
        a: Var,
        axis: usize,
        start: usize,
    },
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    Conv2d {
        x: Var,
        w: Var,
        stride: (usize, usize),
        pad: (usize, usize),
    },
    MaxPool2d {
        a: Var,
        argmax: Vec<usize>,
    },
    AdaptiveAvg {
        a: Var,
    },
}

pub(crate) struct Node<S: Scalar> {
    pub value: Tensor<S>,
    pub needs_grad: bool,
    pub op: Op<S>,
}

/// One training step's computation record.
pub struct Graph<S: Scalar> {
    pub(crate) nodes: Vec<Node<S>>,
    grads: Vec<Option<Vec<S>>>,
    named: Vec<(String, Var)>,
    backward_done: bool,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            named: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Append a node, rejecting non-finite values so NaN/Inf never propagate.
    pub(crate) fn push(
        &mut self,
        op_name: &'static str,
        value: Tensor<S>,
        needs_grad: bool,
        op: Op<S>,
    ) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        self.nodes.push(Node {
            value,
            needs_grad,
            op,
        });
        self.grads.push(None);
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant input: no gradient is tracked through it.
    pub fn constant(&mut self, t: Tensor<S>) -> Result<Var> {
        self.push("constant", t, false, Op::Leaf)
    }

    /// Differentiable input.
    pub fn leaf(&mut self, t: Tensor<S>) -> Result<Var> {
        self.push("leaf", t, true, Op::Leaf)
    }

    /// Differentiable input registered under a name so its gradient can be
    /// collected after backward (model parameters).
    pub fn param(&mut self, name: impl Into<String>, t: Tensor<S>) -> Result<Var> {
        let v = self.push("param", t, true, Op::Leaf)?;
        self.named.push((name.into(), v));
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a one-element node.
    pub fn item(&self, v: Var) -> Result<S> {
        self.nodes[v.0].value.item()
    }

    pub fn grad(&self, v: Var) -> Option<Tensor<S>> {
        self.grads[v.0].as_ref().map(|g| {
            Tensor::new(self.nodes[v.0].value.shape().to_vec(), g.clone())
                .expect("gradient buffer matches node shape")
        })
    }

    /// Gradients of all named parameters, zeros where a parameter did not
    /// participate in the loss.
    pub fn named_grads(&self) -> Vec<(String, Tensor<S>)> {
        self.named
            .iter()
            .map(|(name, v)| {
                let t = self
                    .grad(*v)
                    .unwrap_or_else(|| Tensor::zeros(self.nodes[v.0].value.shape()));
                (name.clone(), t)
            })
            .collect()
    }

    /// Reverse sweep from a scalar loss. Populates gradients on every
    /// requires-grad ancestor; erroring on a second call without a fresh
    /// forward pass.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Graph(
                "backward called twice on the same graph; rebuild the forward pass first".into(),
            ));
        }
        let numel = self.nodes[loss.0].value.numel();
        if numel != 1 {
            return Err(Error::Graph(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        self.backward_done = true;
        if !self.nodes[loss.0].needs_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![S::one()]);
        for i in (0..=loss.0).rev() {
            if self.grads[i].is_none() || !self.nodes[i].needs_grad {
                continue;
            }
            let gout = self.grads[i].clone().expect("checked above");
            backward::backprop_node(
                &self.nodes,
                i,
                &gout,
                &mut |input: usize, contrib: Vec<S>| match &mut self.grads[input] {
                    Some(acc) => {
                        for (a, c) in acc.iter_mut().zip(contrib) {
                            *a += c;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                },
            );
        }
        Ok(())
    }
}
