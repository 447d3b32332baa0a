//! Central-difference gradient verification.

use super::{Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Compare reverse-mode gradients of a scalar-valued function against central
/// differences over every coordinate of every input. Returns the maximum
/// relative error with denominator max(|analytic|, |numeric|, 1e-8).
///
/// `f` must be deterministic; it is re-evaluated 2 x numel times.
pub fn grad_check_multi<S, F>(f: F, inputs: &[Tensor<S>], eps: S) -> Result<S>
where
    S: Scalar,
    F: Fn(&mut Graph<S>, &[Var]) -> Result<Var>,
{
    if eps <= S::zero() {
        return Err(Error::GradCheck("eps must be positive".into()));
    }
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| g.leaf(t.clone()))
        .collect::<Result<_>>()?;
    let y = f(&mut g, &vars)?;
    if g.value(y).numel() != 1 {
        return Err(Error::GradCheck(format!(
            "function output must be scalar, got shape {:?}",
            g.value(y).shape()
        )));
    }
    g.backward(y)?;
    let analytic: Vec<Vec<S>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            g.grad(v)
                .map(Tensor::into_data)
                .unwrap_or_else(|| vec![S::zero(); t.numel()])
        })
        .collect();

    let eval = |probe: &[Tensor<S>]| -> Result<S> {
        let mut g = Graph::new();
        let vars: Vec<Var> = probe
            .iter()
            .map(|t| g.leaf(t.clone()))
            .collect::<Result<_>>()?;
        let y = f(&mut g, &vars)?;
        let v = g.item(y)?;
        if !v.is_finite() {
            return Err(Error::GradCheck(
                "function non-finite at probe point".into(),
            ));
        }
        Ok(v)
    };

    let floor = S::from_float(1e-8);
    let two = S::from_float(2.0);
    let mut max_rel = S::zero();
    for ti in 0..inputs.len() {
        for ci in 0..inputs[ti].numel() {
            let mut plus = inputs.to_vec();
            plus[ti].data_mut()[ci] += eps;
            let mut minus = inputs.to_vec();
            minus[ti].data_mut()[ci] -= eps;
            let numeric = (eval(&plus)? - eval(&minus)?) / (two * eps);
            let a = analytic[ti][ci];
            let denom = a.abs().max(numeric.abs()).max(floor);
            let rel = (a - numeric).abs() / denom;
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}

/// Single-input convenience wrapper around [`grad_check_multi`].
pub fn grad_check<S, F>(f: F, x: &Tensor<S>, eps: S) -> Result<S>
where
    S: Scalar,
    F: Fn(&mut Graph<S>, Var) -> Result<Var>,
{
    grad_check_multi(|g, vars| f(g, vars[0]), std::slice::from_ref(x), eps)
}
