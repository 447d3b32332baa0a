//! Op builders: eager forward kernels that append tape nodes.

use super::{BinKind, Graph, Op, ReduceKind, UnKind, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{broadcast_shapes, for_each_bcast2, strides_of, Tensor};

pub(crate) const SELU_ALPHA: f64 = 1.6732632423543772;
pub(crate) const SELU_SCALE: f64 = 1.0507009873554805;

/// Normalized sinc sin(pi x)/(pi x) with the removable singularity filled by
/// its series expansion.
pub(crate) fn sinc_pi(x: f64) -> f64 {
    let u = std::f64::consts::PI * x;
    if u.abs() < 1e-4 {
        1.0 - u * u / 6.0 + u.powi(4) / 120.0
    } else {
        u.sin() / u
    }
}

/// d/dx of [`sinc_pi`].
pub(crate) fn sinc_pi_deriv(x: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let u = pi * x;
    if u.abs() < 1e-4 {
        pi * (-u / 3.0 + u.powi(3) / 30.0)
    } else {
        pi * (u * u.cos() - u.sin()) / (u * u)
    }
}

pub(crate) fn unary_forward<S: Scalar>(kind: &UnKind<S>, x: S) -> S {
    match kind {
        UnKind::Neg => -x,
        UnKind::Abs => x.abs(),
        UnKind::Exp => x.exp(),
        UnKind::Ln => x.ln(),
        UnKind::Sqrt => x.sqrt(),
        UnKind::Sin => x.sin(),
        UnKind::Cos => x.cos(),
        UnKind::Tanh => x.tanh(),
        UnKind::Sigmoid => S::one() / (S::one() + (-x).exp()),
        UnKind::Selu => {
            let scale = S::from_float(SELU_SCALE);
            let alpha = S::from_float(SELU_ALPHA);
            if x > S::zero() {
                scale * x
            } else {
                scale * alpha * (x.exp() - S::one())
            }
        }
        UnKind::Square => x * x,
        UnKind::Acos => x.acos(),
        UnKind::SincPi => S::from_float(sinc_pi(x.to_float())),
        UnKind::Scale(c) => *c * x,
        UnKind::AddScalar(c) => *c + x,
        UnKind::Clamp(lo, hi) => {
            if x < *lo {
                *lo
            } else if x > *hi {
                *hi
            } else {
                x
            }
        }
        #[cfg(test)]
        UnKind::BadSquareGrad => x * x,
    }
}

fn unary_name<S: Scalar>(kind: &UnKind<S>) -> &'static str {
    match kind {
        UnKind::Neg => "neg",
        UnKind::Abs => "abs",
        UnKind::Exp => "exp",
        UnKind::Ln => "ln",
        UnKind::Sqrt => "sqrt",
        UnKind::Sin => "sin",
        UnKind::Cos => "cos",
        UnKind::Tanh => "tanh",
        UnKind::Sigmoid => "sigmoid",
        UnKind::Selu => "selu",
        UnKind::Square => "square",
        UnKind::Acos => "acos",
        UnKind::SincPi => "sinc",
        UnKind::Scale(_) => "scale",
        UnKind::AddScalar(_) => "add_scalar",
        UnKind::Clamp(_, _) => "clamp",
        #[cfg(test)]
        UnKind::BadSquareGrad => "bad_square",
    }
}

impl<S: Scalar> Graph<S> {
    fn binary(&mut self, kind: BinKind, a: Var, b: Var) -> Result<Var> {
        let name = match kind {
            BinKind::Add => "add",
            BinKind::Sub => "sub",
            BinKind::Mul => "mul",
            BinKind::Div => "div",
            BinKind::Maximum => "maximum",
        };
        let (ash, bsh) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let out_shape = broadcast_shapes(&ash, &bsh, name)?;
        if matches!(kind, BinKind::Div) && self.value(b).data().iter().any(|v| *v == S::zero()) {
            return Err(Error::DivisionByZero { op: "div" });
        }
        let numel: usize = out_shape.iter().product();
        let mut out = vec![S::zero(); numel];
        {
            let (da, db) = (self.value(a).data(), self.value(b).data());
            for_each_bcast2(&out_shape, &ash, &bsh, |io, ia, ib| {
                let (x, y) = (da[ia], db[ib]);
                out[io] = match kind {
                    BinKind::Add => x + y,
                    BinKind::Sub => x - y,
                    BinKind::Mul => x * y,
                    BinKind::Div => x / y,
                    BinKind::Maximum => {
                        if x >= y {
                            x
                        } else {
                            y
                        }
                    }
                };
            });
        }
        let needs = self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad;
        self.push(
            name,
            Tensor::new(out_shape, out)?,
            needs,
            Op::Bin(kind, a, b),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Add, a, b)
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Sub, a, b)
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Mul, a, b)
    }
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Div, a, b)
    }
    /// Elementwise max; ties route the gradient to the first operand.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Maximum, a, b)
    }

    fn unary(&mut self, kind: UnKind<S>, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| unary_forward(&kind, x));
        let needs = self.nodes[a.0].needs_grad;
        self.push(unary_name(&kind), value, needs, Op::Un(kind, a))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary(UnKind::Neg, a)
    }
    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary(UnKind::Abs, a)
    }
    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(UnKind::Exp, a)
    }
    pub fn ln(&mut self, a: Var) -> Result<Var> {
        self.unary(UnKind::Ln, a)
    }
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary(UnKind::Sqrt, a)
    }
    pub fn sin(&mut self, a: Var) -> Result<Var> {
        self.unary(UnKind::Sin, a)
    }
    pub fn cos(&mut self, a: Var) -> Result<Var> {
        self.unary(UnKind::Cos, a)
    }
    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(UnKind::Tanh, a)
    }
    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(UnKind::Sigmoid, a)
    }
    pub fn selu(&mut self, a: Var) -> Result<Var> {
        self.unary(UnKind::Selu, a)
    }
    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(UnKind::Square, a)
    }
    pub fn acos(&mut self, a: Var) -> Result<Var> {
        self.unary(UnKind::Acos, a)
    }
    /// Normalized sinc, sin(pi x)/(pi x).
    pub fn sinc(&mut self, a: Var) -> Result<Var> {
        self.unary(UnKind::SincPi, a)
    }
    pub fn scale(&mut self, a: Var, c: S) -> Result<Var> {
        self.unary(UnKind::Scale(c), a)
    }
    pub fn add_scalar(&mut self, a: Var, c: S) -> Result<Var> {
        self.unary(UnKind::AddScalar(c), a)
    }
    /// Clamp to [lo, hi]; gradient passes through the interior (inclusive).
    pub fn clamp(&mut self, a: Var, lo: S, hi: S) -> Result<Var> {
        if lo > hi {
            return Err(Error::Shape {
                op: "clamp",
                msg: format!("lo {} > hi {}", lo, hi),
            });
        }
        self.unary(UnKind::Clamp(lo, hi), a)
    }

    #[cfg(test)]
    pub(crate) fn bad_square(&mut self, a: Var) -> Result<Var> {
        self.unary(UnKind::BadSquareGrad, a)
    }

    /// Copy of the value with gradient tracking cut.
    pub fn detach(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).clone();
        self.push("detach", value, false, Op::Leaf)
    }

    fn reduce(&mut self, kind: ReduceKind, a: Var, axes: &[usize], keepdim: bool) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let rank = shape.len();
        let mut seen = vec![false; rank];
        for &ax in axes {
            if ax >= rank || seen[ax] {
                return Err(Error::Shape {
                    op: "reduce",
                    msg: format!("bad axis {} for shape {:?}", ax, shape),
                });
            }
            seen[ax] = true;
        }
        let kept_shape: Vec<usize> = shape
            .iter()
            .enumerate()
            .map(|(i, &d)| if seen[i] { 1 } else { d })
            .collect();
        let out_shape: Vec<usize> = if keepdim {
            kept_shape.clone()
        } else {
            shape
                .iter()
                .enumerate()
                .filter(|(i, _)| !seen[*i])
                .map(|(_, &d)| d)
                .collect()
        };
        let count: usize = shape
            .iter()
            .enumerate()
            .filter(|(i, _)| seen[*i])
            .map(|(_, &d)| d)
            .product();
        let kept_numel: usize = kept_shape.iter().product();
        let src = self.value(a).data();
        let s_in = strides_of(&shape);
        let s_kept = strides_of(&kept_shape);
        let init = match kind {
            ReduceKind::Max => S::neg_infinity(),
            _ => S::zero(),
        };
        let mut out = vec![init; kept_numel];
        let mut argmax = if kind == ReduceKind::Max {
            Some(vec![0usize; kept_numel])
        } else {
            None
        };
        for (i, &v) in src.iter().enumerate() {
            let mut ko = 0;
            let mut rem = i;
            for d in 0..rank {
                let c = rem / s_in[d];
                rem %= s_in[d];
                if !seen[d] {
                    ko += c * s_kept[d];
                }
            }
            match kind {
                ReduceKind::Max => {
                    // strict > keeps the lowest flat index on ties
                    if v > out[ko] {
                        out[ko] = v;
                        argmax.as_mut().expect("max reduce tracks argmax")[ko] = i;
                    }
                }
                _ => out[ko] += v,
            }
        }
        if kind == ReduceKind::Mean {
            let c = S::from_float(count as f64);
            for v in &mut out {
                *v /= c;
            }
        }
        let needs = self.nodes[a.0].needs_grad;
        self.push(
            match kind {
                ReduceKind::Sum => "sum",
                ReduceKind::Mean => "mean",
                ReduceKind::Max => "max",
            },
            Tensor::new(out_shape, out)?,
            needs,
            Op::Reduce {
                kind,
                a,
                kept_shape,
                count,
                argmax,
            },
        )
    }

    pub fn sum_axes(&mut self, a: Var, axes: &[usize], keepdim: bool) -> Result<Var> {
        self.reduce(ReduceKind::Sum, a, axes, keepdim)
    }
    pub fn mean_axes(&mut self, a: Var, axes: &[usize], keepdim: bool) -> Result<Var> {
        self.reduce(ReduceKind::Mean, a, axes, keepdim)
    }
    /// Max over axes; gradient routes to the argmax, lowest flat index on ties.
    pub fn max_axes(&mut self, a: Var, axes: &[usize], keepdim: bool) -> Result<Var> {
        self.reduce(ReduceKind::Max, a, axes, keepdim)
    }

    /// Sum of all elements as a rank-0 scalar.
    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let axes: Vec<usize> = (0..self.shape(a).len()).collect();
        self.reduce(ReduceKind::Sum, a, &axes, false)
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let axes: Vec<usize> = (0..self.shape(a).len()).collect();
        self.reduce(ReduceKind::Mean, a, &axes, false)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshaped(shape.to_vec())?;
        let needs = self.nodes[a.0].needs_grad;
        self.push("reshape", value, needs, Op::Reshape(a))
    }

    pub fn concat(&mut self, axis: usize, inputs: &[Var]) -> Result<Var> {
        if inputs.is_empty() {
            return Err(Error::Shape {
                op: "concat",
                msg: "no inputs".into(),
            });
        }
        let first = self.shape(inputs[0]).to_vec();
        if axis >= first.len() {
            return Err(Error::Shape {
                op: "concat",
                msg: format!("axis {} out of range for {:?}", axis, first),
            });
        }
        let mut out_shape = first.clone();
        out_shape[axis] = 0;
        for &v in inputs {
            let sh = self.shape(v);
            if sh.len() != first.len()
                || sh
                    .iter()
                    .enumerate()
                    .any(|(i, &d)| i != axis && d != first[i])
            {
                return Err(Error::Shape {
                    op: "concat",
                    msg: format!("incompatible shapes {:?} and {:?}", first, sh),
                });
            }
            out_shape[axis] += sh[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let total_axis = out_shape[axis];
        let numel: usize = out_shape.iter().product();
        let mut out = vec![S::zero(); numel];
        let mut offset = 0;
        for &v in inputs {
            let d = self.shape(v)[axis];
            let src = self.value(v).data();
            for o in 0..outer {
                for j in 0..d {
                    let dst = (o * total_axis + offset + j) * inner;
                    let s = (o * d + j) * inner;
                    out[dst..dst + inner].copy_from_slice(&src[s..s + inner]);
                }
            }
            offset += d;
        }
        let needs = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.push(
            "concat",
            Tensor::new(out_shape, out)?,
            needs,
            Op::Concat {
                axis,
                inputs: inputs.to_vec(),
            },
        )
    }

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::Shape {
                op: "slice",
                msg: format!(
                    "slice [{}, {}) on axis {} of {:?}",
                    start,
                    start + len,
                    axis,
                    shape
                ),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let src = self.value(a).data();
        let mut out = vec![S::zero(); outer * len * inner];
        for o in 0..outer {
            for j in 0..len {
                let s = (o * shape[axis] + start + j) * inner;
                let d = (o * len + j) * inner;
                out[d..d + inner].copy_from_slice(&src[s..s + inner]);
            }
        }
        let needs = self.nodes[a.0].needs_grad;
        self.push(
            "slice",
            Tensor::new(out_shape, out)?,
            needs,
            Op::Slice { a, axis, start },
        )
    }

    /// (m x k) . (k x n) -> (m x n).
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ash, bsh) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if ash.len() != 2 || bsh.len() != 2 || ash[1] != bsh[0] {
            return Err(Error::Shape {
                op: "matmul",
                msg: format!("cannot multiply {:?} by {:?}", ash, bsh),
            });
        }
        let (m, k, n) = (ash[0], ash[1], bsh[1]);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            for p in 0..k {
                let av = da[i * k + p];
                if av == S::zero() {
                    continue;
                }
                let row = &db[p * n..(p + 1) * n];
                let dst = &mut out[i * n..(i + 1) * n];
                for (d, &bv) in dst.iter_mut().zip(row) {
                    *d += av * bv;
                }
            }
        }
        let needs = self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad;
        self.push(
            "matmul",
            Tensor::new(vec![m, n], out)?,
            needs,
            Op::MatMul { a, b, m, k, n },
        )
    }

    /// x.W (+ b). `x` may be a d-vector or a B x d matrix; `w` is d x c.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xsh = self.shape(x).to_vec();
        let wsh = self.shape(w).to_vec();
        if wsh.len() != 2 {
            return Err(Error::Shape {
                op: "linear",
                msg: format!("weight must be rank 2, got {:?}", wsh),
            });
        }
        let vector_in = xsh.len() == 1;
        let x2 = if vector_in {
            self.reshape(x, &[1, xsh[0]])?
        } else if xsh.len() == 2 {
            x
        } else {
            return Err(Error::Shape {
                op: "linear",
                msg: format!("input must be rank 1 or 2, got {:?}", xsh),
            });
        };
        if self.shape(x2)[1] != wsh[0] {
            return Err(Error::Shape {
                op: "linear",
                msg: format!("inner dimensions disagree: {:?} vs {:?}", xsh, wsh),
            });
        }
        let mut y = self.matmul(x2, w)?;
        if let Some(b) = b {
            y = self.add(y, b)?;
        }
        if vector_in {
            let c = self.shape(y)[1];
            y = self.reshape(y, &[c])?;
        }
        Ok(y)
    }

    /// Inner product of two equal-length vectors, as a rank-0 scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) || self.shape(a).len() != 1 {
            return Err(Error::Shape {
                op: "dot",
                msg: format!(
                    "need equal vectors, got {:?}, {:?}",
                    self.shape(a),
                    self.shape(b)
                ),
            });
        }
        let p = self.mul(a, b)?;
        self.sum_all(p)
    }

    /// Elementwise log(exp(a) + exp(b)), stabilized by the detached max so it
    /// never overflows at large scales.
    pub fn logsumexp_pair(&mut self, a: Var, b: Var) -> Result<Var> {
        let m = self.maximum(a, b)?;
        let c = self.detach(m)?;
        let ea = self.sub(a, c)?;
        let ea = self.exp(ea)?;
        let eb = self.sub(b, c)?;
        let eb = self.exp(eb)?;
        let s = self.add(ea, eb)?;
        let l = self.ln(s)?;
        self.add(l, c)
    }

    /// 2-D cross-correlation: x is C_in x H x W, kernels C_out x C_in x kh x kw.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Result<Var> {
        let xsh = self.shape(x).to_vec();
        let wsh = self.shape(w).to_vec();
        if xsh.len() != 3 || wsh.len() != 4 {
            return Err(Error::Shape {
                op: "conv2d",
                msg: format!(
                    "expected CxHxW input and OxCxKhxKw kernels, got {:?} and {:?}",
                    xsh, wsh
                ),
            });
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::Shape {
                op: "conv2d",
                msg: "zero stride".into(),
            });
        }
        let (ci, h, wd) = (xsh[0], xsh[1], xsh[2]);
        let (co, ci_k, kh, kw) = (wsh[0], wsh[1], wsh[2], wsh[3]);
        if ci != ci_k {
            return Err(Error::Shape {
                op: "conv2d",
                msg: format!("input has {} channels, kernels expect {}", ci, ci_k),
            });
        }
        let (hp, wp) = (h + 2 * pad.0, wd + 2 * pad.1);
        if kh > hp || kw > wp {
            return Err(Error::Shape {
                op: "conv2d",
                msg: format!(
                    "kernel {}x{} larger than padded input {}x{}",
                    kh, kw, hp, wp
                ),
            });
        }
        let ho = (hp - kh) / stride.0 + 1;
        let wo = (wp - kw) / stride.1 + 1;
        let dx = self.value(x).data();
        let dw = self.value(w).data();
        let mut out = vec![S::zero(); co * ho * wo];
        for oc in 0..co {
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut acc = S::zero();
                    for ic in 0..ci {
                        for r in 0..kh {
                            let ih = oh * stride.0 + r;
                            if ih < pad.0 || ih - pad.0 >= h {
                                continue;
                            }
                            let ih = ih - pad.0;
                            let xrow = ic * h * wd + ih * wd;
                            let wrow = ((oc * ci + ic) * kh + r) * kw;
                            for c in 0..kw {
                                let iw = ow * stride.1 + c;
                                if iw < pad.1 || iw - pad.1 >= wd {
                                    continue;
                                }
                                acc += dx[xrow + iw - pad.1] * dw[wrow + c];
                            }
                        }
                    }
                    out[(oc * ho + oh) * wo + ow] = acc;
                }
            }
        }
        let needs = self.nodes[x.0].needs_grad || self.nodes[w.0].needs_grad;
        self.push(
            "conv2d",
            Tensor::new(vec![co, ho, wo], out)?,
            needs,
            Op::Conv2d { x, w, stride, pad },
        )
    }

    /// Max pooling over the trailing two dims of a C x H x W (or H x W) map.
    /// Gradient routes to the argmax; ties break to the lowest flat index.
    pub fn max_pool2d(
        &mut self,
        a: Var,
        window: (usize, usize),
        stride: (usize, usize),
    ) -> Result<Var> {
        if window.0 == 0 || window.1 == 0 || stride.0 == 0 || stride.1 == 0 {
            return Err(Error::Shape {
                op: "max_pool2d",
                msg: "zero-size window or stride".into(),
            });
        }
        let shape = self.shape(a).to_vec();
        let (c, h, w, rank2) = match shape.len() {
            2 => (1, shape[0], shape[1], true),
            3 => (shape[0], shape[1], shape[2], false),
            _ => {
                return Err(Error::Shape {
                    op: "max_pool2d",
                    msg: format!("expected rank 2 or 3, got {:?}", shape),
                })
            }
        };
        if window.0 > h || window.1 > w {
            return Err(Error::Shape {
                op: "max_pool2d",
                msg: format!("window {:?} larger than input {}x{}", window, h, w),
            });
        }
        let ho = (h - window.0) / stride.0 + 1;
        let wo = (w - window.1) / stride.1 + 1;
        let src = self.value(a).data();
        let mut out = vec![S::zero(); c * ho * wo];
        let mut argmax = vec![0usize; c * ho * wo];
        for ch in 0..c {
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut best = S::neg_infinity();
                    let mut best_i = 0usize;
                    for r in 0..window.0 {
                        for cc in 0..window.1 {
                            let ih = oh * stride.0 + r;
                            let iw = ow * stride.1 + cc;
                            let i = (ch * h + ih) * w + iw;
                            if src[i] > best {
                                best = src[i];
                                best_i = i;
                            }
                        }
                    }
                    let o = (ch * ho + oh) * wo + ow;
                    out[o] = best;
                    argmax[o] = best_i;
                }
            }
        }
        let out_shape = if rank2 { vec![ho, wo] } else { vec![c, ho, wo] };
        let needs = self.nodes[a.0].needs_grad;
        self.push(
            "max_pool2d",
            Tensor::new(out_shape, out)?,
            needs,
            Op::MaxPool2d { a, argmax },
        )
    }

    /// Adaptive average pooling: region means with PyTorch-style region
    /// boundaries. A vector pools to `OneD(t)`; rank 2/3 inputs pool the
    /// trailing two dims to `TwoD(th, tw)` (leading channel dim kept).
    pub fn adaptive_avg_pool(&mut self, a: Var, target: PoolTarget) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let out_shape = adaptive_out_shape(&shape, &target)?;
        let src = self.value(a).data();
        let out = adaptive_avg_forward(src, &shape, &out_shape);
        let needs = self.nodes[a.0].needs_grad;
        self.push(
            "adaptive_avg_pool",
            Tensor::new(out_shape, out)?,
            needs,
            Op::AdaptiveAvg { a },
        )
    }
}

/// Pooling target for [`Graph::adaptive_avg_pool`].
#[derive(Debug, Clone, Copy)]
pub enum PoolTarget {
    OneD(usize),
    TwoD(usize, usize),
}

fn adaptive_out_shape(shape: &[usize], target: &PoolTarget) -> Result<Vec<usize>> {
    match (shape.len(), target) {
        (1, PoolTarget::OneD(t)) => {
            if *t == 0 || *t > shape[0] {
                return Err(Error::Shape {
                    op: "adaptive_avg_pool",
                    msg: format!("target {} invalid for length {}", t, shape[0]),
                });
            }
            Ok(vec![*t])
        }
        (2, PoolTarget::TwoD(th, tw)) | (3, PoolTarget::TwoD(th, tw)) => {
            let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
            if *th == 0 || *tw == 0 || *th > h || *tw > w {
                return Err(Error::Shape {
                    op: "adaptive_avg_pool",
                    msg: format!("target {}x{} invalid for {}x{}", th, tw, h, w),
                });
            }
            let mut out = shape.to_vec();
            let n = out.len();
            out[n - 2] = *th;
            out[n - 1] = *tw;
            Ok(out)
        }
        _ => Err(Error::Shape {
            op: "adaptive_avg_pool",
            msg: format!("target {:?} does not fit shape {:?}", target, shape),
        }),
    }
}

/// Region bounds [start, end) for output cell `i` of `t` over length `n`.
pub(crate) fn pool_region(i: usize, t: usize, n: usize) -> (usize, usize) {
    let start = i * n / t;
    let end = ((i + 1) * n).div_ceil(t);
    (start, end)
}

pub(crate) fn adaptive_avg_forward<S: Scalar>(
    src: &[S],
    in_shape: &[usize],
    out_shape: &[usize],
) -> Vec<S> {
    // normalize to (C, H, W) views
    let (c, h, w, th, tw) = match in_shape.len() {
        1 => (1, 1, in_shape[0], 1, out_shape[0]),
        2 => (1, in_shape[0], in_shape[1], out_shape[0], out_shape[1]),
        _ => (
            in_shape[0],
            in_shape[1],
            in_shape[2],
            out_shape[out_shape.len() - 2],
            out_shape[out_shape.len() - 1],
        ),
    };
    let mut out = vec![S::zero(); c * th * tw];
    for ch in 0..c {
        for oh in 0..th {
            let (h0, h1) = pool_region(oh, th, h);
            for ow in 0..tw {
                let (w0, w1) = pool_region(ow, tw, w);
                let mut acc = S::zero();
                for ih in h0..h1 {
                    for iw in w0..w1 {
                        acc += src[(ch * h + ih) * w + iw];
                    }
                }
                let cnt = S::from_float(((h1 - h0) * (w1 - w0)) as f64);
                out[(ch * th + oh) * tw + ow] = acc / cnt;
            }
        }
    }
    out
}
