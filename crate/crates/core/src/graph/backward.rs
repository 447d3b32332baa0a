//! Backward kernels: one vector-Jacobian product per op kind.

use super::ops::{pool_region, sinc_pi_deriv, SELU_ALPHA, SELU_SCALE};
use super::{BinKind, Node, Op, ReduceKind, UnKind, Var};
use crate::scalar::Scalar;
use crate::tensor::{broadcast_strides, for_each_bcast2, reduce_to_shape, strides_of};

fn unary_grad<S: Scalar>(kind: &UnKind<S>, x: S, y: S) -> S {
    match kind {
        UnKind::Neg => -S::one(),
        UnKind::Abs => {
            if x > S::zero() {
                S::one()
            } else if x < S::zero() {
                -S::one()
            } else {
                S::zero()
            }
        }
        UnKind::Exp => y,
        UnKind::Ln => S::one() / x,
        UnKind::Sqrt => S::one() / (S::from_float(2.0) * y),
        UnKind::Sin => x.cos(),
        UnKind::Cos => -x.sin(),
        UnKind::Tanh => S::one() - y * y,
        UnKind::Sigmoid => y * (S::one() - y),
        UnKind::Selu => {
            let scale = S::from_float(SELU_SCALE);
            let alpha = S::from_float(SELU_ALPHA);
            if x > S::zero() {
                scale
            } else {
                scale * alpha * x.exp()
            }
        }
        UnKind::Square => S::from_float(2.0) * x,
        UnKind::Acos => -S::one() / (S::one() - x * x).sqrt(),
        UnKind::SincPi => S::from_float(sinc_pi_deriv(x.to_float())),
        UnKind::Scale(c) => *c,
        UnKind::AddScalar(_) => S::one(),
        UnKind::Clamp(lo, hi) => {
            if x >= *lo && x <= *hi {
                S::one()
            } else {
                S::zero()
            }
        }
        #[cfg(test)]
        UnKind::BadSquareGrad => S::from_float(3.0) * x,
    }
}

/// Push this node's gradient contributions into its inputs via `sink`.
pub(crate) fn backprop_node<S: Scalar>(
    nodes: &[Node<S>],
    i: usize,
    gout: &[S],
    sink: &mut impl FnMut(usize, Vec<S>),
) {
    let wants = |v: Var| nodes[v.0].needs_grad;
    match &nodes[i].op {
        Op::Leaf => {}
        Op::Un(kind, a) => {
            if wants(*a) {
                let xs = nodes[a.0].value.data();
                let ys = nodes[i].value.data();
                let g = gout
                    .iter()
                    .zip(xs.iter().zip(ys))
                    .map(|(&g, (&x, &y))| g * unary_grad(kind, x, y))
                    .collect();
                sink(a.0, g);
            }
        }
        Op::Bin(kind, a, b) => {
            let ash = nodes[a.0].value.shape();
            let bsh = nodes[b.0].value.shape();
            let osh = nodes[i].value.shape();
            let da = nodes[a.0].value.data();
            let db = nodes[b.0].value.data();
            let mut ga = if wants(*a) {
                Some(vec![S::zero(); gout.len()])
            } else {
                None
            };
            let mut gb = if wants(*b) {
                Some(vec![S::zero(); gout.len()])
            } else {
                None
            };
            for_each_bcast2(osh, ash, bsh, |io, ia, ib| {
                let g = gout[io];
                let (x, y) = (da[ia], db[ib]);
                match kind {
                    BinKind::Add => {
                        if let Some(v) = ga.as_mut() {
                            v[io] = g;
                        }
                        if let Some(v) = gb.as_mut() {
                            v[io] = g;
                        }
                    }
                    BinKind::Sub => {
                        if let Some(v) = ga.as_mut() {
                            v[io] = g;
                        }
                        if let Some(v) = gb.as_mut() {
                            v[io] = -g;
                        }
                    }
                    BinKind::Mul => {
                        if let Some(v) = ga.as_mut() {
                            v[io] = g * y;
                        }
                        if let Some(v) = gb.as_mut() {
                            v[io] = g * x;
                        }
                    }
                    BinKind::Div => {
                        if let Some(v) = ga.as_mut() {
                            v[io] = g / y;
                        }
                        if let Some(v) = gb.as_mut() {
                            v[io] = -g * x / (y * y);
                        }
                    }
                    BinKind::Maximum => {
                        if x >= y {
                            if let Some(v) = ga.as_mut() {
                                v[io] = g;
                            }
                        } else if let Some(v) = gb.as_mut() {
                            v[io] = g;
                        }
                    }
                }
            });
            if let Some(v) = ga {
                sink(a.0, reduce_to_shape(&v, osh, ash));
            }
            if let Some(v) = gb {
                sink(b.0, reduce_to_shape(&v, osh, bsh));
            }
        }
        Op::Reduce {
            kind,
            a,
            kept_shape,
            count,
            argmax,
        } => {
            if !wants(*a) {
                return;
            }
            let in_shape = nodes[a.0].value.shape();
            let n_in = nodes[a.0].value.numel();
            match kind {
                ReduceKind::Max => {
                    let mut g = vec![S::zero(); n_in];
                    for (j, &src) in argmax
                        .as_ref()
                        .expect("max saved argmax")
                        .iter()
                        .enumerate()
                    {
                        g[src] += gout[j];
                    }
                    sink(a.0, g);
                }
                _ => {
                    // broadcast the (kept-shape) output grad back over the inputs
                    let s_in = strides_of(in_shape);
                    let s_kept = broadcast_strides(kept_shape, in_shape);
                    let scale = match kind {
                        ReduceKind::Mean => S::one() / S::from_float(*count as f64),
                        _ => S::one(),
                    };
                    let mut g = vec![S::zero(); n_in];
                    for (ii, slot) in g.iter_mut().enumerate() {
                        let mut ko = 0;
                        let mut rem = ii;
                        for d in 0..in_shape.len() {
                            let c = rem / s_in[d];
                            rem %= s_in[d];
                            ko += c * s_kept[d];
                        }
                        *slot = gout[ko] * scale;
                    }
                    sink(a.0, g);
                }
            }
        }
        Op::Reshape(a) => {
            if wants(*a) {
                sink(a.0, gout.to_vec());
            }
        }
        Op::Concat { axis, inputs } => {
            let osh = nodes[i].value.shape();
            let outer: usize = osh[..*axis].iter().product();
            let inner: usize = osh[*axis + 1..].iter().product();
            let total_axis = osh[*axis];
            let mut offset = 0usize;
            for v in inputs {
                let d = nodes[v.0].value.shape()[*axis];
                if wants(*v) {
                    let mut g = vec![S::zero(); nodes[v.0].value.numel()];
                    for o in 0..outer {
                        for j in 0..d {
                            let src = (o * total_axis + offset + j) * inner;
                            let dst = (o * d + j) * inner;
                            g[dst..dst + inner].copy_from_slice(&gout[src..src + inner]);
                        }
                    }
                    sink(v.0, g);
                }
                offset += d;
            }
        }
        Op::Slice { a, axis, start } => {
            if !wants(*a) {
                return;
            }
            let ish = nodes[a.0].value.shape();
            let osh = nodes[i].value.shape();
            let outer: usize = ish[..*axis].iter().product();
            let inner: usize = ish[*axis + 1..].iter().product();
            let len = osh[*axis];
            let mut g = vec![S::zero(); nodes[a.0].value.numel()];
            for o in 0..outer {
                for j in 0..len {
                    let dst = (o * ish[*axis] + start + j) * inner;
                    let src = (o * len + j) * inner;
                    g[dst..dst + inner].copy_from_slice(&gout[src..src + inner]);
                }
            }
            sink(a.0, g);
        }
        Op::MatMul { a, b, m, k, n } => {
            let da = nodes[a.0].value.data();
            let db = nodes[b.0].value.data();
            if wants(*a) {
                // dA = dC . B^T
                let mut g = vec![S::zero(); m * k];
                for i2 in 0..*m {
                    for p in 0..*k {
                        let mut acc = S::zero();
                        for j in 0..*n {
                            acc += gout[i2 * n + j] * db[p * n + j];
                        }
                        g[i2 * k + p] = acc;
                    }
                }
                sink(a.0, g);
            }
            if wants(*b) {
                // dB = A^T . dC
                let mut g = vec![S::zero(); k * n];
                for p in 0..*k {
                    for j in 0..*n {
                        let mut acc = S::zero();
                        for i2 in 0..*m {
                            acc += da[i2 * k + p] * gout[i2 * n + j];
                        }
                        g[p * n + j] = acc;
                    }
                }
                sink(b.0, g);
            }
        }
        Op::Conv2d { x, w, stride, pad } => {
            let xsh = nodes[x.0].value.shape();
            let wsh = nodes[w.0].value.shape();
            let osh = nodes[i].value.shape();
            let (ci, h, wd) = (xsh[0], xsh[1], xsh[2]);
            let (co, _, kh, kw) = (wsh[0], wsh[1], wsh[2], wsh[3]);
            let (ho, wo) = (osh[1], osh[2]);
            let dx = nodes[x.0].value.data();
            let dw = nodes[w.0].value.data();
            let mut gx = if wants(*x) {
                Some(vec![S::zero(); nodes[x.0].value.numel()])
            } else {
                None
            };
            let mut gw = if wants(*w) {
                Some(vec![S::zero(); nodes[w.0].value.numel()])
            } else {
                None
            };
            for oc in 0..co {
                for oh in 0..ho {
                    for ow in 0..wo {
                        let g = gout[(oc * ho + oh) * wo + ow];
                        if g == S::zero() {
                            continue;
                        }
                        for ic in 0..ci {
                            for r in 0..kh {
                                let ih = oh * stride.0 + r;
                                if ih < pad.0 || ih - pad.0 >= h {
                                    continue;
                                }
                                let ih = ih - pad.0;
                                for c in 0..kw {
                                    let iw = ow * stride.1 + c;
                                    if iw < pad.1 || iw - pad.1 >= wd {
                                        continue;
                                    }
                                    let iw = iw - pad.1;
                                    let xi = (ic * h + ih) * wd + iw;
                                    let wi = ((oc * ci + ic) * kh + r) * kw + c;
                                    if let Some(v) = gx.as_mut() {
                                        v[xi] += g * dw[wi];
                                    }
                                    if let Some(v) = gw.as_mut() {
                                        v[wi] += g * dx[xi];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if let Some(v) = gx {
                sink(x.0, v);
            }
            if let Some(v) = gw {
                sink(w.0, v);
            }
        }
        Op::MaxPool2d { a, argmax } => {
            if !wants(*a) {
                return;
            }
            let mut g = vec![S::zero(); nodes[a.0].value.numel()];
            for (j, &src) in argmax.iter().enumerate() {
                g[src] += gout[j];
            }
            sink(a.0, g);
        }
        Op::AdaptiveAvg { a } => {
            if !wants(*a) {
                return;
            }
            let ish = nodes[a.0].value.shape();
            let osh = nodes[i].value.shape();
            let (c, h, w, th, tw) = match ish.len() {
                1 => (1, 1, ish[0], 1, osh[0]),
                2 => (1, ish[0], ish[1], osh[0], osh[1]),
                _ => (
                    ish[0],
                    ish[1],
                    ish[2],
                    osh[osh.len() - 2],
                    osh[osh.len() - 1],
                ),
            };
            let mut g = vec![S::zero(); nodes[a.0].value.numel()];
            for ch in 0..c {
                for oh in 0..th {
                    let (h0, h1) = pool_region(oh, th, h);
                    for ow in 0..tw {
                        let (w0, w1) = pool_region(ow, tw, w);
                        let cnt = S::from_float(((h1 - h0) * (w1 - w0)) as f64);
                        let go = gout[(ch * th + oh) * tw + ow] / cnt;
                        for ih in h0..h1 {
                            for iw in w0..w1 {
                                g[(ch * h + ih) * w + iw] += go;
                            }
                        }
                    }
                }
            }
            sink(a.0, g);
        }
    }
}
