//! Define-by-run tape for reverse-mode differentiation.
//!
//! Every primitive appends one node holding its value and the handles of its
//! inputs. Nodes are only ever appended, so the node list is already in
//! topological order and `backward` is a single reverse sweep.

use crate::error::{dim_err, Error, Result};

use super::{Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// `sqrt(2 / pi)` used by the tanh form of GELU.
pub const GELU_SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
/// Cubic coefficient of the tanh form of GELU.
pub const GELU_CUBIC: f64 = 0.044_715;

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Square(Var),
    Exp(Var),
    Clamp { x: Var, lo: T, hi: T },
    Softmax { x: Var, axis: usize },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<T>, rstd: Vec<T> },
    Gelu(Var),
    ConcatCols(Vec<Var>),
    MeanRows(Var),
    Sum(Var),
    CrossEntropy { logits: Var, label: usize, probs: Vec<T> },
    GaussianKl { mu: Var, log_sigma: Var },
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Ordered record of primitive operations.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn softmax_dims(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let len = shape[axis];
    let inner = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

fn gelu_scalar<T: Scalar>(x: T) -> (T, T) {
    let c = T::from_f64_lossy(GELU_SQRT_2_OVER_PI);
    let a = T::from_f64_lossy(GELU_CUBIC);
    let half = T::from_f64_lossy(0.5);
    let three = T::from_f64_lossy(3.0);
    let inner = c * (x + a * x * x * x);
    let t = inner.tanh();
    let y = half * x * (T::one() + t);
    let dy = half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * a * x * x);
    (y, dy)
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that is treated as a constant.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn matrix_dims(&self, v: Var) -> Result<(usize, usize)> {
        let s = self.value(v).shape();
        if s.len() != 2 {
            return Err(dim_err!("expected a matrix, got shape {:?}", s));
        }
        Ok((s[0], s[1]))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(dim_err!("{what}: shapes {:?} and {:?} differ", sa, sb));
        }
        Ok(())
    }

    /// `a[m,k] · b[k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a[m,k] · b[n,k]ᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (m, k) = self.matrix_dims(a)?;
        let (br, bc) = self.matrix_dims(b)?;
        let (kb, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != kb {
            return Err(dim_err!(
                "matmul inner extents differ: [{m},{k}] x [{br},{bc}]{}",
                if trans_b { "^T" } else { "" }
            ));
        }
        let mut out = vec![T::zero(); m * n];
        if m > 0 && n > 0 && k > 0 {
            let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
            T::gemm(
                m,
                k,
                n,
                T::one(),
                self.value(a).data(),
                k as isize,
                1,
                self.value(b).data(),
                rsb,
                csb,
                T::zero(),
                &mut out,
                n as isize,
                1,
            );
        }
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(value, Op::MatMul { a, b, trans_b }, &[a, b]))
    }

    fn zip(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Result<Var> {
        self.same_shape(a, b, "elementwise op")?;
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(value, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds the trailing vector `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let va = self.value(a);
        let vr = self.value(row);
        if vr.rank() != 1 || vr.len() != va.cols() || va.rank() == 0 {
            return Err(dim_err!(
                "add_row: cannot add {:?} to rows of {:?}",
                vr.shape(),
                va.shape()
            ));
        }
        let c = va.cols();
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + vr.data()[i % c])
            .collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(value, Op::AddRow(a, row), &[a, row]))
    }

    fn unary(&mut self, x: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let value = self.value(x).map(f);
        self.push(value, op, &[x])
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        self.unary(x, Op::Scale(x, c), |v| v * c)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square(x), |v| v * v)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Op::Exp(x), |v| v.exp())
    }

    /// Elementwise clamp; the gradient is zero outside `[lo, hi]`.
    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Var {
        self.unary(x, Op::Clamp { x, lo, hi }, |v| v.max(lo).min(hi))
    }

    /// Elementwise GELU, tanh form:
    /// `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Gelu(x), |v| gelu_scalar(v).0)
    }

    /// Max-shifted softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let vx = self.value(x);
        let shape = vx.shape().to_vec();
        if axis >= shape.len() {
            return Err(dim_err!("softmax axis {axis} out of range for {:?}", shape));
        }
        if shape[axis] == 0 {
            return Err(dim_err!("softmax over empty axis {axis}"));
        }
        let (outer, len, inner) = softmax_dims(&shape, axis);
        let src = vx.data();
        let mut out = vec![T::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let mut mx = T::neg_infinity();
                for j in 0..len {
                    mx = mx.max(src[base + j * inner]);
                }
                let mut total = T::zero();
                for j in 0..len {
                    let e = (src[base + j * inner] - mx).exp();
                    out[base + j * inner] = e;
                    total = total + e;
                }
                for j in 0..len {
                    out[base + j * inner] = out[base + j * inner] / total;
                }
            }
        }
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Softmax { x, axis }, &[x]))
    }

    /// Normalises the last axis to zero mean and unit variance, then applies
    /// `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let vx = self.value(x);
        let c = vx.cols();
        let (vg, vb) = (self.value(gain), self.value(bias));
        if vx.rank() == 0 || vg.shape() != [c] || vb.shape() != [c] {
            return Err(dim_err!(
                "layer_norm: gain {:?} / bias {:?} do not match last axis of {:?}",
                vg.shape(),
                vb.shape(),
                vx.shape()
            ));
        }
        let rows = vx.rows();
        let eps = T::from_f64_lossy(eps);
        let inv_c = T::one() / T::from_usize(c).unwrap();
        let mut xhat = vec![T::zero(); vx.len()];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); vx.len()];
        for r in 0..rows {
            let row = vx.row(r);
            let mean = row.iter().copied().sum::<T>() * inv_c;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_c;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..c {
                let h = (row[j] - mean) * rs;
                xhat[r * c + j] = h;
                out[r * c + j] = h * vg.data()[j] + vb.data()[j];
            }
        }
        let value = Tensor::new(vx.shape().to_vec(), out)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            &[x, gain, bias],
        ))
    }

    /// Concatenates matrices with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(dim_err!("concat_cols of nothing"));
        }
        let rows = self.matrix_dims(parts[0])?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.matrix_dims(p)?;
            if r != rows {
                return Err(dim_err!("concat_cols: row counts {rows} and {r} differ"));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![T::zero(); rows * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for r in 0..rows {
                out[r * total + offset..r * total + offset + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let value = Tensor::new(vec![rows, total], out)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Mean over the rows of a matrix, giving a vector.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims(x)?;
        if m == 0 {
            return Err(dim_err!("mean_rows of an empty matrix"));
        }
        let vx = self.value(x);
        let mut out = vec![T::zero(); n];
        for r in 0..m {
            for (o, &v) in out.iter_mut().zip(vx.row(r)) {
                *o = *o + v;
            }
        }
        let inv = T::one() / T::from_usize(m).unwrap();
        out.iter_mut().for_each(|o| *o = *o * inv);
        let value = Tensor::new(vec![n], out)?;
        Ok(self.push(value, Op::MeanRows(x), &[x]))
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum::<T>();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Softmax cross-entropy of a logit vector against a class index.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let vl = self.value(logits);
        if vl.rank() != 1 {
            return Err(dim_err!("cross_entropy expects a vector, got {:?}", vl.shape()));
        }
        if label >= vl.len() {
            return Err(Error::Usage(format!(
                "label {label} out of range for {} classes",
                vl.len()
            )));
        }
        let mx = vl.data().iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = vl.data().iter().map(|&v| (v - mx).exp()).collect();
        let total: T = exps.iter().copied().sum();
        let loss = total.ln() + mx - vl.data()[label];
        let probs = exps.into_iter().map(|e| e / total).collect();
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                label,
                probs,
            },
            &[logits],
        ))
    }

    /// Elementwise `KL(N(mu, sigma^2) || N(0, 1))` with `sigma = exp(log_sigma)`:
    /// `0.5 (mu^2 + sigma^2 - 1 - 2 log_sigma)`.
    pub fn gaussian_kl(&mut self, mu: Var, log_sigma: Var) -> Result<Var> {
        let half = T::from_f64_lossy(0.5);
        let two = T::from_f64_lossy(2.0);
        self.zip(mu, log_sigma, Op::GaussianKl { mu, log_sigma }, |m, ls| {
            half * (m * m + (two * ls).exp() - T::one() - two * ls)
        })
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| g.map(|d| Tensor::new(n.value.shape().to_vec(), d).expect("grad shape")))
            .collect();
        Ok(Gradients { grads })
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut Vec<T>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
    }

    fn backprop_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, trans_b } => {
                let (m, k) = (self.value(*a).shape()[0], self.value(*a).shape()[1]);
                let n = node.value.shape()[1];
                if let Some(ga) = self.slot(grads, *a) {
                    // dA[m,k] = dC[m,n] · op(B)ᵀ
                    let (rsb, csb) = if *trans_b { (k as isize, 1) } else { (1, n as isize) };
                    T::gemm(m, n, k, T::one(), g, n as isize, 1, val(*b), rsb, csb, T::one(), ga, k as isize, 1);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    if *trans_b {
                        // dB[n,k] = dCᵀ · A
                        T::gemm(n, m, k, T::one(), g, 1, n as isize, val(*a), k as isize, 1, T::one(), gb, k as isize, 1);
                    } else {
                        // dB[k,n] = Aᵀ · dC
                        T::gemm(k, m, n, T::one(), val(*a), 1, k as isize, g, n as isize, 1, T::one(), gb, n as isize, 1);
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(s) = self.slot(grads, *v) {
                        s.iter_mut().zip(g).for_each(|(s, &d)| *s = *s + d);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(s) = self.slot(grads, *a) {
                    s.iter_mut().zip(g).for_each(|(s, &d)| *s = *s + d);
                }
                if let Some(s) = self.slot(grads, *b) {
                    s.iter_mut().zip(g).for_each(|(s, &d)| *s = *s - d);
                }
            }
            Op::Mul(a, b) => {
                if let Some(s) = self.slot(grads, *a) {
                    let vb = val(*b);
                    s.iter_mut().zip(g).zip(vb).for_each(|((s, &d), &y)| *s = *s + d * y);
                }
                if let Some(s) = self.slot(grads, *b) {
                    let va = val(*a);
                    s.iter_mut().zip(g).zip(va).for_each(|((s, &d), &x)| *s = *s + d * x);
                }
            }
            Op::AddRow(a, row) => {
                if let Some(s) = self.slot(grads, *a) {
                    s.iter_mut().zip(g).for_each(|(s, &d)| *s = *s + d);
                }
                if let Some(s) = self.slot(grads, *row) {
                    let c = s.len();
                    for (i, &d) in g.iter().enumerate() {
                        s[i % c] = s[i % c] + d;
                    }
                }
            }
            Op::Scale(x, c) => {
                if let Some(s) = self.slot(grads, *x) {
                    s.iter_mut().zip(g).for_each(|(s, &d)| *s = *s + d * *c);
                }
            }
            Op::Square(x) => {
                if let Some(s) = self.slot(grads, *x) {
                    let two = T::from_f64_lossy(2.0);
                    s.iter_mut().zip(g).zip(val(*x)).for_each(|((s, &d), &v)| *s = *s + two * v * d);
                }
            }
            Op::Exp(x) => {
                if let Some(s) = self.slot(grads, *x) {
                    s.iter_mut()
                        .zip(g)
                        .zip(node.value.data())
                        .for_each(|((s, &d), &y)| *s = *s + d * y);
                }
            }
            Op::Clamp { x, lo, hi } => {
                if let Some(s) = self.slot(grads, *x) {
                    s.iter_mut().zip(g).zip(val(*x)).for_each(|((s, &d), &v)| {
                        if v >= *lo && v <= *hi {
                            *s = *s + d;
                        }
                    });
                }
            }
            Op::Gelu(x) => {
                if let Some(s) = self.slot(grads, *x) {
                    s.iter_mut()
                        .zip(g)
                        .zip(val(*x))
                        .for_each(|((s, &d), &v)| *s = *s + d * gelu_scalar(v).1);
                }
            }
            Op::Softmax { x, axis } => {
                if let Some(s) = self.slot(grads, *x) {
                    let y = node.value.data();
                    let (outer, len, inner) = softmax_dims(node.value.shape(), *axis);
                    for o in 0..outer {
                        for i in 0..inner {
                            let base = o * len * inner + i;
                            let mut dot = T::zero();
                            for j in 0..len {
                                dot = dot + g[base + j * inner] * y[base + j * inner];
                            }
                            for j in 0..len {
                                let idx = base + j * inner;
                                s[idx] = s[idx] + y[idx] * (g[idx] - dot);
                            }
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let c = node.value.cols();
                let rows = node.value.rows();
                if let Some(s) = self.slot(grads, *gain) {
                    for r in 0..rows {
                        for j in 0..c {
                            s[j] = s[j] + g[r * c + j] * xhat[r * c + j];
                        }
                    }
                }
                if let Some(s) = self.slot(grads, *bias) {
                    for r in 0..rows {
                        for j in 0..c {
                            s[j] = s[j] + g[r * c + j];
                        }
                    }
                }
                let gain_v = val(*gain).to_vec();
                if let Some(s) = self.slot(grads, *x) {
                    let inv_c = T::one() / T::from_usize(c).unwrap();
                    for r in 0..rows {
                        let mut mean_dh = T::zero();
                        let mut mean_dh_h = T::zero();
                        for j in 0..c {
                            let dh = g[r * c + j] * gain_v[j];
                            mean_dh = mean_dh + dh;
                            mean_dh_h = mean_dh_h + dh * xhat[r * c + j];
                        }
                        mean_dh = mean_dh * inv_c;
                        mean_dh_h = mean_dh_h * inv_c;
                        for j in 0..c {
                            let dh = g[r * c + j] * gain_v[j];
                            let idx = r * c + j;
                            s[idx] = s[idx] + rstd[r] * (dh - mean_dh - xhat[idx] * mean_dh_h);
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let rows = node.value.shape()[0];
                let total = node.value.shape()[1];
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).shape()[1];
                    if let Some(s) = self.slot(grads, *p) {
                        for r in 0..rows {
                            for j in 0..w {
                                s[r * w + j] = s[r * w + j] + g[r * total + offset + j];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::MeanRows(x) => {
                if let Some(s) = self.slot(grads, *x) {
                    let n = g.len();
                    let m = s.len() / n;
                    let inv = T::one() / T::from_usize(m).unwrap();
                    for (i, s) in s.iter_mut().enumerate() {
                        *s = *s + g[i % n] * inv;
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(s) = self.slot(grads, *x) {
                    s.iter_mut().for_each(|s| *s = *s + g[0]);
                }
            }
            Op::CrossEntropy {
                logits,
                label,
                probs,
            } => {
                if let Some(s) = self.slot(grads, *logits) {
                    for (j, s) in s.iter_mut().enumerate() {
                        let onehot = if j == *label { T::one() } else { T::zero() };
                        *s = *s + g[0] * (probs[j] - onehot);
                    }
                }
            }
            Op::GaussianKl { mu, log_sigma } => {
                if let Some(s) = self.slot(grads, *mu) {
                    s.iter_mut().zip(g).zip(val(*mu)).for_each(|((s, &d), &m)| *s = *s + d * m);
                }
                if let Some(s) = self.slot(grads, *log_sigma) {
                    let two = T::from_f64_lossy(2.0);
                    s.iter_mut()
                        .zip(g)
                        .zip(val(*log_sigma))
                        .for_each(|((s, &d), &ls)| *s = *s + d * ((two * ls).exp() - T::one()));
                }
            }
        }
    }
}
