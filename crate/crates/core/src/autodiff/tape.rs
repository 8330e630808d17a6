//! Define-by-run reverse-mode differentiation.
//!
//! Every operation appends a node holding its output value, so the node list
//! is topologically ordered by construction. `backward` walks it once in
//! reverse and pushes adjoints into the parameter store.

use std::collections::HashMap;

use super::tensor::gemm;
use super::{ParamId, ParameterStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Negate,
}

impl ElementwiseOp {
    pub fn is_binary(self) -> bool {
        matches!(self, Self::Add | Self::Sub | Self::Mul)
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    // the bool marks a vector right operand broadcast over rows
    Add(Var, Var, bool),
    Sub(Var, Var, bool),
    Mul(Var, Var, bool),
    Negate(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Affine(Var, f64),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Concat(Vec<Var>),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    bound: HashMap<ParamId, Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    /// Binds a trainable parameter. Repeated binds of the same id on one tape
    /// return the same node.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let v = self.push(Op::Param(id), store.value(id).clone(), true);
        self.bound.insert(id, v);
        v
    }

    pub fn elementwise(&mut self, kind: ElementwiseOp, a: Var, b: Option<Var>) -> Result<Var> {
        match (kind.is_binary(), b) {
            (true, Some(b)) => self.binary(kind, a, b),
            (false, None) => self.unary(kind, a),
            (true, None) => Err(Error::InvalidTensor(format!("{kind:?} needs two operands"))),
            (false, Some(_)) => Err(Error::InvalidTensor(format!("{kind:?} takes one operand"))),
        }
    }

    fn binary(&mut self, kind: ElementwiseOp, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let broadcast = if av.shape() == bv.shape() {
            false
        } else if av.shape().len() == 2 && bv.shape() == [av.cols()] {
            true
        } else {
            return Err(Error::ShapeMismatch {
                op: "elementwise",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        };
        let f: fn(f64, f64) -> f64 = match kind {
            ElementwiseOp::Add => |x, y| x + y,
            ElementwiseOp::Sub => |x, y| x - y,
            ElementwiseOp::Mul => |x, y| x * y,
            _ => unreachable!(),
        };
        let cols = bv.len();
        let data: Vec<f64> = if broadcast {
            av.data()
                .iter()
                .enumerate()
                .map(|(i, &x)| f(x, bv.data()[i % cols]))
                .collect()
        } else {
            av.data()
                .iter()
                .zip(bv.data())
                .map(|(&x, &y)| f(x, y))
                .collect()
        };
        let value = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.needs(a) || self.needs(b);
        let op = match kind {
            ElementwiseOp::Add => Op::Add(a, b, broadcast),
            ElementwiseOp::Sub => Op::Sub(a, b, broadcast),
            _ => Op::Mul(a, b, broadcast),
        };
        Ok(self.push(op, value, rg))
    }

    fn unary(&mut self, kind: ElementwiseOp, a: Var) -> Result<Var> {
        let av = self.value(a);
        if kind == ElementwiseOp::Log {
            if let Some(&bad) = av.data().iter().find(|&&x| x <= 0.0 || x.is_nan()) {
                return Err(Error::NonPositiveLog(bad));
            }
        }
        let (value, op) = match kind {
            ElementwiseOp::Tanh => (av.map(f64::tanh), Op::Tanh(a)),
            ElementwiseOp::Sigmoid => (av.map(sigmoid), Op::Sigmoid(a)),
            ElementwiseOp::Exp => (av.map(f64::exp), Op::Exp(a)),
            ElementwiseOp::Log => (av.map(f64::ln), Op::Log(a)),
            ElementwiseOp::Negate => (av.map(|x| -x), Op::Negate(a)),
            _ => unreachable!(),
        };
        let rg = self.needs(a);
        Ok(self.push(op, value, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(ElementwiseOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(ElementwiseOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(ElementwiseOp::Mul, a, b)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(ElementwiseOp::Tanh, a).expect("tanh is total")
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(ElementwiseOp::Sigmoid, a).expect("sigmoid is total")
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(ElementwiseOp::Exp, a).expect("exp is total")
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(ElementwiseOp::Log, a)
    }

    pub fn negate(&mut self, a: Var) -> Var {
        self.unary(ElementwiseOp::Negate, a).expect("negate is total")
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(a).map(|x| scale * x + shift);
        let rg = self.needs(a);
        self.push(Op::Affine(a, scale), value, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape().len() != 2 || bv.shape().len() != 2 || av.cols() != bv.rows() {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), false, 0.0, &mut out);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMul(a, b), Tensor::new(vec![m, n], out)?, rg))
    }

    /// `a · bᵀ` with `a: [m×k]`, `b: [n×k]`; the dense-layer product.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape().len() != 2 || bv.shape().len() != 2 || av.cols() != bv.cols() {
            return Err(Error::ShapeMismatch {
                op: "matmul_t",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.rows());
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), true, 0.0, &mut out);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMulT(a, b), Tensor::new(vec![m, n], out)?, rg))
    }

    /// Column-wise concatenation of matrices sharing a row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidTensor("concat of nothing".into()))?;
        let rows = self.value(*first).rows();
        for &p in parts {
            let v = self.value(p);
            if v.shape().len() != 2 || v.rows() != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: self.value(*first).shape().to_vec(),
                    rhs: v.shape().to_vec(),
                });
            }
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let rg = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Op::Concat(parts.to_vec()),
            Tensor::new(vec![rows, total], data)?,
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.needs(a);
        self.push(Op::Sum(a), value, rg)
    }

    /// Accumulates `∂loss/∂p` into `store` for every parameter bound on this
    /// tape. Existing gradients are added to, not overwritten.
    pub fn backward(&self, loss: Var, store: &mut ParameterStore) -> Result<()> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => store.accumulate_grad(*id, &g),
                Op::Add(a, b, bc) => {
                    if self.needs(*b) {
                        let gb = if *bc { col_sums(&g) } else { g.clone() };
                        accumulate(&mut grads, *b, gb);
                    }
                    self.push_grad(&mut grads, *a, g);
                }
                Op::Sub(a, b, bc) => {
                    if self.needs(*b) {
                        let gb = if *bc { col_sums(&g) } else { g.clone() };
                        accumulate(&mut grads, *b, gb.map(|x| -x));
                    }
                    self.push_grad(&mut grads, *a, g);
                }
                Op::Mul(a, b, bc) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.needs(*b) {
                        let prod = zip_map(&g, av, |x, y| x * y);
                        let gb = if *bc { col_sums(&prod) } else { prod };
                        accumulate(&mut grads, *b, gb);
                    }
                    if self.needs(*a) {
                        let cols = bv.len();
                        let ga = if *bc {
                            let data = g
                                .data()
                                .iter()
                                .enumerate()
                                .map(|(j, &x)| x * bv.data()[j % cols])
                                .collect();
                            Tensor::new(g.shape().to_vec(), data)?
                        } else {
                            zip_map(&g, bv, |x, y| x * y)
                        };
                        accumulate(&mut grads, *a, ga);
                    }
                }
                Op::Negate(a) => self.push_grad(&mut grads, *a, g.map(|x| -x)),
                Op::Tanh(a) => {
                    let ga = zip_map(&g, &node.value, |x, y| x * (1.0 - y * y));
                    self.push_grad(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = zip_map(&g, &node.value, |x, y| x * y * (1.0 - y));
                    self.push_grad(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = zip_map(&g, &node.value, |x, y| x * y);
                    self.push_grad(&mut grads, *a, ga);
                }
                Op::Log(a) => {
                    let ga = zip_map(&g, self.value(*a), |x, y| x / y);
                    self.push_grad(&mut grads, *a, ga);
                }
                Op::Affine(a, scale) => {
                    let s = *scale;
                    self.push_grad(&mut grads, *a, g.map(|x| x * s));
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                    if self.needs(*a) {
                        // dA = dC · Bᵀ
                        let mut ga = vec![0.0; m * k];
                        gemm(m, n, k, g.data(), false, bv.data(), true, 0.0, &mut ga);
                        accumulate(&mut grads, *a, Tensor::new(vec![m, k], ga)?);
                    }
                    if self.needs(*b) {
                        // dB = Aᵀ · dC
                        let mut gb = vec![0.0; k * n];
                        gemm(k, m, n, av.data(), true, g.data(), false, 0.0, &mut gb);
                        accumulate(&mut grads, *b, Tensor::new(vec![k, n], gb)?);
                    }
                }
                Op::MatMulT(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.rows(), av.cols(), bv.rows());
                    if self.needs(*a) {
                        // dA = dC · B
                        let mut ga = vec![0.0; m * k];
                        gemm(m, n, k, g.data(), false, bv.data(), false, 0.0, &mut ga);
                        accumulate(&mut grads, *a, Tensor::new(vec![m, k], ga)?);
                    }
                    if self.needs(*b) {
                        // dB = dCᵀ · A
                        let mut gb = vec![0.0; n * k];
                        gemm(n, m, k, g.data(), true, av.data(), false, 0.0, &mut gb);
                        accumulate(&mut grads, *b, Tensor::new(vec![n, k], gb)?);
                    }
                }
                Op::Concat(parts) => {
                    let rows = g.rows();
                    let total = g.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let c = self.value(p).cols();
                        if self.needs(p) {
                            let mut data = Vec::with_capacity(rows * c);
                            for r in 0..rows {
                                let start = r * total + offset;
                                data.extend_from_slice(&g.data()[start..start + c]);
                            }
                            accumulate(&mut grads, p, Tensor::new(vec![rows, c], data)?);
                        }
                        offset += c;
                    }
                }
                Op::Sum(a) => {
                    let ga = Tensor::full(self.value(*a).shape(), g.item());
                    self.push_grad(&mut grads, *a, ga);
                }
            }
        }
        Ok(())
    }

    fn push_grad(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if self.needs(v) {
            accumulate(grads, v, g);
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn col_sums(g: &Tensor) -> Tensor {
    let cols = g.cols();
    let mut out = vec![0.0; cols];
    for r in 0..g.rows() {
        for (o, x) in out.iter_mut().zip(g.row(r)) {
            *o += x;
        }
    }
    Tensor::vector(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(name: &str, t: Tensor) -> (ParameterStore, ParamId) {
        let mut s = ParameterStore::new();
        let id = s.insert(name, t).unwrap();
        (s, id)
    }

    #[test]
    fn elementwise_examples() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let b = tape.constant(Tensor::vector(vec![3.0, 4.0]));
        let c = tape.elementwise(ElementwiseOp::Add, a, Some(b)).unwrap();
        assert_eq!(tape.value(c).data(), &[4.0, 6.0]);

        let z = tape.constant(Tensor::vector(vec![0.0]));
        let t = tape.elementwise(ElementwiseOp::Tanh, z, None).unwrap();
        assert_eq!(tape.value(t).data(), &[0.0]);
        let s = tape.elementwise(ElementwiseOp::Sigmoid, z, None).unwrap();
        assert_eq!(tape.value(s).data(), &[0.5]);
    }

    #[test]
    fn elementwise_errors() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let b = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        assert!(matches!(tape.add(a, b), Err(Error::ShapeMismatch { .. })));
        let neg = tape.constant(Tensor::vector(vec![1.0, 0.0]));
        assert!(matches!(tape.log(neg), Err(Error::NonPositiveLog(_))));
        assert!(tape.elementwise(ElementwiseOp::Mul, a, None).is_err());
        assert!(tape.elementwise(ElementwiseOp::Exp, a, Some(a)).is_err());
    }

    #[test]
    fn broadcast_bias_over_rows() {
        let mut tape = Tape::new();
        let m = tape.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let v = tape.constant(Tensor::vector(vec![10.0, 20.0]));
        let out = tape.add(m, v).unwrap();
        assert_eq!(tape.value(out).data(), &[11.0, 22.0, 13.0, 24.0]);
        // a matrix right operand cannot broadcast over a vector
        assert!(tape.add(v, m).is_err());
    }

    #[test]
    fn matmul_examples() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let ones = tape.constant(Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap());
        let c = tape.matmul(a, ones).unwrap();
        assert_eq!(tape.value(c).shape(), &[2, 1]);
        assert_eq!(tape.value(c).data(), &[3.0, 7.0]);

        let eye = tape.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let x = tape.constant(Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 5.0, 6.0]).unwrap());
        let ix = tape.matmul(eye, x).unwrap();
        assert_eq!(tape.value(ix), tape.value(x));

        let zeros = tape.constant(Tensor::zeros(&[2, 3]));
        let col = tape.constant(Tensor::matrix(3, 1, vec![4.0, 5.0, 6.0]).unwrap());
        let zc = tape.matmul(zeros, col).unwrap();
        assert_eq!(tape.value(zc), &Tensor::zeros(&[2, 1]));

        assert!(tape.matmul(a, col).is_err());
    }

    #[test]
    fn square_gradient() {
        let (mut store, id) = store_with("x", Tensor::scalar(3.0));
        let mut tape = Tape::new();
        let x = tape.param(&store, id);
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(id).item(), 6.0);
    }

    #[test]
    fn tanh_gradient_at_zero() {
        let (mut store, id) = store_with("x", Tensor::zeros(&[3]));
        let mut tape = Tape::new();
        let x = tape.param(&store, id);
        let t = tape.tanh(x);
        let loss = tape.sum(t);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(id).data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let (mut store, id) = store_with("x", Tensor::zeros(&[3]));
        let mut tape = Tape::new();
        let x = tape.param(&store, id);
        assert!(matches!(
            tape.backward(x, &mut store),
            Err(Error::NonScalarLoss(_))
        ));
    }

    #[test]
    fn param_bound_once_per_tape() {
        let (store, id) = store_with("x", Tensor::scalar(1.0));
        let mut tape = Tape::new();
        let a = tape.param(&store, id);
        let b = tape.param(&store, id);
        assert_eq!(a, b);
        assert_eq!(tape.len(), 1);
    }

    #[test]
    fn scaled_loss_scales_gradients_exactly() {
        let (mut s1, id) = store_with("w", Tensor::vector(vec![0.3, -1.2, 2.0]));
        let mut s2 = s1.clone();
        for (store, scale) in [(&mut s1, 1.0), (&mut s2, 4.0)] {
            let mut tape = Tape::new();
            let w = tape.param(store, id);
            let e = tape.exp(w);
            let t = tape.tanh(e);
            let l = tape.sum(t);
            let l = tape.affine(l, scale, 0.0);
            tape.backward(l, store).unwrap();
        }
        for (a, b) in s1.grad(id).data().iter().zip(s2.grad(id).data()) {
            assert_eq!(4.0 * a, *b);
        }
    }
}
