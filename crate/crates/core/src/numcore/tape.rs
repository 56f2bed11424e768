//! Reverse-mode differentiation over a dynamically recorded operation list.
//!
//! Each forward pass records onto a fresh [`Tape`]. Node ids grow
//! monotonically, so recording order is already a topological order and the
//! backward sweep simply walks the node list in reverse.

use super::tensor::{gemm, Tensor};
use super::NumError;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var, usize),
    Sum(Var),
    Mean(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SelectRows(Var, Vec<usize>),
    Gather(Var, Vec<usize>),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::MulCol(a, b) => vec![*a, *b],
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Softmax(a, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::SliceCols(a, _)
            | Op::SelectRows(a, _)
            | Op::Gather(a, _) => vec![*a],
            Op::ConcatCols(v) | Op::ConcatRows(v) => v.clone(),
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation for one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    check_finite: bool,
    consumed: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `v`; zeros when `v` did not participate in the loss.
    pub fn get(&self, v: Var) -> Tensor {
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        match self.grads.get_mut(v.0).and_then(|g| g.take()) {
            Some(g) => g,
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }
}

fn grad_slot<'a>(grads: &'a mut [Option<Tensor>], v: Var, shape: &[usize]) -> &'a mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape))
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Tape that rejects any op producing NaN or ±Inf.
    pub fn with_finite_checks() -> Self {
        Tape { check_finite: true, ..Tape::default() }
    }

    pub fn set_check_finite(&mut self, on: bool) {
        self.check_finite = on;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Clears all recorded nodes so the tape can be reused.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.consumed = false;
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A constant copy of `v`; gradients do not flow through it.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.nodes[v.0].value.clone();
        self.constant(t)
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var, NumError> {
        if self.check_finite && !value.all_finite() {
            return Err(NumError::NonFinite { op: name });
        }
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let out = self.val(a).matmul(self.val(b))?;
        self.push(out, Op::MatMul(a, b), "matmul")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, NumError> {
        let out = self.val(a).transpose()?;
        self.push(out, Op::Transpose(a), "transpose")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let out = self.val(a).zip_map(self.val(b), |x, y| x + y)?;
        self.push(out, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let out = self.val(a).zip_map(self.val(b), |x, y| x - y)?;
        self.push(out, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let out = self.val(a).zip_map(self.val(b), |x, y| x * y)?;
        self.push(out, Op::Mul(a, b), "mul")
    }

    /// Adds a length-`m` row vector to every row of an `n×m` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var, NumError> {
        let xv = self.val(x);
        let rv = self.val(row);
        let (n, m) = xv.dims2()?;
        if rv.len() != m {
            return Err(NumError::shape("add_row", xv.shape(), rv.shape()));
        }
        let mut out = xv.clone();
        let r = rv.data();
        for i in 0..n {
            for (o, b) in out.data_mut()[i * m..(i + 1) * m].iter_mut().zip(r) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(x, row), "add_row")
    }

    /// Scales row `i` of an `n×m` matrix by `col[i]`.
    pub fn mul_col(&mut self, x: Var, col: Var) -> Result<Var, NumError> {
        let xv = self.val(x);
        let cv = self.val(col);
        let (n, m) = xv.dims2()?;
        if cv.len() != n {
            return Err(NumError::shape("mul_col", xv.shape(), cv.shape()));
        }
        let mut out = xv.clone();
        for i in 0..n {
            let s = cv.data()[i];
            for o in &mut out.data_mut()[i * m..(i + 1) * m] {
                *o *= s;
            }
        }
        self.push(out, Op::MulCol(x, col), "mul_col")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, NumError> {
        let out = self.val(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s), "scale")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NumError> {
        let out = self.val(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(out, Op::Relu(a), "relu")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, NumError> {
        let out = self.val(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a), "sigmoid")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, NumError> {
        let out = self.val(a).map(f64::tanh);
        self.push(out, Op::Tanh(a), "tanh")
    }

    /// Softmax of a matrix along `axis` (0 normalises columns, 1 rows).
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, NumError> {
        let out = softmax_axis(self.val(a), axis)?;
        self.push(out, Op::Softmax(a, axis), "softmax")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NumError> {
        let out = Tensor::scalar(self.val(a).sum());
        self.push(out, Op::Sum(a), "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, NumError> {
        let v = self.val(a);
        if v.is_empty() {
            return Err(NumError::Empty { op: "mean" });
        }
        let out = Tensor::scalar(v.sum() / v.len() as f64);
        self.push(out, Op::Mean(a), "mean")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumError> {
        let first = self.val(parts[0]);
        let n = first.rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let v = self.val(p);
            let (r, c) = v.dims2()?;
            if r != n {
                return Err(NumError::shape("concat_cols", first.shape(), v.shape()));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for i in 0..n {
            for &p in parts {
                data.extend_from_slice(self.val(p).row(i));
            }
        }
        let out = Tensor::new(vec![n, total], data)?;
        self.push(out, Op::ConcatCols(parts.to_vec()), "concat_cols")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumError> {
        let vals: Vec<Tensor> = parts.iter().map(|&p| self.val(p).clone()).collect();
        let out = Tensor::concat_rows(&vals)?;
        self.push(out, Op::ConcatRows(parts.to_vec()), "concat_rows")
    }

    /// Columns `start..start + width` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var, NumError> {
        let v = self.val(a);
        let (n, m) = v.dims2()?;
        if start + width > m {
            return Err(NumError::shape("slice_cols", v.shape(), &[start, width]));
        }
        let mut data = Vec::with_capacity(n * width);
        for i in 0..n {
            data.extend_from_slice(&v.data()[i * m + start..i * m + start + width]);
        }
        let out = Tensor::new(vec![n, width], data)?;
        self.push(out, Op::SliceCols(a, start), "slice_cols")
    }

    pub fn select_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var, NumError> {
        let v = self.val(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= v.rows()) {
            return Err(NumError::Index { index: bad, len: v.rows() });
        }
        let out = v.select_rows(idx);
        self.push(out, Op::SelectRows(a, idx.to_vec()), "select_rows")
    }

    /// Picks column `idx[i]` from row `i`, giving an `n×1` column.
    pub fn gather(&mut self, a: Var, idx: &[usize]) -> Result<Var, NumError> {
        let v = self.val(a);
        let (n, m) = v.dims2()?;
        if idx.len() != n {
            return Err(NumError::shape("gather", v.shape(), &[idx.len()]));
        }
        let mut data = Vec::with_capacity(n);
        for (i, &j) in idx.iter().enumerate() {
            if j >= m {
                return Err(NumError::Index { index: j, len: m });
            }
            data.push(v.data()[i * m + j]);
        }
        let out = Tensor::new(vec![n, 1], data)?;
        self.push(out, Op::Gather(a, idx.to_vec()), "gather")
    }

    /// Accumulates d(loss)/d(node) for every node that requires a gradient.
    ///
    /// A tape may be differentiated once; call [`Tape::reset`] before reuse.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, NumError> {
        if self.consumed {
            return Err(NumError::BackwardTwice);
        }
        let lv = &self.nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(NumError::NonScalarLoss { shape: lv.shape().to_vec() });
        }
        self.consumed = true;

        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            for input in node.op.inputs() {
                if input.0 >= id {
                    return Err(NumError::CyclicTape);
                }
            }
            self.backprop_node(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }

        let shapes = self.nodes.iter().map(|nd| nd.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn backprop_node(
        &self,
        id: usize,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<(), NumError> {
        let node = &self.nodes[id];
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let shape_of = |v: Var| self.nodes[v.0].value.shape().to_vec();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = self.val(*a);
                let bv = self.val(*b);
                let (n, k) = av.dims2()?;
                let (_, m) = bv.dims2()?;
                if needs(*a) {
                    let slot = grad_slot(grads, *a, av.shape());
                    // dA = dC · Bᵀ
                    gemm(n, m, k, g.data(), false, bv.data(), true, slot.data_mut(), 1.0);
                }
                if needs(*b) {
                    let slot = grad_slot(grads, *b, bv.shape());
                    // dB = Aᵀ · dC
                    gemm(k, n, m, av.data(), true, g.data(), false, slot.data_mut(), 1.0);
                }
            }
            Op::Transpose(a) => {
                if needs(*a) {
                    let gt = g.transpose()?;
                    grad_slot(grads, *a, &shape_of(*a)).add_assign(&gt)?;
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if needs(v) {
                        grad_slot(grads, v, &shape_of(v)).add_assign(g)?;
                    }
                }
            }
            Op::Sub(a, b) => {
                if needs(*a) {
                    grad_slot(grads, *a, &shape_of(*a)).add_assign(g)?;
                }
                if needs(*b) {
                    let slot = grad_slot(grads, *b, &shape_of(*b));
                    for (s, d) in slot.data_mut().iter_mut().zip(g.data()) {
                        *s -= d;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                if needs(*a) {
                    let slot = grad_slot(grads, *a, av.shape());
                    for ((s, d), y) in slot.data_mut().iter_mut().zip(g.data()).zip(bv.data()) {
                        *s += d * y;
                    }
                }
                if needs(*b) {
                    let slot = grad_slot(grads, *b, bv.shape());
                    for ((s, d), x) in slot.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                        *s += d * x;
                    }
                }
            }
            Op::AddRow(x, row) => {
                if needs(*x) {
                    grad_slot(grads, *x, &shape_of(*x)).add_assign(g)?;
                }
                if needs(*row) {
                    let (n, m) = g.dims2()?;
                    let slot = grad_slot(grads, *row, &shape_of(*row));
                    let s = slot.data_mut();
                    for i in 0..n {
                        for j in 0..m {
                            s[j] += g.data()[i * m + j];
                        }
                    }
                }
            }
            Op::MulCol(x, col) => {
                let xv = self.val(*x);
                let cv = self.val(*col);
                let (n, m) = xv.dims2()?;
                if needs(*x) {
                    let slot = grad_slot(grads, *x, xv.shape());
                    let s = slot.data_mut();
                    for i in 0..n {
                        let c = cv.data()[i];
                        for j in 0..m {
                            s[i * m + j] += g.data()[i * m + j] * c;
                        }
                    }
                }
                if needs(*col) {
                    let slot = grad_slot(grads, *col, cv.shape());
                    let s = slot.data_mut();
                    for i in 0..n {
                        let mut acc = 0.0;
                        for j in 0..m {
                            acc += g.data()[i * m + j] * xv.data()[i * m + j];
                        }
                        s[i] += acc;
                    }
                }
            }
            Op::Scale(a, k) => {
                if needs(*a) {
                    let slot = grad_slot(grads, *a, &shape_of(*a));
                    for (s, d) in slot.data_mut().iter_mut().zip(g.data()) {
                        *s += d * k;
                    }
                }
            }
            Op::Relu(a) => {
                if needs(*a) {
                    let xv = self.val(*a);
                    let slot = grad_slot(grads, *a, xv.shape());
                    for ((s, d), x) in slot.data_mut().iter_mut().zip(g.data()).zip(xv.data()) {
                        if *x > 0.0 {
                            *s += d;
                        }
                    }
                }
            }
            Op::Sigmoid(a) | Op::Tanh(a) => {
                if needs(*a) {
                    let yv = &node.value;
                    let is_sig = matches!(node.op, Op::Sigmoid(_));
                    let slot = grad_slot(grads, *a, yv.shape());
                    for ((s, d), y) in slot.data_mut().iter_mut().zip(g.data()).zip(yv.data()) {
                        let dy = if is_sig { y * (1.0 - y) } else { 1.0 - y * y };
                        *s += d * dy;
                    }
                }
            }
            Op::Softmax(a, axis) => {
                if needs(*a) {
                    let y = &node.value;
                    let (n, m) = y.dims2()?;
                    let slot = grad_slot(grads, *a, y.shape());
                    let s = slot.data_mut();
                    let (outer, inner, idx): (usize, usize, fn(usize, usize, usize, usize) -> usize) =
                        if *axis == 1 {
                            (n, m, |o, i, _n, m| o * m + i)
                        } else {
                            (m, n, |o, i, _n, m| i * m + o)
                        };
                    for o in 0..outer {
                        let mut dot = 0.0;
                        for i in 0..inner {
                            let k = idx(o, i, n, m);
                            dot += g.data()[k] * y.data()[k];
                        }
                        for i in 0..inner {
                            let k = idx(o, i, n, m);
                            s[k] += y.data()[k] * (g.data()[k] - dot);
                        }
                    }
                }
            }
            Op::Sum(a) | Op::Mean(a) => {
                if needs(*a) {
                    let shape = shape_of(*a);
                    let len: usize = shape.iter().product();
                    let d = if matches!(node.op, Op::Mean(_)) {
                        g.data()[0] / len as f64
                    } else {
                        g.data()[0]
                    };
                    for s in grad_slot(grads, *a, &shape).data_mut() {
                        *s += d;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let (n, total) = g.dims2()?;
                let mut offset = 0;
                for &p in parts {
                    let w = self.val(p).cols();
                    if needs(p) {
                        let slot = grad_slot(grads, p, &shape_of(p));
                        let s = slot.data_mut();
                        for i in 0..n {
                            for j in 0..w {
                                s[i * w + j] += g.data()[i * total + offset + j];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.val(p).len();
                    if needs(p) {
                        let slot = grad_slot(grads, p, &shape_of(p));
                        for (s, d) in slot.data_mut().iter_mut().zip(&g.data()[offset..offset + len]) {
                            *s += d;
                        }
                    }
                    offset += len;
                }
            }
            Op::SliceCols(a, start) => {
                if needs(*a) {
                    let (n, w) = g.dims2()?;
                    let m = self.val(*a).cols();
                    let slot = grad_slot(grads, *a, &shape_of(*a));
                    let s = slot.data_mut();
                    for i in 0..n {
                        for j in 0..w {
                            s[i * m + start + j] += g.data()[i * w + j];
                        }
                    }
                }
            }
            Op::SelectRows(a, idx) => {
                if needs(*a) {
                    let m = g.cols();
                    let slot = grad_slot(grads, *a, &shape_of(*a));
                    let s = slot.data_mut();
                    for (r, &src) in idx.iter().enumerate() {
                        for j in 0..m {
                            s[src * m + j] += g.data()[r * m + j];
                        }
                    }
                }
            }
            Op::Gather(a, idx) => {
                if needs(*a) {
                    let m = self.val(*a).cols();
                    let slot = grad_slot(grads, *a, &shape_of(*a));
                    let s = slot.data_mut();
                    for (r, &j) in idx.iter().enumerate() {
                        s[r * m + j] += g.data()[r];
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax along `axis` of a 2-D tensor (1-D treated as a column).
pub fn softmax_axis(x: &Tensor, axis: usize) -> Result<Tensor, NumError> {
    let (n, m) = x.dims2()?;
    if axis > 1 {
        return Err(NumError::Axis { axis });
    }
    let mut out = x.clone();
    let d = out.data_mut();
    let (outer, inner) = if axis == 1 { (n, m) } else { (m, n) };
    let at = |o: usize, i: usize| if axis == 1 { o * m + i } else { i * m + o };
    for o in 0..outer {
        let mut mx = f64::NEG_INFINITY;
        for i in 0..inner {
            mx = mx.max(d[at(o, i)]);
        }
        let mut z = 0.0;
        for i in 0..inner {
            let e = (d[at(o, i)] - mx).exp();
            d[at(o, i)] = e;
            z += e;
        }
        for i in 0..inner {
            d[at(o, i)] /= z;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).data(), &[6.0]);
    }

    #[test]
    fn detached_input_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(2.0));
        let d = tape.detach(x);
        let y = tape.mul(d, d).unwrap();
        let z = tape.add(y, x).unwrap();
        let g = tape.backward(z).unwrap();
        assert_eq!(g.get(x).data(), &[1.0]);
        assert_eq!(g.get(d).data(), &[0.0]);
    }

    #[test]
    fn non_participating_leaf_is_zero() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(2.0));
        let unused = tape.param(Tensor::from_rows(&[[1.0, 2.0]]));
        let y = tape.scale(x, 4.0).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(unused), Tensor::zeros(&[1, 2]));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::zeros(&[2, 2]));
        assert!(matches!(tape.backward(x), Err(NumError::NonScalarLoss { .. })));
    }

    #[test]
    fn second_backward_without_reset_is_error() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(1.0));
        let y = tape.mul(x, x).unwrap();
        tape.backward(y).unwrap();
        assert!(matches!(tape.backward(y), Err(NumError::BackwardTwice)));
        tape.reset();
        let x = tape.param(Tensor::scalar(1.0));
        let y = tape.mul(x, x).unwrap();
        assert!(tape.backward(y).is_ok());
    }

    #[test]
    fn relu_values() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row_vector(&[-2.0, 3.0]));
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 3.0]);
    }

    #[test]
    fn softmax_closed_forms() {
        let s = softmax_axis(&Tensor::row_vector(&[0.0, 0.0]), 1).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax_axis(&Tensor::row_vector(&[2f64.ln(), 0.0]), 1).unwrap();
        assert!((s.data()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.data()[1] - 1.0 / 3.0).abs() < 1e-15);
        let c = softmax_axis(&Tensor::column_vector(&[2f64.ln(), 0.0]), 0).unwrap();
        assert!((c.data()[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn finite_checks_flag_overflow() {
        let mut tape = Tape::with_finite_checks();
        let x = tape.constant(Tensor::scalar(f64::MAX));
        assert!(matches!(tape.scale(x, 10.0), Err(NumError::NonFinite { .. })));
        let mut lax = Tape::new();
        let x = lax.constant(Tensor::scalar(f64::MAX));
        assert!(lax.scale(x, 10.0).is_ok());
    }

    #[test]
    fn select_rows_scatters_duplicates() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
        let s = tape.select_rows(x, &[1, 1, 0]).unwrap();
        let l = tape.sum(s).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(x).data(), &[1.0, 1.0, 2.0, 2.0]);
    }
}
