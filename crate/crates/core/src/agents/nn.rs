//! Dense networks and reverse-mode differentiation.
//!
//! The building blocks here are deliberately small: a [`Mat`] alias over the
//! row-major [`Grid`](crate::grid::Grid), a [`Tape`] arena that records
//! elementary operations and replays them backwards to accumulate gradients,
//! a multilayer perceptron ([`Mlp`]) that can run either detached (plain
//! `forward`) or on a tape (`forward_on`), and an [`Adam`] optimizer.
//!
//! Rows index batch samples throughout; columns index features.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grid::Grid;

/// Matrix of doubles. Rows are batch samples, columns are features.
pub type Mat = Grid<f64>;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// `ln(2*pi)`, used by Gaussian log-densities.
pub fn ln_two_pi() -> f64 {
    LN_2PI
}

/// All-zeros matrix of the given shape.
pub fn mat_zeros(rows: usize, cols: usize) -> Mat {
    Grid::filled(rows, cols, 0.0)
}

fn zeros_like(m: &Mat) -> Mat {
    mat_zeros(m.rows(), m.cols())
}

/// Dense product `a * b`.
pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols(), b.rows(), "matmul: inner dimensions differ");
    let mut c = mat_zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        let arow = a.row(i);
        for (k, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let brow = b.row(k);
            let crow = c.row_mut(i);
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aik * bv;
            }
        }
    }
    c
}

/// Product `a * b^T` without materializing the transpose.
fn matmul_nt(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols(), b.cols(), "matmul_nt: inner dimensions differ");
    let mut c = mat_zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        let arow = a.row(i);
        let crow = c.row_mut(i);
        for (cv, j) in crow.iter_mut().zip(0..b.rows()) {
            let brow = b.row(j);
            let mut acc = 0.0;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *cv += acc;
        }
    }
    c
}

/// Product `a^T * b` without materializing the transpose.
fn matmul_tn(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.rows(), b.rows(), "matmul_tn: inner dimensions differ");
    let mut c = mat_zeros(a.cols(), b.cols());
    for k in 0..a.rows() {
        let arow = a.row(k);
        let brow = b.row(k);
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let crow = c.row_mut(i);
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

fn add_assign(dst: &mut Mat, src: &Mat) {
    assert_eq!(dst.rows(), src.rows());
    assert_eq!(dst.cols(), src.cols());
    for (d, s) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
        *d += s;
    }
}

fn sub_assign(dst: &mut Mat, src: &Mat) {
    assert_eq!(dst.rows(), src.rows());
    assert_eq!(dst.cols(), src.cols());
    for (d, s) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
        *d -= s;
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// Broadcast-add a `1 x n` row vector to every row.
    AddRowVec(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    MulElem(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Exp(NodeId),
    Softplus(NodeId),
    Clamp(NodeId, f64, f64),
    MinElem(NodeId, NodeId),
    MeanAll(NodeId),
    RowSum(NodeId),
    ConcatCols(NodeId, NodeId),
    SliceCols(NodeId, usize),
}

/// Arena that records a computation so it can be differentiated in reverse.
///
/// Every method panics on a shape mismatch: shapes are static properties of
/// the network code, so a mismatch is a programming error rather than a
/// runtime condition.
#[derive(Debug, Default)]
pub struct Tape {
    ops: Vec<Op>,
    values: Vec<Mat>,
}

impl Tape {
    /// Empty tape.
    pub fn new() -> Tape {
        Tape::default()
    }

    fn push(&mut self, op: Op, value: Mat) -> NodeId {
        self.ops.push(op);
        self.values.push(value);
        NodeId(self.ops.len() - 1)
    }

    /// Record an input (constant or parameter) node.
    pub fn leaf(&mut self, value: Mat) -> NodeId {
        self.push(Op::Leaf, value)
    }

    /// Forward value of a node.
    pub fn value(&self, id: NodeId) -> &Mat {
        &self.values[id.0]
    }

    /// Forward value of a `1 x 1` node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert!(v.rows() == 1 && v.cols() == 1, "scalar: node is {}x{}", v.rows(), v.cols());
        v[(0, 0)]
    }

    /// Matrix product.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matmul(self.value(a), self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    /// Add a `1 x n` row vector to every row of an `m x n` matrix.
    pub fn add_row_vec(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let (xv, bv) = (self.value(x), self.value(bias));
        assert_eq!(bv.rows(), 1, "add_row_vec: bias must be a row vector");
        assert_eq!(xv.cols(), bv.cols(), "add_row_vec: column mismatch");
        let mut v = xv.clone();
        for i in 0..v.rows() {
            for (e, b) in v.row_mut(i).iter_mut().zip(bv.row(0)) {
                *e += b;
            }
        }
        self.push(Op::AddRowVec(x, bias), v)
    }

    fn binary_same_shape(&self, a: NodeId, b: NodeId, name: &str) {
        let (av, bv) = (self.value(a), self.value(b));
        assert!(
            av.rows() == bv.rows() && av.cols() == bv.cols(),
            "{name}: shape mismatch {}x{} vs {}x{}",
            av.rows(),
            av.cols(),
            bv.rows(),
            bv.cols()
        );
    }

    /// Elementwise sum.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_same_shape(a, b, "add");
        let mut v = self.value(a).clone();
        add_assign(&mut v, self.value(b));
        self.push(Op::Add(a, b), v)
    }

    /// Elementwise difference `a - b`.
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_same_shape(a, b, "sub");
        let mut v = self.value(a).clone();
        sub_assign(&mut v, self.value(b));
        self.push(Op::Sub(a, b), v)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_same_shape(a, b, "mul_elem");
        let mut v = self.value(a).clone();
        for (e, s) in v.as_mut_slice().iter_mut().zip(self.values[b.0].as_slice()) {
            *e *= s;
        }
        self.push(Op::MulElem(a, b), v)
    }

    /// Multiply every element by a constant.
    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let mut v = self.value(a).clone();
        for e in v.as_mut_slice() {
            *e *= factor;
        }
        self.push(Op::Scale(a, factor), v)
    }

    /// Add a constant to every element.
    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let mut v = self.value(a).clone();
        for e in v.as_mut_slice() {
            *e += c;
        }
        self.push(Op::AddScalar(a), v)
    }

    fn unary_map(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let mut v = self.value(a).clone();
        for e in v.as_mut_slice() {
            *e = f(*e);
        }
        self.push(op, v)
    }

    /// Elementwise hyperbolic tangent.
    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary_map(a, Op::Tanh(a), f64::tanh)
    }

    /// Elementwise rectifier `max(x, 0)`.
    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary_map(a, Op::Relu(a), |x| x.max(0.0))
    }

    /// Elementwise exponential.
    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary_map(a, Op::Exp(a), f64::exp)
    }

    /// Elementwise stable softplus `ln(1 + e^x)`.
    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.unary_map(a, Op::Softplus(a), softplus)
    }

    /// Elementwise clamp into `[lo, hi]`. Gradient passes inside the bounds.
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        assert!(lo <= hi, "clamp: lo > hi");
        self.unary_map(a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    /// Elementwise minimum; ties send the gradient to the first argument.
    pub fn min_elem(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary_same_shape(a, b, "min_elem");
        let mut v = self.value(a).clone();
        for (e, s) in v.as_mut_slice().iter_mut().zip(self.values[b.0].as_slice()) {
            *e = e.min(*s);
        }
        self.push(Op::MinElem(a, b), v)
    }

    /// Mean over all elements, as a `1 x 1` matrix.
    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let n = (v.rows() * v.cols()) as f64;
        let mut acc = 0.0;
        for e in v.as_slice() {
            acc += e;
        }
        let m = Grid::filled(1, 1, acc / n);
        self.push(Op::MeanAll(a), m)
    }

    /// Per-row sum: `m x n` collapses to `m x 1`.
    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let mut out = mat_zeros(v.rows(), 1);
        for i in 0..v.rows() {
            out[(i, 0)] = v.row(i).iter().sum();
        }
        self.push(Op::RowSum(a), out)
    }

    /// Concatenate two matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.rows(), bv.rows(), "concat_cols: row mismatch");
        let mut out = mat_zeros(av.rows(), av.cols() + bv.cols());
        for i in 0..av.rows() {
            let row = out.row_mut(i);
            row[..av.cols()].copy_from_slice(av.row(i));
            row[av.cols()..].copy_from_slice(bv.row(i));
        }
        self.push(Op::ConcatCols(a, b), out)
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> NodeId {
        let v = self.value(a);
        assert!(start <= end && end <= v.cols(), "slice_cols: bad range");
        let mut out = mat_zeros(v.rows(), end - start);
        for i in 0..v.rows() {
            out.row_mut(i).copy_from_slice(&v.row(i)[start..end]);
        }
        self.push(Op::SliceCols(a, start), out)
    }

    /// Reverse pass from a `1 x 1` root; returns one gradient per node.
    ///
    /// Gradients of nodes that feed the root through several paths accumulate.
    pub fn backward(&self, root: NodeId) -> Gradients {
        {
            let r = self.value(root);
            assert!(r.rows() == 1 && r.cols() == 1, "backward: root must be 1x1");
        }
        let mut grads: Vec<Mat> = self.values.iter().map(zeros_like).collect();
        grads[root.0][(0, 0)] = 1.0;
        for i in (0..self.ops.len()).rev() {
            let g = grads[i].clone();
            if g.as_slice().iter().all(|&x| x == 0.0) {
                continue;
            }
            match self.ops[i] {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = matmul_nt(&g, &self.values[b.0]);
                    let db = matmul_tn(&self.values[a.0], &g);
                    add_assign(&mut grads[a.0], &da);
                    add_assign(&mut grads[b.0], &db);
                }
                Op::AddRowVec(x, bias) => {
                    add_assign(&mut grads[x.0], &g);
                    let gb = &mut grads[bias.0];
                    for r in 0..g.rows() {
                        for (e, gv) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                            *e += gv;
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_assign(&mut grads[a.0], &g);
                    add_assign(&mut grads[b.0], &g);
                }
                Op::Sub(a, b) => {
                    add_assign(&mut grads[a.0], &g);
                    sub_assign(&mut grads[b.0], &g);
                }
                Op::MulElem(a, b) => {
                    let (av, bv) = (&self.values[a.0], &self.values[b.0]);
                    for (idx, gv) in g.as_slice().iter().enumerate() {
                        grads[a.0].as_mut_slice()[idx] += gv * bv.as_slice()[idx];
                    }
                    for (idx, gv) in g.as_slice().iter().enumerate() {
                        grads[b.0].as_mut_slice()[idx] += gv * av.as_slice()[idx];
                    }
                }
                Op::Scale(a, factor) => {
                    for (idx, gv) in g.as_slice().iter().enumerate() {
                        grads[a.0].as_mut_slice()[idx] += gv * factor;
                    }
                }
                Op::AddScalar(a) => add_assign(&mut grads[a.0], &g),
                Op::Tanh(a) => {
                    let out = &self.values[i];
                    for (idx, gv) in g.as_slice().iter().enumerate() {
                        let t = out.as_slice()[idx];
                        grads[a.0].as_mut_slice()[idx] += gv * (1.0 - t * t);
                    }
                }
                Op::Relu(a) => {
                    let inp = &self.values[a.0];
                    for (idx, gv) in g.as_slice().iter().enumerate() {
                        if inp.as_slice()[idx] > 0.0 {
                            grads[a.0].as_mut_slice()[idx] += gv;
                        }
                    }
                }
                Op::Exp(a) => {
                    let out = &self.values[i];
                    for (idx, gv) in g.as_slice().iter().enumerate() {
                        grads[a.0].as_mut_slice()[idx] += gv * out.as_slice()[idx];
                    }
                }
                Op::Softplus(a) => {
                    let inp = &self.values[a.0];
                    for (idx, gv) in g.as_slice().iter().enumerate() {
                        grads[a.0].as_mut_slice()[idx] += gv * sigmoid(inp.as_slice()[idx]);
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    let inp = &self.values[a.0];
                    for (idx, gv) in g.as_slice().iter().enumerate() {
                        let x = inp.as_slice()[idx];
                        if x >= lo && x <= hi {
                            grads[a.0].as_mut_slice()[idx] += gv;
                        }
                    }
                }
                Op::MinElem(a, b) => {
                    let (av, bv) = (&self.values[a.0], &self.values[b.0]);
                    for (idx, gv) in g.as_slice().iter().enumerate() {
                        if av.as_slice()[idx] <= bv.as_slice()[idx] {
                            grads[a.0].as_mut_slice()[idx] += gv;
                        } else {
                            grads[b.0].as_mut_slice()[idx] += gv;
                        }
                    }
                }
                Op::MeanAll(a) => {
                    let gv = g[(0, 0)];
                    let n = grads[a.0].as_slice().len() as f64;
                    for e in grads[a.0].as_mut_slice() {
                        *e += gv / n;
                    }
                }
                Op::RowSum(a) => {
                    let ga = &mut grads[a.0];
                    for r in 0..ga.rows() {
                        let gv = g[(r, 0)];
                        for e in ga.row_mut(r) {
                            *e += gv;
                        }
                    }
                }
                Op::ConcatCols(a, b) => {
                    let ac = grads[a.0].cols();
                    for r in 0..g.rows() {
                        for (c, gv) in g.row(r).iter().enumerate() {
                            if c < ac {
                                grads[a.0][(r, c)] += gv;
                            } else {
                                grads[b.0][(r, c - ac)] += gv;
                            }
                        }
                    }
                }
                Op::SliceCols(a, start) => {
                    for r in 0..g.rows() {
                        for (c, gv) in g.row(r).iter().enumerate() {
                            grads[a.0][(r, start + c)] += gv;
                        }
                    }
                }
            }
        }
        Gradients { grads }
    }
}

/// Result of a reverse pass: one gradient matrix per tape node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Mat>,
}

impl Gradients {
    /// Gradient of the root with respect to the given node.
    pub fn get(&self, id: NodeId) -> &Mat {
        &self.grads[id.0]
    }
}

/// Hidden-layer nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// Rectified linear unit.
    Relu,
    /// Hyperbolic tangent.
    Tanh,
}

/// Architecture of a fully connected network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input feature count.
    pub inputs: usize,
    /// Hidden layer widths, in order.
    pub hidden: Vec<usize>,
    /// Output feature count.
    pub outputs: usize,
    /// Nonlinearity applied after every layer except the last.
    pub activation: Activation,
}

impl MlpSpec {
    /// Layer widths including input and output.
    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.inputs);
        w.extend_from_slice(&self.hidden);
        w.push(self.outputs);
        w
    }
}

/// Fully connected network with per-layer weights and biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    spec: MlpSpec,
    weights: Vec<Mat>,
    biases: Vec<Mat>,
}

impl Mlp {
    /// Initialize with Xavier-uniform weights and zero biases.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Mlp {
        assert!(spec.inputs > 0 && spec.outputs > 0, "mlp: zero-width layer");
        assert!(spec.hidden.iter().all(|&h| h > 0), "mlp: zero-width hidden layer");
        let widths = spec.widths();
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut w = mat_zeros(fan_in, fan_out);
            for e in w.as_mut_slice() {
                *e = (rng.gen::<f64>() * 2.0 - 1.0) * limit;
            }
            weights.push(w);
            biases.push(mat_zeros(1, fan_out));
        }
        Mlp { spec, weights, biases }
    }

    /// Architecture of this network.
    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    /// Detached forward pass (no gradient bookkeeping).
    pub fn forward(&self, x: &Mat) -> Mat {
        assert_eq!(x.cols(), self.spec.inputs, "forward: input width mismatch");
        let last = self.weights.len() - 1;
        let mut h = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = matmul(&h, w);
            for i in 0..z.rows() {
                for (e, bv) in z.row_mut(i).iter_mut().zip(b.row(0)) {
                    *e += bv;
                }
            }
            if l < last {
                for e in z.as_mut_slice() {
                    *e = match self.spec.activation {
                        Activation::Relu => e.max(0.0),
                        Activation::Tanh => e.tanh(),
                    };
                }
            }
            h = z;
        }
        h
    }

    /// Parameters in a fixed order: `w0, b0, w1, b1, ...`.
    pub fn params(&self) -> Vec<&Mat> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w);
            out.push(b);
        }
        out
    }

    /// Mutable parameters in the same order as [`Mlp::params`].
    pub fn params_mut(&mut self) -> Vec<&mut Mat> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        out
    }

    /// Record every parameter as a tape leaf, in [`Mlp::params`] order.
    pub fn register(&self, tape: &mut Tape) -> Vec<NodeId> {
        self.params().into_iter().map(|p| tape.leaf(p.clone())).collect()
    }

    /// Forward pass on a tape using previously registered parameter leaves.
    pub fn forward_on(&self, tape: &mut Tape, x: NodeId, params: &[NodeId]) -> NodeId {
        assert_eq!(params.len(), 2 * self.weights.len(), "forward_on: wrong parameter count");
        let last = self.weights.len() - 1;
        let mut h = x;
        for l in 0..self.weights.len() {
            let z = tape.matmul(h, params[2 * l]);
            let z = tape.add_row_vec(z, params[2 * l + 1]);
            h = if l < last {
                match self.spec.activation {
                    Activation::Relu => tape.relu(z),
                    Activation::Tanh => tape.tanh(z),
                }
            } else {
                z
            };
        }
        h
    }

    /// Overwrite parameters from gradients scaled by a fixed step (plain SGD).
    #[cfg(test)]
    fn sgd_step(&mut self, grads: &[&Mat], lr: f64) {
        for (p, g) in self.params_mut().into_iter().zip(grads) {
            for (pv, gv) in p.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *pv -= lr * gv;
            }
        }
    }

    /// Polyak average `self = tau * source + (1 - tau) * self`.
    pub fn polyak_from(&mut self, source: &Mlp, tau: f64) {
        assert_eq!(self.spec, source.spec, "polyak_from: architecture mismatch");
        for (p, s) in self.params_mut().into_iter().zip(source.params()) {
            for (pv, sv) in p.as_mut_slice().iter_mut().zip(s.as_slice()) {
                *pv = tau * sv + (1.0 - tau) * *pv;
            }
        }
    }
}

/// Adam optimizer state for a fixed list of parameter tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    /// Step size.
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    /// Fresh optimizer with standard moment decay rates (0.9, 0.999).
    pub fn new(lr: f64, shapes: &[&Mat]) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.iter().map(|s| zeros_like(s)).collect(),
            v: shapes.iter().map(|s| zeros_like(s)).collect(),
        }
    }

    /// One update in place. `params` and `grads` must match the construction
    /// shapes in order.
    pub fn step(&mut self, params: &mut [&mut Mat], grads: &[&Mat]) {
        assert_eq!(params.len(), self.m.len(), "adam: parameter count mismatch");
        assert_eq!(grads.len(), self.m.len(), "adam: gradient count mismatch");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for idx in 0..p.as_slice().len() {
                let gv = g.as_slice()[idx];
                let mv = &mut m.as_mut_slice()[idx];
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                let vv = &mut v.as_mut_slice()[idx];
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                p.as_mut_slice()[idx] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}
