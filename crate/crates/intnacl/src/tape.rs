//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! A [`Tape`] is an arena of nodes in topological order: every operation
//! pushes one node whose parents already sit at lower indices. Calling
//! [`Tape::backward`] on a tracked scalar root replays the record once in
//! reverse, accumulating vector-Jacobian products into each tracked
//! ancestor. Nodes created from untracked operands stay untracked and are
//! skipped during the sweep.
//!
//! The primitive set is exactly what the losses and attacks in this crate
//! need: matrix products, elementwise arithmetic, exp/log, rectifier, tanh,
//! reductions, row gathers, row-wise dot products and row-wise L2
//! normalization. There is no broadcasting beyond a constant scalar against
//! a tensor; batch math is written with explicit shapes on purpose, so that
//! every gradient path stays auditable.
//!
//! [`finite_diff_grad`] is the testing oracle: a central-difference gradient
//! that knows nothing about the tape. The invariant suites check every
//! primitive and every composed loss against it.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`]. Cheap to copy; only meaningful for the
/// tape that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `[r,k] @ [k,c] -> [r,c]`
    MatMul(Var, Var),
    /// `[r,k] @ transpose([c,k]) -> [r,c]`; avoids materializing transposes.
    MatMulBT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    /// `[r,c] + [c]`, the bias pattern of a linear layer.
    AddBias(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Exp(Var),
    Log(Var),
    Relu(Var),
    Tanh(Var),
    /// Elementwise `max(x, c)`; gradient passes where `x >= c`.
    MaxConst(Var, f64),
    Sum(Var),
    Mean(Var),
    /// `[r,c] -> [r]`
    RowSum(Var),
    /// `([r,c], [r,c]) -> [r]`
    RowDot(Var, Var),
    /// Rows scaled to unit L2 norm; a zero row is an error at forward time.
    NormalizeRows(Var),
    /// Row gather; duplicate indices are allowed and accumulate in reverse.
    Gather(Var, Vec<usize>),
    /// Same data, new shape with equal element count.
    Reshape(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
    grad: Option<Vec<f64>>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

// C += A[r,k] * B[k,c]
fn mm_acc(a: &[f64], r: usize, k: usize, b: &[f64], c: usize, out: &mut [f64]) {
    for i in 0..r {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * c..(i + 1) * c];
        for (p, &aip) in arow.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * c..(p + 1) * c];
            for j in 0..c {
                orow[j] += aip * brow[j];
            }
        }
    }
}

// C += A[r,k] * transpose(B[c,k])
fn mm_bt_acc(a: &[f64], r: usize, k: usize, b: &[f64], c: usize, out: &mut [f64]) {
    for i in 0..r {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * c..(i + 1) * c];
        for j in 0..c {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for p in 0..k {
                s += arow[p] * brow[p];
            }
            orow[j] += s;
        }
    }
}

// C += transpose(A[r,k]) * B[r,c]
fn mm_ta_acc(a: &[f64], r: usize, k: usize, b: &[f64], c: usize, out: &mut [f64]) {
    for i in 0..r {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * c..(i + 1) * c];
        for (p, &aip) in arow.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let orow = &mut out[p * c..(p + 1) * c];
            for j in 0..c {
                orow[j] += aip * brow[j];
            }
        }
    }
}

fn dims2(t: &Tensor) -> (usize, usize) {
    match t.shape() {
        [r, c] => (*r, *c),
        [n] => (1, *n),
        _ => (1, 1),
    }
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

    /// Tracked input: participates in backward and receives a gradient.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Untracked input: a constant. Results computed only from constants stay
    /// untracked and cost nothing in the reverse sweep.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            tracked,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last backward pass, shaped like the value. `None`
    /// before backward or for untracked nodes.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let node = &self.nodes[v.0];
        node.grad.as_ref().map(|g| {
            Tensor::from_vec(node.value.shape().to_vec(), g.clone())
                .expect("gradient shape always matches value shape")
        })
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn binary_same_shape(&mut self, name: &'static str, a: Var, b: Var, op: Op) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(Error::ShapeMismatch {
                op: name,
                left: va.shape().to_vec(),
                right: vb.shape().to_vec(),
            });
        }
        let data: Vec<f64> = match &op {
            Op::Add(..) => va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect(),
            Op::Sub(..) => va.data().iter().zip(vb.data()).map(|(x, y)| x - y).collect(),
            Op::Mul(..) => va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect(),
            Op::Div(..) => va.data().iter().zip(vb.data()).map(|(x, y)| x / y).collect(),
            _ => unreachable!(),
        };
        let value = Tensor::from_vec(va.shape().to_vec(), data)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, op, tracked))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("add", a, b, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("sub", a, b, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("mul", a, b, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("div", a, b, Op::Div(a, b))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ka) = dims2(self.value(a));
        let (kb, cb) = dims2(self.value(b));
        if ka != kb || self.value(a).shape().len() != 2 || self.value(b).shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.value(a).shape().to_vec(),
                right: self.value(b).shape().to_vec(),
            });
        }
        let mut out = vec![0.0; ra * cb];
        mm_acc(self.value(a).data(), ra, ka, self.value(b).data(), cb, &mut out);
        let value = Tensor::from_vec(vec![ra, cb], out)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::MatMul(a, b), tracked))
    }

    /// `a @ transpose(b)`, with `a: [r,k]` and `b: [c,k]`. This is the score
    /// grid builder: rows of `a` dotted against rows of `b`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ka) = dims2(self.value(a));
        let (cb, kb) = dims2(self.value(b));
        if ka != kb || self.value(a).shape().len() != 2 || self.value(b).shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "matmul_bt",
                left: self.value(a).shape().to_vec(),
                right: self.value(b).shape().to_vec(),
            });
        }
        let mut out = vec![0.0; ra * cb];
        mm_bt_acc(self.value(a).data(), ra, ka, self.value(b).data(), cb, &mut out);
        let value = Tensor::from_vec(vec![ra, cb], out)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::MatMulBT(a, b), tracked))
    }

    pub fn add_bias(&mut self, m: Var, bias: Var) -> Result<Var> {
        let (r, c) = dims2(self.value(m));
        let bt = self.value(bias);
        if self.value(m).shape().len() != 2 || bt.shape() != [c] {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                left: self.value(m).shape().to_vec(),
                right: bt.shape().to_vec(),
            });
        }
        let mut data = self.value(m).data().to_vec();
        let b = self.value(bias).data();
        for i in 0..r {
            for j in 0..c {
                data[i * c + j] += b[j];
            }
        }
        let value = Tensor::from_vec(vec![r, c], data)?;
        let tracked = self.tracked(m) || self.tracked(bias);
        Ok(self.push(value, Op::AddBias(m, bias), tracked))
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let va = &self.nodes[a.0].value;
        let data = va.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::from_vec(va.shape().to_vec(), data).expect("shape preserved");
        let tracked = self.tracked(a);
        self.push(value, op, tracked)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::AddConst(a), |x| x + c)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), f64::ln)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn max_const(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::MaxConst(a, c), |x| x.max(c))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        let tracked = self.tracked(a);
        self.push(Tensor::scalar(s), Op::Sum(a), tracked)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel() as f64;
        let s: f64 = self.value(a).data().iter().sum();
        let tracked = self.tracked(a);
        self.push(Tensor::scalar(s / n), Op::Mean(a), tracked)
    }

    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if va.shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "row_sum",
                left: va.shape().to_vec(),
                right: vec![],
            });
        }
        let (r, c) = dims2(va);
        let mut out = vec![0.0; r];
        for i in 0..r {
            out[i] = va.row(i).iter().sum();
        }
        let _ = c;
        let value = Tensor::from_vec(vec![r], out)?;
        let tracked = self.tracked(a);
        Ok(self.push(value, Op::RowSum(a), tracked))
    }

    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() || va.shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "row_dot",
                left: va.shape().to_vec(),
                right: vb.shape().to_vec(),
            });
        }
        let (r, _) = dims2(va);
        let mut out = vec![0.0; r];
        for i in 0..r {
            out[i] = va
                .row(i)
                .iter()
                .zip(vb.row(i))
                .map(|(x, y)| x * y)
                .sum();
        }
        let value = Tensor::from_vec(vec![r], out)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::RowDot(a, b), tracked))
    }

    /// Rows scaled to unit L2 norm. A zero row is a hard error: callers that
    /// can produce one (encoders) are responsible for preventing it.
    pub fn normalize_rows(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if va.shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "normalize_rows",
                left: va.shape().to_vec(),
                right: vec![],
            });
        }
        let (r, c) = dims2(va);
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            let row = va.row(i);
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroRow {
                    op: "normalize_rows",
                    row: i,
                });
            }
            data.extend(row.iter().map(|x| x / norm));
        }
        let value = Tensor::from_vec(vec![r, c], data)?;
        let tracked = self.tracked(a);
        Ok(self.push(value, Op::NormalizeRows(a), tracked))
    }

    pub fn gather(&mut self, a: Var, rows: Vec<usize>) -> Result<Var> {
        let va = self.value(a);
        if va.shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "gather",
                left: va.shape().to_vec(),
                right: vec![rows.len()],
            });
        }
        let (r, _) = dims2(va);
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(Error::ShapeMismatch {
                op: "gather",
                left: va.shape().to_vec(),
                right: vec![bad],
            });
        }
        let value = va.gather_rows(&rows);
        let tracked = self.tracked(a);
        Ok(self.push(value, Op::Gather(a, rows), tracked))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let va = self.value(a);
        let numel: usize = shape.iter().product();
        if numel != va.numel() || shape.iter().any(|&e| e == 0) {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: va.shape().to_vec(),
                right: shape,
            });
        }
        let value = Tensor::from_vec(shape, va.data().to_vec())?;
        let tracked = self.tracked(a);
        Ok(self.push(value, Op::Reshape(a), tracked))
    }

    /// Reverse sweep from a tracked scalar root. Populates gradients for all
    /// tracked nodes; tracked nodes unreachable from the root get zeros.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        {
            let r = &self.nodes[root.0];
            if !r.value.is_scalar() {
                return Err(Error::NonScalarRoot {
                    shape: r.value.shape().to_vec(),
                });
            }
            if !r.tracked {
                return Err(Error::UntrackedRoot);
            }
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = (0..n).map(|_| None).collect();
        grads[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let Some(gy) = grads[idx].take() else { continue };
            // Dispatch on a clone of the op descriptor so `grads` can be
            // mutated while node values are read.
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Leaf => {
                    grads[idx] = Some(gy);
                    continue;
                }
                Op::Add(a, b) => {
                    self.accum(&mut grads, a, |g| g.iter_mut().zip(&gy).for_each(|(d, s)| *d += s));
                    self.accum(&mut grads, b, |g| g.iter_mut().zip(&gy).for_each(|(d, s)| *d += s));
                }
                Op::Sub(a, b) => {
                    self.accum(&mut grads, a, |g| g.iter_mut().zip(&gy).for_each(|(d, s)| *d += s));
                    self.accum(&mut grads, b, |g| g.iter_mut().zip(&gy).for_each(|(d, s)| *d -= s));
                }
                Op::Mul(a, b) => {
                    let (bd, ad) = (self.nodes[b.0].value.data(), self.nodes[a.0].value.data());
                    let ga: Vec<f64> = gy.iter().zip(bd).map(|(g, v)| g * v).collect();
                    let gb: Vec<f64> = gy.iter().zip(ad).map(|(g, v)| g * v).collect();
                    self.accum(&mut grads, a, |g| g.iter_mut().zip(&ga).for_each(|(d, s)| *d += s));
                    self.accum(&mut grads, b, |g| g.iter_mut().zip(&gb).for_each(|(d, s)| *d += s));
                }
                Op::Div(a, b) => {
                    let (ad, bd) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
                    let ga: Vec<f64> = gy.iter().zip(bd).map(|(g, v)| g / v).collect();
                    let gb: Vec<f64> = gy
                        .iter()
                        .zip(ad.iter().zip(bd))
                        .map(|(g, (x, y))| -g * x / (y * y))
                        .collect();
                    self.accum(&mut grads, a, |g| g.iter_mut().zip(&ga).for_each(|(d, s)| *d += s));
                    self.accum(&mut grads, b, |g| g.iter_mut().zip(&gb).for_each(|(d, s)| *d += s));
                }
                Op::AddBias(m, bias) => {
                    let (r, c) = dims2(&self.nodes[m.0].value);
                    self.accum(&mut grads, m, |g| g.iter_mut().zip(&gy).for_each(|(d, s)| *d += s));
                    self.accum(&mut grads, bias, |g| {
                        for i in 0..r {
                            for j in 0..c {
                                g[j] += gy[i * c + j];
                            }
                        }
                    });
                }
                Op::Scale(a, k) => {
                    self.accum(&mut grads, a, |g| {
                        g.iter_mut().zip(&gy).for_each(|(d, s)| *d += s * k)
                    });
                }
                Op::AddConst(a) => {
                    self.accum(&mut grads, a, |g| g.iter_mut().zip(&gy).for_each(|(d, s)| *d += s));
                }
                Op::Exp(a) => {
                    let y = self.nodes[idx].value.data().to_vec();
                    self.accum(&mut grads, a, |g| {
                        g.iter_mut()
                            .zip(gy.iter().zip(&y))
                            .for_each(|(d, (s, v))| *d += s * v)
                    });
                }
                Op::Log(a) => {
                    let x = self.nodes[a.0].value.data().to_vec();
                    self.accum(&mut grads, a, |g| {
                        g.iter_mut()
                            .zip(gy.iter().zip(&x))
                            .for_each(|(d, (s, v))| *d += s / v)
                    });
                }
                Op::Relu(a) => {
                    let x = self.nodes[a.0].value.data().to_vec();
                    self.accum(&mut grads, a, |g| {
                        g.iter_mut()
                            .zip(gy.iter().zip(&x))
                            .for_each(|(d, (s, v))| if *v > 0.0 { *d += s })
                    });
                }
                Op::Tanh(a) => {
                    let y = self.nodes[idx].value.data().to_vec();
                    self.accum(&mut grads, a, |g| {
                        g.iter_mut()
                            .zip(gy.iter().zip(&y))
                            .for_each(|(d, (s, v))| *d += s * (1.0 - v * v))
                    });
                }
                Op::MaxConst(a, c) => {
                    let x = self.nodes[a.0].value.data().to_vec();
                    self.accum(&mut grads, a, |g| {
                        g.iter_mut()
                            .zip(gy.iter().zip(&x))
                            .for_each(|(d, (s, v))| if *v >= c { *d += s })
                    });
                }
                Op::Sum(a) => {
                    let s = gy[0];
                    self.accum(&mut grads, a, |g| g.iter_mut().for_each(|d| *d += s));
                }
                Op::Mean(a) => {
                    let n = self.nodes[a.0].value.numel() as f64;
                    let s = gy[0] / n;
                    self.accum(&mut grads, a, |g| g.iter_mut().for_each(|d| *d += s));
                }
                Op::RowSum(a) => {
                    let (r, c) = dims2(&self.nodes[a.0].value);
                    self.accum(&mut grads, a, |g| {
                        for i in 0..r {
                            let s = gy[i];
                            for j in 0..c {
                                g[i * c + j] += s;
                            }
                        }
                    });
                }
                Op::RowDot(a, b) => {
                    let (r, c) = dims2(&self.nodes[a.0].value);
                    let ad = self.nodes[a.0].value.data().to_vec();
                    let bd = self.nodes[b.0].value.data().to_vec();
                    self.accum(&mut grads, a, |g| {
                        for i in 0..r {
                            let s = gy[i];
                            for j in 0..c {
                                g[i * c + j] += s * bd[i * c + j];
                            }
                        }
                    });
                    self.accum(&mut grads, b, |g| {
                        for i in 0..r {
                            let s = gy[i];
                            for j in 0..c {
                                g[i * c + j] += s * ad[i * c + j];
                            }
                        }
                    });
                }
                Op::NormalizeRows(a) => {
                    let (r, c) = dims2(&self.nodes[a.0].value);
                    let x = self.nodes[a.0].value.data().to_vec();
                    let y = self.nodes[idx].value.data().to_vec();
                    self.accum(&mut grads, a, |g| {
                        for i in 0..r {
                            let xrow = &x[i * c..(i + 1) * c];
                            let yrow = &y[i * c..(i + 1) * c];
                            let grow = &gy[i * c..(i + 1) * c];
                            let norm = xrow.iter().map(|v| v * v).sum::<f64>().sqrt();
                            let dot: f64 = grow.iter().zip(yrow).map(|(p, q)| p * q).sum();
                            for j in 0..c {
                                g[i * c + j] += (grow[j] - dot * yrow[j]) / norm;
                            }
                        }
                    });
                }
                Op::Gather(a, rows) => {
                    let (_, c) = dims2(&self.nodes[a.0].value);
                    self.accum(&mut grads, a, |g| {
                        for (k, &src) in rows.iter().enumerate() {
                            for j in 0..c {
                                g[src * c + j] += gy[k * c + j];
                            }
                        }
                    });
                }
                Op::Reshape(a) => {
                    self.accum(&mut grads, a, |g| g.iter_mut().zip(&gy).for_each(|(d, s)| *d += s));
                }
                Op::MatMul(a, b) => {
                    let (r, k) = dims2(&self.nodes[a.0].value);
                    let (_, c) = dims2(&self.nodes[b.0].value);
                    let ad = self.nodes[a.0].value.data().to_vec();
                    let bd = self.nodes[b.0].value.data().to_vec();
                    // dA += dY @ B^T
                    self.accum(&mut grads, a, |g| mm_bt_acc(&gy, r, c, &bd, k, g));
                    // dB += A^T @ dY
                    self.accum(&mut grads, b, |g| mm_ta_acc(&ad, r, k, &gy, c, g));
                }
                Op::MatMulBT(a, b) => {
                    let (r, k) = dims2(&self.nodes[a.0].value);
                    let (c, _) = dims2(&self.nodes[b.0].value);
                    let ad = self.nodes[a.0].value.data().to_vec();
                    let bd = self.nodes[b.0].value.data().to_vec();
                    // Y = A @ B^T: dA += dY @ B, dB += dY^T @ A
                    self.accum(&mut grads, a, |g| mm_acc(&gy, r, c, &bd, k, g));
                    self.accum(&mut grads, b, |g| mm_ta_acc(&gy, r, c, &ad, k, g));
                }
            }
        }

        for (i, node) in self.nodes.iter_mut().enumerate() {
            node.grad = if node.tracked {
                Some(
                    grads[i]
                        .take()
                        .unwrap_or_else(|| vec![0.0; node.value.numel()]),
                )
            } else {
                None
            };
        }
        Ok(())
    }

    fn accum(
        &self,
        grads: &mut [Option<Vec<f64>>],
        target: Var,
        add_into: impl FnOnce(&mut Vec<f64>),
    ) {
        if !self.nodes[target.0].tracked {
            return;
        }
        let slot = &mut grads[target.0];
        if slot.is_none() {
            *slot = Some(vec![0.0; self.nodes[target.0].value.numel()]);
        }
        add_into(slot.as_mut().unwrap());
    }
}

/// Central-difference gradient oracle: `(f(x + h e_k) - f(x - h e_k)) / 2h`
/// per coordinate. Deliberately independent of [`Tape`]; the test suites
/// compare [`Tape::backward`] against this.
pub fn finite_diff_grad<F>(mut f: F, x: &Tensor, h: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if h <= 0.0 {
        return Err(Error::InvalidConfig {
            field: "h".into(),
            message: format!("step must be positive, got {h}"),
        });
    }
    let mut grad = vec![0.0; x.numel()];
    let mut probe = x.clone();
    for k in 0..x.numel() {
        let orig = probe.data()[k];
        probe.data_mut()[k] = orig + h;
        let up = f(&probe)?;
        probe.data_mut()[k] = orig - h;
        let down = f(&probe)?;
        probe.data_mut()[k] = orig;
        grad[k] = (up - down) / (2.0 * h);
    }
    Tensor::from_vec(x.shape().to_vec(), grad)
}

/// `||a - b||_2 / max(||b||_2, floor)`, the relative-error measure used by
/// every gradient comparison in the crate.
pub fn relative_error(a: &Tensor, b: &Tensor) -> f64 {
    let diff: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = b.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm.max(1e-12)
}
