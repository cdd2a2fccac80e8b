use super::{NumericsError, Tensor};

/// Handle to a value slot on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Recorded primitive. Payloads are operand slot indices plus any
/// compile-time scalars the primitive needs.
#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    /// Copies the value, blocks gradient flow.
    Detach(usize),
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    /// `[m,n] + [n]`, row-broadcast (bias add).
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize, f64),
    Sum(usize),
    Mean(usize),
    /// `[m,n] -> [n]`, sum over rows.
    SumRows(usize),
    /// `[m,n] -> [m,1]`, sum over columns.
    SumCols(usize),
    /// `[n] -> [rows,n]`.
    BroadcastRow(usize, usize),
    /// `[m,1] -> [m,cols]`.
    BroadcastCol(usize, usize),
    /// scalar -> given shape.
    Fill(usize, Vec<usize>),
    /// Elementwise minimum; ties take the left operand's gradient.
    Min(usize, usize),
    /// Values at or beyond a bound count as clamped (zero gradient).
    Clip(usize, f64, f64),
    Relu(usize),
    Tanh(usize),
    Softplus(usize),
    Exp(usize),
    Log(usize),
    Square(usize),
    Abs(usize),
    Recip(usize),
    ConcatCols(usize, usize),
    SliceCols(usize, usize, usize),
    /// Embed `[m,e-s]` into zeros `[m,n]` at column offset `s`.
    PadCols(usize, usize, usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::Detach(_) => "detach",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Neg(_) => "neg",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::SumRows(_) => "sum_rows",
            Op::SumCols(_) => "sum_cols",
            Op::BroadcastRow(..) => "broadcast_row",
            Op::BroadcastCol(..) => "broadcast_col",
            Op::Fill(..) => "fill",
            Op::Min(..) => "min",
            Op::Clip(..) => "clip",
            Op::Relu(_) => "relu",
            Op::Tanh(_) => "tanh",
            Op::Softplus(_) => "softplus",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Square(_) => "square",
            Op::Abs(_) => "abs",
            Op::Recip(_) => "recip",
            Op::ConcatCols(..) => "concat_cols",
            Op::SliceCols(..) => "slice_cols",
            Op::PadCols(..) => "pad_cols",
        }
    }
}

struct Node {
    op: Op,
    shape: Vec<usize>,
    data: Vec<f64>,
    needs_grad: bool,
}

/// Wengert tape. Primitives evaluate eagerly as they are recorded, so
/// node order is a topological order and a reverse sweep implements
/// backpropagation. [`Tape::backward_graph`] records the sweep itself
/// as new tape nodes, which is what makes gradients differentiable one
/// more time (the mixed second-order term needs exactly that).
///
/// Every documented primitive checks its output for NaN/Inf and fails
/// instead of letting the values propagate.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Per-slot float adjoints from a [`Tape::backward`] sweep.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the swept output w.r.t. `v`, if any path reached it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn data(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn value(&self, v: Var) -> Tensor {
        Tensor::from_vec(self.nodes[v.0].shape.clone(), self.nodes[v.0].data.clone())
            .expect("node shape/data consistent")
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        debug_assert!(self.nodes[v.0].shape.is_empty());
        self.nodes[v.0].data[0]
    }

    /// Differentiable input slot.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push_unchecked(Op::Leaf, t.shape().to_vec(), t.data().to_vec(), true)
    }

    /// Non-differentiable input slot.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push_unchecked(Op::Constant, t.shape().to_vec(), t.data().to_vec(), false)
    }

    pub fn constant_scalar(&mut self, v: f64) -> Var {
        self.push_unchecked(Op::Constant, vec![], vec![v], false)
    }

    /// Treat `a` as a constant from here on (gradient flow stops).
    pub fn detach(&mut self, a: Var) -> Var {
        let (shape, data) = (self.nodes[a.0].shape.clone(), self.nodes[a.0].data.clone());
        self.push_unchecked(Op::Detach(a.0), shape, data, false)
    }

    fn push_unchecked(&mut self, op: Op, shape: Vec<usize>, data: Vec<f64>, grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            shape,
            data,
            needs_grad: grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(
        &mut self,
        op: Op,
        shape: Vec<usize>,
        data: Vec<f64>,
        grad: bool,
    ) -> Result<Var, NumericsError> {
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite {
                op: op.name(),
                index: idx,
            });
        }
        Ok(self.push_unchecked(op, shape, data, grad))
    }

    fn needs(&self, a: Var) -> bool {
        self.nodes[a.0].needs_grad
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> NumericsError {
        NumericsError::ShapeMismatch {
            op,
            lhs: self.nodes[a.0].shape.clone(),
            rhs: self.nodes[b.0].shape.clone(),
        }
    }

    fn bad_shape(&self, op: &'static str, a: Var, want: &str) -> NumericsError {
        NumericsError::BadShape {
            op,
            detail: format!("operand shape {:?}, expected {}", self.nodes[a.0].shape, want),
        }
    }

    // ---- primitives ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(self.mismatch("matmul", a, b));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul_f(m, k, n, &self.nodes[a.0].data, &self.nodes[b.0].data);
        let g = self.needs(a) || self.needs(b);
        self.push(Op::MatMul(a.0, b.0), vec![m, n], out, g)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, NumericsError> {
        let sa = &self.nodes[a.0].shape;
        if sa.len() != 2 {
            return Err(self.bad_shape("transpose", a, "rank 2"));
        }
        let (m, n) = (sa[0], sa[1]);
        let src = &self.nodes[a.0].data;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        let g = self.needs(a);
        self.push(Op::Transpose(a.0), vec![n, m], out, g)
    }

    fn zip_same_shape(
        &mut self,
        op_name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, NumericsError> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(self.mismatch(op_name, a, b));
        }
        let out: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let g = self.needs(a) || self.needs(b);
        self.push(op, shape, out, g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip_same_shape("add", a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip_same_shape("sub", a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip_same_shape("mul", a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn min(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip_same_shape("min", a, b, |x, y| if x <= y { x } else { y }, Op::Min(a.0, b.0))
    }

    /// `[m,n] + [n]` with the vector added to every row.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
        if sa.len() != 2 || sb.len() != 1 || sa[1] != sb[0] {
            return Err(self.mismatch("add_row", a, b));
        }
        let (m, n) = (sa[0], sa[1]);
        let bias = &self.nodes[b.0].data;
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let row = &self.nodes[a.0].data[i * n..(i + 1) * n];
            out.extend(row.iter().zip(bias).map(|(&x, &y)| x + y));
        }
        let g = self.needs(a) || self.needs(b);
        self.push(Op::AddRow(a.0, b.0), vec![m, n], out, g)
    }

    fn map_unary(
        &mut self,
        a: Var,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> Result<Var, NumericsError> {
        let out: Vec<f64> = self.nodes[a.0].data.iter().map(|&x| f(x)).collect();
        let shape = self.nodes[a.0].shape.clone();
        let g = self.needs(a);
        self.push(op, shape, out, g)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.map_unary(a, |x| -x, Op::Neg(a.0))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, NumericsError> {
        self.map_unary(a, |x| c * x, Op::Scale(a.0, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var, NumericsError> {
        self.map_unary(a, |x| x + c, Op::AddScalar(a.0, c))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.map_unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.map_unary(a, f64::tanh, Op::Tanh(a.0))
    }

    /// `log(1 + e^x)` in the overflow-safe form `max(x,0) + log1p(e^{-|x|})`.
    pub fn softplus(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.map_unary(a, |x| x.max(0.0) + (-x.abs()).exp().ln_1p(), Op::Softplus(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.map_unary(a, f64::exp, Op::Exp(a.0))
    }

    pub fn log(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.map_unary(a, f64::ln, Op::Log(a.0))
    }

    pub fn square(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.map_unary(a, |x| x * x, Op::Square(a.0))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.map_unary(a, f64::abs, Op::Abs(a.0))
    }

    pub fn recip(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.map_unary(a, |x| 1.0 / x, Op::Recip(a.0))
    }

    pub fn clip(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var, NumericsError> {
        self.map_unary(a, |x| x.clamp(lo, hi), Op::Clip(a.0, lo, hi))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NumericsError> {
        let s: f64 = self.nodes[a.0].data.iter().sum();
        let g = self.needs(a);
        self.push(Op::Sum(a.0), vec![], vec![s], g)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, NumericsError> {
        let n = self.nodes[a.0].data.len();
        if n == 0 {
            return Err(self.bad_shape("mean", a, "non-empty"));
        }
        let s: f64 = self.nodes[a.0].data.iter().sum();
        let g = self.needs(a);
        self.push(Op::Mean(a.0), vec![], vec![s / n as f64], g)
    }

    pub fn sum_rows(&mut self, a: Var) -> Result<Var, NumericsError> {
        let sa = &self.nodes[a.0].shape;
        if sa.len() != 2 {
            return Err(self.bad_shape("sum_rows", a, "rank 2"));
        }
        let (m, n) = (sa[0], sa[1]);
        let mut out = vec![0.0; n];
        for i in 0..m {
            for j in 0..n {
                out[j] += self.nodes[a.0].data[i * n + j];
            }
        }
        let g = self.needs(a);
        self.push(Op::SumRows(a.0), vec![n], out, g)
    }

    pub fn sum_cols(&mut self, a: Var) -> Result<Var, NumericsError> {
        let sa = &self.nodes[a.0].shape;
        if sa.len() != 2 {
            return Err(self.bad_shape("sum_cols", a, "rank 2"));
        }
        let (m, n) = (sa[0], sa[1]);
        let mut out = vec![0.0; m];
        for i in 0..m {
            out[i] = self.nodes[a.0].data[i * n..(i + 1) * n].iter().sum();
        }
        let g = self.needs(a);
        self.push(Op::SumCols(a.0), vec![m, 1], out, g)
    }

    pub fn broadcast_row(&mut self, a: Var, rows: usize) -> Result<Var, NumericsError> {
        let sa = &self.nodes[a.0].shape;
        if sa.len() != 1 {
            return Err(self.bad_shape("broadcast_row", a, "rank 1"));
        }
        let n = sa[0];
        let mut out = Vec::with_capacity(rows * n);
        for _ in 0..rows {
            out.extend_from_slice(&self.nodes[a.0].data);
        }
        let g = self.needs(a);
        self.push(Op::BroadcastRow(a.0, rows), vec![rows, n], out, g)
    }

    pub fn broadcast_col(&mut self, a: Var, cols: usize) -> Result<Var, NumericsError> {
        let sa = &self.nodes[a.0].shape;
        if sa.len() != 2 || sa[1] != 1 {
            return Err(self.bad_shape("broadcast_col", a, "[m,1]"));
        }
        let m = sa[0];
        let mut out = Vec::with_capacity(m * cols);
        for i in 0..m {
            let v = self.nodes[a.0].data[i];
            out.extend(std::iter::repeat(v).take(cols));
        }
        let g = self.needs(a);
        self.push(Op::BroadcastCol(a.0, cols), vec![m, cols], out, g)
    }

    pub fn fill(&mut self, a: Var, shape: Vec<usize>) -> Result<Var, NumericsError> {
        if !self.nodes[a.0].shape.is_empty() {
            return Err(self.bad_shape("fill", a, "scalar"));
        }
        let n: usize = shape.iter().product();
        let v = self.nodes[a.0].data[0];
        let g = self.needs(a);
        self.push(Op::Fill(a.0, shape.clone()), shape, vec![v; n], g)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(self.mismatch("concat_cols", a, b));
        }
        let (m, p, q) = (sa[0], sa[1], sb[1]);
        let mut out = Vec::with_capacity(m * (p + q));
        for i in 0..m {
            out.extend_from_slice(&self.nodes[a.0].data[i * p..(i + 1) * p]);
            out.extend_from_slice(&self.nodes[b.0].data[i * q..(i + 1) * q]);
        }
        let g = self.needs(a) || self.needs(b);
        self.push(Op::ConcatCols(a.0, b.0), vec![m, p + q], out, g)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NumericsError> {
        let sa = &self.nodes[a.0].shape;
        if sa.len() != 2 || end > sa[1] || start >= end {
            return Err(self.bad_shape("slice_cols", a, "rank 2 with valid column range"));
        }
        let (m, n) = (sa[0], sa[1]);
        let w = end - start;
        let mut out = Vec::with_capacity(m * w);
        for i in 0..m {
            out.extend_from_slice(&self.nodes[a.0].data[i * n + start..i * n + end]);
        }
        let g = self.needs(a);
        self.push(Op::SliceCols(a.0, start, end), vec![m, w], out, g)
    }

    /// Embed `a` into a zero matrix of `total` columns at column `start`.
    pub fn pad_cols(&mut self, a: Var, total: usize, start: usize) -> Result<Var, NumericsError> {
        let sa = &self.nodes[a.0].shape;
        if sa.len() != 2 || start + sa[1] > total {
            return Err(self.bad_shape("pad_cols", a, "rank 2 fitting the padded width"));
        }
        let (m, w) = (sa[0], sa[1]);
        let mut out = vec![0.0; m * total];
        for i in 0..m {
            out[i * total + start..i * total + start + w]
                .copy_from_slice(&self.nodes[a.0].data[i * w..(i + 1) * w]);
        }
        let g = self.needs(a);
        self.push(Op::PadCols(a.0, total, start), vec![m, total], out, g)
    }

    // ---- reverse sweeps ----

    fn check_scalar_output(&self, out: Var, op: &'static str) -> Result<(), NumericsError> {
        if !self.nodes[out.0].shape.is_empty() {
            return Err(NumericsError::NotScalar {
                op,
                shape: self.nodes[out.0].shape.clone(),
            });
        }
        Ok(())
    }

    /// Plain reverse sweep from a scalar output; adjoints stay as floats.
    pub fn backward(&self, out: Var) -> Result<Gradients, NumericsError> {
        self.check_scalar_output(out, "backward")?;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(vec![1.0]);
        for idx in (0..=out.0).rev() {
            if grads[idx].is_none() || !self.nodes[idx].needs_grad {
                continue;
            }
            let g = grads[idx].take().unwrap();
            self.backprop_float(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn acc(dst: &mut Option<Vec<f64>>, src: &[f64]) {
        match dst {
            Some(v) => {
                for (d, s) in v.iter_mut().zip(src) {
                    *d += s;
                }
            }
            None => *dst = Some(src.to_vec()),
        }
    }

    fn acc_checked(
        &self,
        node_idx: usize,
        dst: &mut Option<Vec<f64>>,
        src: Vec<f64>,
    ) -> Result<(), NumericsError> {
        if let Some(i) = src.iter().position(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite {
                op: self.nodes[node_idx].op.name(),
                index: i,
            });
        }
        Self::acc(dst, &src);
        Ok(())
    }

    #[allow(clippy::too_many_lines)]
    fn backprop_float(
        &self,
        idx: usize,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) -> Result<(), NumericsError> {
        let dat = |i: usize| -> &[f64] { &self.nodes[i].data };
        match &self.nodes[idx].op {
            Op::Leaf | Op::Constant | Op::Detach(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.nodes[*a].shape[0], self.nodes[*a].shape[1]);
                let n = self.nodes[*b].shape[1];
                if self.nodes[*a].needs_grad {
                    // ga = g @ b^T
                    let bt = dat(*b);
                    let mut ga = vec![0.0; m * k];
                    for i in 0..m {
                        for kk in 0..k {
                            let mut s = 0.0;
                            let grow = &g[i * n..(i + 1) * n];
                            let brow = &bt[kk * n..(kk + 1) * n];
                            for j in 0..n {
                                s += grow[j] * brow[j];
                            }
                            ga[i * k + kk] = s;
                        }
                    }
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
                if self.nodes[*b].needs_grad {
                    // gb = a^T @ g
                    let at = dat(*a);
                    let mut gb = vec![0.0; k * n];
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for kk in 0..k {
                            let av = at[i * k + kk];
                            if av != 0.0 {
                                let dst = &mut gb[kk * n..(kk + 1) * n];
                                for j in 0..n {
                                    dst[j] += av * grow[j];
                                }
                            }
                        }
                    }
                    self.acc_checked(idx, &mut grads[*b], gb)?;
                }
            }
            Op::Transpose(a) => {
                if self.nodes[*a].needs_grad {
                    let (n, m) = (self.nodes[idx].shape[0], self.nodes[idx].shape[1]);
                    let mut ga = vec![0.0; m * n];
                    for i in 0..n {
                        for j in 0..m {
                            ga[j * n + i] = g[i * m + j];
                        }
                    }
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
            }
            Op::Add(a, b) => {
                if self.nodes[*a].needs_grad {
                    Self::acc(&mut grads[*a], g);
                }
                if self.nodes[*b].needs_grad {
                    Self::acc(&mut grads[*b], g);
                }
            }
            Op::AddRow(a, b) => {
                if self.nodes[*a].needs_grad {
                    Self::acc(&mut grads[*a], g);
                }
                if self.nodes[*b].needs_grad {
                    let (m, n) = (self.nodes[*a].shape[0], self.nodes[*a].shape[1]);
                    let mut gb = vec![0.0; n];
                    for i in 0..m {
                        for j in 0..n {
                            gb[j] += g[i * n + j];
                        }
                    }
                    self.acc_checked(idx, &mut grads[*b], gb)?;
                }
            }
            Op::Sub(a, b) => {
                if self.nodes[*a].needs_grad {
                    Self::acc(&mut grads[*a], g);
                }
                if self.nodes[*b].needs_grad {
                    let gb: Vec<f64> = g.iter().map(|&x| -x).collect();
                    self.acc_checked(idx, &mut grads[*b], gb)?;
                }
            }
            Op::Mul(a, b) => {
                if self.nodes[*a].needs_grad {
                    let ga: Vec<f64> = g.iter().zip(dat(*b)).map(|(&x, &y)| x * y).collect();
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
                if self.nodes[*b].needs_grad {
                    let gb: Vec<f64> = g.iter().zip(dat(*a)).map(|(&x, &y)| x * y).collect();
                    self.acc_checked(idx, &mut grads[*b], gb)?;
                }
            }
            Op::Neg(a) => {
                if self.nodes[*a].needs_grad {
                    let ga: Vec<f64> = g.iter().map(|&x| -x).collect();
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
            }
            Op::Scale(a, c) => {
                if self.nodes[*a].needs_grad {
                    let ga: Vec<f64> = g.iter().map(|&x| c * x).collect();
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
            }
            Op::AddScalar(a, _) => {
                if self.nodes[*a].needs_grad {
                    Self::acc(&mut grads[*a], g);
                }
            }
            Op::Sum(a) => {
                if self.nodes[*a].needs_grad {
                    let ga = vec![g[0]; self.nodes[*a].data.len()];
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
            }
            Op::Mean(a) => {
                if self.nodes[*a].needs_grad {
                    let n = self.nodes[*a].data.len();
                    let ga = vec![g[0] / n as f64; n];
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
            }
            Op::SumRows(a) => {
                if self.nodes[*a].needs_grad {
                    let (m, n) = (self.nodes[*a].shape[0], self.nodes[*a].shape[1]);
                    let mut ga = Vec::with_capacity(m * n);
                    for _ in 0..m {
                        ga.extend_from_slice(g);
                    }
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
            }
            Op::SumCols(a) => {
                if self.nodes[*a].needs_grad {
                    let (m, n) = (self.nodes[*a].shape[0], self.nodes[*a].shape[1]);
                    let mut ga = Vec::with_capacity(m * n);
                    for i in 0..m {
                        ga.extend(std::iter::repeat(g[i]).take(n));
                    }
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
            }
            Op::BroadcastRow(a, rows) => {
                if self.nodes[*a].needs_grad {
                    let n = self.nodes[*a].shape[0];
                    let mut ga = vec![0.0; n];
                    for i in 0..*rows {
                        for j in 0..n {
                            ga[j] += g[i * n + j];
                        }
                    }
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
            }
            Op::BroadcastCol(a, cols) => {
                if self.nodes[*a].needs_grad {
                    let m = self.nodes[*a].shape[0];
                    let mut ga = vec![0.0; m];
                    for i in 0..m {
                        ga[i] = g[i * cols..(i + 1) * cols].iter().sum();
                    }
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
            }
            Op::Fill(a, _) => {
                if self.nodes[*a].needs_grad {
                    let ga = vec![g.iter().sum::<f64>()];
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
            }
            Op::Min(a, b) => {
                let (da, db) = (dat(*a), dat(*b));
                if self.nodes[*a].needs_grad {
                    let ga: Vec<f64> = g
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| if da[i] <= db[i] { x } else { 0.0 })
                        .collect();
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
                if self.nodes[*b].needs_grad {
                    let gb: Vec<f64> = g
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| if da[i] <= db[i] { 0.0 } else { x })
                        .collect();
                    self.acc_checked(idx, &mut grads[*b], gb)?;
                }
            }
            Op::Clip(a, lo, hi) => {
                if self.nodes[*a].needs_grad {
                    let da = dat(*a);
                    let ga: Vec<f64> = g
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| if da[i] > *lo && da[i] < *hi { x } else { 0.0 })
                        .collect();
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
            }
            Op::Relu(a) => {
                if self.nodes[*a].needs_grad {
                    let da = dat(*a);
                    let ga: Vec<f64> = g
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| if da[i] > 0.0 { x } else { 0.0 })
                        .collect();
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
            }
            Op::Tanh(a) => {
                if self.nodes[*a].needs_grad {
                    let y = &self.nodes[idx].data;
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(y)
                        .map(|(&x, &t)| x * (1.0 - t * t))
                        .collect();
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
            }
            Op::Softplus(a) => {
                if self.nodes[*a].needs_grad {
                    // d softplus = sigmoid(x) = exp(x - softplus(x)), stable.
                    let da = dat(*a);
                    let y = &self.nodes[idx].data;
                    let ga: Vec<f64> = g
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| x * (da[i] - y[i]).exp())
                        .collect();
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
            }
            Op::Exp(a) => {
                if self.nodes[*a].needs_grad {
                    let y = &self.nodes[idx].data;
                    let ga: Vec<f64> = g.iter().zip(y).map(|(&x, &e)| x * e).collect();
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
            }
            Op::Log(a) => {
                if self.nodes[*a].needs_grad {
                    let da = dat(*a);
                    let ga: Vec<f64> = g.iter().zip(da).map(|(&x, &v)| x / v).collect();
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
            }
            Op::Square(a) => {
                if self.nodes[*a].needs_grad {
                    let da = dat(*a);
                    let ga: Vec<f64> = g.iter().zip(da).map(|(&x, &v)| 2.0 * x * v).collect();
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
            }
            Op::Abs(a) => {
                if self.nodes[*a].needs_grad {
                    let da = dat(*a);
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(da)
                        .map(|(&x, &v)| {
                            if v > 0.0 {
                                x
                            } else if v < 0.0 {
                                -x
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
            }
            Op::Recip(a) => {
                if self.nodes[*a].needs_grad {
                    let y = &self.nodes[idx].data;
                    let ga: Vec<f64> = g.iter().zip(y).map(|(&x, &v)| -x * v * v).collect();
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
            }
            Op::ConcatCols(a, b) => {
                let (m, p) = (self.nodes[*a].shape[0], self.nodes[*a].shape[1]);
                let q = self.nodes[*b].shape[1];
                let n = p + q;
                if self.nodes[*a].needs_grad {
                    let mut ga = Vec::with_capacity(m * p);
                    for i in 0..m {
                        ga.extend_from_slice(&g[i * n..i * n + p]);
                    }
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
                if self.nodes[*b].needs_grad {
                    let mut gb = Vec::with_capacity(m * q);
                    for i in 0..m {
                        gb.extend_from_slice(&g[i * n + p..(i + 1) * n]);
                    }
                    self.acc_checked(idx, &mut grads[*b], gb)?;
                }
            }
            Op::SliceCols(a, start, end) => {
                if self.nodes[*a].needs_grad {
                    let (m, n) = (self.nodes[*a].shape[0], self.nodes[*a].shape[1]);
                    let w = end - start;
                    let mut ga = vec![0.0; m * n];
                    for i in 0..m {
                        ga[i * n + start..i * n + end].copy_from_slice(&g[i * w..(i + 1) * w]);
                    }
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
            }
            Op::PadCols(a, total, start) => {
                if self.nodes[*a].needs_grad {
                    let (m, w) = (self.nodes[*a].shape[0], self.nodes[*a].shape[1]);
                    let mut ga = Vec::with_capacity(m * w);
                    for i in 0..m {
                        ga.extend_from_slice(&g[i * total + start..i * total + start + w]);
                    }
                    self.acc_checked(idx, &mut grads[*a], ga)?;
                }
            }
        }
        Ok(())
    }

    /// Reverse sweep that records the adjoint computation as new tape
    /// nodes. The returned slots are differentiable gradient
    /// expressions, so a further [`Tape::backward`] over the extended
    /// tape yields gradients of gradient expressions.
    pub fn backward_graph(&mut self, out: Var) -> Result<Vec<Option<Var>>, NumericsError> {
        self.check_scalar_output(out, "backward_graph")?;
        let frontier = out.0;
        let mut adj: Vec<Option<Var>> = vec![None; self.nodes.len()];
        let one = Tensor::scalar(1.0);
        adj[frontier] = Some(self.constant(&one));
        for idx in (0..=frontier).rev() {
            if adj[idx].is_none() || !self.nodes[idx].needs_grad {
                continue;
            }
            let g = adj[idx].unwrap();
            self.backprop_graph(idx, g, &mut adj)?;
        }
        adj.truncate(frontier + 1);
        Ok(adj)
    }

    fn acc_var(&mut self, adj: &mut [Option<Var>], slot: usize, v: Var) -> Result<(), NumericsError> {
        adj[slot] = Some(match adj[slot] {
            Some(prev) => self.add(prev, v)?,
            None => v,
        });
        Ok(())
    }

    fn mask_of(&mut self, src: usize, f: impl Fn(f64) -> f64) -> Var {
        let data: Vec<f64> = self.nodes[src].data.iter().map(|&x| f(x)).collect();
        let shape = self.nodes[src].shape.clone();
        let t = Tensor::from_vec(shape, data).expect("mask shape consistent");
        self.constant(&t)
    }

    #[allow(clippy::too_many_lines)]
    fn backprop_graph(
        &mut self,
        idx: usize,
        g: Var,
        adj: &mut [Option<Var>],
    ) -> Result<(), NumericsError> {
        let op = self.nodes[idx].op.clone();
        match op {
            Op::Leaf | Op::Constant | Op::Detach(_) => {}
            Op::MatMul(a, b) => {
                if self.nodes[a].needs_grad {
                    let bt = self.transpose(Var(b))?;
                    let ga = self.matmul(g, bt)?;
                    self.acc_var(adj, a, ga)?;
                }
                if self.nodes[b].needs_grad {
                    let at = self.transpose(Var(a))?;
                    let gb = self.matmul(at, g)?;
                    self.acc_var(adj, b, gb)?;
                }
            }
            Op::Transpose(a) => {
                if self.nodes[a].needs_grad {
                    let ga = self.transpose(g)?;
                    self.acc_var(adj, a, ga)?;
                }
            }
            Op::Add(a, b) => {
                if self.nodes[a].needs_grad {
                    self.acc_var(adj, a, g)?;
                }
                if self.nodes[b].needs_grad {
                    self.acc_var(adj, b, g)?;
                }
            }
            Op::AddRow(a, b) => {
                if self.nodes[a].needs_grad {
                    self.acc_var(adj, a, g)?;
                }
                if self.nodes[b].needs_grad {
                    let gb = self.sum_rows(g)?;
                    self.acc_var(adj, b, gb)?;
                }
            }
            Op::Sub(a, b) => {
                if self.nodes[a].needs_grad {
                    self.acc_var(adj, a, g)?;
                }
                if self.nodes[b].needs_grad {
                    let gb = self.neg(g)?;
                    self.acc_var(adj, b, gb)?;
                }
            }
            Op::Mul(a, b) => {
                if self.nodes[a].needs_grad {
                    let ga = self.mul(g, Var(b))?;
                    self.acc_var(adj, a, ga)?;
                }
                if self.nodes[b].needs_grad {
                    let gb = self.mul(g, Var(a))?;
                    self.acc_var(adj, b, gb)?;
                }
            }
            Op::Neg(a) => {
                if self.nodes[a].needs_grad {
                    let ga = self.neg(g)?;
                    self.acc_var(adj, a, ga)?;
                }
            }
            Op::Scale(a, c) => {
                if self.nodes[a].needs_grad {
                    let ga = self.scale(g, c)?;
                    self.acc_var(adj, a, ga)?;
                }
            }
            Op::AddScalar(a, _) => {
                if self.nodes[a].needs_grad {
                    self.acc_var(adj, a, g)?;
                }
            }
            Op::Sum(a) => {
                if self.nodes[a].needs_grad {
                    let shape = self.nodes[a].shape.clone();
                    let ga = self.fill(g, shape)?;
                    self.acc_var(adj, a, ga)?;
                }
            }
            Op::Mean(a) => {
                if self.nodes[a].needs_grad {
                    let n = self.nodes[a].data.len();
                    let shape = self.nodes[a].shape.clone();
                    let gs = self.scale(g, 1.0 / n as f64)?;
                    let ga = self.fill(gs, shape)?;
                    self.acc_var(adj, a, ga)?;
                }
            }
            Op::SumRows(a) => {
                if self.nodes[a].needs_grad {
                    let m = self.nodes[a].shape[0];
                    let ga = self.broadcast_row(g, m)?;
                    self.acc_var(adj, a, ga)?;
                }
            }
            Op::SumCols(a) => {
                if self.nodes[a].needs_grad {
                    let n = self.nodes[a].shape[1];
                    let ga = self.broadcast_col(g, n)?;
                    self.acc_var(adj, a, ga)?;
                }
            }
            Op::BroadcastRow(a, _) => {
                if self.nodes[a].needs_grad {
                    let ga = self.sum_rows(g)?;
                    self.acc_var(adj, a, ga)?;
                }
            }
            Op::BroadcastCol(a, _) => {
                if self.nodes[a].needs_grad {
                    let ga = self.sum_cols(g)?;
                    self.acc_var(adj, a, ga)?;
                }
            }
            Op::Fill(a, _) => {
                if self.nodes[a].needs_grad {
                    let ga = self.sum(g)?;
                    self.acc_var(adj, a, ga)?;
                }
            }
            Op::Min(a, b) => {
                // Branch choice is locked in at the recorded values.
                let (da, db) = (&self.nodes[a].data, &self.nodes[b].data);
                let mask: Vec<f64> = da
                    .iter()
                    .zip(db)
                    .map(|(&x, &y)| if x <= y { 1.0 } else { 0.0 })
                    .collect();
                let shape = self.nodes[a].shape.clone();
                let mt = Tensor::from_vec(shape, mask).expect("mask shape");
                if self.nodes[a].needs_grad {
                    let mv = self.constant(&mt);
                    let ga = self.mul(g, mv)?;
                    self.acc_var(adj, a, ga)?;
                }
                if self.nodes[b].needs_grad {
                    let inv: Vec<f64> = mt.data().iter().map(|&x| 1.0 - x).collect();
                    let it = Tensor::from_vec(mt.shape().to_vec(), inv).expect("mask shape");
                    let iv = self.constant(&it);
                    let gb = self.mul(g, iv)?;
                    self.acc_var(adj, b, gb)?;
                }
            }
            Op::Clip(a, lo, hi) => {
                if self.nodes[a].needs_grad {
                    let mask = self.mask_of(a, |x| if x > lo && x < hi { 1.0 } else { 0.0 });
                    let ga = self.mul(g, mask)?;
                    self.acc_var(adj, a, ga)?;
                }
            }
            Op::Relu(a) => {
                if self.nodes[a].needs_grad {
                    let mask = self.mask_of(a, |x| if x > 0.0 { 1.0 } else { 0.0 });
                    let ga = self.mul(g, mask)?;
                    self.acc_var(adj, a, ga)?;
                }
            }
            Op::Tanh(a) => {
                if self.nodes[a].needs_grad {
                    let sq = self.square(Var(idx))?;
                    let nsq = self.neg(sq)?;
                    let one_minus = self.add_scalar(nsq, 1.0)?;
                    let ga = self.mul(g, one_minus)?;
                    self.acc_var(adj, a, ga)?;
                }
            }
            Op::Softplus(a) => {
                if self.nodes[a].needs_grad {
                    // sigmoid(x) = exp(x - softplus(x))
                    let diff = self.sub(Var(a), Var(idx))?;
                    let sig = self.exp(diff)?;
                    let ga = self.mul(g, sig)?;
                    self.acc_var(adj, a, ga)?;
                }
            }
            Op::Exp(a) => {
                if self.nodes[a].needs_grad {
                    let ga = self.mul(g, Var(idx))?;
                    self.acc_var(adj, a, ga)?;
                }
            }
            Op::Log(a) => {
                if self.nodes[a].needs_grad {
                    let r = self.recip(Var(a))?;
                    let ga = self.mul(g, r)?;
                    self.acc_var(adj, a, ga)?;
                }
            }
            Op::Square(a) => {
                if self.nodes[a].needs_grad {
                    let gx = self.mul(g, Var(a))?;
                    let ga = self.scale(gx, 2.0)?;
                    self.acc_var(adj, a, ga)?;
                }
            }
            Op::Abs(a) => {
                if self.nodes[a].needs_grad {
                    let sign = self.mask_of(a, |x| {
                        if x > 0.0 {
                            1.0
                        } else if x < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    });
                    let ga = self.mul(g, sign)?;
                    self.acc_var(adj, a, ga)?;
                }
            }
            Op::Recip(a) => {
                if self.nodes[a].needs_grad {
                    let ysq = self.square(Var(idx))?;
                    let m = self.mul(g, ysq)?;
                    let ga = self.neg(m)?;
                    self.acc_var(adj, a, ga)?;
                }
            }
            Op::ConcatCols(a, b) => {
                let p = self.nodes[a].shape[1];
                let q = self.nodes[b].shape[1];
                if self.nodes[a].needs_grad {
                    let ga = self.slice_cols(g, 0, p)?;
                    self.acc_var(adj, a, ga)?;
                }
                if self.nodes[b].needs_grad {
                    let gb = self.slice_cols(g, p, p + q)?;
                    self.acc_var(adj, b, gb)?;
                }
            }
            Op::SliceCols(a, start, _end) => {
                if self.nodes[a].needs_grad {
                    let n = self.nodes[a].shape[1];
                    let ga = self.pad_cols(g, n, start)?;
                    self.acc_var(adj, a, ga)?;
                }
            }
            Op::PadCols(a, _total, start) => {
                if self.nodes[a].needs_grad {
                    let w = self.nodes[a].shape[1];
                    let ga = self.slice_cols(g, start, start + w)?;
                    self.acc_var(adj, a, ga)?;
                }
            }
        }
        Ok(())
    }

    /// Re-execute every recorded primitive and return the recomputed
    /// value of each slot. Used to verify bit-exact replay.
    pub fn replay(&self) -> Vec<Vec<f64>> {
        let mut vals: Vec<Vec<f64>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = |i: usize| -> &[f64] { &vals[i] };
            let out: Vec<f64> = match &node.op {
                Op::Leaf | Op::Constant => node.data.clone(),
                Op::Detach(a) => v(*a).to_vec(),
                Op::MatMul(a, b) => {
                    let (m, k) = (self.nodes[*a].shape[0], self.nodes[*a].shape[1]);
                    let n = self.nodes[*b].shape[1];
                    matmul_f(m, k, n, v(*a), v(*b))
                }
                Op::Transpose(a) => {
                    let (m, n) = (self.nodes[*a].shape[0], self.nodes[*a].shape[1]);
                    let src = v(*a);
                    let mut out = vec![0.0; m * n];
                    for i in 0..m {
                        for j in 0..n {
                            out[j * m + i] = src[i * n + j];
                        }
                    }
                    out
                }
                Op::Add(a, b) => v(*a).iter().zip(v(*b)).map(|(&x, &y)| x + y).collect(),
                Op::AddRow(a, b) => {
                    let (m, n) = (self.nodes[*a].shape[0], self.nodes[*a].shape[1]);
                    let mut out = Vec::with_capacity(m * n);
                    for i in 0..m {
                        out.extend(
                            v(*a)[i * n..(i + 1) * n]
                                .iter()
                                .zip(v(*b))
                                .map(|(&x, &y)| x + y),
                        );
                    }
                    out
                }
                Op::Sub(a, b) => v(*a).iter().zip(v(*b)).map(|(&x, &y)| x - y).collect(),
                Op::Mul(a, b) => v(*a).iter().zip(v(*b)).map(|(&x, &y)| x * y).collect(),
                Op::Min(a, b) => v(*a)
                    .iter()
                    .zip(v(*b))
                    .map(|(&x, &y)| if x <= y { x } else { y })
                    .collect(),
                Op::Neg(a) => v(*a).iter().map(|&x| -x).collect(),
                Op::Scale(a, c) => v(*a).iter().map(|&x| c * x).collect(),
                Op::AddScalar(a, c) => v(*a).iter().map(|&x| x + c).collect(),
                Op::Sum(a) => vec![v(*a).iter().sum()],
                Op::Mean(a) => vec![v(*a).iter().sum::<f64>() / v(*a).len() as f64],
                Op::SumRows(a) => {
                    let (m, n) = (self.nodes[*a].shape[0], self.nodes[*a].shape[1]);
                    let mut out = vec![0.0; n];
                    for i in 0..m {
                        for j in 0..n {
                            out[j] += v(*a)[i * n + j];
                        }
                    }
                    out
                }
                Op::SumCols(a) => {
                    let (m, n) = (self.nodes[*a].shape[0], self.nodes[*a].shape[1]);
                    (0..m).map(|i| v(*a)[i * n..(i + 1) * n].iter().sum()).collect()
                }
                Op::BroadcastRow(a, rows) => {
                    let mut out = Vec::with_capacity(rows * v(*a).len());
                    for _ in 0..*rows {
                        out.extend_from_slice(v(*a));
                    }
                    out
                }
                Op::BroadcastCol(a, cols) => {
                    let mut out = Vec::with_capacity(v(*a).len() * cols);
                    for &x in v(*a) {
                        out.extend(std::iter::repeat(x).take(*cols));
                    }
                    out
                }
                Op::Fill(a, shape) => vec![v(*a)[0]; shape.iter().product()],
                Op::Clip(a, lo, hi) => v(*a).iter().map(|&x| x.clamp(*lo, *hi)).collect(),
                Op::Relu(a) => v(*a).iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect(),
                Op::Tanh(a) => v(*a).iter().map(|&x| x.tanh()).collect(),
                Op::Softplus(a) => v(*a)
                    .iter()
                    .map(|&x| x.max(0.0) + (-x.abs()).exp().ln_1p())
                    .collect(),
                Op::Exp(a) => v(*a).iter().map(|&x| x.exp()).collect(),
                Op::Log(a) => v(*a).iter().map(|&x| x.ln()).collect(),
                Op::Square(a) => v(*a).iter().map(|&x| x * x).collect(),
                Op::Abs(a) => v(*a).iter().map(|&x| x.abs()).collect(),
                Op::Recip(a) => v(*a).iter().map(|&x| 1.0 / x).collect(),
                Op::ConcatCols(a, b) => {
                    let (m, p) = (self.nodes[*a].shape[0], self.nodes[*a].shape[1]);
                    let q = self.nodes[*b].shape[1];
                    let mut out = Vec::with_capacity(m * (p + q));
                    for i in 0..m {
                        out.extend_from_slice(&v(*a)[i * p..(i + 1) * p]);
                        out.extend_from_slice(&v(*b)[i * q..(i + 1) * q]);
                    }
                    out
                }
                Op::SliceCols(a, start, end) => {
                    let (m, n) = (self.nodes[*a].shape[0], self.nodes[*a].shape[1]);
                    let mut out = Vec::with_capacity(m * (end - start));
                    for i in 0..m {
                        out.extend_from_slice(&v(*a)[i * n + start..i * n + end]);
                    }
                    out
                }
                Op::PadCols(a, total, start) => {
                    let (m, w) = (self.nodes[*a].shape[0], self.nodes[*a].shape[1]);
                    let mut out = vec![0.0; m * total];
                    for i in 0..m {
                        out[i * total + start..i * total + start + w]
                            .copy_from_slice(&v(*a)[i * w..(i + 1) * w]);
                    }
                    out
                }
            };
            vals.push(out);
        }
        vals
    }

    /// Recorded value of every slot, for replay comparison.
    pub fn recorded_values(&self) -> Vec<Vec<f64>> {
        self.nodes.iter().map(|n| n.data.clone()).collect()
    }
}

fn matmul_f(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            if av != 0.0 {
                let brow = &b[kk * n..(kk + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
    out
}
