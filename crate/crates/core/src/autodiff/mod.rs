//! Minimal reverse-mode automatic differentiation: a define-by-run tape of
//! dense `f64` tensors covering exactly the operations the refinement
//! network needs. Graphs are rebuilt per forward pass; a tape is confined to
//! one thread, while the kernels underneath may parallelize internally.

mod adam;
mod checkpoint;
pub(crate) mod kernels;
mod params;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use params::{ParamSet, Parameter};

use crate::error::{Error, Result};
use kernels::ConvDims;

/// Handle to a tensor on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Value(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MulScalar(usize, f64),
    Matmul {
        a: usize,
        b: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    AddRowBias {
        x: usize,
        bias: usize,
    },
    Conv2d {
        input: usize,
        weight: usize,
        bias: Option<usize>,
        dims: ConvDims,
    },
    Upsample2x {
        input: usize,
        c: usize,
        h: usize,
        w: usize,
        oh: usize,
        ow: usize,
    },
    Concat {
        parts: Vec<usize>,
        axis: usize,
    },
    Sine(usize),
    Tanh(usize),
    Relu(usize),
    Log(usize),
    Abs(usize),
    Softmax {
        input: usize,
        axis: usize,
    },
    Sum(usize),
    Mean(usize),
    BilinearGather {
        map: usize,
        c: usize,
        h: usize,
        w: usize,
        coords: Vec<(f64, f64)>,
    },
}

/// One tape node: shape, forward values, the gradient slot filled by
/// [`Tape::backward`] (leaves only) and the record of how it was produced.
#[derive(Debug)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Tensor>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node from `mark` on; used to evaluate large point batches
    /// in chunks against a fixed feature pyramid.
    pub fn truncate(&mut self, mark: usize) {
        self.nodes.truncate(mark);
    }

    pub fn shape(&self, v: Value) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn values(&self, v: Value) -> &[f64] {
        &self.nodes[v.0].values
    }

    /// Gradient of a leaf after [`Tape::backward`].
    pub fn grad(&self, v: Value) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, op: Op, needs_grad: bool) -> Value {
        debug_assert_eq!(numel(&shape), values.len());
        self.nodes.push(Tensor {
            shape,
            values,
            grad: None,
            op,
            needs_grad,
        });
        Value(self.nodes.len() - 1)
    }

    fn check_len(shape: &[usize], values: &[f64]) -> Result<()> {
        if numel(shape) != values.len() {
            return Err(Error::domain(format!(
                "value count {} does not match shape {:?}",
                values.len(),
                shape
            )));
        }
        Ok(())
    }

    /// Trainable input; its gradient is retained by [`Tape::backward`].
    pub fn leaf(&mut self, shape: &[usize], values: Vec<f64>) -> Result<Value> {
        Self::check_len(shape, &values)?;
        Ok(self.push(shape.to_vec(), values, Op::Leaf, true))
    }

    /// Non-trainable input; nothing is backpropagated into it.
    pub fn constant(&mut self, shape: &[usize], values: Vec<f64>) -> Result<Value> {
        Self::check_len(shape, &values)?;
        Ok(self.push(shape.to_vec(), values, Op::Constant, false))
    }

    pub fn scalar_constant(&mut self, v: f64) -> Value {
        self.push(vec![1], vec![v], Op::Constant, false)
    }

    fn binary_elementwise(
        &mut self,
        a: Value,
        b: Value,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Value> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::domain(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let values = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let needs = self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad;
        Ok(self.push(self.nodes[a.0].shape.clone(), values, op, needs))
    }

    pub fn add(&mut self, a: Value, b: Value) -> Result<Value> {
        self.binary_elementwise(a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Value, b: Value) -> Result<Value> {
        self.binary_elementwise(a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Value, b: Value) -> Result<Value> {
        self.binary_elementwise(a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn mul_scalar(&mut self, a: Value, s: f64) -> Value {
        let values = self.values(a).iter().map(|&x| x * s).collect();
        let needs = self.nodes[a.0].needs_grad;
        self.push(self.nodes[a.0].shape.clone(), values, Op::MulScalar(a.0, s), needs)
    }

    fn unary_elementwise(&mut self, a: Value, f: impl Fn(f64) -> f64, op: Op) -> Value {
        let values = self.values(a).iter().map(|&x| f(x)).collect();
        let needs = self.nodes[a.0].needs_grad;
        self.push(self.nodes[a.0].shape.clone(), values, op, needs)
    }

    pub fn sine(&mut self, a: Value) -> Value {
        self.unary_elementwise(a, f64::sin, Op::Sine(a.0))
    }

    pub fn tanh(&mut self, a: Value) -> Value {
        self.unary_elementwise(a, f64::tanh, Op::Tanh(a.0))
    }

    pub fn relu(&mut self, a: Value) -> Value {
        self.unary_elementwise(a, |x| x.max(0.0), Op::Relu(a.0))
    }

    pub fn log(&mut self, a: Value) -> Value {
        self.unary_elementwise(a, f64::ln, Op::Log(a.0))
    }

    pub fn abs(&mut self, a: Value) -> Value {
        self.unary_elementwise(a, f64::abs, Op::Abs(a.0))
    }

    /// `a [m,k] * b [k,n]`; both operands must be rank 2.
    pub fn matmul(&mut self, a: Value, b: Value) -> Result<Value> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::domain(format!(
                "matmul shapes incompatible: {sa:?} vs {sb:?}"
            )));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut values = vec![0.0; m * n];
        kernels::matmul(self.values(a), self.values(b), m, k, n, &mut values);
        let needs = self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad;
        Ok(self.push(vec![m, n], values, Op::Matmul { a: a.0, b: b.0, m, k, n }, needs))
    }

    /// Adds a `[f]` bias row-wise to a `[n,f]` matrix.
    pub fn add_row_bias(&mut self, x: Value, bias: Value) -> Result<Value> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sx.len() != 2 || sb.len() != 1 || sx[1] != sb[0] {
            return Err(Error::domain(format!(
                "bias shape {sb:?} does not broadcast over {sx:?}"
            )));
        }
        let f = sx[1];
        let mut values = self.values(x).to_vec();
        let bias_vals = self.values(bias);
        for row in values.chunks_mut(f) {
            for (v, &b) in row.iter_mut().zip(bias_vals) {
                *v += b;
            }
        }
        let needs = self.nodes[x.0].needs_grad || self.nodes[bias.0].needs_grad;
        Ok(self.push(
            self.nodes[x.0].shape.clone(),
            values,
            Op::AddRowBias { x: x.0, bias: bias.0 },
            needs,
        ))
    }

    /// CHW convolution: `input [ci,h,w]`, `weight [co,ci,kh,kw]`, optional
    /// `bias [co]`.
    pub fn conv2d(
        &mut self,
        input: Value,
        weight: Value,
        bias: Option<Value>,
        stride: usize,
        padding: usize,
    ) -> Result<Value> {
        let si = self.shape(input).to_vec();
        let sw = self.shape(weight).to_vec();
        if si.len() != 3 || sw.len() != 4 || sw[1] != si[0] {
            return Err(Error::domain(format!(
                "conv2d shapes incompatible: input {si:?}, weight {sw:?}"
            )));
        }
        if stride == 0 {
            return Err(Error::domain("conv2d stride must be >= 1"));
        }
        if si[1] + 2 * padding < sw[2] || si[2] + 2 * padding < sw[3] {
            return Err(Error::domain(format!(
                "conv2d kernel {sw:?} larger than padded input {si:?}"
            )));
        }
        if let Some(b) = bias {
            let sb = self.shape(b);
            if sb != [sw[0]] {
                return Err(Error::domain(format!(
                    "conv2d bias shape {sb:?} does not match {} output channels",
                    sw[0]
                )));
            }
        }
        let dims = ConvDims::new(si[0], si[1], si[2], sw[0], sw[2], sw[3], stride, padding);
        let mut values = vec![0.0; dims.c_out * dims.oh * dims.ow];
        kernels::conv2d_fwd(
            self.values(input),
            self.values(weight),
            bias.map(|b| self.values(b)),
            dims,
            &mut values,
        );
        let needs = self.nodes[input.0].needs_grad
            || self.nodes[weight.0].needs_grad
            || bias.is_some_and(|b| self.nodes[b.0].needs_grad);
        Ok(self.push(
            vec![dims.c_out, dims.oh, dims.ow],
            values,
            Op::Conv2d {
                input: input.0,
                weight: weight.0,
                bias: bias.map(|b| b.0),
                dims,
            },
            needs,
        ))
    }

    /// Nearest-neighbor 2x upsample of `[c,h,w]`, cropped to `oh x ow`
    /// (`2h` or `2h - 1`, likewise for width).
    pub fn upsample2x(&mut self, input: Value, oh: usize, ow: usize) -> Result<Value> {
        let s = self.shape(input).to_vec();
        if s.len() != 3 {
            return Err(Error::domain(format!("upsample2x expects CHW, got {s:?}")));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        if !(oh == 2 * h || oh + 1 == 2 * h) || !(ow == 2 * w || ow + 1 == 2 * w) {
            return Err(Error::domain(format!(
                "upsample2x target {oh}x{ow} incompatible with {h}x{w}"
            )));
        }
        let mut values = vec![0.0; c * oh * ow];
        kernels::upsample2x_fwd(self.values(input), c, h, w, oh, ow, &mut values);
        let needs = self.nodes[input.0].needs_grad;
        Ok(self.push(
            vec![c, oh, ow],
            values,
            Op::Upsample2x { input: input.0, c, h, w, oh, ow },
            needs,
        ))
    }

    /// Concatenation along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Value], axis: usize) -> Result<Value> {
        if parts.is_empty() {
            return Err(Error::domain("concat of zero tensors"));
        }
        let first = self.shape(parts[0]).to_vec();
        if axis >= first.len() {
            return Err(Error::domain(format!(
                "concat axis {axis} out of range for shape {first:?}"
            )));
        }
        let mut axis_total = 0usize;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len()
                || s.iter()
                    .zip(&first)
                    .enumerate()
                    .any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(Error::domain(format!(
                    "concat shapes incompatible: {first:?} vs {s:?}"
                )));
            }
            axis_total += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = axis_total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut values = vec![0.0; numel(&shape)];
        let out_stride = axis_total * inner;
        let mut offset = 0usize;
        for &p in parts {
            let len = self.shape(p)[axis];
            let src = self.values(p);
            for o in 0..outer {
                let dst_base = o * out_stride + offset * inner;
                let src_base = o * len * inner;
                values[dst_base..dst_base + len * inner]
                    .copy_from_slice(&src[src_base..src_base + len * inner]);
            }
            offset += len;
        }
        let needs = parts.iter().any(|&p| self.nodes[p.0].needs_grad);
        Ok(self.push(
            shape,
            values,
            Op::Concat {
                parts: parts.iter().map(|p| p.0).collect(),
                axis,
            },
            needs,
        ))
    }

    /// Shift-normalized softmax along `axis`.
    pub fn softmax(&mut self, input: Value, axis: usize) -> Result<Value> {
        let shape = self.shape(input).to_vec();
        if axis >= shape.len() {
            return Err(Error::domain(format!(
                "softmax axis {axis} out of range for shape {shape:?}"
            )));
        }
        let lane = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let mut values = self.values(input).to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let base = o * lane * inner + i;
                let mut max = f64::NEG_INFINITY;
                for l in 0..lane {
                    max = max.max(values[base + l * inner]);
                }
                let mut sum = 0.0;
                for l in 0..lane {
                    let e = (values[base + l * inner] - max).exp();
                    values[base + l * inner] = e;
                    sum += e;
                }
                for l in 0..lane {
                    values[base + l * inner] /= sum;
                }
            }
        }
        let needs = self.nodes[input.0].needs_grad;
        Ok(self.push(shape, values, Op::Softmax { input: input.0, axis }, needs))
    }

    pub fn sum(&mut self, a: Value) -> Value {
        let total = self.values(a).iter().sum();
        let needs = self.nodes[a.0].needs_grad;
        self.push(vec![1], vec![total], Op::Sum(a.0), needs)
    }

    pub fn mean(&mut self, a: Value) -> Value {
        let n = self.values(a).len() as f64;
        let total: f64 = self.values(a).iter().sum();
        let needs = self.nodes[a.0].needs_grad;
        self.push(vec![1], vec![total / n], Op::Mean(a.0), needs)
    }

    /// Differentiable bilinear sampling of a CHW map at fractional
    /// coordinates (in the map's own pixel units); gradient flows into the
    /// map, not the coordinates.
    pub fn bilinear_gather(&mut self, map: Value, coords: &[(f64, f64)]) -> Result<Value> {
        let s = self.shape(map).to_vec();
        if s.len() != 3 {
            return Err(Error::domain(format!(
                "bilinear_gather expects CHW, got {s:?}"
            )));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        for &(x, y) in coords {
            if !(x >= 0.0 && x <= (w - 1) as f64 && y >= 0.0 && y <= (h - 1) as f64) {
                return Err(Error::domain(format!(
                    "gather coordinate ({x}, {y}) outside [0, {}] x [0, {}]",
                    w - 1,
                    h - 1
                )));
            }
        }
        let mut values = vec![0.0; coords.len() * c];
        kernels::bilinear_gather_fwd(self.values(map), c, h, w, coords, &mut values);
        let needs = self.nodes[map.0].needs_grad;
        Ok(self.push(
            vec![coords.len(), c],
            values,
            Op::BilinearGather {
                map: map.0,
                c,
                h,
                w,
                coords: coords.to_vec(),
            },
            needs,
        ))
    }

    /// Reverse pass from a scalar root. Fills the gradient slot of every
    /// reachable leaf; leaves of independent subgraphs keep a `None`/zero
    /// gradient.
    pub fn backward(&mut self, root: Value) -> Result<()> {
        if numel(&self.nodes[root.0].shape) != 1 {
            return Err(Error::domain(format!(
                "backward root must be scalar, got shape {:?}",
                self.nodes[root.0].shape
            )));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[root.0].needs_grad {
            return Ok(()); // loss independent of every leaf
        }
        grads[root.0] = Some(vec![1.0]);

        for id in (0..=root.0).rev() {
            let Some(gy) = grads[id].take() else {
                continue;
            };
            // Local helper: lazily materialize a parent's gradient buffer.
            // Sized from the shape, not `values.len()`: some arms temporarily
            // move a parent's values out while computing the contribution.
            macro_rules! grad_buf {
                ($pid:expr) => {{
                    let pid: usize = $pid;
                    if grads[pid].is_none() {
                        grads[pid] = Some(vec![0.0; numel(&self.nodes[pid].shape)]);
                    }
                    grads[pid].as_mut().unwrap()
                }};
            }
            macro_rules! wants {
                ($pid:expr) => {
                    self.nodes[$pid].needs_grad
                };
            }
            let op = self.nodes[id].op.clone();
            match op {
                Op::Leaf => {
                    self.nodes[id].grad = Some(gy);
                    continue;
                }
                Op::Constant => continue,
                Op::Add(a, b) => {
                    if wants!(a) {
                        for (g, &d) in grad_buf!(a).iter_mut().zip(&gy) {
                            *g += d;
                        }
                    }
                    if wants!(b) {
                        for (g, &d) in grad_buf!(b).iter_mut().zip(&gy) {
                            *g += d;
                        }
                    }
                }
                Op::Sub(a, b) => {
                    if wants!(a) {
                        for (g, &d) in grad_buf!(a).iter_mut().zip(&gy) {
                            *g += d;
                        }
                    }
                    if wants!(b) {
                        for (g, &d) in grad_buf!(b).iter_mut().zip(&gy) {
                            *g -= d;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    if wants!(a) {
                        let bv = std::mem::take(&mut self.nodes[b].values);
                        for ((g, &d), &y) in grad_buf!(a).iter_mut().zip(&gy).zip(&bv) {
                            *g += d * y;
                        }
                        self.nodes[b].values = bv;
                    }
                    if wants!(b) {
                        let av = std::mem::take(&mut self.nodes[a].values);
                        for ((g, &d), &x) in grad_buf!(b).iter_mut().zip(&gy).zip(&av) {
                            *g += d * x;
                        }
                        self.nodes[a].values = av;
                    }
                }
                Op::MulScalar(a, s) => {
                    if wants!(a) {
                        for (g, &d) in grad_buf!(a).iter_mut().zip(&gy) {
                            *g += d * s;
                        }
                    }
                }
                Op::Matmul { a, b, m, k, n } => {
                    if wants!(a) {
                        let bv = std::mem::take(&mut self.nodes[b].values);
                        kernels::matmul_bt_acc(&gy, &bv, m, n, k, grad_buf!(a));
                        self.nodes[b].values = bv;
                    }
                    if wants!(b) {
                        let av = std::mem::take(&mut self.nodes[a].values);
                        kernels::matmul_at_acc(&av, &gy, m, k, n, grad_buf!(b));
                        self.nodes[a].values = av;
                    }
                }
                Op::AddRowBias { x, bias } => {
                    if wants!(x) {
                        for (g, &d) in grad_buf!(x).iter_mut().zip(&gy) {
                            *g += d;
                        }
                    }
                    if wants!(bias) {
                        let f = self.nodes[bias].values.len();
                        let buf = grad_buf!(bias);
                        for row in gy.chunks(f) {
                            for (g, &d) in buf.iter_mut().zip(row) {
                                *g += d;
                            }
                        }
                    }
                }
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    dims,
                } => {
                    if wants!(input) {
                        let wv = std::mem::take(&mut self.nodes[weight].values);
                        kernels::conv2d_bwd_input(&gy, &wv, dims, grad_buf!(input));
                        self.nodes[weight].values = wv;
                    }
                    if wants!(weight) {
                        let iv = std::mem::take(&mut self.nodes[input].values);
                        kernels::conv2d_bwd_weight(&iv, &gy, dims, grad_buf!(weight));
                        self.nodes[input].values = iv;
                    }
                    if let Some(b) = bias {
                        if wants!(b) {
                            kernels::conv2d_bwd_bias(&gy, dims, grad_buf!(b));
                        }
                    }
                }
                Op::Upsample2x { input, c, h, w, oh, ow } => {
                    if wants!(input) {
                        kernels::upsample2x_bwd(&gy, c, h, w, oh, ow, grad_buf!(input));
                    }
                }
                Op::Concat { parts, axis } => {
                    let out_shape = self.nodes[id].shape.clone();
                    let outer: usize = out_shape[..axis].iter().product();
                    let inner: usize = out_shape[axis + 1..].iter().product();
                    let out_stride = out_shape[axis] * inner;
                    let mut offset = 0usize;
                    for pid in parts {
                        let len = self.nodes[pid].shape[axis];
                        if wants!(pid) {
                            let buf = grad_buf!(pid);
                            for o in 0..outer {
                                let src_base = o * out_stride + offset * inner;
                                let dst_base = o * len * inner;
                                for i in 0..len * inner {
                                    buf[dst_base + i] += gy[src_base + i];
                                }
                            }
                        }
                        offset += len;
                    }
                }
                Op::Sine(a) => {
                    if wants!(a) {
                        let av = std::mem::take(&mut self.nodes[a].values);
                        for ((g, &d), &x) in grad_buf!(a).iter_mut().zip(&gy).zip(&av) {
                            *g += d * x.cos();
                        }
                        self.nodes[a].values = av;
                    }
                }
                Op::Tanh(a) => {
                    if wants!(a) {
                        let yv = std::mem::take(&mut self.nodes[id].values);
                        for ((g, &d), &y) in grad_buf!(a).iter_mut().zip(&gy).zip(&yv) {
                            *g += d * (1.0 - y * y);
                        }
                        self.nodes[id].values = yv;
                    }
                }
                Op::Relu(a) => {
                    if wants!(a) {
                        let av = std::mem::take(&mut self.nodes[a].values);
                        for ((g, &d), &x) in grad_buf!(a).iter_mut().zip(&gy).zip(&av) {
                            if x > 0.0 {
                                *g += d;
                            }
                        }
                        self.nodes[a].values = av;
                    }
                }
                Op::Log(a) => {
                    if wants!(a) {
                        let av = std::mem::take(&mut self.nodes[a].values);
                        for ((g, &d), &x) in grad_buf!(a).iter_mut().zip(&gy).zip(&av) {
                            *g += d / x;
                        }
                        self.nodes[a].values = av;
                    }
                }
                Op::Abs(a) => {
                    if wants!(a) {
                        let av = std::mem::take(&mut self.nodes[a].values);
                        for ((g, &d), &x) in grad_buf!(a).iter_mut().zip(&gy).zip(&av) {
                            *g += d * if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
                        }
                        self.nodes[a].values = av;
                    }
                }
                Op::Softmax { input, axis } => {
                    if wants!(input) {
                        let shape = self.nodes[id].shape.clone();
                        let lane = shape[axis];
                        let inner: usize = shape[axis + 1..].iter().product();
                        let outer: usize = shape[..axis].iter().product();
                        let yv = std::mem::take(&mut self.nodes[id].values);
                        let buf = grad_buf!(input);
                        for o in 0..outer {
                            for i in 0..inner {
                                let base = o * lane * inner + i;
                                let mut dot = 0.0;
                                for l in 0..lane {
                                    let idx = base + l * inner;
                                    dot += gy[idx] * yv[idx];
                                }
                                for l in 0..lane {
                                    let idx = base + l * inner;
                                    buf[idx] += yv[idx] * (gy[idx] - dot);
                                }
                            }
                        }
                        self.nodes[id].values = yv;
                    }
                }
                Op::Sum(a) => {
                    if wants!(a) {
                        let d = gy[0];
                        for g in grad_buf!(a).iter_mut() {
                            *g += d;
                        }
                    }
                }
                Op::Mean(a) => {
                    if wants!(a) {
                        let n = self.nodes[a].values.len() as f64;
                        let d = gy[0] / n;
                        for g in grad_buf!(a).iter_mut() {
                            *g += d;
                        }
                    }
                }
                Op::BilinearGather { map, c, h, w, coords } => {
                    if wants!(map) {
                        kernels::bilinear_gather_bwd(&gy, c, h, w, &coords, grad_buf!(map));
                    }
                }
            }
        }
        Ok(())
    }
}
