//! Define-by-run reverse-mode autodiff tape.
//!
//! A [`Graph`] is an append-only arena of nodes; topological order is the
//! append order, so one reverse sweep visits every node exactly once. The
//! primitive set is exactly what the convolutional autoencoders, the
//! transformer classifier, and the quantization losses need — no general
//! broadcasting, no fusion. Everything is f64 and single-threaded, so a fixed
//! seed reproduces bit-identical values and gradients.

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

pub type NodeId = usize;

// ── raw kernels ──────────────────────────────────────────────────────

/// C (m×n, row-major) = A (m×k) · B (k×n) + beta·C.
///
/// `ta`/`tb` reinterpret A/B as transposed views via strides, so no copies.
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unfold x ([c, t]) into columns: col[(ch*k + kk), j] = x[ch, j*stride + kk - pad_l],
/// zero outside. col is (c*k) × t_out, row-major.
fn im2col(
    x: &[f64],
    c: usize,
    t: usize,
    kernel: usize,
    stride: usize,
    pad_l: usize,
    t_out: usize,
) -> Vec<f64> {
    let mut col = vec![0.0; c * kernel * t_out];
    for ch in 0..c {
        let xrow = &x[ch * t..(ch + 1) * t];
        for kk in 0..kernel {
            let crow = &mut col[(ch * kernel + kk) * t_out..(ch * kernel + kk + 1) * t_out];
            for (j, out) in crow.iter_mut().enumerate() {
                let pos = j * stride + kk;
                if pos >= pad_l && pos - pad_l < t {
                    *out = xrow[pos - pad_l];
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatter-add col back into dx ([c, t]).
fn col2im_add(
    col: &[f64],
    c: usize,
    t: usize,
    kernel: usize,
    stride: usize,
    pad_l: usize,
    t_out: usize,
    dx: &mut [f64],
) {
    for ch in 0..c {
        let drow_base = ch * t;
        for kk in 0..kernel {
            let crow = &col[(ch * kernel + kk) * t_out..(ch * kernel + kk + 1) * t_out];
            for (j, &v) in crow.iter().enumerate() {
                let pos = j * stride + kk;
                if pos >= pad_l && pos - pad_l < t {
                    dx[drow_base + pos - pad_l] += v;
                }
            }
        }
    }
}

const GELU_A: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

fn gelu_val(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_A * (x + GELU_C * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_A * (x + GELU_C * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_A * (1.0 + 3.0 * GELU_C * x * x)
}

// ── ops ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale(f64),
    /// [n, m] + [m], broadcast over rows.
    AddRow,
    /// [n, m] + [n], broadcast over columns.
    AddCol,
    MatMul,
    Transpose,
    Reshape,
    Relu,
    Gelu,
    /// Inputs: x [n, d], gamma [d], beta [d]; normalizes the last axis.
    LayerNorm { eps: f64 },
    /// Row-wise softmax of a 1-D or 2-D tensor.
    Softmax,
    /// Inputs: x [c_in, t], w [c_out, c_in, k]. Saves the unfolded input.
    Conv1d { stride: usize, pad_l: usize, pad_r: usize, col: Vec<f64> },
    /// Inputs: x [c_in, t], w [c_in, c_out, k].
    ConvT1d { stride: usize, pad_l: usize, pad_r: usize, out_pad: usize },
    AvgPool1d { kernel: usize, stride: usize },
    SumAll,
    MeanAll,
    /// [n, d] -> [d].
    MeanAxis0,
    SelectRows(Vec<usize>),
    ScatterRows { rows: Vec<usize>, out_rows: usize },
    GatherScalars(Vec<usize>),
    /// Inputs: logits [n, c]; mean over rows of (logsumexp - logit_at_label).
    CrossEntropy { labels: Vec<usize> },
    StopGrad,
    /// Inputs: [z, z_hat]. Forward is z_hat; backward passes straight to z.
    Ste,
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Scale(_) => "scale",
            Op::AddRow => "add_row",
            Op::AddCol => "add_col",
            Op::MatMul => "matmul",
            Op::Transpose => "transpose",
            Op::Reshape => "reshape",
            Op::Relu => "relu",
            Op::Gelu => "gelu",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Softmax => "softmax",
            Op::Conv1d { .. } => "conv1d",
            Op::ConvT1d { .. } => "conv_t1d",
            Op::AvgPool1d { .. } => "avg_pool1d",
            Op::SumAll => "sum",
            Op::MeanAll => "mean",
            Op::MeanAxis0 => "mean_axis0",
            Op::SelectRows(_) => "select_rows",
            Op::ScatterRows { .. } => "scatter_rows",
            Op::GatherScalars(_) => "gather_scalars",
            Op::CrossEntropy { .. } => "cross_entropy_with_logits",
            Op::StopGrad => "stop_gradient",
            Op::Ste => "ste_passthrough",
        }
    }
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
    needs_grad: bool,
}

/// Gradients keyed by node id, produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id).and_then(|g| g.as_deref())
    }

    /// Gradient of a tracked leaf; zero tensor if the loss never reached it.
    pub fn for_leaf(&self, id: NodeId, shape: &[usize]) -> Tensor {
        match self.get(id) {
            Some(g) => Tensor::new(shape.to_vec(), g.to_vec()).expect("grad shape"),
            None => Tensor::zeros(shape.to_vec()),
        }
    }
}

// ── graph ────────────────────────────────────────────────────────────

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn needs_grad(&self, id: NodeId) -> bool {
        self.nodes[id].needs_grad
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { op, inputs, value, needs_grad });
        self.nodes.len() - 1
    }

    fn any_grad(&self, inputs: &[NodeId]) -> bool {
        inputs.iter().any(|&i| self.nodes[i].needs_grad)
    }

    // ── leaves ───────────────────────────────────────────────────

    pub fn leaf(&mut self, value: Tensor, trainable: bool) -> NodeId {
        self.push(Op::Leaf, vec![], value, trainable)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    // ── elementwise ──────────────────────────────────────────────

    fn binary_same_shape(&mut self, op: Op, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        if va.shape() != vb.shape() {
            return Err(CoreError::shape(
                match op {
                    Op::Add => "add",
                    Op::Sub => "sub",
                    _ => "mul",
                },
                format!("{:?} vs {:?}", va.shape(), vb.shape()),
            ));
        }
        let data = match op {
            Op::Add => va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect(),
            Op::Sub => va.data().iter().zip(vb.data()).map(|(x, y)| x - y).collect(),
            Op::Mul => va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect(),
            _ => unreachable!(),
        };
        let value = Tensor::new(va.shape().to_vec(), data)?;
        let needs = self.any_grad(&[a, b]);
        Ok(self.push(op, vec![a, b], value, needs))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(Op::Add, a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(Op::Sub, a, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(Op::Mul, a, b)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let va = &self.nodes[a].value;
        let data = va.data().iter().map(|x| x * c).collect();
        let value = Tensor::new(va.shape().to_vec(), data).unwrap();
        let needs = self.nodes[a].needs_grad;
        self.push(Op::Scale(c), vec![a], value, needs)
    }

    pub fn add_row(&mut self, a: NodeId, r: NodeId) -> Result<NodeId> {
        let (va, vr) = (&self.nodes[a].value, &self.nodes[r].value);
        let (n, m) = (va.rows(), va.cols());
        if vr.shape() != [m] {
            return Err(CoreError::shape(
                "add_row",
                format!("matrix {:?} + row {:?}", va.shape(), vr.shape()),
            ));
        }
        let mut data = va.data().to_vec();
        for i in 0..n {
            for (j, &b) in vr.data().iter().enumerate() {
                data[i * m + j] += b;
            }
        }
        let value = Tensor::new(va.shape().to_vec(), data)?;
        let needs = self.any_grad(&[a, r]);
        Ok(self.push(Op::AddRow, vec![a, r], value, needs))
    }

    pub fn add_col(&mut self, a: NodeId, c: NodeId) -> Result<NodeId> {
        let (va, vc) = (&self.nodes[a].value, &self.nodes[c].value);
        let (n, m) = (va.rows(), va.cols());
        if vc.shape() != [n] {
            return Err(CoreError::shape(
                "add_col",
                format!("matrix {:?} + column {:?}", va.shape(), vc.shape()),
            ));
        }
        let mut data = va.data().to_vec();
        for i in 0..n {
            let b = vc.data()[i];
            for v in &mut data[i * m..(i + 1) * m] {
                *v += b;
            }
        }
        let value = Tensor::new(va.shape().to_vec(), data)?;
        let needs = self.any_grad(&[a, c]);
        Ok(self.push(Op::AddCol, vec![a, c], value, needs))
    }

    // ── linear algebra / shape ───────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        if va.shape().len() != 2 || vb.shape().len() != 2 || va.cols() != vb.rows() {
            return Err(CoreError::shape(
                "matmul",
                format!("{:?} x {:?}", va.shape(), vb.shape()),
            ));
        }
        let (m, k, n) = (va.rows(), va.cols(), vb.cols());
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, va.data(), false, vb.data(), false, &mut out, 0.0);
        let value = Tensor::matrix(m, n, out)?;
        let needs = self.any_grad(&[a, b]);
        Ok(self.push(Op::MatMul, vec![a, b], value, needs))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let va = &self.nodes[a].value;
        if va.shape().len() != 2 {
            return Err(CoreError::shape("transpose", format!("{:?}", va.shape())));
        }
        let (n, m) = (va.rows(), va.cols());
        let src = va.data();
        let mut data = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                data[j * n + i] = src[i * m + j];
            }
        }
        let value = Tensor::matrix(m, n, data)?;
        let needs = self.nodes[a].needs_grad;
        Ok(self.push(Op::Transpose, vec![a], value, needs))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let va = &self.nodes[a].value;
        let n: usize = shape.iter().product();
        if n != va.numel() {
            return Err(CoreError::shape(
                "reshape",
                format!("{:?} -> {:?}", va.shape(), shape),
            ));
        }
        let value = Tensor::new(shape, va.data().to_vec())?;
        let needs = self.nodes[a].needs_grad;
        Ok(self.push(Op::Reshape, vec![a], value, needs))
    }

    // ── activations / normalization ──────────────────────────────

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a].value;
        let data = va.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let value = Tensor::new(va.shape().to_vec(), data).unwrap();
        let needs = self.nodes[a].needs_grad;
        self.push(Op::Relu, vec![a], value, needs)
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a].value;
        let data = va.data().iter().map(|&x| gelu_val(x)).collect();
        let value = Tensor::new(va.shape().to_vec(), data).unwrap();
        let needs = self.nodes[a].needs_grad;
        self.push(Op::Gelu, vec![a], value, needs)
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: f64) -> Result<NodeId> {
        let (vx, vg, vb) = (
            &self.nodes[x].value,
            &self.nodes[gamma].value,
            &self.nodes[beta].value,
        );
        let d = vx.cols();
        if vg.shape() != [d] || vb.shape() != [d] {
            return Err(CoreError::shape(
                "layer_norm",
                format!(
                    "x {:?}, gamma {:?}, beta {:?}",
                    vx.shape(),
                    vg.shape(),
                    vb.shape()
                ),
            ));
        }
        let n = vx.rows();
        let mut data = vec![0.0; n * d];
        for i in 0..n {
            let row = &vx.data()[i * d..(i + 1) * d];
            let mu = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for j in 0..d {
                data[i * d + j] = (row[j] - mu) * inv * vg.data()[j] + vb.data()[j];
            }
        }
        let value = Tensor::new(vx.shape().to_vec(), data)?;
        let needs = self.any_grad(&[x, gamma, beta]);
        Ok(self.push(Op::LayerNorm { eps }, vec![x, gamma, beta], value, needs))
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a].value;
        let (n, d) = (va.rows(), va.cols());
        let mut data = vec![0.0; n * d];
        for i in 0..n {
            let row = &va.data()[i * d..(i + 1) * d];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..d {
                let e = (row[j] - m).exp();
                data[i * d + j] = e;
                z += e;
            }
            for v in &mut data[i * d..(i + 1) * d] {
                *v /= z;
            }
        }
        let value = Tensor::new(va.shape().to_vec(), data).unwrap();
        let needs = self.nodes[a].needs_grad;
        self.push(Op::Softmax, vec![a], value, needs)
    }

    // ── convolutions / pooling ───────────────────────────────────

    /// 1-D convolution. x is [c_in, t], w is [c_out, c_in, k]; output
    /// [c_out, floor((t + pad_l + pad_r - k)/stride) + 1]. Bias, when wanted,
    /// is a separate [`Graph::add_col`].
    pub fn conv1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        stride: usize,
        pad_l: usize,
        pad_r: usize,
    ) -> Result<NodeId> {
        let (vx, vw) = (&self.nodes[x].value, &self.nodes[w].value);
        let xs = vx.shape().to_vec();
        let ws = vw.shape().to_vec();
        if xs.len() != 2 || ws.len() != 3 || ws[1] != xs[0] {
            return Err(CoreError::shape(
                "conv1d",
                format!("x {:?} vs w {:?} (want w[1] == x[0])", xs, ws),
            ));
        }
        let (c_in, t) = (xs[0], xs[1]);
        let (c_out, k) = (ws[0], ws[2]);
        if stride == 0 || t + pad_l + pad_r < k {
            return Err(CoreError::shape(
                "conv1d",
                format!("t={t} pad=({pad_l},{pad_r}) kernel={k} stride={stride}"),
            ));
        }
        let t_out = (t + pad_l + pad_r - k) / stride + 1;
        let col = im2col(vx.data(), c_in, t, k, stride, pad_l, t_out);
        let mut out = vec![0.0; c_out * t_out];
        gemm(c_out, c_in * k, t_out, vw.data(), false, &col, false, &mut out, 0.0);
        let value = Tensor::matrix(c_out, t_out, out)?;
        let needs = self.any_grad(&[x, w]);
        Ok(self.push(
            Op::Conv1d { stride, pad_l, pad_r, col },
            vec![x, w],
            value,
            needs,
        ))
    }

    /// Transposed 1-D convolution. x is [c_in, t], w is [c_in, c_out, k];
    /// output length (t-1)*stride + k - pad_l - pad_r + out_pad.
    pub fn conv_t1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        stride: usize,
        pad_l: usize,
        pad_r: usize,
        out_pad: usize,
    ) -> Result<NodeId> {
        let (vx, vw) = (&self.nodes[x].value, &self.nodes[w].value);
        let xs = vx.shape().to_vec();
        let ws = vw.shape().to_vec();
        if xs.len() != 2 || ws.len() != 3 || ws[0] != xs[0] {
            return Err(CoreError::shape(
                "conv_t1d",
                format!("x {:?} vs w {:?} (want w[0] == x[0])", xs, ws),
            ));
        }
        if stride == 0 || out_pad >= stride {
            return Err(CoreError::shape(
                "conv_t1d",
                format!("out_pad {out_pad} must be < stride {stride}"),
            ));
        }
        let (c_in, t) = (xs[0], xs[1]);
        let (c_out, k) = (ws[1], ws[2]);
        let full = (t - 1) * stride + k + out_pad;
        if full < pad_l + pad_r + 1 {
            return Err(CoreError::shape(
                "conv_t1d",
                format!("t={t} stride={stride} kernel={k} pads ({pad_l},{pad_r}) leave no output"),
            ));
        }
        let t_out = full - pad_l - pad_r;
        // col[(o*k + kk), i] = sum_c w[c, o, kk] * x[c, i]
        let mut col = vec![0.0; c_out * k * t];
        gemm(c_out * k, c_in, t, vw.data(), true, vx.data(), false, &mut col, 0.0);
        let mut out = vec![0.0; c_out * t_out];
        for o in 0..c_out {
            for kk in 0..k {
                let crow = &col[(o * k + kk) * t..(o * k + kk + 1) * t];
                for (i, &v) in crow.iter().enumerate() {
                    let pos = i * stride + kk;
                    if pos >= pad_l && pos - pad_l < t_out {
                        out[o * t_out + pos - pad_l] += v;
                    }
                }
            }
        }
        let value = Tensor::matrix(c_out, t_out, out)?;
        let needs = self.any_grad(&[x, w]);
        Ok(self.push(
            Op::ConvT1d { stride, pad_l, pad_r, out_pad },
            vec![x, w],
            value,
            needs,
        ))
    }

    pub fn avg_pool1d(&mut self, x: NodeId, kernel: usize, stride: usize) -> Result<NodeId> {
        let vx = &self.nodes[x].value;
        if vx.shape().len() != 2 || vx.cols() < kernel || stride == 0 {
            return Err(CoreError::shape(
                "avg_pool1d",
                format!("x {:?}, kernel {kernel}, stride {stride}", vx.shape()),
            ));
        }
        let (c, t) = (vx.rows(), vx.cols());
        let t_out = (t - kernel) / stride + 1;
        let mut out = vec![0.0; c * t_out];
        for ch in 0..c {
            let row = &vx.data()[ch * t..(ch + 1) * t];
            for j in 0..t_out {
                let s: f64 = row[j * stride..j * stride + kernel].iter().sum();
                out[ch * t_out + j] = s / kernel as f64;
            }
        }
        let value = Tensor::matrix(c, t_out, out)?;
        let needs = self.nodes[x].needs_grad;
        Ok(self.push(Op::AvgPool1d { kernel, stride }, vec![x], value, needs))
    }

    // ── reductions ───────────────────────────────────────────────

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.nodes[a].value.data().iter().sum();
        let needs = self.nodes[a].needs_grad;
        self.push(Op::SumAll, vec![a], Tensor::scalar(s), needs)
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let v = &self.nodes[a].value;
        let s: f64 = v.data().iter().sum::<f64>() / v.numel() as f64;
        let needs = self.nodes[a].needs_grad;
        self.push(Op::MeanAll, vec![a], Tensor::scalar(s), needs)
    }

    pub fn mean_axis0(&mut self, a: NodeId) -> Result<NodeId> {
        let v = &self.nodes[a].value;
        if v.shape().len() != 2 {
            return Err(CoreError::shape("mean_axis0", format!("{:?}", v.shape())));
        }
        let (n, d) = (v.rows(), v.cols());
        let mut out = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                out[j] += v.data()[i * d + j];
            }
        }
        for o in &mut out {
            *o /= n as f64;
        }
        let needs = self.nodes[a].needs_grad;
        Ok(self.push(Op::MeanAxis0, vec![a], Tensor::from_vec(out), needs))
    }

    // ── indexing ─────────────────────────────────────────────────

    pub fn select_rows(&mut self, a: NodeId, rows: Vec<usize>) -> Result<NodeId> {
        let v = &self.nodes[a].value;
        if v.shape().len() != 2 || rows.is_empty() || rows.iter().any(|&r| r >= v.rows()) {
            return Err(CoreError::shape(
                "select_rows",
                format!("{:?} rows from {:?}", rows.len(), v.shape()),
            ));
        }
        let d = v.cols();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in &rows {
            data.extend_from_slice(v.row(r));
        }
        let value = Tensor::matrix(rows.len(), d, data)?;
        let needs = self.nodes[a].needs_grad;
        Ok(self.push(Op::SelectRows(rows), vec![a], value, needs))
    }

    /// Place row j of `a` at `rows[j]` in an otherwise-zero [out_rows, d]
    /// matrix. Row targets must be distinct.
    pub fn scatter_rows(&mut self, a: NodeId, rows: Vec<usize>, out_rows: usize) -> Result<NodeId> {
        let v = &self.nodes[a].value;
        if v.shape().len() != 2 || rows.len() != v.rows() {
            return Err(CoreError::shape(
                "scatter_rows",
                format!("{} targets for {:?}", rows.len(), v.shape()),
            ));
        }
        let mut seen = vec![false; out_rows];
        for &r in &rows {
            if r >= out_rows || seen[r] {
                return Err(CoreError::shape(
                    "scatter_rows",
                    format!("target {r} out of range or duplicated (out_rows {out_rows})"),
                ));
            }
            seen[r] = true;
        }
        let d = v.cols();
        let mut data = vec![0.0; out_rows * d];
        for (j, &r) in rows.iter().enumerate() {
            data[r * d..(r + 1) * d].copy_from_slice(v.row(j));
        }
        let value = Tensor::matrix(out_rows, d, data)?;
        let needs = self.nodes[a].needs_grad;
        Ok(self.push(Op::ScatterRows { rows, out_rows }, vec![a], value, needs))
    }

    /// Gather flat elements of `a` at `idx` into a tensor of `shape`.
    pub fn gather_scalars(&mut self, a: NodeId, idx: Vec<usize>, shape: Vec<usize>) -> Result<NodeId> {
        let v = &self.nodes[a].value;
        let n: usize = shape.iter().product();
        if n != idx.len() || idx.iter().any(|&i| i >= v.numel()) {
            return Err(CoreError::shape(
                "gather_scalars",
                format!("{} indices into {} elements -> {:?}", idx.len(), v.numel(), shape),
            ));
        }
        let data = idx.iter().map(|&i| v.data()[i]).collect();
        let value = Tensor::new(shape, data)?;
        let needs = self.nodes[a].needs_grad;
        Ok(self.push(Op::GatherScalars(idx), vec![a], value, needs))
    }

    // ── losses ───────────────────────────────────────────────────

    /// Mean squared error, mean reduction over all elements.
    pub fn mse(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        Ok(self.mean_all(sq))
    }

    pub fn cross_entropy(&mut self, logits: NodeId, labels: Vec<usize>) -> Result<NodeId> {
        let v = &self.nodes[logits].value;
        if v.shape().len() != 2 || labels.len() != v.rows() || labels.iter().any(|&l| l >= v.cols())
        {
            return Err(CoreError::shape(
                "cross_entropy_with_logits",
                format!("logits {:?}, {} labels", v.shape(), labels.len()),
            ));
        }
        let (n, c) = (v.rows(), v.cols());
        let mut total = 0.0;
        for i in 0..n {
            let row = &v.data()[i * c..(i + 1) * c];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
            total += lse - row[labels[i]];
        }
        let value = Tensor::scalar(total / n as f64);
        let needs = self.nodes[logits].needs_grad;
        Ok(self.push(Op::CrossEntropy { labels }, vec![logits], value, needs))
    }

    // ── gradient routing ─────────────────────────────────────────

    /// Identity forward; the backward sweep never crosses this edge.
    pub fn stop_grad(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.clone();
        self.push(Op::StopGrad, vec![a], value, false)
    }

    /// Straight-through estimator: forward takes `z_hat`'s value, backward
    /// treats the node as identity on `z` and never reaches `z_hat`.
    pub fn ste(&mut self, z: NodeId, z_hat: NodeId) -> Result<NodeId> {
        let (vz, vh) = (&self.nodes[z].value, &self.nodes[z_hat].value);
        if vz.shape() != vh.shape() {
            return Err(CoreError::shape(
                "ste_passthrough",
                format!("z {:?} vs z_hat {:?}", vz.shape(), vh.shape()),
            ));
        }
        let value = vh.clone();
        let needs = self.nodes[z].needs_grad;
        Ok(self.push(Op::Ste, vec![z, z_hat], value, needs))
    }

    // ── diagnostics ──────────────────────────────────────────────

    /// First node (in tape order) holding a NaN/Inf, described for errors.
    pub fn first_nonfinite(&self) -> Option<String> {
        self.nodes
            .iter()
            .enumerate()
            .find(|(_, n)| !n.value.all_finite())
            .map(|(i, n)| format!("{} (node {})", n.op.name(), i))
    }

    // ── backward ─────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Each node is visited once; leaves
    /// keep their accumulated gradients in the returned map.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = &self.nodes[loss].value;
        if !lv.is_scalar() {
            return Err(CoreError::shape(
                "backward",
                format!("loss must be scalar, got {:?}", lv.shape()),
            ));
        }
        if !lv.all_finite() {
            let node = self
                .first_nonfinite()
                .unwrap_or_else(|| "loss".to_string());
            return Err(CoreError::NonFinite { node });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if !self.nodes[loss].needs_grad {
            return Ok(Gradients { grads });
        }
        grads[loss] = Some(vec![1.0]);
        for id in (0..=loss).rev() {
            let node = &self.nodes[id];
            if matches!(node.op, Op::Leaf) || !node.needs_grad {
                continue;
            }
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(id, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn acc<'a>(
        &self,
        grads: &'a mut Vec<Option<Vec<f64>>>,
        id: NodeId,
    ) -> Option<&'a mut Vec<f64>> {
        if !self.nodes[id].needs_grad {
            return None;
        }
        let n = self.nodes[id].value.numel();
        Some(grads[id].get_or_insert_with(|| vec![0.0; n]))
    }

    fn propagate(&self, id: NodeId, g: &[f64], grads: &mut Vec<Option<Vec<f64>>>) {
        let node = &self.nodes[id];
        let ins = &node.inputs;
        match &node.op {
            Op::Leaf => {}
            Op::Add => {
                for &i in ins {
                    if let Some(d) = self.acc(grads, i) {
                        for (dv, gv) in d.iter_mut().zip(g) {
                            *dv += gv;
                        }
                    }
                }
            }
            Op::Sub => {
                if let Some(d) = self.acc(grads, ins[0]) {
                    for (dv, gv) in d.iter_mut().zip(g) {
                        *dv += gv;
                    }
                }
                if let Some(d) = self.acc(grads, ins[1]) {
                    for (dv, gv) in d.iter_mut().zip(g) {
                        *dv -= gv;
                    }
                }
            }
            Op::Mul => {
                let (va, vb) = (self.nodes[ins[0]].value.data(), self.nodes[ins[1]].value.data());
                if let Some(d) = self.acc(grads, ins[0]) {
                    for ((dv, gv), bv) in d.iter_mut().zip(g).zip(vb) {
                        *dv += gv * bv;
                    }
                }
                if let Some(d) = self.acc(grads, ins[1]) {
                    for ((dv, gv), av) in d.iter_mut().zip(g).zip(va) {
                        *dv += gv * av;
                    }
                }
            }
            Op::Scale(c) => {
                if let Some(d) = self.acc(grads, ins[0]) {
                    for (dv, gv) in d.iter_mut().zip(g) {
                        *dv += gv * c;
                    }
                }
            }
            Op::AddRow => {
                let m = self.nodes[ins[1]].value.numel();
                if let Some(d) = self.acc(grads, ins[0]) {
                    for (dv, gv) in d.iter_mut().zip(g) {
                        *dv += gv;
                    }
                }
                if let Some(d) = self.acc(grads, ins[1]) {
                    for (i, gv) in g.iter().enumerate() {
                        d[i % m] += gv;
                    }
                }
            }
            Op::AddCol => {
                let m = self.nodes[ins[0]].value.cols();
                if let Some(d) = self.acc(grads, ins[0]) {
                    for (dv, gv) in d.iter_mut().zip(g) {
                        *dv += gv;
                    }
                }
                if let Some(d) = self.acc(grads, ins[1]) {
                    for (i, gv) in g.iter().enumerate() {
                        d[i / m] += gv;
                    }
                }
            }
            Op::MatMul => {
                let (va, vb) = (&self.nodes[ins[0]].value, &self.nodes[ins[1]].value);
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                if self.nodes[ins[0]].needs_grad {
                    let d = self.acc(grads, ins[0]).unwrap();
                    gemm(m, n, k, g, false, vb.data(), true, d, 1.0);
                }
                if self.nodes[ins[1]].needs_grad {
                    let d = self.acc(grads, ins[1]).unwrap();
                    gemm(k, m, n, va.data(), true, g, false, d, 1.0);
                }
            }
            Op::Transpose => {
                let (n, m) = {
                    let v = &self.nodes[ins[0]].value;
                    (v.rows(), v.cols())
                };
                if let Some(d) = self.acc(grads, ins[0]) {
                    // g has shape [m, n]
                    for j in 0..m {
                        for i in 0..n {
                            d[i * m + j] += g[j * n + i];
                        }
                    }
                }
            }
            Op::Reshape => {
                if let Some(d) = self.acc(grads, ins[0]) {
                    for (dv, gv) in d.iter_mut().zip(g) {
                        *dv += gv;
                    }
                }
            }
            Op::Relu => {
                let vx = self.nodes[ins[0]].value.data();
                if let Some(d) = self.acc(grads, ins[0]) {
                    for ((dv, gv), xv) in d.iter_mut().zip(g).zip(vx) {
                        if *xv > 0.0 {
                            *dv += gv;
                        }
                    }
                }
            }
            Op::Gelu => {
                let vx = self.nodes[ins[0]].value.data();
                if let Some(d) = self.acc(grads, ins[0]) {
                    for ((dv, gv), xv) in d.iter_mut().zip(g).zip(vx) {
                        *dv += gv * gelu_grad(*xv);
                    }
                }
            }
            Op::LayerNorm { eps } => {
                let vx = &self.nodes[ins[0]].value;
                let vg = self.nodes[ins[1]].value.data();
                let (n, d) = (vx.rows(), vx.cols());
                let df = d as f64;
                let mut dx_opt: Vec<f64> = vec![0.0; n * d];
                let mut dgamma = vec![0.0; d];
                let mut dbeta = vec![0.0; d];
                for i in 0..n {
                    let row = &vx.data()[i * d..(i + 1) * d];
                    let grow = &g[i * d..(i + 1) * d];
                    let mu = row.iter().sum::<f64>() / df;
                    let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / df;
                    let inv = 1.0 / (var + eps).sqrt();
                    let mut mean_dyg = 0.0;
                    let mut mean_dyg_xhat = 0.0;
                    for j in 0..d {
                        let xhat = (row[j] - mu) * inv;
                        let dyg = grow[j] * vg[j];
                        mean_dyg += dyg;
                        mean_dyg_xhat += dyg * xhat;
                        dgamma[j] += grow[j] * xhat;
                        dbeta[j] += grow[j];
                    }
                    mean_dyg /= df;
                    mean_dyg_xhat /= df;
                    for j in 0..d {
                        let xhat = (row[j] - mu) * inv;
                        let dyg = grow[j] * vg[j];
                        dx_opt[i * d + j] = inv * (dyg - mean_dyg - xhat * mean_dyg_xhat);
                    }
                }
                if let Some(dst) = self.acc(grads, ins[0]) {
                    for (dv, s) in dst.iter_mut().zip(&dx_opt) {
                        *dv += s;
                    }
                }
                if let Some(dst) = self.acc(grads, ins[1]) {
                    for (dv, s) in dst.iter_mut().zip(&dgamma) {
                        *dv += s;
                    }
                }
                if let Some(dst) = self.acc(grads, ins[2]) {
                    for (dv, s) in dst.iter_mut().zip(&dbeta) {
                        *dv += s;
                    }
                }
            }
            Op::Softmax => {
                let y = &node.value;
                let (n, d) = (y.rows(), y.cols());
                if let Some(dst) = self.acc(grads, ins[0]) {
                    for i in 0..n {
                        let yr = &y.data()[i * d..(i + 1) * d];
                        let gr = &g[i * d..(i + 1) * d];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..d {
                            dst[i * d + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            Op::Conv1d { stride, pad_l, col, .. } => {
                let vx = &self.nodes[ins[0]].value;
                let vw = &self.nodes[ins[1]].value;
                let (c_in, t) = (vx.rows(), vx.cols());
                let (c_out, k) = (vw.shape()[0], vw.shape()[2]);
                let t_out = node.value.cols();
                if self.nodes[ins[1]].needs_grad {
                    let d = self.acc(grads, ins[1]).unwrap();
                    // dW (c_out x c_in*k) += g (c_out x t_out) @ col^T
                    gemm(c_out, t_out, c_in * k, g, false, col, true, d, 1.0);
                }
                if self.nodes[ins[0]].needs_grad {
                    let mut dcol = vec![0.0; c_in * k * t_out];
                    gemm(c_in * k, c_out, t_out, vw.data(), true, g, false, &mut dcol, 0.0);
                    let d = self.acc(grads, ins[0]).unwrap();
                    col2im_add(&dcol, c_in, t, k, *stride, *pad_l, t_out, d);
                }
            }
            Op::ConvT1d { stride, pad_l, pad_r, .. } => {
                let vx = &self.nodes[ins[0]].value;
                let vw = &self.nodes[ins[1]].value;
                let (c_in, t) = (vx.rows(), vx.cols());
                let (c_out, k) = (vw.shape()[1], vw.shape()[2]);
                let t_y = node.value.cols();
                // dcol[(o*k+kk), i] = g[o, i*stride + kk - pad_l]
                let dcol = im2col(g, c_out, t_y, k, *stride, *pad_l, t);
                let _ = pad_r;
                if self.nodes[ins[0]].needs_grad {
                    let d = self.acc(grads, ins[0]).unwrap();
                    gemm(c_in, c_out * k, t, vw.data(), false, &dcol, false, d, 1.0);
                }
                if self.nodes[ins[1]].needs_grad {
                    let d = self.acc(grads, ins[1]).unwrap();
                    gemm(c_in, t, c_out * k, vx.data(), false, &dcol, true, d, 1.0);
                }
            }
            Op::AvgPool1d { kernel, stride } => {
                let (c, t) = {
                    let v = &self.nodes[ins[0]].value;
                    (v.rows(), v.cols())
                };
                let t_out = node.value.cols();
                let kf = *kernel as f64;
                if let Some(d) = self.acc(grads, ins[0]) {
                    for ch in 0..c {
                        for j in 0..t_out {
                            let gv = g[ch * t_out + j] / kf;
                            for kk in 0..*kernel {
                                d[ch * t + j * stride + kk] += gv;
                            }
                        }
                    }
                }
            }
            Op::SumAll => {
                if let Some(d) = self.acc(grads, ins[0]) {
                    for dv in d.iter_mut() {
                        *dv += g[0];
                    }
                }
            }
            Op::MeanAll => {
                let n = self.nodes[ins[0]].value.numel() as f64;
                if let Some(d) = self.acc(grads, ins[0]) {
                    for dv in d.iter_mut() {
                        *dv += g[0] / n;
                    }
                }
            }
            Op::MeanAxis0 => {
                let v = &self.nodes[ins[0]].value;
                let (n, dcols) = (v.rows(), v.cols());
                if let Some(d) = self.acc(grads, ins[0]) {
                    for i in 0..n {
                        for j in 0..dcols {
                            d[i * dcols + j] += g[j] / n as f64;
                        }
                    }
                }
            }
            Op::SelectRows(rows) => {
                let dcols = node.value.cols();
                if let Some(d) = self.acc(grads, ins[0]) {
                    for (j, &r) in rows.iter().enumerate() {
                        for c in 0..dcols {
                            d[r * dcols + c] += g[j * dcols + c];
                        }
                    }
                }
            }
            Op::ScatterRows { rows, .. } => {
                let dcols = node.value.cols();
                if let Some(d) = self.acc(grads, ins[0]) {
                    for (j, &r) in rows.iter().enumerate() {
                        for c in 0..dcols {
                            d[j * dcols + c] += g[r * dcols + c];
                        }
                    }
                }
            }
            Op::GatherScalars(idx) => {
                if let Some(d) = self.acc(grads, ins[0]) {
                    for (i, &src) in idx.iter().enumerate() {
                        d[src] += g[i];
                    }
                }
            }
            Op::CrossEntropy { labels } => {
                let v = &self.nodes[ins[0]].value;
                let (n, c) = (v.rows(), v.cols());
                if let Some(d) = self.acc(grads, ins[0]) {
                    let scale = g[0] / n as f64;
                    for i in 0..n {
                        let row = &v.data()[i * c..(i + 1) * c];
                        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let z: f64 = row.iter().map(|&x| (x - m).exp()).sum();
                        for j in 0..c {
                            let p = (row[j] - m).exp() / z;
                            let onehot = if labels[i] == j { 1.0 } else { 0.0 };
                            d[i * c + j] += scale * (p - onehot);
                        }
                    }
                }
            }
            Op::StopGrad => {}
            Op::Ste => {
                if let Some(d) = self.acc(grads, ins[0]) {
                    for (dv, gv) in d.iter_mut().zip(g) {
                        *dv += gv;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn relu_definition() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(vec![-1.0, 0.0, 2.0]), false);
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn conv1d_valid_all_ones() {
        // length 8, kernel 4, stride 2, 1->1 channels, no padding
        let mut g = Graph::new();
        let x = g.leaf(Tensor::matrix(1, 8, vec![1.0; 8]).unwrap(), false);
        let w = g.leaf(Tensor::new(vec![1, 1, 4], vec![1.0; 4]).unwrap(), false);
        let y = g.conv1d(x, w, 2, 0, 0).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 3]);
        assert_eq!(g.value(y).data(), &[4.0, 4.0, 4.0]);
    }

    #[test]
    fn softmax_symmetry() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(vec![0.0, 0.0]), false);
        let y = g.softmax(x);
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn square_sum_gradient() {
        // loss = sum(x*x), x=[3] -> grad [6]
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(vec![3.0]), true);
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum_all(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[6.0]);
    }

    #[test]
    fn mse_gradient() {
        // loss = mse(x, 0) with x=[1,1] -> grad [1,1]
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(vec![1.0, 1.0]), true);
        let zero = g.constant(Tensor::from_vec(vec![0.0, 0.0]));
        let loss = g.mse(x, zero).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn stop_gradient_forward_identity_and_zero_grad() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(vec![1.0, 2.0]), true);
        let s = g.stop_grad(x);
        assert_eq!(g.value(s).data(), &[1.0, 2.0]);
        let loss = g.sum_all(s);
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(x).is_none());
        assert_eq!(grads.for_leaf(x, &[2]).data(), &[0.0, 0.0]);
    }

    #[test]
    fn stop_gradient_product_rule() {
        // loss = sum(sg(x) * x), x=[2] -> grad [2]
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(vec![2.0]), true);
        let s = g.stop_grad(x);
        let p = g.mul(s, x).unwrap();
        let loss = g.sum_all(p);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[2.0]);
    }

    #[test]
    fn ste_forward_and_gradients() {
        let mut g = Graph::new();
        let z = g.leaf(Tensor::from_vec(vec![0.1]), true);
        let zh = g.leaf(Tensor::from_vec(vec![1.0]), true);
        let s = g.ste(z, zh).unwrap();
        assert_eq!(g.value(s).data(), &[1.0]);
        let loss = g.sum_all(s);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(z).unwrap(), &[1.0]);
        assert!(grads.get(zh).is_none());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(vec![1.0, 2.0]), true);
        let y = g.relu(x);
        assert!(g.backward(y).is_err());
    }

    #[test]
    fn nan_loss_names_producer() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(vec![f64::NAN]), true);
        let y = g.sum_all(x);
        let err = g.backward(y).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("leaf"), "{msg}");
    }

    #[test]
    fn shape_error_names_primitive() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap(), false);
        let b = g.leaf(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap(), false);
        let err = g.matmul(a, b).unwrap_err();
        assert!(format!("{err}").contains("matmul"));
    }

    #[test]
    fn conv_t1d_inverts_extent() {
        // conv with stride 2, pads (1,1) maps t -> floor(t/2);
        // conv_t with matching pads and out_pad recovers t exactly.
        for t in [8usize, 9, 15, 16, 61, 62] {
            let t_down = t / 2;
            let mut g = Graph::new();
            let x = g.leaf(Tensor::matrix(1, t_down, vec![1.0; t_down]).unwrap(), false);
            let w = g.leaf(Tensor::new(vec![1, 1, 4], vec![0.25; 4]).unwrap(), false);
            let out_pad = t - 2 * t_down;
            let y = g.conv_t1d(x, w, 2, 1, 1, out_pad).unwrap();
            assert_eq!(g.value(y).shape(), &[1, t], "t = {t}");
        }
    }

    #[test]
    fn determinism_bit_identical() {
        let run = || {
            let mut g = Graph::new();
            let x = g.leaf(
                Tensor::matrix(2, 6, (0..12).map(|i| (i as f64) * 0.37 - 1.0).collect()).unwrap(),
                true,
            );
            let w = g.leaf(
                Tensor::new(vec![3, 2, 3], (0..18).map(|i| ((i * 7 % 5) as f64) * 0.21).collect())
                    .unwrap(),
                true,
            );
            let c = g.conv1d(x, w, 1, 1, 1).unwrap();
            let r = g.gelu(c);
            let loss = g.mean_all(r);
            let grads = g.backward(loss).unwrap();
            (
                g.value(loss).item().to_bits(),
                grads.get(w).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            )
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn avg_pool_halves() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::matrix(1, 5, vec![1., 2., 3., 4., 5.]).unwrap(), false);
        let y = g.avg_pool1d(x, 2, 2).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 2]);
        assert_eq!(g.value(y).data(), &[1.5, 3.5]);
    }

    #[test]
    fn cross_entropy_uniform() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::matrix(1, 4, vec![0.0; 4]).unwrap(), true);
        let loss = g.cross_entropy(x, vec![2]).unwrap();
        assert_close(g.value(loss).item(), 4.0_f64.ln(), 1e-12);
        let grads = g.backward(loss).unwrap();
        let d = grads.get(x).unwrap();
        assert_close(d[2], 0.25 - 1.0, 1e-12);
        assert_close(d[0], 0.25, 1e-12);
    }
}
