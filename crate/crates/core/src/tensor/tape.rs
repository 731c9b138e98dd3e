//! Reverse-mode tape.
//!
//! Ops execute eagerly and append a node; `backward` walks the nodes in
//! strict reverse insertion order, which is a valid topological order by
//! construction. Every op checks its result for NaN/Inf and errors out
//! instead of propagating poison.

use super::{strides_for, Result, Tensor, TensorError};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    Add(Var, Var),
    AddRowBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Matmul(Var, Var),
    Conv3d {
        x: Var,
        w: Var,
        b: Var,
        stride: [usize; 3],
        pad: [usize; 3],
    },
    AvgPool3d {
        x: Var,
        window: [usize; 3],
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<f64>,
        rstd: Vec<f64>,
    },
    SoftmaxRows(Var),
    Silu(Var),
    Sigmoid(Var),
    Exp(Var),
    Softplus(Var),
    Reshape(Var),
    Permute {
        x: Var,
        perm: Vec<usize>,
    },
    Concat {
        xs: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    GatherRows {
        x: Var,
        idx: Vec<usize>,
    },
    SumAll(Var),
    CausalConv1d {
        x: Var,
        w: Var,
        b: Var,
    },
    SsmScan {
        u: Var,
        delta: Var,
        b: Var,
        c: Var,
        a: Var,
        skip: Var,
        /// Hidden states h_t for t = 0..L, flat [L][P][N].
        states: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only computation record; single-owner, not shared across threads.
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradient buffers keyed by node id, produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, what: &str) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite(what.to_string()));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Differentiable input (a parameter).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-differentiable input (data, masks, targets).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Constant,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape() != tb.shape() {
            return Err(TensorError::ShapeMismatch(format!(
                "add: {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor {
            shape: ta.shape().to_vec(),
            data,
        };
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg, "add")
    }

    /// `x + b` with `x: [N][D]`, `b: [D]` broadcast over rows.
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (&self.nodes[x.0].value, &self.nodes[b.0].value);
        if tx.shape().len() != 2 || tb.shape().len() != 1 || tx.shape()[1] != tb.shape()[0] {
            return Err(TensorError::ShapeMismatch(format!(
                "add_row_bias: {:?} vs {:?}",
                tx.shape(),
                tb.shape()
            )));
        }
        let d = tb.shape()[0];
        let mut data = tx.data().to_vec();
        for (i, v) in data.iter_mut().enumerate() {
            *v += tb.data()[i % d];
        }
        let value = Tensor {
            shape: tx.shape().to_vec(),
            data,
        };
        let rg = self.rg(x) || self.rg(b);
        self.push(value, Op::AddRowBias(x, b), rg, "add_row_bias")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape() != tb.shape() {
            return Err(TensorError::ShapeMismatch(format!(
                "mul: {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor {
            shape: ta.shape().to_vec(),
            data,
        };
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a, b), rg, "mul")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let ta = &self.nodes[a.0].value;
        let data = ta.data().iter().map(|x| x * c).collect();
        let value = Tensor {
            shape: ta.shape().to_vec(),
            data,
        };
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, c), rg, "scale")
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let ta = &self.nodes[a.0].value;
        let data = ta.data().iter().map(|x| x + c).collect();
        let value = Tensor {
            shape: ta.shape().to_vec(),
            data,
        };
        let rg = self.rg(a);
        self.push(value, Op::AddScalar(a), rg, "add_scalar")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.scale(b, -1.0)?;
        self.add(a, nb)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch(format!(
                "matmul: {:?} x {:?}",
                sa, sb
            )));
        }
        let (n, k, m) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; n * m];
        let (da, db) = (ta.data(), tb.data());
        for i in 0..n {
            for p in 0..k {
                let av = da[i * k + p];
                if av == 0.0 {
                    continue;
                }
                let row = &db[p * m..(p + 1) * m];
                let orow = &mut out[i * m..(i + 1) * m];
                for (o, bv) in orow.iter_mut().zip(row) {
                    *o += av * bv;
                }
            }
        }
        let value = Tensor {
            shape: vec![n, m],
            data: out,
        };
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Matmul(a, b), rg, "matmul")
    }

    /// 3D convolution: `x: [Cin][D1][D2][D3]`, `w: [Cout][Cin][k1][k2][k3]`,
    /// `b: [Cout]`, explicit zero padding per spatial axis.
    pub fn conv3d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Result<Var> {
        let (tx, tw, tb) = (
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            &self.nodes[b.0].value,
        );
        let (sx, sw) = (tx.shape(), tw.shape());
        if sx.len() != 4 || sw.len() != 5 || sw[1] != sx[0] || tb.shape() != [sw[0]] {
            return Err(TensorError::ShapeMismatch(format!(
                "conv3d: x {:?}, w {:?}, b {:?}",
                sx,
                sw,
                tb.shape()
            )));
        }
        if stride.iter().any(|&s| s == 0) {
            return Err(TensorError::InvalidArgument("conv3d: zero stride".into()));
        }
        for i in 0..3 {
            if sw[2 + i] > sx[1 + i] + 2 * pad[i] {
                return Err(TensorError::InvalidArgument(format!(
                    "conv3d: kernel {:?} larger than padded input {:?}",
                    &sw[2..],
                    &sx[1..]
                )));
            }
        }
        let value = conv3d_forward(tx, tw, tb, stride, pad);
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        self.push(value, Op::Conv3d { x, w, b, stride, pad }, rg, "conv3d")
    }

    /// Average pooling with window == stride (non-overlapping).
    pub fn avg_pool3d(&mut self, x: Var, window: [usize; 3]) -> Result<Var> {
        let tx = &self.nodes[x.0].value;
        let sx = tx.shape();
        if sx.len() != 4 {
            return Err(TensorError::ShapeMismatch(format!(
                "avg_pool3d: {:?}",
                sx
            )));
        }
        for i in 0..3 {
            if window[i] == 0 || sx[1 + i] % window[i] != 0 {
                return Err(TensorError::InvalidArgument(format!(
                    "avg_pool3d: dims {:?} not divisible by window {:?}",
                    &sx[1..],
                    window
                )));
            }
        }
        let (c, d1, d2, d3) = (sx[0], sx[1], sx[2], sx[3]);
        let (o1, o2, o3) = (d1 / window[0], d2 / window[1], d3 / window[2]);
        let inv = 1.0 / (window[0] * window[1] * window[2]) as f64;
        let mut out = vec![0.0; c * o1 * o2 * o3];
        let xd = tx.data();
        for ci in 0..c {
            for i in 0..o1 {
                for j in 0..o2 {
                    for k in 0..o3 {
                        let mut acc = 0.0;
                        for a in 0..window[0] {
                            for bb in 0..window[1] {
                                for cc in 0..window[2] {
                                    let idx = ((ci * d1 + i * window[0] + a) * d2
                                        + j * window[1]
                                        + bb)
                                        * d3
                                        + k * window[2]
                                        + cc;
                                    acc += xd[idx];
                                }
                            }
                        }
                        out[((ci * o1 + i) * o2 + j) * o3 + k] = acc * inv;
                    }
                }
            }
        }
        let value = Tensor {
            shape: vec![c, o1, o2, o3],
            data: out,
        };
        let rg = self.rg(x);
        self.push(value, Op::AvgPool3d { x, window }, rg, "avg_pool3d")
    }

    /// Layer norm over the last dim: `x: [N][D]`, `gamma, beta: [D]`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (tx, tg, tb) = (
            &self.nodes[x.0].value,
            &self.nodes[gamma.0].value,
            &self.nodes[beta.0].value,
        );
        let sx = tx.shape();
        if sx.len() != 2 || tg.shape() != [sx[1]] || tb.shape() != [sx[1]] {
            return Err(TensorError::ShapeMismatch(format!(
                "layer_norm: x {:?}, gamma {:?}, beta {:?}",
                sx,
                tg.shape(),
                tb.shape()
            )));
        }
        let (n, d) = (sx[0], sx[1]);
        let mut out = vec![0.0; n * d];
        let mut means = vec![0.0; n];
        let mut rstds = vec![0.0; n];
        let xd = tx.data();
        for i in 0..n {
            let row = &xd[i * d..(i + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rstd = 1.0 / (var + eps).sqrt();
            means[i] = mean;
            rstds[i] = rstd;
            for j in 0..d {
                out[i * d + j] = (row[j] - mean) * rstd * tg.data()[j] + tb.data()[j];
            }
        }
        let value = Tensor {
            shape: vec![n, d],
            data: out,
        };
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                mean: means,
                rstd: rstds,
            },
            rg,
            "layer_norm",
        )
    }

    /// Row-wise softmax on a 2D tensor.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let tx = &self.nodes[x.0].value;
        let sx = tx.shape();
        if sx.len() != 2 {
            return Err(TensorError::ShapeMismatch(format!("softmax_rows: {:?}", sx)));
        }
        let (n, m) = (sx[0], sx[1]);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &tx.data()[i * m..(i + 1) * m];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..m {
                let e = (row[j] - mx).exp();
                out[i * m + j] = e;
                z += e;
            }
            for j in 0..m {
                out[i * m + j] /= z;
            }
        }
        let value = Tensor {
            shape: vec![n, m],
            data: out,
        };
        let rg = self.rg(x);
        self.push(value, Op::SoftmaxRows(x), rg, "softmax_rows")
    }

    fn unary<F: Fn(f64) -> f64>(&mut self, x: Var, f: F, op: Op, what: &str) -> Result<Var> {
        let tx = &self.nodes[x.0].value;
        let data = tx.data().iter().map(|&v| f(v)).collect();
        let value = Tensor {
            shape: tx.shape().to_vec(),
            data,
        };
        let rg = self.rg(x);
        self.push(value, op, rg, what)
    }

    pub fn silu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, |v| v * sigmoid(v), Op::Silu(x), "silu")
    }

    pub fn sigmoid_op(&mut self, x: Var) -> Result<Var> {
        self.unary(x, sigmoid, Op::Sigmoid(x), "sigmoid")
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(x, f64::exp, Op::Exp(x), "exp")
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        self.unary(x, softplus, Op::Softplus(x), "softplus")
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let tx = &self.nodes[x.0].value;
        if shape.iter().product::<usize>() != tx.numel() {
            return Err(TensorError::ShapeMismatch(format!(
                "reshape: {:?} -> {:?}",
                tx.shape(),
                shape
            )));
        }
        let value = Tensor {
            shape,
            data: tx.data().to_vec(),
        };
        let rg = self.rg(x);
        self.push(value, Op::Reshape(x), rg, "reshape")
    }

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let tx = &self.nodes[x.0].value;
        let sx = tx.shape();
        let mut seen = vec![false; sx.len()];
        if perm.len() != sx.len() || perm.iter().any(|&p| p >= sx.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(TensorError::InvalidArgument(format!(
                "permute: perm {:?} invalid for shape {:?}",
                perm, sx
            )));
        }
        let value = permute_tensor(tx, perm);
        let rg = self.rg(x);
        self.push(
            value,
            Op::Permute {
                x,
                perm: perm.to_vec(),
            },
            rg,
            "permute",
        )
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        if xs.is_empty() {
            return Err(TensorError::InvalidArgument("concat: empty input".into()));
        }
        let first = self.nodes[xs[0].0].value.shape().to_vec();
        if axis >= first.len() {
            return Err(TensorError::InvalidArgument("concat: bad axis".into()));
        }
        let mut total = 0;
        for &v in xs {
            let s = self.nodes[v.0].value.shape();
            if s.len() != first.len()
                || s.iter()
                    .enumerate()
                    .any(|(i, &d)| i != axis && d != first[i])
            {
                return Err(TensorError::ShapeMismatch(format!(
                    "concat: {:?} vs {:?} on axis {}",
                    s, first, axis
                )));
            }
            total += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out = vec![0.0; shape.iter().product()];
        let row = total * inner;
        let mut off = 0;
        for &v in xs {
            let t = &self.nodes[v.0].value;
            let len = t.shape()[axis] * inner;
            for o in 0..outer {
                out[o * row + off..o * row + off + len]
                    .copy_from_slice(&t.data()[o * len..(o + 1) * len]);
            }
            off += len;
        }
        let value = Tensor { shape, data: out };
        let rg = xs.iter().any(|&v| self.rg(v));
        self.push(
            value,
            Op::Concat {
                xs: xs.to_vec(),
                axis,
            },
            rg,
            "concat",
        )
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let tx = &self.nodes[x.0].value;
        let sx = tx.shape();
        if axis >= sx.len() || start + len > sx[axis] || len == 0 {
            return Err(TensorError::InvalidArgument(format!(
                "slice: axis {} [{}, {}) of {:?}",
                axis,
                start,
                start + len,
                sx
            )));
        }
        let outer: usize = sx[..axis].iter().product();
        let inner: usize = sx[axis + 1..].iter().product();
        let mut shape = sx.to_vec();
        shape[axis] = len;
        let mut out = vec![0.0; outer * len * inner];
        for o in 0..outer {
            let src = o * sx[axis] * inner + start * inner;
            out[o * len * inner..(o + 1) * len * inner]
                .copy_from_slice(&tx.data()[src..src + len * inner]);
        }
        let value = Tensor { shape, data: out };
        let rg = self.rg(x);
        self.push(value, Op::Slice { x, axis, start }, rg, "slice")
    }

    /// Gather rows of a 2D tensor by index (duplicates allowed).
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let tx = &self.nodes[x.0].value;
        let sx = tx.shape();
        if sx.len() != 2 {
            return Err(TensorError::ShapeMismatch(format!("gather_rows: {:?}", sx)));
        }
        let (n, d) = (sx[0], sx[1]);
        if idx.iter().any(|&i| i >= n) {
            return Err(TensorError::InvalidArgument(
                "gather_rows: index out of range".into(),
            ));
        }
        let mut out = vec![0.0; idx.len() * d];
        for (r, &i) in idx.iter().enumerate() {
            out[r * d..(r + 1) * d].copy_from_slice(&tx.data()[i * d..(i + 1) * d]);
        }
        let value = Tensor {
            shape: vec![idx.len(), d],
            data: out,
        };
        let rg = self.rg(x);
        self.push(
            value,
            Op::GatherRows {
                x,
                idx: idx.to_vec(),
            },
            rg,
            "gather_rows",
        )
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let tx = &self.nodes[x.0].value;
        let value = Tensor::scalar(tx.data().iter().sum());
        let rg = self.rg(x);
        self.push(value, Op::SumAll(x), rg, "sum_all")
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let n = self.nodes[x.0].value.numel();
        let s = self.sum_all(x)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Depthwise causal 1D conv along rows: `x: [L][D]`, `w: [D][K]`, `b: [D]`.
    /// Left-padded with zeros so position t sees x[t-K+1 ..= t].
    pub fn causal_conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (tx, tw, tb) = (
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            &self.nodes[b.0].value,
        );
        let (sx, sw) = (tx.shape(), tw.shape());
        if sx.len() != 2 || sw.len() != 2 || sw[0] != sx[1] || tb.shape() != [sx[1]] {
            return Err(TensorError::ShapeMismatch(format!(
                "causal_conv1d: x {:?}, w {:?}, b {:?}",
                sx,
                sw,
                tb.shape()
            )));
        }
        let (l, d, k) = (sx[0], sx[1], sw[1]);
        let mut out = vec![0.0; l * d];
        for t in 0..l {
            for di in 0..d {
                let mut acc = tb.data()[di];
                for ki in 0..k {
                    let src = t as isize - (k as isize - 1) + ki as isize;
                    if src >= 0 {
                        acc += tw.data()[di * k + ki] * tx.data()[src as usize * d + di];
                    }
                }
                out[t * d + di] = acc;
            }
        }
        let value = Tensor {
            shape: vec![l, d],
            data: out,
        };
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        self.push(value, Op::CausalConv1d { x, w, b }, rg, "causal_conv1d")
    }

    /// Selective scan. Shapes: `u, delta: [L][P]`, `b, c: [L][N]`,
    /// `a: [P][N]` (diagonal continuous-time state matrix), `skip: [P]`.
    ///
    /// Per token t, channel p, state n:
    ///   abar = exp(delta[t][p] * a[p][n])
    ///   h[p][n] = abar * h[p][n] + delta[t][p] * b[t][n] * u[t][p]
    ///   y[t][p] = sum_n c[t][n] * h[p][n] + skip[p] * u[t][p]
    ///
    /// The output is emitted from the post-update state.
    pub fn ssm_scan(
        &mut self,
        u: Var,
        delta: Var,
        b: Var,
        c: Var,
        a: Var,
        skip: Var,
    ) -> Result<Var> {
        let (tu, td, tb, tc, ta, ts) = (
            &self.nodes[u.0].value,
            &self.nodes[delta.0].value,
            &self.nodes[b.0].value,
            &self.nodes[c.0].value,
            &self.nodes[a.0].value,
            &self.nodes[skip.0].value,
        );
        let su = tu.shape();
        if su.len() != 2 || su[0] == 0 {
            return Err(TensorError::ShapeMismatch(format!("ssm_scan: u {:?}", su)));
        }
        let (l, p) = (su[0], su[1]);
        let n = if tb.shape().len() == 2 { tb.shape()[1] } else { 0 };
        if td.shape() != [l, p]
            || tb.shape() != [l, n]
            || tc.shape() != [l, n]
            || ta.shape() != [p, n]
            || ts.shape() != [p]
            || n == 0
        {
            return Err(TensorError::ShapeMismatch(format!(
                "ssm_scan: u {:?}, delta {:?}, b {:?}, c {:?}, a {:?}, skip {:?}",
                su,
                td.shape(),
                tb.shape(),
                tc.shape(),
                ta.shape(),
                ts.shape()
            )));
        }
        let (ud, dd, bd, cd, ad, sd) = (
            tu.data(),
            td.data(),
            tb.data(),
            tc.data(),
            ta.data(),
            ts.data(),
        );
        let mut states = vec![0.0; l * p * n];
        let mut h = vec![0.0; p * n];
        let mut y = vec![0.0; l * p];
        for t in 0..l {
            for pi in 0..p {
                let dt = dd[t * p + pi];
                let ut = ud[t * p + pi];
                let mut acc = 0.0;
                for ni in 0..n {
                    let abar = (dt * ad[pi * n + ni]).exp();
                    let hv = abar * h[pi * n + ni] + dt * bd[t * n + ni] * ut;
                    h[pi * n + ni] = hv;
                    acc += cd[t * n + ni] * hv;
                }
                y[t * p + pi] = acc + sd[pi] * ut;
            }
            states[t * p * n..(t + 1) * p * n].copy_from_slice(&h);
        }
        let value = Tensor {
            shape: vec![l, p],
            data: y,
        };
        let rg = [u, delta, b, c, a, skip].iter().any(|&v| self.rg(v));
        self.push(
            value,
            Op::SsmScan {
                u,
                delta,
                b,
                c,
                a,
                skip,
                states,
            },
            rg,
            "ssm_scan",
        )
    }

    /// Reverse-mode sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(TensorError::InvalidArgument(
                "backward: loss must be scalar".into(),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            if grads[i].is_none() || !self.nodes[i].requires_grad {
                continue;
            }
            let g = grads[i].take().unwrap();
            self.accumulate_parents(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => {
                for (a, b) in g.data.iter_mut().zip(delta.data()) {
                    *a += b;
                }
            }
            slot => *slot = Some(delta),
        }
    }

    #[allow(clippy::too_many_lines)]
    fn accumulate_parents(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.clone());
            }
            Op::AddRowBias(x, b) => {
                self.acc(grads, *x, g.clone());
                let d = self.nodes[b.0].value.numel();
                let mut gb = vec![0.0; d];
                for (idx, v) in g.data().iter().enumerate() {
                    gb[idx % d] += v;
                }
                self.acc(
                    grads,
                    *b,
                    Tensor {
                        shape: vec![d],
                        data: gb,
                    },
                );
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let ga = Tensor {
                    shape: ta.shape().to_vec(),
                    data: g.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect(),
                };
                let gb = Tensor {
                    shape: tb.shape().to_vec(),
                    data: g.data().iter().zip(ta.data()).map(|(x, y)| x * y).collect(),
                };
                self.acc(grads, *a, ga);
                self.acc(grads, *b, gb);
            }
            Op::Scale(a, c) => {
                let ga = Tensor {
                    shape: g.shape().to_vec(),
                    data: g.data().iter().map(|v| v * c).collect(),
                };
                self.acc(grads, *a, ga);
            }
            Op::AddScalar(a) => self.acc(grads, *a, g.clone()),
            Op::Matmul(a, b) => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (n, k) = (ta.shape()[0], ta.shape()[1]);
                let m = tb.shape()[1];
                // dA = g @ B^T
                let mut ga = vec![0.0; n * k];
                for ii in 0..n {
                    for p in 0..k {
                        let mut acc = 0.0;
                        for j in 0..m {
                            acc += g.data()[ii * m + j] * tb.data()[p * m + j];
                        }
                        ga[ii * k + p] = acc;
                    }
                }
                // dB = A^T @ g
                let mut gb = vec![0.0; k * m];
                for ii in 0..n {
                    for p in 0..k {
                        let av = ta.data()[ii * k + p];
                        if av == 0.0 {
                            continue;
                        }
                        for j in 0..m {
                            gb[p * m + j] += av * g.data()[ii * m + j];
                        }
                    }
                }
                self.acc(
                    grads,
                    *a,
                    Tensor {
                        shape: vec![n, k],
                        data: ga,
                    },
                );
                self.acc(
                    grads,
                    *b,
                    Tensor {
                        shape: vec![k, m],
                        data: gb,
                    },
                );
            }
            Op::Conv3d {
                x,
                w,
                b,
                stride,
                pad,
            } => {
                let (tx, tw) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
                let (gx, gw, gb) = conv3d_backward(tx, tw, g, *stride, *pad);
                self.acc(grads, *x, gx);
                self.acc(grads, *w, gw);
                self.acc(grads, *b, gb);
            }
            Op::AvgPool3d { x, window } => {
                let sx = self.nodes[x.0].value.shape().to_vec();
                let (c, d1, d2, d3) = (sx[0], sx[1], sx[2], sx[3]);
                let (o1, o2, o3) = (d1 / window[0], d2 / window[1], d3 / window[2]);
                let inv = 1.0 / (window[0] * window[1] * window[2]) as f64;
                let mut gx = vec![0.0; c * d1 * d2 * d3];
                for ci in 0..c {
                    for i in 0..o1 {
                        for j in 0..o2 {
                            for k in 0..o3 {
                                let gv = g.data()[((ci * o1 + i) * o2 + j) * o3 + k] * inv;
                                for a in 0..window[0] {
                                    for bb in 0..window[1] {
                                        for cc in 0..window[2] {
                                            let idx = ((ci * d1 + i * window[0] + a) * d2
                                                + j * window[1]
                                                + bb)
                                                * d3
                                                + k * window[2]
                                                + cc;
                                            gx[idx] += gv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                self.acc(
                    grads,
                    *x,
                    Tensor {
                        shape: sx,
                        data: gx,
                    },
                );
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                mean,
                rstd,
            } => {
                let (tx, tg) = (&self.nodes[x.0].value, &self.nodes[gamma.0].value);
                let (n, d) = (tx.shape()[0], tx.shape()[1]);
                let mut gx = vec![0.0; n * d];
                let mut gg = vec![0.0; d];
                let mut gb = vec![0.0; d];
                for ii in 0..n {
                    let row = &tx.data()[ii * d..(ii + 1) * d];
                    let grow = &g.data()[ii * d..(ii + 1) * d];
                    let (mu, rs) = (mean[ii], rstd[ii]);
                    let mut sum_gy = 0.0;
                    let mut sum_gyx = 0.0;
                    for j in 0..d {
                        let xhat = (row[j] - mu) * rs;
                        let gy = grow[j] * tg.data()[j];
                        sum_gy += gy;
                        sum_gyx += gy * xhat;
                        gg[j] += grow[j] * xhat;
                        gb[j] += grow[j];
                    }
                    let dn = d as f64;
                    for j in 0..d {
                        let xhat = (row[j] - mu) * rs;
                        let gy = grow[j] * tg.data()[j];
                        gx[ii * d + j] = rs * (gy - sum_gy / dn - xhat * sum_gyx / dn);
                    }
                }
                self.acc(
                    grads,
                    *x,
                    Tensor {
                        shape: vec![n, d],
                        data: gx,
                    },
                );
                self.acc(
                    grads,
                    *gamma,
                    Tensor {
                        shape: vec![d],
                        data: gg,
                    },
                );
                self.acc(
                    grads,
                    *beta,
                    Tensor {
                        shape: vec![d],
                        data: gb,
                    },
                );
            }
            Op::SoftmaxRows(x) => {
                let y = &node.value;
                let (n, m) = (y.shape()[0], y.shape()[1]);
                let mut gx = vec![0.0; n * m];
                for ii in 0..n {
                    let yr = &y.data()[ii * m..(ii + 1) * m];
                    let gr = &g.data()[ii * m..(ii + 1) * m];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..m {
                        gx[ii * m + j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.acc(
                    grads,
                    *x,
                    Tensor {
                        shape: vec![n, m],
                        data: gx,
                    },
                );
            }
            Op::Silu(x) => {
                let tx = &self.nodes[x.0].value;
                let data = g
                    .data()
                    .iter()
                    .zip(tx.data())
                    .map(|(gv, &v)| {
                        let s = sigmoid(v);
                        gv * (s + v * s * (1.0 - s))
                    })
                    .collect();
                self.acc(
                    grads,
                    *x,
                    Tensor {
                        shape: tx.shape().to_vec(),
                        data,
                    },
                );
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                let data = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(gv, &yv)| gv * yv * (1.0 - yv))
                    .collect();
                self.acc(
                    grads,
                    *x,
                    Tensor {
                        shape: y.shape().to_vec(),
                        data,
                    },
                );
            }
            Op::Exp(x) => {
                let y = &node.value;
                let data = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(gv, &yv)| gv * yv)
                    .collect();
                self.acc(
                    grads,
                    *x,
                    Tensor {
                        shape: y.shape().to_vec(),
                        data,
                    },
                );
            }
            Op::Softplus(x) => {
                let tx = &self.nodes[x.0].value;
                let data = g
                    .data()
                    .iter()
                    .zip(tx.data())
                    .map(|(gv, &v)| gv * sigmoid(v))
                    .collect();
                self.acc(
                    grads,
                    *x,
                    Tensor {
                        shape: tx.shape().to_vec(),
                        data,
                    },
                );
            }
            Op::Reshape(x) => {
                let sx = self.nodes[x.0].value.shape().to_vec();
                self.acc(
                    grads,
                    *x,
                    Tensor {
                        shape: sx,
                        data: g.data().to_vec(),
                    },
                );
            }
            Op::Permute { x, perm } => {
                let mut inv = vec![0usize; perm.len()];
                for (a, &p) in perm.iter().enumerate() {
                    inv[p] = a;
                }
                self.acc(grads, *x, permute_tensor(g, &inv));
            }
            Op::Concat { xs, axis } => {
                let shape = node.value.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[*axis + 1..].iter().product();
                let row = shape[*axis] * inner;
                let mut off = 0;
                for &v in xs {
                    let s = self.nodes[v.0].value.shape().to_vec();
                    let len = s[*axis] * inner;
                    let mut gx = vec![0.0; outer * len];
                    for o in 0..outer {
                        gx[o * len..(o + 1) * len]
                            .copy_from_slice(&g.data()[o * row + off..o * row + off + len]);
                    }
                    off += len;
                    self.acc(
                        grads,
                        v,
                        Tensor {
                            shape: s,
                            data: gx,
                        },
                    );
                }
            }
            Op::Slice { x, axis, start } => {
                let sx = self.nodes[x.0].value.shape().to_vec();
                let sout = node.value.shape();
                let outer: usize = sx[..*axis].iter().product();
                let inner: usize = sx[*axis + 1..].iter().product();
                let len = sout[*axis] * inner;
                let mut gx = vec![0.0; sx.iter().product()];
                for o in 0..outer {
                    let dst = o * sx[*axis] * inner + start * inner;
                    gx[dst..dst + len].copy_from_slice(&g.data()[o * len..(o + 1) * len]);
                }
                self.acc(
                    grads,
                    *x,
                    Tensor {
                        shape: sx,
                        data: gx,
                    },
                );
            }
            Op::GatherRows { x, idx } => {
                let sx = self.nodes[x.0].value.shape().to_vec();
                let d = sx[1];
                let mut gx = vec![0.0; sx[0] * d];
                for (r, &src) in idx.iter().enumerate() {
                    for j in 0..d {
                        gx[src * d + j] += g.data()[r * d + j];
                    }
                }
                self.acc(
                    grads,
                    *x,
                    Tensor {
                        shape: sx,
                        data: gx,
                    },
                );
            }
            Op::SumAll(x) => {
                let sx = self.nodes[x.0].value.shape().to_vec();
                let n: usize = sx.iter().product();
                self.acc(
                    grads,
                    *x,
                    Tensor {
                        shape: sx,
                        data: vec![g.item(); n],
                    },
                );
            }
            Op::CausalConv1d { x, w, b } => {
                let (tx, tw) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
                let (l, d) = (tx.shape()[0], tx.shape()[1]);
                let k = tw.shape()[1];
                let mut gx = vec![0.0; l * d];
                let mut gw = vec![0.0; d * k];
                let mut gb = vec![0.0; d];
                for t in 0..l {
                    for di in 0..d {
                        let gv = g.data()[t * d + di];
                        gb[di] += gv;
                        for ki in 0..k {
                            let src = t as isize - (k as isize - 1) + ki as isize;
                            if src >= 0 {
                                let si = src as usize;
                                gx[si * d + di] += gv * tw.data()[di * k + ki];
                                gw[di * k + ki] += gv * tx.data()[si * d + di];
                            }
                        }
                    }
                }
                self.acc(
                    grads,
                    *x,
                    Tensor {
                        shape: vec![l, d],
                        data: gx,
                    },
                );
                self.acc(
                    grads,
                    *w,
                    Tensor {
                        shape: vec![d, k],
                        data: gw,
                    },
                );
                self.acc(
                    grads,
                    *b,
                    Tensor {
                        shape: vec![d],
                        data: gb,
                    },
                );
            }
            Op::SsmScan {
                u,
                delta,
                b,
                c,
                a,
                skip,
                states,
            } => {
                let (tu, td, tb, tc, ta, ts) = (
                    &self.nodes[u.0].value,
                    &self.nodes[delta.0].value,
                    &self.nodes[b.0].value,
                    &self.nodes[c.0].value,
                    &self.nodes[a.0].value,
                    &self.nodes[skip.0].value,
                );
                let (l, p) = (tu.shape()[0], tu.shape()[1]);
                let n = tb.shape()[1];
                let (ud, dd, bd, cd, ad, sd) = (
                    tu.data(),
                    td.data(),
                    tb.data(),
                    tc.data(),
                    ta.data(),
                    ts.data(),
                );
                let mut gu = vec![0.0; l * p];
                let mut gd = vec![0.0; l * p];
                let mut gb = vec![0.0; l * n];
                let mut gc = vec![0.0; l * n];
                let mut ga = vec![0.0; p * n];
                let mut gskip = vec![0.0; p];
                // Running adjoint of the hidden state.
                let mut dh = vec![0.0; p * n];
                let zero = vec![0.0; p * n];
                for t in (0..l).rev() {
                    let h_t = &states[t * p * n..(t + 1) * p * n];
                    let h_prev: &[f64] = if t == 0 {
                        &zero
                    } else {
                        &states[(t - 1) * p * n..t * p * n]
                    };
                    for pi in 0..p {
                        let gy = g.data()[t * p + pi];
                        let dt = dd[t * p + pi];
                        let ut = ud[t * p + pi];
                        gskip[pi] += gy * ut;
                        let mut du_acc = gy * sd[pi];
                        let mut ddelta_acc = 0.0;
                        for ni in 0..n {
                            // Output contribution of step t.
                            let mut dhv = dh[pi * n + ni] + gy * cd[t * n + ni];
                            gc[t * n + ni] += gy * h_t[pi * n + ni];
                            // Recurrence h_t = abar*h_{t-1} + dt*b_t*u_t.
                            let av = ad[pi * n + ni];
                            let abar = (dt * av).exp();
                            let hp = h_prev[pi * n + ni];
                            let bv = bd[t * n + ni];
                            ddelta_acc += dhv * (av * abar * hp + bv * ut);
                            ga[pi * n + ni] += dhv * dt * abar * hp;
                            gb[t * n + ni] += dhv * dt * ut;
                            du_acc += dhv * dt * bv;
                            dhv *= abar;
                            dh[pi * n + ni] = dhv;
                        }
                        gu[t * p + pi] += du_acc;
                        gd[t * p + pi] += ddelta_acc;
                    }
                }
                self.acc(
                    grads,
                    *u,
                    Tensor {
                        shape: vec![l, p],
                        data: gu,
                    },
                );
                self.acc(
                    grads,
                    *delta,
                    Tensor {
                        shape: vec![l, p],
                        data: gd,
                    },
                );
                self.acc(
                    grads,
                    *b,
                    Tensor {
                        shape: vec![l, n],
                        data: gb,
                    },
                );
                self.acc(
                    grads,
                    *c,
                    Tensor {
                        shape: vec![l, n],
                        data: gc,
                    },
                );
                self.acc(
                    grads,
                    *a,
                    Tensor {
                        shape: vec![p, n],
                        data: ga,
                    },
                );
                self.acc(
                    grads,
                    *skip,
                    Tensor {
                        shape: vec![p],
                        data: gskip,
                    },
                );
            }
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

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn permute_tensor(t: &Tensor, perm: &[usize]) -> Tensor {
    let sx = t.shape();
    let out_shape: Vec<usize> = perm.iter().map(|&p| sx[p]).collect();
    let in_strides = strides_for(sx);
    let out_strides = strides_for(&out_shape);
    let mut out = vec![0.0; t.numel()];
    let rank = sx.len();
    let mut idx = vec![0usize; rank];
    for (lin, &v) in t.data().iter().enumerate() {
        // Decode multi-index in the input layout.
        let mut rem = lin;
        for d in 0..rank {
            idx[d] = rem / in_strides[d];
            rem %= in_strides[d];
        }
        let mut dst = 0;
        for (od, &p) in perm.iter().enumerate() {
            dst += idx[p] * out_strides[od];
        }
        out[dst] = v;
    }
    Tensor {
        shape: out_shape,
        data: out,
    }
}

fn conv3d_forward(x: &Tensor, w: &Tensor, b: &Tensor, stride: [usize; 3], pad: [usize; 3]) -> Tensor {
    let sx = x.shape();
    let sw = w.shape();
    let (cin, d1, d2, d3) = (sx[0], sx[1], sx[2], sx[3]);
    let (cout, k1, k2, k3) = (sw[0], sw[2], sw[3], sw[4]);
    let o1 = (d1 + 2 * pad[0] - k1) / stride[0] + 1;
    let o2 = (d2 + 2 * pad[1] - k2) / stride[1] + 1;
    let o3 = (d3 + 2 * pad[2] - k3) / stride[2] + 1;
    let mut out = vec![0.0; cout * o1 * o2 * o3];
    let xd = x.data();
    let wd = w.data();
    for co in 0..cout {
        let bias = b.data()[co];
        for i in 0..o1 {
            for j in 0..o2 {
                for k in 0..o3 {
                    let mut acc = bias;
                    for ci in 0..cin {
                        for a in 0..k1 {
                            let xi = (i * stride[0] + a) as isize - pad[0] as isize;
                            if xi < 0 || xi >= d1 as isize {
                                continue;
                            }
                            for bb in 0..k2 {
                                let xj = (j * stride[1] + bb) as isize - pad[1] as isize;
                                if xj < 0 || xj >= d2 as isize {
                                    continue;
                                }
                                for cc in 0..k3 {
                                    let xk = (k * stride[2] + cc) as isize - pad[2] as isize;
                                    if xk < 0 || xk >= d3 as isize {
                                        continue;
                                    }
                                    let xidx = ((ci * d1 + xi as usize) * d2 + xj as usize) * d3
                                        + xk as usize;
                                    let widx = (((co * cin + ci) * k1 + a) * k2 + bb) * k3 + cc;
                                    acc += xd[xidx] * wd[widx];
                                }
                            }
                        }
                    }
                    out[((co * o1 + i) * o2 + j) * o3 + k] = acc;
                }
            }
        }
    }
    Tensor {
        shape: vec![cout, o1, o2, o3],
        data: out,
    }
}

fn conv3d_backward(
    x: &Tensor,
    w: &Tensor,
    g: &Tensor,
    stride: [usize; 3],
    pad: [usize; 3],
) -> (Tensor, Tensor, Tensor) {
    let sx = x.shape();
    let sw = w.shape();
    let sg = g.shape();
    let (cin, d1, d2, d3) = (sx[0], sx[1], sx[2], sx[3]);
    let (cout, k1, k2, k3) = (sw[0], sw[2], sw[3], sw[4]);
    let (o1, o2, o3) = (sg[1], sg[2], sg[3]);
    let mut gx = vec![0.0; x.numel()];
    let mut gw = vec![0.0; w.numel()];
    let mut gb = vec![0.0; cout];
    let xd = x.data();
    let wd = w.data();
    let gd = g.data();
    for co in 0..cout {
        for i in 0..o1 {
            for j in 0..o2 {
                for k in 0..o3 {
                    let gv = gd[((co * o1 + i) * o2 + j) * o3 + k];
                    if gv == 0.0 {
                        continue;
                    }
                    gb[co] += gv;
                    for ci in 0..cin {
                        for a in 0..k1 {
                            let xi = (i * stride[0] + a) as isize - pad[0] as isize;
                            if xi < 0 || xi >= d1 as isize {
                                continue;
                            }
                            for bb in 0..k2 {
                                let xj = (j * stride[1] + bb) as isize - pad[1] as isize;
                                if xj < 0 || xj >= d2 as isize {
                                    continue;
                                }
                                for cc in 0..k3 {
                                    let xk = (k * stride[2] + cc) as isize - pad[2] as isize;
                                    if xk < 0 || xk >= d3 as isize {
                                        continue;
                                    }
                                    let xidx = ((ci * d1 + xi as usize) * d2 + xj as usize) * d3
                                        + xk as usize;
                                    let widx = (((co * cin + ci) * k1 + a) * k2 + bb) * k3 + cc;
                                    gx[xidx] += gv * wd[widx];
                                    gw[widx] += gv * xd[xidx];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (
        Tensor {
            shape: sx.to_vec(),
            data: gx,
        },
        Tensor {
            shape: sw.to_vec(),
            data: gw,
        },
        Tensor {
            shape: vec![cout],
            data: gb,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::new(vec![3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap());
        let m = t.constant(
            Tensor::new(vec![3, 3], vec![1., 2., 3., 4., 5., 6., 7., 8., 9.]).unwrap(),
        );
        let y = t.matmul(a, m).unwrap();
        assert_eq!(t.value(y).data(), t.value(m).data());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![2, 4], vec![0.1, -2.0, 3.0, 0.5, 1.0, 1.0, 1.0, 1.0]).unwrap());
        let y = t.softmax_rows(x).unwrap();
        for i in 0..2 {
            let s: f64 = t.value(y).data()[i * 4..(i + 1) * 4].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn conv3d_ones_kernel_is_identity() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![1, 2, 2, 2], (0..8).map(|v| v as f64).collect()).unwrap());
        let w = t.constant(Tensor::new(vec![1, 1, 1, 1, 1], vec![1.0]).unwrap());
        let b = t.constant(Tensor::zeros(&[1]));
        let y = t.conv3d(x, w, b, [1, 1, 1], [0, 0, 0]).unwrap();
        assert_eq!(t.value(y).data(), t.value(x).data());
    }

    #[test]
    fn product_rule() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(2.0));
        let y = t.leaf(Tensor::scalar(3.0));
        let z = t.mul(x, y).unwrap();
        let g = t.backward(z).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 3.0);
        assert_eq!(g.get(y).unwrap().item(), 2.0);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::zeros(&[2]));
        assert!(t.backward(x).is_err());
    }

    #[test]
    fn non_finite_result_is_an_error() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![1], vec![1e308]).unwrap());
        assert!(t.exp(x).is_err());
    }

    #[test]
    fn ssm_scan_pure_skip_path() {
        // D=1, abar=0 (a very negative), b=0 -> y == u.
        let mut t = Tape::new();
        let u = t.constant(Tensor::new(vec![3, 1], vec![1.0, -2.0, 0.5]).unwrap());
        let delta = t.constant(Tensor::full(&[3, 1], 1.0));
        let b = t.constant(Tensor::zeros(&[3, 1]));
        let c = t.constant(Tensor::full(&[3, 1], 1.0));
        let a = t.constant(Tensor::full(&[1, 1], -700.0));
        let skip = t.constant(Tensor::full(&[1], 1.0));
        let y = t.ssm_scan(u, delta, b, c, a, skip).unwrap();
        assert_eq!(t.value(y).data(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn permute_round_trip() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![2, 3, 4], (0..24).map(|v| v as f64).collect()).unwrap());
        let p = t.permute(x, &[2, 0, 1]).unwrap();
        assert_eq!(t.shape(p), &[4, 2, 3]);
        let back = t.permute(p, &[1, 2, 0]).unwrap();
        assert_eq!(t.value(back).data(), t.value(x).data());
    }
}
