use rand::Rng;

use super::dense::Tensor;
use super::kernels::{adaptive_bin, col2im_3x3, gemm, im2col_3x3, Layout};
use crate::error::{Error, Result};

pub const BATCHNORM_EPS: f64 = 1e-5;
pub const BATCHNORM_MOMENTUM: f64 = 0.1;
pub const LAYERNORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-channel running mean and (unbiased) variance of a batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

/// An operation whose forward pass is computed outside the tape.
///
/// The tape stores the output and calls back into the op to get the
/// vector-Jacobian product for each input.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &str;

    /// Returns one gradient per input, `None` where `needs[i]` is false.
    fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        grad_output: &[f64],
        needs: &[bool],
    ) -> Result<Vec<Option<Vec<f64>>>>;
}

enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    AdaptiveAvg {
        x: Var,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Relu {
        x: Var,
    },
    Tanh {
        x: Var,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    Softmax {
        x: Var,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<f64>,
        probs: Vec<f64>,
    },
    Reshape {
        x: Var,
    },
    Concat {
        parts: Vec<Var>,
    },
    L2Normalize {
        x: Var,
        norms: Vec<f64>,
    },
    Sum {
        x: Var,
    },
    WeightedSum {
        x: Var,
        weights: Vec<f64>,
    },
    Custom {
        inputs: Vec<Var>,
        op: Box<dyn CustomOp>,
    },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Linear record of a forward pass, replayed in reverse by [`Tape::backward`].
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

fn dims4(t: &Tensor, what: &str) -> Result<(usize, usize, usize, usize)> {
    match *t.shape() {
        [b, c, h, w] => Ok((b, c, h, w)),
        ref s => Err(Error::Shape(format!("{what} expects a 4-d tensor, got {s:?}"))),
    }
}

fn dims2(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    match *t.shape() {
        [b, n] => Ok((b, n)),
        ref s => Err(Error::Shape(format!("{what} expects a 2-d tensor, got {s:?}"))),
    }
}

fn expect_len(t: &Tensor, n: usize, what: &str) -> Result<()> {
    if t.numel() != n {
        return Err(Error::Shape(format!(
            "{what} expects {n} values, got shape {:?}",
            t.shape()
        )));
    }
    Ok(())
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

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        debug_assert!(value.is_finite() || inputs.iter().any(|v| !self.value(*v).is_finite()));
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad: false,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a trainable leaf whose gradient is kept after backward.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad: true,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated for `v` by the last backward pass.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// 3x3 convolution, stride 1, zero padding 1.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (batch, c, h, wd) = dims4(self.value(x), "conv2d input")?;
        let (f, wc, kh, kw) = dims4(self.value(w), "conv2d weight")?;
        if (kh, kw) != (3, 3) {
            return Err(Error::Shape(format!("conv2d kernel must be 3x3, got {kh}x{kw}")));
        }
        if wc != c {
            return Err(Error::ChannelMismatch { input: c, weight: wc });
        }
        expect_len(self.value(b), f, "conv2d bias")?;
        let hw = h * wd;
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; batch * f * hw];
        let mut cols = vec![0.0; c * 9 * hw];
        for bi in 0..batch {
            im2col_3x3(&xv[bi * c * hw..(bi + 1) * c * hw], c, h, wd, &mut cols);
            let o = &mut out[bi * f * hw..(bi + 1) * f * hw];
            for (fi, row) in o.chunks_mut(hw.max(1)).enumerate() {
                row.fill(bv[fi]);
            }
            gemm(f, c * 9, hw, wv, Layout::Normal, &cols, Layout::Normal, 1.0, o);
        }
        let value = Tensor::new(&[batch, f, h, wd], out)?;
        Ok(self.push(value, Op::Conv2d { x, w, b }, &[x, w, b]))
    }

    /// Per-channel batch normalization. Train mode normalizes with biased
    /// batch statistics and folds the unbiased variance into `stats`.
    pub fn batchnorm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &mut RunningStats,
        mode: Mode,
    ) -> Result<Var> {
        let (batch, c, h, w) = dims4(self.value(x), "batchnorm2d input")?;
        expect_len(self.value(gamma), c, "batchnorm2d gamma")?;
        expect_len(self.value(beta), c, "batchnorm2d beta")?;
        if stats.mean.len() != c || stats.var.len() != c {
            return Err(Error::Shape(format!(
                "running stats hold {} channels, input has {c}",
                stats.mean.len()
            )));
        }
        let hw = h * w;
        let count = batch * hw;
        let train = mode == Mode::Train;
        if train && count < 2 {
            return Err(Error::BatchTooSmall(count));
        }
        let xv = self.value(x).data();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = vec![0.0; xv.len()];
        let mut out = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; c];
        for ch in 0..c {
            let (mean, var) = if train {
                let mut sum = 0.0;
                for bi in 0..batch {
                    let off = (bi * c + ch) * hw;
                    sum += xv[off..off + hw].iter().sum::<f64>();
                }
                let mean = sum / count as f64;
                let mut ss = 0.0;
                for bi in 0..batch {
                    let off = (bi * c + ch) * hw;
                    ss += xv[off..off + hw].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
                }
                let var = ss / count as f64;
                stats.mean[ch] = (1.0 - BATCHNORM_MOMENTUM) * stats.mean[ch] + BATCHNORM_MOMENTUM * mean;
                let unbiased = ss / (count - 1) as f64;
                stats.var[ch] = (1.0 - BATCHNORM_MOMENTUM) * stats.var[ch] + BATCHNORM_MOMENTUM * unbiased;
                (mean, var)
            } else {
                (stats.mean[ch], stats.var[ch])
            };
            let istd = 1.0 / (var + BATCHNORM_EPS).sqrt();
            inv_std[ch] = istd;
            for bi in 0..batch {
                let off = (bi * c + ch) * hw;
                for i in off..off + hw {
                    let xh = (xv[i] - mean) * istd;
                    xhat[i] = xh;
                    out[i] = g[ch] * xh + bt[ch];
                }
            }
        }
        let value = Tensor::new(&[batch, c, h, w], out)?;
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            },
            &[x, gamma, beta],
        ))
    }

    /// 2x2 max pooling with stride 2. Ties resolve to the first element in
    /// row-major window order.
    pub fn maxpool2d(&mut self, x: Var) -> Result<Var> {
        let (batch, c, h, w) = dims4(self.value(x), "maxpool2d input")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::OddSpatial { height: h, width: w });
        }
        let (oh, ow) = (h / 2, w / 2);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(batch * c * oh * ow);
        let mut argmax = Vec::with_capacity(batch * c * oh * ow);
        for plane in 0..batch * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if xv[idx] > xv[best] {
                            best = idx;
                        }
                    }
                    out.push(xv[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::new(&[batch, c, oh, ow], out)?;
        Ok(self.push(value, Op::MaxPool { x, argmax }, &[x]))
    }

    /// Adaptive average pooling: output bin `i` averages input rows
    /// `floor(i*H/out) .. ceil((i+1)*H/out)` (columns likewise).
    pub fn adaptive_avgpool2d(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let (batch, c, h, w) = dims4(self.value(x), "adaptive_avgpool2d input")?;
        if out_h == 0 || out_w == 0 || out_h > h || out_w > w {
            return Err(Error::PoolTooLarge {
                height: h,
                width: w,
                out_h,
                out_w,
            });
        }
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(batch * c * out_h * out_w);
        for plane in 0..batch * c {
            let base = plane * h * w;
            for oy in 0..out_h {
                let (y0, y1) = adaptive_bin(oy, h, out_h);
                for ox in 0..out_w {
                    let (x0, x1) = adaptive_bin(ox, w, out_w);
                    let mut sum = 0.0;
                    for y in y0..y1 {
                        sum += xv[base + y * w + x0..base + y * w + x1].iter().sum::<f64>();
                    }
                    out.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
                }
            }
        }
        let value = Tensor::new(&[batch, c, out_h, out_w], out)?;
        Ok(self.push(value, Op::AdaptiveAvg { x }, &[x]))
    }

    /// `x · wᵀ + b` for `x: [B, N]`, `w: [M, N]`, `b: [M]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (batch, n) = dims2(self.value(x), "linear input")?;
        let (m, wn) = dims2(self.value(w), "linear weight")?;
        if wn != n {
            return Err(Error::Shape(format!(
                "linear weight is {m}x{wn} but input has {n} features"
            )));
        }
        expect_len(self.value(b), m, "linear bias")?;
        let bv = self.value(b).data();
        let mut out = Vec::with_capacity(batch * m);
        for _ in 0..batch {
            out.extend_from_slice(bv);
        }
        gemm(
            batch,
            n,
            m,
            self.value(x).data(),
            Layout::Normal,
            self.value(w).data(),
            Layout::Transposed,
            1.0,
            &mut out,
        );
        let value = Tensor::new(&[batch, m], out)?;
        Ok(self.push(value, Op::Linear { x, w, b }, &[x, w, b]))
    }

    /// Row-wise layer normalization with biased variance.
    pub fn layernorm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (batch, n) = dims2(self.value(x), "layernorm input")?;
        expect_len(self.value(gamma), n, "layernorm gamma")?;
        expect_len(self.value(beta), n, "layernorm beta")?;
        let xv = self.value(x).data();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = vec![0.0; xv.len()];
        let mut out = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; batch];
        for r in 0..batch {
            let row = &xv[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let istd = 1.0 / (var + LAYERNORM_EPS).sqrt();
            inv_std[r] = istd;
            for j in 0..n {
                let xh = (row[j] - mean) * istd;
                xhat[r * n + j] = xh;
                out[r * n + j] = g[j] * xh + bt[j];
            }
        }
        let value = Tensor::new(&[batch, n], out)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let value = Tensor::new(src.shape(), src.data().iter().map(|v| v.max(0.0)).collect())
            .expect("same shape");
        self.push(value, Op::Relu { x }, &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let value = Tensor::new(src.shape(), src.data().iter().map(|v| v.tanh()).collect())
            .expect("same shape");
        self.push(value, Op::Tanh { x }, &[x])
    }

    /// Inverted dropout. Eval mode (or a zero rate) hands back `x` itself.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, mode: Mode, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let scale = 1.0 / (1.0 - rate);
        let src = self.value(x);
        let mask: Vec<f64> = (0..src.numel())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { scale })
            .collect();
        let out = src.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(src.shape(), out)?;
        Ok(self.push(value, Op::Dropout { x, mask }, &[x]))
    }

    /// Row-wise softmax over the last axis of a 2-d tensor.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let (batch, n) = dims2(self.value(x), "softmax input")?;
        let mut out = self.value(x).data().to_vec();
        for r in 0..batch {
            softmax_in_place(&mut out[r * n..(r + 1) * n]);
        }
        let value = Tensor::new(&[batch, n], out)?;
        Ok(self.push(value, Op::Softmax { x }, &[x]))
    }

    /// Mean cross-entropy against label-smoothed targets: the true class gets
    /// `1 - eps + eps/K`, every other class `eps/K`.
    pub fn cross_entropy_smoothed(&mut self, logits: Var, labels: &[usize], epsilon: f64) -> Result<Var> {
        let (batch, k) = dims2(self.value(logits), "cross_entropy logits")?;
        if labels.len() != batch {
            return Err(Error::LengthMismatch(labels.len(), batch));
        }
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!("label smoothing {epsilon} outside [0, 1)")));
        }
        let mut probs = self.value(logits).data().to_vec();
        let mut targets = vec![epsilon / k as f64; batch * k];
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            if label >= k {
                return Err(Error::LabelOutOfRange { label, classes: k });
            }
            targets[r * k + label] += 1.0 - epsilon;
            let row = &mut probs[r * k..(r + 1) * k];
            let lse = log_sum_exp(row);
            for (j, p) in row.iter_mut().enumerate() {
                let logp = *p - lse;
                total -= targets[r * k + j] * logp;
                *p = logp.exp();
            }
        }
        let value = Tensor::scalar(total / batch as f64);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            },
            &[logits],
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape { x }, &[x]))
    }

    /// Flattens everything after the batch axis.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let shape = self.value(x).shape();
        if shape.is_empty() {
            return Err(Error::Shape("cannot flatten a scalar".into()));
        }
        let batch = shape[0];
        let rest = shape[1..].iter().product();
        self.reshape(x, &[batch, rest])
    }

    /// Concatenates 2-d tensors along the feature axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Shape("concat of nothing".into()));
        }
        let mut widths = Vec::with_capacity(parts.len());
        let mut batch = None;
        for &p in parts {
            let (b, n) = dims2(self.value(p), "concat part")?;
            if *batch.get_or_insert(b) != b {
                return Err(Error::Shape(format!("concat batch sizes differ: {batch:?} vs {b}")));
            }
            widths.push(n);
        }
        let batch = batch.unwrap_or(0);
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(batch * total);
        for r in 0..batch {
            for (&p, &n) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * n..(r + 1) * n]);
            }
        }
        let value = Tensor::new(&[batch, total], out)?;
        Ok(self.push(value, Op::Concat { parts: parts.to_vec() }, parts))
    }

    /// Scales each row to unit L2 norm. Rows with norm at or below `floor`
    /// are rejected rather than renormalized.
    pub fn l2_normalize(&mut self, x: Var, floor: f64) -> Result<Var> {
        let (batch, n) = dims2(self.value(x), "l2_normalize input")?;
        let mut out = self.value(x).data().to_vec();
        let mut norms = Vec::with_capacity(batch);
        for r in 0..batch {
            let row = &mut out[r * n..(r + 1) * n];
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm <= floor || !norm.is_finite() {
                return Err(Error::NearZeroNorm { norm });
            }
            row.iter_mut().for_each(|v| *v /= norm);
            norms.push(norm);
        }
        let value = Tensor::new(&[batch, n], out)?;
        Ok(self.push(value, Op::L2Normalize { x, norms }, &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).data().iter().sum());
        self.push(value, Op::Sum { x }, &[x])
    }

    /// `Σ weights[i] · x[i]`, handy for probing vector-Jacobian products.
    pub fn weighted_sum(&mut self, x: Var, weights: &[f64]) -> Result<Var> {
        expect_len(self.value(x), weights.len(), "weighted_sum")?;
        let s = self.value(x).data().iter().zip(weights).map(|(a, b)| a * b).sum();
        Ok(self.push(
            Tensor::scalar(s),
            Op::WeightedSum {
                x,
                weights: weights.to_vec(),
            },
            &[x],
        ))
    }

    /// Records an externally computed `output = op(inputs)`.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor, op: Box<dyn CustomOp>) -> Var {
        self.push(
            output,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            inputs,
        )
    }

    /// Reverse pass from a scalar `loss`. Gradients of every node that
    /// requires one are available through [`Tape::grad`] afterwards.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.backward_done = true;
        self.grads = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            self.backprop_node(i, &g)?;
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn slot(&mut self, v: Var) -> Option<&mut [f64]> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.numel();
        Some(self.grads[v.0].get_or_insert_with(|| vec![0.0; n]).as_mut_slice())
    }

    fn backprop_node(&mut self, i: usize, g: &[f64]) -> Result<()> {
        // Temporarily detach the op so input values can be read while
        // gradient slots are written.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        let result = self.backprop_op(i, &op, g);
        self.nodes[i].op = op;
        result
    }

    fn backprop_op(&mut self, i: usize, op: &Op, g: &[f64]) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b } => {
                let (batch, c, h, wd) = dims4(self.value(*x), "conv2d input")?;
                let f = self.value(*w).shape()[0];
                let hw = h * wd;
                let xv = self.value(*x).data().to_vec();
                let wv = self.value(*w).data().to_vec();
                let need_x = self.requires_grad(*x);
                let need_w = self.requires_grad(*w);
                let mut cols = vec![0.0; c * 9 * hw];
                let mut dcols = vec![0.0; c * 9 * hw];
                let mut dw = vec![0.0; wv.len()];
                let mut dx = if need_x { vec![0.0; xv.len()] } else { Vec::new() };
                for bi in 0..batch {
                    let gb = &g[bi * f * hw..(bi + 1) * f * hw];
                    if need_w {
                        im2col_3x3(&xv[bi * c * hw..(bi + 1) * c * hw], c, h, wd, &mut cols);
                        gemm(f, hw, c * 9, gb, Layout::Normal, &cols, Layout::Transposed, 1.0, &mut dw);
                    }
                    if need_x {
                        gemm(c * 9, f, hw, &wv, Layout::Transposed, gb, Layout::Normal, 0.0, &mut dcols);
                        col2im_3x3(&dcols, c, h, wd, &mut dx[bi * c * hw..(bi + 1) * c * hw]);
                    }
                }
                if let Some(s) = self.slot(*w) {
                    add_into(s, &dw);
                }
                if let Some(s) = self.slot(*x) {
                    add_into(s, &dx);
                }
                if let Some(s) = self.slot(*b) {
                    for bi in 0..batch {
                        for (fi, acc) in s.iter_mut().enumerate() {
                            let off = (bi * f + fi) * hw;
                            *acc += g[off..off + hw].iter().sum::<f64>();
                        }
                    }
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => {
                let (batch, c, h, w) = dims4(self.value(*x), "batchnorm2d input")?;
                let hw = h * w;
                let count = (batch * hw) as f64;
                let gam = self.value(*gamma).data().to_vec();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for ch in 0..c {
                    for bi in 0..batch {
                        let off = (bi * c + ch) * hw;
                        for j in off..off + hw {
                            dgamma[ch] += g[j] * xhat[j];
                            dbeta[ch] += g[j];
                        }
                    }
                }
                if let Some(s) = self.slot(*x) {
                    for ch in 0..c {
                        let k = gam[ch] * inv_std[ch];
                        for bi in 0..batch {
                            let off = (bi * c + ch) * hw;
                            for j in off..off + hw {
                                s[j] += if *train {
                                    k * (g[j] - dbeta[ch] / count - xhat[j] * dgamma[ch] / count)
                                } else {
                                    k * g[j]
                                };
                            }
                        }
                    }
                }
                if let Some(s) = self.slot(*gamma) {
                    add_into(s, &dgamma);
                }
                if let Some(s) = self.slot(*beta) {
                    add_into(s, &dbeta);
                }
            }
            Op::MaxPool { x, argmax } => {
                if let Some(s) = self.slot(*x) {
                    for (gi, &src) in g.iter().zip(argmax) {
                        s[src] += gi;
                    }
                }
            }
            Op::AdaptiveAvg { x } => {
                let (batch, c, h, w) = dims4(self.value(*x), "adaptive_avgpool2d input")?;
                let out_shape = self.nodes[i].value.shape().to_vec();
                let (oh, ow) = (out_shape[2], out_shape[3]);
                if let Some(s) = self.slot(*x) {
                    for plane in 0..batch * c {
                        let base = plane * h * w;
                        for oy in 0..oh {
                            let (y0, y1) = adaptive_bin(oy, h, oh);
                            for ox in 0..ow {
                                let (x0, x1) = adaptive_bin(ox, w, ow);
                                let share = g[(plane * oh + oy) * ow + ox] / ((y1 - y0) * (x1 - x0)) as f64;
                                for y in y0..y1 {
                                    for xx in x0..x1 {
                                        s[base + y * w + xx] += share;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Op::Linear { x, w, b } => {
                let (batch, n) = dims2(self.value(*x), "linear input")?;
                let m = self.value(*w).shape()[0];
                if self.requires_grad(*x) {
                    let wv = self.value(*w).data().to_vec();
                    let s = self.slot(*x).expect("requires grad");
                    gemm(batch, m, n, g, Layout::Normal, &wv, Layout::Normal, 1.0, s);
                }
                if self.requires_grad(*w) {
                    let xv = self.value(*x).data().to_vec();
                    let s = self.slot(*w).expect("requires grad");
                    gemm(m, batch, n, g, Layout::Transposed, &xv, Layout::Normal, 1.0, s);
                }
                if let Some(s) = self.slot(*b) {
                    for r in 0..batch {
                        add_into(s, &g[r * m..(r + 1) * m]);
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (batch, n) = dims2(self.value(*x), "layernorm input")?;
                let gam = self.value(*gamma).data().to_vec();
                if let Some(s) = self.slot(*x) {
                    for r in 0..batch {
                        let row = r * n..(r + 1) * n;
                        let dxhat: Vec<f64> = g[row.clone()].iter().zip(&gam).map(|(a, b)| a * b).collect();
                        let sum_d: f64 = dxhat.iter().sum();
                        let sum_dx: f64 = dxhat.iter().zip(&xhat[row.clone()]).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            s[r * n + j] += inv_std[r]
                                * (dxhat[j] - sum_d / n as f64 - xhat[r * n + j] * sum_dx / n as f64);
                        }
                    }
                }
                if let Some(s) = self.slot(*gamma) {
                    for (j, gi) in g.iter().enumerate() {
                        s[j % n] += gi * xhat[j];
                    }
                }
                if let Some(s) = self.slot(*beta) {
                    for (j, gi) in g.iter().enumerate() {
                        s[j % n] += gi;
                    }
                }
            }
            Op::Relu { x } => {
                let xv = self.value(*x).data().to_vec();
                if let Some(s) = self.slot(*x) {
                    for ((acc, gi), v) in s.iter_mut().zip(g).zip(&xv) {
                        if *v > 0.0 {
                            *acc += gi;
                        }
                    }
                }
            }
            Op::Tanh { x } => {
                let y = self.nodes[i].value.data().to_vec();
                if let Some(s) = self.slot(*x) {
                    for ((acc, gi), yi) in s.iter_mut().zip(g).zip(&y) {
                        *acc += gi * (1.0 - yi * yi);
                    }
                }
            }
            Op::Dropout { x, mask } => {
                if let Some(s) = self.slot(*x) {
                    for ((acc, gi), m) in s.iter_mut().zip(g).zip(mask) {
                        *acc += gi * m;
                    }
                }
            }
            Op::Softmax { x } => {
                let y = self.nodes[i].value.data().to_vec();
                let n = *self.nodes[i].value.shape().last().unwrap_or(&1);
                if let Some(s) = self.slot(*x) {
                    for r in 0..y.len() / n.max(1) {
                        let row = r * n..(r + 1) * n;
                        let dot: f64 = g[row.clone()].iter().zip(&y[row.clone()]).map(|(a, b)| a * b).sum();
                        for j in row {
                            s[j] += y[j] * (g[j] - dot);
                        }
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let batch = self.value(*logits).shape()[0] as f64;
                let scale = g[0] / batch;
                if let Some(s) = self.slot(*logits) {
                    for ((acc, p), t) in s.iter_mut().zip(probs).zip(targets) {
                        *acc += scale * (p - t);
                    }
                }
            }
            Op::Reshape { x } => {
                if let Some(s) = self.slot(*x) {
                    add_into(s, g);
                }
            }
            Op::Concat { parts } => {
                let total = self.nodes[i].value.shape()[1];
                let batch = self.nodes[i].value.shape()[0];
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).shape()[1];
                    if let Some(s) = self.slot(p) {
                        for r in 0..batch {
                            add_into(&mut s[r * n..(r + 1) * n], &g[r * total + offset..r * total + offset + n]);
                        }
                    }
                    offset += n;
                }
            }
            Op::L2Normalize { x, norms } => {
                let y = self.nodes[i].value.data().to_vec();
                let n = self.nodes[i].value.shape()[1];
                if let Some(s) = self.slot(*x) {
                    for (r, norm) in norms.iter().enumerate() {
                        let row = r * n..(r + 1) * n;
                        let dot: f64 = g[row.clone()].iter().zip(&y[row.clone()]).map(|(a, b)| a * b).sum();
                        for j in row {
                            s[j] += (g[j] - y[j] * dot) / norm;
                        }
                    }
                }
            }
            Op::Sum { x } => {
                if let Some(s) = self.slot(*x) {
                    s.iter_mut().for_each(|v| *v += g[0]);
                }
            }
            Op::WeightedSum { x, weights } => {
                if let Some(s) = self.slot(*x) {
                    for (acc, w) in s.iter_mut().zip(weights) {
                        *acc += g[0] * w;
                    }
                }
            }
            Op::Custom { inputs, op } => {
                let needs: Vec<bool> = inputs.iter().map(|v| self.requires_grad(*v)).collect();
                let grads = {
                    let values: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
                    op.backward(&values, &self.nodes[i].value, g, &needs)?
                };
                if grads.len() != inputs.len() {
                    return Err(Error::Arity {
                        what: "custom op gradients",
                        expected: inputs.len(),
                        got: grads.len(),
                    });
                }
                for (v, gv) in inputs.iter().zip(grads) {
                    if let (Some(gv), true) = (gv, self.requires_grad(*v)) {
                        let s = self.slot(*v).expect("requires grad");
                        add_into(s, &gv);
                    }
                }
            }
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Numerically stable softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}
