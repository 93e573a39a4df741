//! Eager computation graph with reverse-mode differentiation.
//!
//! Ops execute immediately and push a node recording their inputs plus
//! whatever intermediate values the backward pass needs. `backward` replays
//! the node list in reverse, accumulating vector-Jacobian products, and
//! finally adds leaf gradients into the bound [`ParamStore`] entries.

use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;
use crate::{matmul, matmul_a_bt, matmul_at_b, Scalar};

/// Handle to a graph node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadMode {
    /// Zero padding chosen so output extent = ceil(input / stride).
    SameZero,
    /// No padding; kernel must fit inside the input.
    Valid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Max2x2,
    AvgOverHeight,
    AvgOverLength,
}

struct Conv2dCache {
    stride: usize,
    // resolved geometry
    in_h: usize,
    in_w: usize,
    c_in: usize,
    k_h: usize,
    k_w: usize,
    c_out: usize,
    out_h: usize,
    out_w: usize,
    pad_top: usize,
    pad_left: usize,
}

struct Conv1dCache {
    len: usize,
    c_in: usize,
    k: usize,
    c_out: usize,
    pad: usize,
}

struct NormCache<T> {
    mean: Vec<T>,
    rstd: Vec<T>,
    /// Elements reduced per statistic (batch norm: per channel; layer norm: group size).
    group: usize,
    train: bool,
}

struct LstmCache<T> {
    batch: usize,
    steps: usize,
    d_in: usize,
    hidden: usize,
    /// Post-activation gates per step, each [batch,4H] (i,f,g,o).
    gates: Vec<Vec<T>>,
    /// Cell states per step, each [batch,H].
    cells: Vec<Vec<T>>,
}

enum Op<T: Scalar> {
    Leaf {
        param: Option<ParamId>,
    },
    Conv2d {
        x: Var,
        w: Var,
        cache: Conv2dCache,
    },
    Conv1d {
        x: Var,
        w: Var,
        cache: Conv1dCache,
    },
    MaxPool2x2 {
        x: Var,
        argmax: Vec<u8>,
    },
    AvgPool {
        x: Var,
        kind: PoolKind,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        cache: NormCache<T>,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        cache: NormCache<T>,
    },
    LeakyRelu {
        x: Var,
        slope: T,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    LstmSeq {
        x: Var,
        w_ih: Var,
        w_hh: Var,
        bias: Var,
        cache: LstmCache<T>,
    },
    Embed {
        y: Var,
        w: Var,
    },
    PermuteLast2 {
        x: Var,
    },
    Reshape {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    SumAll {
        x: Var,
    },
    SubScalar {
        x: Var,
    },
    MulScalar {
        x: Var,
        c: T,
    },
    Square {
        x: Var,
    },
    MeanAll {
        x: Var,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
    },
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    needs_grad: bool,
    op: Op<T>,
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    last_grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

// ── construction and access ─────────────────────────────────────────────

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            last_grads: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor<T>, needs_grad: bool, op: Op<T>) -> Var {
        debug_assert!(value.is_finite(), "non-finite forward output");
        self.nodes.push(Node {
            value,
            needs_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Leaf that participates in differentiation (inputs under test).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, true, Op::Leaf { param: None })
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, false, Op::Leaf { param: None })
    }

    /// Leaf bound to a store entry; `backward` accumulates into its grad.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let entry = store.entry(id);
        assert!(entry.trainable, "cannot track buffer {:?}", entry.name);
        self.push(entry.value.clone(), true, Op::Leaf { param: Some(id) })
    }

    /// Same entry but without a gradient path (frozen).
    pub fn frozen_param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(store.entry(id).value.clone(), false, Op::Leaf { param: None })
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the most recent `backward` loss w.r.t. a node.
    pub fn grad_of(&self, v: Var) -> Option<&[T]> {
        self.last_grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }
}

// ── convolution ─────────────────────────────────────────────────────────

fn same_pad(extent: usize, k: usize, stride: usize) -> (usize, usize) {
    let out = extent.div_ceil(stride);
    let total = ((out - 1) * stride + k).saturating_sub(extent);
    (out, total / 2)
}

impl<T: Scalar> Graph<T> {
    /// 2-D convolution. Input `[B,H,W,Cin]` (or `[H,W,Cin]`), kernels
    /// `[kh,kw,Cin,Cout]`, output `[B,H',W',Cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: PadMode) -> Var {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert!(stride >= 1, "conv2d stride must be >= 1");
        assert_eq!(ws.len(), 4, "conv2d kernels must be [kh,kw,Cin,Cout]");
        let (batched, b, in_h, in_w, c_in) = match xs.len() {
            3 => (false, 1, xs[0], xs[1], xs[2]),
            4 => (true, xs[0], xs[1], xs[2], xs[3]),
            _ => panic!("conv2d input must be [H,W,Cin] or [B,H,W,Cin], got {xs:?}"),
        };
        let (k_h, k_w, wc_in, c_out) = (ws[0], ws[1], ws[2], ws[3]);
        assert_eq!(
            c_in, wc_in,
            "conv2d channel mismatch: input Cin={c_in}, kernels Cin={wc_in}"
        );
        let (out_h, out_w, pad_top, pad_left) = match pad {
            PadMode::SameZero => {
                let (oh, pt) = same_pad(in_h, k_h, stride);
                let (ow, pl) = same_pad(in_w, k_w, stride);
                (oh, ow, pt, pl)
            }
            PadMode::Valid => {
                assert!(
                    k_h <= in_h && k_w <= in_w,
                    "conv2d valid: kernel {k_h}x{k_w} exceeds input {in_h}x{in_w}"
                );
                ((in_h - k_h) / stride + 1, (in_w - k_w) / stride + 1, 0, 0)
            }
        };
        assert!(
            k_h <= in_h + 2 * pad_top + 1 && k_w <= in_w + 2 * pad_left + 1,
            "conv2d kernel exceeds padded input"
        );

        let cache = Conv2dCache {
            stride,
            in_h,
            in_w,
            c_in,
            k_h,
            k_w,
            c_out,
            out_h,
            out_w,
            pad_top,
            pad_left,
        };

        let patch = k_h * k_w * c_in;
        let mut cols = vec![T::zero(); out_h * out_w * patch];
        let mut out = vec![T::zero(); b * out_h * out_w * c_out];
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        for s in 0..b {
            let xin = &xd[s * in_h * in_w * c_in..(s + 1) * in_h * in_w * c_in];
            im2col_2d(xin, &cache, &mut cols);
            let dst = &mut out[s * out_h * out_w * c_out..(s + 1) * out_h * out_w * c_out];
            matmul(&cols, wd, dst, out_h * out_w, patch, c_out, T::zero());
        }
        let shape = if batched {
            vec![b, out_h, out_w, c_out]
        } else {
            vec![out_h, out_w, c_out]
        };
        let needs = self.needs(x) || self.needs(w);
        self.push(Tensor::new(shape, out), needs, Op::Conv2d { x, w, cache })
    }

    /// 1-D convolution, stride 1, same-zero padding, odd kernel. Input
    /// `[B,L,Cin]` (or `[L,Cin]`), kernels `[k,Cin,Cout]`, output `[B,L,Cout]`.
    pub fn conv1d(&mut self, x: Var, w: Var) -> Var {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert_eq!(ws.len(), 3, "conv1d kernels must be [k,Cin,Cout]");
        let (batched, b, len, c_in) = match xs.len() {
            2 => (false, 1, xs[0], xs[1]),
            3 => (true, xs[0], xs[1], xs[2]),
            _ => panic!("conv1d input must be [L,Cin] or [B,L,Cin], got {xs:?}"),
        };
        let (k, wc_in, c_out) = (ws[0], ws[1], ws[2]);
        assert!(k % 2 == 1, "conv1d kernel size must be odd, got {k}");
        assert_eq!(
            c_in, wc_in,
            "conv1d channel mismatch: input Cin={c_in}, kernels Cin={wc_in}"
        );
        let pad = (k - 1) / 2;
        let cache = Conv1dCache {
            len,
            c_in,
            k,
            c_out,
            pad,
        };

        let patch = k * c_in;
        let mut cols = vec![T::zero(); b * len * patch];
        let xd = self.value(x).data();
        for s in 0..b {
            im2col_1d(
                &xd[s * len * c_in..(s + 1) * len * c_in],
                &cache,
                &mut cols[s * len * patch..(s + 1) * len * patch],
            );
        }
        let mut out = vec![T::zero(); b * len * c_out];
        matmul(&cols, self.value(w).data(), &mut out, b * len, patch, c_out, T::zero());
        let shape = if batched {
            vec![b, len, c_out]
        } else {
            vec![len, c_out]
        };
        let needs = self.needs(x) || self.needs(w);
        self.push(Tensor::new(shape, out), needs, Op::Conv1d { x, w, cache })
    }
}

fn im2col_2d<T: Scalar>(x: &[T], c: &Conv2dCache, cols: &mut [T]) {
    let patch = c.k_h * c.k_w * c.c_in;
    for oy in 0..c.out_h {
        for ox in 0..c.out_w {
            let row = (oy * c.out_w + ox) * patch;
            for ky in 0..c.k_h {
                let iy = (oy * c.stride + ky) as isize - c.pad_top as isize;
                let dst = row + ky * c.k_w * c.c_in;
                if iy < 0 || iy >= c.in_h as isize {
                    cols[dst..dst + c.k_w * c.c_in].fill(T::zero());
                    continue;
                }
                for kx in 0..c.k_w {
                    let ix = (ox * c.stride + kx) as isize - c.pad_left as isize;
                    let dst = dst + kx * c.c_in;
                    if ix < 0 || ix >= c.in_w as isize {
                        cols[dst..dst + c.c_in].fill(T::zero());
                    } else {
                        let src = (iy as usize * c.in_w + ix as usize) * c.c_in;
                        cols[dst..dst + c.c_in].copy_from_slice(&x[src..src + c.c_in]);
                    }
                }
            }
        }
    }
}

fn col2im_2d<T: Scalar>(dcols: &[T], c: &Conv2dCache, dx: &mut [T]) {
    let patch = c.k_h * c.k_w * c.c_in;
    for oy in 0..c.out_h {
        for ox in 0..c.out_w {
            let row = (oy * c.out_w + ox) * patch;
            for ky in 0..c.k_h {
                let iy = (oy * c.stride + ky) as isize - c.pad_top as isize;
                if iy < 0 || iy >= c.in_h as isize {
                    continue;
                }
                for kx in 0..c.k_w {
                    let ix = (ox * c.stride + kx) as isize - c.pad_left as isize;
                    if ix < 0 || ix >= c.in_w as isize {
                        continue;
                    }
                    let src = row + (ky * c.k_w + kx) * c.c_in;
                    let dst = (iy as usize * c.in_w + ix as usize) * c.c_in;
                    for ch in 0..c.c_in {
                        dx[dst + ch] += dcols[src + ch];
                    }
                }
            }
        }
    }
}

fn im2col_1d<T: Scalar>(x: &[T], c: &Conv1dCache, cols: &mut [T]) {
    let patch = c.k * c.c_in;
    for pos in 0..c.len {
        let row = pos * patch;
        for kk in 0..c.k {
            let ip = (pos + kk) as isize - c.pad as isize;
            let dst = row + kk * c.c_in;
            if ip < 0 || ip >= c.len as isize {
                cols[dst..dst + c.c_in].fill(T::zero());
            } else {
                let src = ip as usize * c.c_in;
                cols[dst..dst + c.c_in].copy_from_slice(&x[src..src + c.c_in]);
            }
        }
    }
}

fn col2im_1d<T: Scalar>(dcols: &[T], c: &Conv1dCache, dx: &mut [T]) {
    let patch = c.k * c.c_in;
    for pos in 0..c.len {
        let row = pos * patch;
        for kk in 0..c.k {
            let ip = (pos + kk) as isize - c.pad as isize;
            if ip < 0 || ip >= c.len as isize {
                continue;
            }
            let src = row + kk * c.c_in;
            let dst = ip as usize * c.c_in;
            for ch in 0..c.c_in {
                dx[dst + ch] += dcols[src + ch];
            }
        }
    }
}

// ── pooling ─────────────────────────────────────────────────────────────

impl<T: Scalar> Graph<T> {
    pub fn pool(&mut self, x: Var, kind: PoolKind) -> Var {
        match kind {
            PoolKind::Max2x2 => self.max_pool2x2(x),
            PoolKind::AvgOverHeight | PoolKind::AvgOverLength => self.avg_pool(x, kind),
        }
    }

    /// 2x2 max pooling, stride 2. Extents must be even.
    fn max_pool2x2(&mut self, x: Var) -> Var {
        let xs = self.shape(x).to_vec();
        let (batched, b, h, w, c) = match xs.len() {
            3 => (false, 1, xs[0], xs[1], xs[2]),
            4 => (true, xs[0], xs[1], xs[2], xs[3]),
            _ => panic!("max2x2 input must be [H,W,C] or [B,H,W,C], got {xs:?}"),
        };
        assert!(
            h % 2 == 0 && w % 2 == 0,
            "max2x2 requires even extents, got {h}x{w}"
        );
        let (oh, ow) = (h / 2, w / 2);
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); b * oh * ow * c];
        let mut argmax = vec![0u8; b * oh * ow * c];
        for s in 0..b {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let mut best = T::neg_infinity();
                        let mut arg = 0u8;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let v = xd[((s * h + oy * 2 + dy) * w + ox * 2 + dx) * c + ch];
                                if v > best {
                                    best = v;
                                    arg = (dy * 2 + dx) as u8;
                                }
                            }
                        }
                        let o = ((s * oh + oy) * ow + ox) * c + ch;
                        out[o] = best;
                        argmax[o] = arg;
                    }
                }
            }
        }
        let shape = if batched {
            vec![b, oh, ow, c]
        } else {
            vec![oh, ow, c]
        };
        let needs = self.needs(x);
        self.push(Tensor::new(shape, out), needs, Op::MaxPool2x2 { x, argmax })
    }

    /// Average over the named axis: height collapses `[B,H,W,C] -> [B,W,C]`;
    /// length collapses `[B,L,C] -> [B,C]`.
    fn avg_pool(&mut self, x: Var, kind: PoolKind) -> Var {
        let xs = self.shape(x).to_vec();
        let value = match kind {
            PoolKind::AvgOverHeight => {
                let (batched, b, h, w, c) = match xs.len() {
                    3 => (false, 1, xs[0], xs[1], xs[2]),
                    4 => (true, xs[0], xs[1], xs[2], xs[3]),
                    _ => panic!("avg-over-height input must be [H,W,C] or [B,H,W,C]"),
                };
                let xd = self.value(x).data();
                let mut out = vec![T::zero(); b * w * c];
                let inv = T::from_f64(1.0 / h as f64);
                for s in 0..b {
                    for y in 0..h {
                        for i in 0..w * c {
                            out[s * w * c + i] += xd[(s * h + y) * w * c + i];
                        }
                    }
                }
                for v in out.iter_mut() {
                    *v *= inv;
                }
                let shape = if batched { vec![b, w, c] } else { vec![w, c] };
                Tensor::new(shape, out)
            }
            PoolKind::AvgOverLength => {
                let (batched, b, l, c) = match xs.len() {
                    2 => (false, 1, xs[0], xs[1]),
                    3 => (true, xs[0], xs[1], xs[2]),
                    _ => panic!("avg-over-length input must be [L,C] or [B,L,C]"),
                };
                let xd = self.value(x).data();
                let mut out = vec![T::zero(); b * c];
                let inv = T::from_f64(1.0 / l as f64);
                for s in 0..b {
                    for p in 0..l {
                        for ch in 0..c {
                            out[s * c + ch] += xd[(s * l + p) * c + ch];
                        }
                    }
                }
                for v in out.iter_mut() {
                    *v *= inv;
                }
                let shape = if batched { vec![b, c] } else { vec![c] };
                Tensor::new(shape, out)
            }
            PoolKind::Max2x2 => unreachable!(),
        };
        let needs = self.needs(x);
        self.push(value, needs, Op::AvgPool { x, kind })
    }
}

// ── normalization ───────────────────────────────────────────────────────

pub const NORM_EPS: f64 = 1e-5;

impl<T: Scalar> Graph<T> {
    /// Batch normalization over all axes except the last (channel) axis.
    ///
    /// Train mode uses current batch statistics and folds them into the
    /// running moments (`running <- momentum*running + (1-momentum)*batch`);
    /// eval mode normalizes with the running moments.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &mut Tensor<T>,
        running_var: &mut Tensor<T>,
        momentum: f64,
        train: bool,
    ) -> Var {
        let xs = self.shape(x).to_vec();
        assert!(xs.len() >= 2, "batch norm requires a batch axis");
        let c = *xs.last().unwrap();
        assert_eq!(self.shape(gamma), &[c], "batch norm scale must be [C]");
        assert_eq!(self.shape(beta), &[c], "batch norm shift must be [C]");
        assert_eq!(running_mean.numel(), c);
        assert_eq!(running_var.numel(), c);
        let group = self.value(x).numel() / c;
        let eps = T::from_f64(NORM_EPS);

        let (mean, rstd) = if train {
            let xd = self.value(x).data();
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for row in 0..group {
                for ch in 0..c {
                    mean[ch] += xd[row * c + ch];
                }
            }
            let inv = T::from_f64(1.0 / group as f64);
            for m in mean.iter_mut() {
                *m *= inv;
            }
            for row in 0..group {
                for ch in 0..c {
                    let d = xd[row * c + ch] - mean[ch];
                    var[ch] += d * d;
                }
            }
            for v in var.iter_mut() {
                *v *= inv;
            }
            let mom = T::from_f64(momentum);
            let one_m = T::one() - mom;
            for ch in 0..c {
                running_mean.data_mut()[ch] = mom * running_mean.data()[ch] + one_m * mean[ch];
                running_var.data_mut()[ch] = mom * running_var.data()[ch] + one_m * var[ch];
            }
            let rstd: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
            (mean, rstd)
        } else {
            let rstd: Vec<T> = running_var
                .data()
                .iter()
                .map(|&v| T::one() / (v + eps).sqrt())
                .collect();
            (running_mean.data().to_vec(), rstd)
        };

        let xd = self.value(x).data();
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        let mut out = vec![T::zero(); xd.len()];
        for row in 0..group {
            for ch in 0..c {
                let i = row * c + ch;
                out[i] = (xd[i] - mean[ch]) * rstd[ch] * gd[ch] + bd[ch];
            }
        }
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(
            Tensor::new(xs, out),
            needs,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                cache: NormCache {
                    mean,
                    rstd,
                    group,
                    train,
                },
            },
        )
    }

    /// Layer normalization over the last (feature) axis, one statistic per
    /// leading index. Keeps the op local along sequence positions.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xs = self.shape(x).to_vec();
        assert!(!xs.is_empty(), "layer norm input must have a feature axis");
        let c = *xs.last().unwrap();
        assert_eq!(self.shape(gamma), &[c], "layer norm scale must be [C]");
        assert_eq!(self.shape(beta), &[c], "layer norm shift must be [C]");
        let groups = self.value(x).numel() / c;
        let eps = T::from_f64(NORM_EPS);
        let inv = T::from_f64(1.0 / c as f64);

        let xd = self.value(x).data();
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        let mut mean = vec![T::zero(); groups];
        let mut rstd = vec![T::zero(); groups];
        let mut out = vec![T::zero(); xd.len()];
        for g in 0..groups {
            let base = g * c;
            let mut m = T::zero();
            for ch in 0..c {
                m += xd[base + ch];
            }
            m *= inv;
            let mut v = T::zero();
            for ch in 0..c {
                let d = xd[base + ch] - m;
                v += d * d;
            }
            v *= inv;
            let r = T::one() / (v + eps).sqrt();
            mean[g] = m;
            rstd[g] = r;
            for ch in 0..c {
                out[base + ch] = (xd[base + ch] - m) * r * gd[ch] + bd[ch];
            }
        }
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(
            Tensor::new(xs, out),
            needs,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                cache: NormCache {
                    mean,
                    rstd,
                    group: c,
                    train: true,
                },
            },
        )
    }
}

// ── activations, projection, lstm, embedding ────────────────────────────

impl<T: Scalar> Graph<T> {
    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        assert!(
            slope > 0.0 && slope < 1.0,
            "leaky relu slope must be in (0,1), got {slope}"
        );
        let s = T::from_f64(slope);
        let out: Vec<T> = self
            .value(x)
            .data()
            .iter()
            .map(|&v| if v >= T::zero() { v } else { s * v })
            .collect();
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x);
        self.push(Tensor::new(shape, out), needs, Op::LeakyRelu { x, slope: s })
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Var {
        let xs = self.shape(x).to_vec();
        assert!(axis < xs.len(), "softmax axis {axis} out of range {xs:?}");
        let k = xs[axis];
        let inner: usize = xs[axis + 1..].iter().product();
        let outer: usize = xs[..axis].iter().product();
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); xd.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * k + j) * inner + i;
                let mut mx = T::neg_infinity();
                for j in 0..k {
                    mx = mx.max(xd[idx(j)]);
                }
                let mut sum = T::zero();
                for j in 0..k {
                    let e = (xd[idx(j)] - mx).exp();
                    out[idx(j)] = e;
                    sum += e;
                }
                for j in 0..k {
                    out[idx(j)] /= sum;
                }
            }
        }
        let needs = self.needs(x);
        self.push(Tensor::new(xs, out), needs, Op::Softmax { x, axis })
    }

    /// Affine map along the last axis: `y[...,j] = sum_i x[...,i] w[i,j] + b[j]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert_eq!(ws.len(), 2, "linear weight must be [Din,Dout]");
        let (d_in, d_out) = (ws[0], ws[1]);
        assert_eq!(
            *xs.last().unwrap(),
            d_in,
            "linear input Din mismatch: {xs:?} vs {ws:?}"
        );
        assert_eq!(self.shape(b), &[d_out], "linear bias must be [Dout]");
        let rows = self.value(x).numel() / d_in;
        let mut out = vec![T::zero(); rows * d_out];
        matmul(
            self.value(x).data(),
            self.value(w).data(),
            &mut out,
            rows,
            d_in,
            d_out,
            T::zero(),
        );
        let bd = self.value(b).data();
        for r in 0..rows {
            for j in 0..d_out {
                out[r * d_out + j] += bd[j];
            }
        }
        let mut shape = xs;
        *shape.last_mut().unwrap() = d_out;
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(Tensor::new(shape, out), needs, Op::Linear { x, w, b })
    }

    /// Left-to-right LSTM over `[B,n,Din]` (or `[n,Din]`), zero initial
    /// states, returning the hidden state at every position `[B,n,H]`.
    /// Gate weights are `w_ih [Din,4H]`, `w_hh [H,4H]`, `bias [4H]`,
    /// gate order (input, forget, cell, output).
    pub fn lstm_seq(&mut self, x: Var, w_ih: Var, w_hh: Var, bias: Var) -> Var {
        let xs = self.shape(x).to_vec();
        let (batched, b, steps, d_in) = match xs.len() {
            2 => (false, 1, xs[0], xs[1]),
            3 => (true, xs[0], xs[1], xs[2]),
            _ => panic!("lstm input must be [n,Din] or [B,n,Din], got {xs:?}"),
        };
        let ws = self.shape(w_ih).to_vec();
        assert_eq!(ws.len(), 2, "lstm w_ih must be [Din,4H]");
        assert_eq!(ws[0], d_in, "lstm w_ih Din mismatch");
        assert!(ws[1] % 4 == 0, "lstm w_ih second extent must be 4H");
        let hidden = ws[1] / 4;
        assert_eq!(self.shape(w_hh), &[hidden, 4 * hidden], "lstm w_hh shape");
        assert_eq!(self.shape(bias), &[4 * hidden], "lstm bias shape");

        let xd = self.value(x).data();
        let wih = self.value(w_ih).data();
        let whh = self.value(w_hh).data();
        let bd = self.value(bias).data();

        let mut h_prev = vec![T::zero(); b * hidden];
        let mut c_prev = vec![T::zero(); b * hidden];
        let mut gates_all: Vec<Vec<T>> = Vec::with_capacity(steps);
        let mut cells_all: Vec<Vec<T>> = Vec::with_capacity(steps);
        let mut out = vec![T::zero(); b * steps * hidden];

        let half = T::from_f64(0.5);
        let sigmoid = |v: T| half * ((half * v).tanh() + T::one());
        for t in 0..steps {
            // a = x_t @ w_ih + h_{t-1} @ w_hh + bias
            let mut a = vec![T::zero(); b * 4 * hidden];
            let mut x_t = vec![T::zero(); b * d_in];
            for s in 0..b {
                x_t[s * d_in..(s + 1) * d_in]
                    .copy_from_slice(&xd[(s * steps + t) * d_in..(s * steps + t + 1) * d_in]);
            }
            matmul(&x_t, wih, &mut a, b, d_in, 4 * hidden, T::zero());
            matmul(&h_prev, whh, &mut a, b, hidden, 4 * hidden, T::one());
            let mut gates = vec![T::zero(); b * 4 * hidden];
            let mut cells = vec![T::zero(); b * hidden];
            for s in 0..b {
                for j in 0..hidden {
                    let base = s * 4 * hidden;
                    let i_g = sigmoid(a[base + j] + bd[j]);
                    let f_g = sigmoid(a[base + hidden + j] + bd[hidden + j]);
                    let g_g = (a[base + 2 * hidden + j] + bd[2 * hidden + j]).tanh();
                    let o_g = sigmoid(a[base + 3 * hidden + j] + bd[3 * hidden + j]);
                    let c_t = f_g * c_prev[s * hidden + j] + i_g * g_g;
                    let h_t = o_g * c_t.tanh();
                    gates[base + j] = i_g;
                    gates[base + hidden + j] = f_g;
                    gates[base + 2 * hidden + j] = g_g;
                    gates[base + 3 * hidden + j] = o_g;
                    cells[s * hidden + j] = c_t;
                    out[(s * steps + t) * hidden + j] = h_t;
                }
            }
            for s in 0..b {
                h_prev[s * hidden..(s + 1) * hidden]
                    .copy_from_slice(&out[(s * steps + t) * hidden..(s * steps + t + 1) * hidden]);
            }
            c_prev.copy_from_slice(&cells);
            gates_all.push(gates);
            cells_all.push(cells);
        }

        let shape = if batched {
            vec![b, steps, hidden]
        } else {
            vec![steps, hidden]
        };
        let needs =
            self.needs(x) || self.needs(w_ih) || self.needs(w_hh) || self.needs(bias);
        self.push(
            Tensor::new(shape, out),
            needs,
            Op::LstmSeq {
                x,
                w_ih,
                w_hh,
                bias,
                cache: LstmCache {
                    batch: b,
                    steps,
                    d_in,
                    hidden,
                    gates: gates_all,
                    cells: cells_all,
                },
            },
        )
    }

    /// Character-embedding product: strings `y [B,K,n]` (or `[K,n]`) with
    /// columns on the simplex, embedding `w [K,d]`, output `[B,n,d]`.
    pub fn embed(&mut self, y: Var, w: Var) -> Var {
        let ys = self.shape(y).to_vec();
        let ws = self.shape(w).to_vec();
        assert_eq!(ws.len(), 2, "embedding must be [K,d]");
        let (batched, b, k, n) = match ys.len() {
            2 => (false, 1, ys[0], ys[1]),
            3 => (true, ys[0], ys[1], ys[2]),
            _ => panic!("embed input must be [K,n] or [B,K,n], got {ys:?}"),
        };
        assert_eq!(k, ws[0], "embed K mismatch: strings {k}, embedding {}", ws[0]);
        let d = ws[1];
        let yd = self.value(y).data();
        let wd = self.value(w).data();
        let mut out = vec![T::zero(); b * n * d];
        for s in 0..b {
            // out[s] (n,d) = y[s]^T (n,K) @ w (K,d); y[s] stored (K,n) row-major
            unsafe {
                T::gemm(
                    n,
                    k,
                    d,
                    T::one(),
                    yd.as_ptr().add(s * k * n),
                    1,
                    n as isize,
                    wd.as_ptr(),
                    d as isize,
                    1,
                    T::zero(),
                    out.as_mut_ptr().add(s * n * d),
                    d as isize,
                    1,
                );
            }
        }
        let shape = if batched { vec![b, n, d] } else { vec![n, d] };
        let needs = self.needs(y) || self.needs(w);
        self.push(Tensor::new(shape, out), needs, Op::Embed { y, w })
    }
}

// ── shape and elementwise ops ───────────────────────────────────────────

impl<T: Scalar> Graph<T> {
    /// Swap the last two axes.
    pub fn permute_last2(&mut self, x: Var) -> Var {
        let xs = self.shape(x).to_vec();
        assert!(xs.len() >= 2, "permute_last2 needs rank >= 2");
        let (a, bdim) = (xs[xs.len() - 2], xs[xs.len() - 1]);
        let outer: usize = xs[..xs.len() - 2].iter().product();
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); xd.len()];
        for o in 0..outer {
            for i in 0..a {
                for j in 0..bdim {
                    out[(o * bdim + j) * a + i] = xd[(o * a + i) * bdim + j];
                }
            }
        }
        let mut shape = xs;
        let len = shape.len();
        shape.swap(len - 2, len - 1);
        let needs = self.needs(x);
        self.push(Tensor::new(shape, out), needs, Op::PermuteLast2 { x })
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Var {
        let value = self.value(x).reshaped(shape);
        let needs = self.needs(x);
        self.push(value, needs, Op::Reshape { x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let out: Vec<T> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a) || self.needs(b);
        self.push(Tensor::new(shape, out), needs, Op::Add { a, b })
    }

    /// Elementwise product, same shapes.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shape mismatch");
        let out: Vec<T> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a) || self.needs(b);
        self.push(Tensor::new(shape, out), needs, Op::Mul { a, b })
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let sum: T = self.value(x).data().iter().copied().sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(sum), needs, Op::SumAll { x })
    }

    pub fn sub_scalar(&mut self, x: Var, c: f64) -> Var {
        let cv = T::from_f64(c);
        let out: Vec<T> = self.value(x).data().iter().map(|&v| v - cv).collect();
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x);
        self.push(Tensor::new(shape, out), needs, Op::SubScalar { x })
    }

    pub fn mul_scalar(&mut self, x: Var, c: f64) -> Var {
        let cv = T::from_f64(c);
        let out: Vec<T> = self.value(x).data().iter().map(|&v| v * cv).collect();
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x);
        self.push(Tensor::new(shape, out), needs, Op::MulScalar { x, c: cv })
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out: Vec<T> = self.value(x).data().iter().map(|&v| v * v).collect();
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x);
        self.push(Tensor::new(shape, out), needs, Op::Square { x })
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.value(x).numel();
        let sum: T = self.value(x).data().iter().copied().sum();
        let v = sum * T::from_f64(1.0 / n as f64);
        let needs = self.needs(x);
        self.push(Tensor::scalar(v), needs, Op::MeanAll { x })
    }

    /// Mean cross-entropy between softmax(logits) and one-hot labels.
    /// Logits `[B,K,n]` (or `[K,n]`), class axis K; labels flattened
    /// batch-major, one index per (sample, position).
    pub fn cross_entropy(&mut self, logits: Var, labels: Vec<usize>) -> Var {
        let ls = self.shape(logits).to_vec();
        let (b, k, n) = match ls.len() {
            2 => (1, ls[0], ls[1]),
            3 => (ls[0], ls[1], ls[2]),
            _ => panic!("cross_entropy logits must be [K,n] or [B,K,n], got {ls:?}"),
        };
        assert_eq!(
            labels.len(),
            b * n,
            "cross_entropy labels: expected {} got {}",
            b * n,
            labels.len()
        );
        assert!(
            labels.iter().all(|&l| l < k),
            "cross_entropy label out of range"
        );
        let xd = self.value(logits).data();
        let mut total = T::zero();
        for s in 0..b {
            for i in 0..n {
                let idx = |j: usize| (s * k + j) * n + i;
                let mut mx = T::neg_infinity();
                for j in 0..k {
                    mx = mx.max(xd[idx(j)]);
                }
                let mut sum = T::zero();
                for j in 0..k {
                    sum += (xd[idx(j)] - mx).exp();
                }
                let lse = mx + sum.ln();
                total += lse - xd[idx(labels[s * n + i])];
            }
        }
        let v = total * T::from_f64(1.0 / (b * n) as f64);
        let needs = self.needs(logits);
        self.push(Tensor::scalar(v), needs, Op::CrossEntropy { logits, labels })
    }
}

// ── backward ────────────────────────────────────────────────────────────

impl<T: Scalar> Graph<T> {
    /// Reverse pass from a scalar loss. Gradients for bound parameters are
    /// accumulated into the store (callers zero them between steps); calling
    /// twice accumulates twice.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore<T>) {
        assert_eq!(
            self.nodes[loss.0].value.numel(),
            1,
            "backward requires a scalar loss, got shape {:?}",
            self.nodes[loss.0].value.shape()
        );
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            if grads[i].is_none() || !self.nodes[i].needs_grad {
                continue;
            }
            let dy = grads[i].take().unwrap();
            self.backward_node(i, &dy, &mut grads);
            grads[i] = Some(dy);
        }

        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf { param: Some(pid) } = node.op {
                if let Some(g) = &grads[i] {
                    store.accumulate_grad(pid, g);
                }
            }
        }
        self.last_grads = grads;
    }

    fn acc(&self, grads: &mut [Option<Vec<T>>], v: Var, delta: &[T]) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => {
                for (a, d) in g.iter_mut().zip(delta) {
                    *a += *d;
                }
            }
            None => grads[v.0] = Some(delta.to_vec()),
        }
    }

    fn backward_node(&self, i: usize, dy: &[T], grads: &mut [Option<Vec<T>>]) {
        match &self.nodes[i].op {
            Op::Leaf { .. } => {}

            Op::Conv2d { x, w, cache } => {
                let c = cache;
                let xs = self.shape(*x);
                let b = if xs.len() == 4 { xs[0] } else { 1 };
                let patch = c.k_h * c.k_w * c.c_in;
                let xd = self.value(*x).data();
                let wd = self.value(*w).data();
                let mut cols = vec![T::zero(); c.out_h * c.out_w * patch];
                let mut dw = vec![T::zero(); wd.len()];
                let mut dx = vec![T::zero(); xd.len()];
                let mut dcols = vec![T::zero(); cols.len()];
                let plane_in = c.in_h * c.in_w * c.c_in;
                let plane_out = c.out_h * c.out_w * c.c_out;
                let want_x = self.needs(*x);
                let want_w = self.needs(*w);
                for s in 0..b {
                    let dys = &dy[s * plane_out..(s + 1) * plane_out];
                    if want_w {
                        im2col_2d(&xd[s * plane_in..(s + 1) * plane_in], c, &mut cols);
                        matmul_at_b(
                            &cols,
                            dys,
                            &mut dw,
                            patch,
                            c.out_h * c.out_w,
                            c.c_out,
                            T::one(),
                        );
                    }
                    if want_x {
                        matmul_a_bt(
                            dys,
                            wd,
                            &mut dcols,
                            c.out_h * c.out_w,
                            c.c_out,
                            patch,
                            T::zero(),
                        );
                        col2im_2d(&dcols, c, &mut dx[s * plane_in..(s + 1) * plane_in]);
                    }
                }
                if want_w {
                    self.acc(grads, *w, &dw);
                }
                if want_x {
                    self.acc(grads, *x, &dx);
                }
            }

            Op::Conv1d { x, w, cache } => {
                let c = cache;
                let xs = self.shape(*x);
                let b = if xs.len() == 3 { xs[0] } else { 1 };
                let patch = c.k * c.c_in;
                let xd = self.value(*x).data();
                let wd = self.value(*w).data();
                let want_x = self.needs(*x);
                let want_w = self.needs(*w);
                let mut cols = vec![T::zero(); b * c.len * patch];
                for s in 0..b {
                    im2col_1d(
                        &xd[s * c.len * c.c_in..(s + 1) * c.len * c.c_in],
                        c,
                        &mut cols[s * c.len * patch..(s + 1) * c.len * patch],
                    );
                }
                if want_w {
                    let mut dw = vec![T::zero(); wd.len()];
                    matmul_at_b(&cols, dy, &mut dw, patch, b * c.len, c.c_out, T::zero());
                    self.acc(grads, *w, &dw);
                }
                if want_x {
                    let mut dcols = vec![T::zero(); cols.len()];
                    matmul_a_bt(dy, wd, &mut dcols, b * c.len, c.c_out, patch, T::zero());
                    let mut dx = vec![T::zero(); xd.len()];
                    for s in 0..b {
                        col2im_1d(
                            &dcols[s * c.len * patch..(s + 1) * c.len * patch],
                            c,
                            &mut dx[s * c.len * c.c_in..(s + 1) * c.len * c.c_in],
                        );
                    }
                    self.acc(grads, *x, &dx);
                }
            }

            Op::MaxPool2x2 { x, argmax } => {
                let xs = self.shape(*x);
                let rank = xs.len();
                let (b, h, w, c) = if rank == 4 {
                    (xs[0], xs[1], xs[2], xs[3])
                } else {
                    (1, xs[0], xs[1], xs[2])
                };
                let (oh, ow) = (h / 2, w / 2);
                let mut dx = vec![T::zero(); b * h * w * c];
                for s in 0..b {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            for ch in 0..c {
                                let o = ((s * oh + oy) * ow + ox) * c + ch;
                                let arg = argmax[o] as usize;
                                let (dyq, dxq) = (arg / 2, arg % 2);
                                dx[((s * h + oy * 2 + dyq) * w + ox * 2 + dxq) * c + ch] += dy[o];
                            }
                        }
                    }
                }
                self.acc(grads, *x, &dx);
            }

            Op::AvgPool { x, kind } => {
                let xs = self.shape(*x);
                let rank = xs.len();
                match kind {
                    PoolKind::AvgOverHeight => {
                        let (b, h, w, c) = if rank == 4 {
                            (xs[0], xs[1], xs[2], xs[3])
                        } else {
                            (1, xs[0], xs[1], xs[2])
                        };
                        let inv = T::from_f64(1.0 / h as f64);
                        let mut dx = vec![T::zero(); b * h * w * c];
                        for s in 0..b {
                            for y in 0..h {
                                for i in 0..w * c {
                                    dx[(s * h + y) * w * c + i] = dy[s * w * c + i] * inv;
                                }
                            }
                        }
                        self.acc(grads, *x, &dx);
                    }
                    PoolKind::AvgOverLength => {
                        let (b, l, c) = if rank == 3 {
                            (xs[0], xs[1], xs[2])
                        } else {
                            (1, xs[0], xs[1])
                        };
                        let inv = T::from_f64(1.0 / l as f64);
                        let mut dx = vec![T::zero(); b * l * c];
                        for s in 0..b {
                            for p in 0..l {
                                for ch in 0..c {
                                    dx[(s * l + p) * c + ch] = dy[s * c + ch] * inv;
                                }
                            }
                        }
                        self.acc(grads, *x, &dx);
                    }
                    PoolKind::Max2x2 => unreachable!(),
                }
            }

            Op::BatchNorm {
                x,
                gamma,
                beta,
                cache,
            } => {
                let c = self.shape(*gamma)[0];
                let group = cache.group;
                let xd = self.value(*x).data();
                let gd = self.value(*gamma).data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                let mut sum_dy = vec![T::zero(); c];
                let mut sum_dy_xhat = vec![T::zero(); c];
                for row in 0..group {
                    for ch in 0..c {
                        let i = row * c + ch;
                        let xhat = (xd[i] - cache.mean[ch]) * cache.rstd[ch];
                        sum_dy[ch] += dy[i];
                        sum_dy_xhat[ch] += dy[i] * xhat;
                        dgamma[ch] += dy[i] * xhat;
                        dbeta[ch] += dy[i];
                    }
                }
                if self.needs(*x) {
                    let mut dx = vec![T::zero(); xd.len()];
                    let n = T::from_f64(group as f64);
                    let inv_n = T::one() / n;
                    for row in 0..group {
                        for ch in 0..c {
                            let i = row * c + ch;
                            if cache.train {
                                let xhat = (xd[i] - cache.mean[ch]) * cache.rstd[ch];
                                dx[i] = gd[ch]
                                    * cache.rstd[ch]
                                    * inv_n
                                    * (n * dy[i] - sum_dy[ch] - xhat * sum_dy_xhat[ch]);
                            } else {
                                dx[i] = dy[i] * gd[ch] * cache.rstd[ch];
                            }
                        }
                    }
                    self.acc(grads, *x, &dx);
                }
                self.acc(grads, *gamma, &dgamma);
                self.acc(grads, *beta, &dbeta);
            }

            Op::LayerNorm {
                x,
                gamma,
                beta,
                cache,
            } => {
                let c = cache.group;
                let groups = self.value(*x).numel() / c;
                let xd = self.value(*x).data();
                let gd = self.value(*gamma).data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                let mut dx = vec![T::zero(); xd.len()];
                let inv_c = T::from_f64(1.0 / c as f64);
                for g in 0..groups {
                    let base = g * c;
                    let mut sum_dxhat = T::zero();
                    let mut sum_dxhat_xhat = T::zero();
                    for ch in 0..c {
                        let i = base + ch;
                        let xhat = (xd[i] - cache.mean[g]) * cache.rstd[g];
                        let dxhat = dy[i] * gd[ch];
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat;
                        dgamma[ch] += dy[i] * xhat;
                        dbeta[ch] += dy[i];
                    }
                    if self.needs(*x) {
                        for ch in 0..c {
                            let i = base + ch;
                            let xhat = (xd[i] - cache.mean[g]) * cache.rstd[g];
                            let dxhat = dy[i] * gd[ch];
                            dx[i] = cache.rstd[g]
                                * (dxhat - inv_c * sum_dxhat - xhat * inv_c * sum_dxhat_xhat);
                        }
                    }
                }
                if self.needs(*x) {
                    self.acc(grads, *x, &dx);
                }
                self.acc(grads, *gamma, &dgamma);
                self.acc(grads, *beta, &dbeta);
            }

            Op::LeakyRelu { x, slope } => {
                let xd = self.value(*x).data();
                let dx: Vec<T> = xd
                    .iter()
                    .zip(dy)
                    .map(|(&v, &d)| if v >= T::zero() { d } else { *slope * d })
                    .collect();
                self.acc(grads, *x, &dx);
            }

            Op::Softmax { x, axis } => {
                let xs = self.shape(*x);
                let k = xs[*axis];
                let inner: usize = xs[axis + 1..].iter().product();
                let outer: usize = xs[..*axis].iter().product();
                let yd = self.value(Var(i)).data();
                let mut dx = vec![T::zero(); yd.len()];
                for o in 0..outer {
                    for inn in 0..inner {
                        let idx = |j: usize| (o * k + j) * inner + inn;
                        let mut dot = T::zero();
                        for j in 0..k {
                            dot += dy[idx(j)] * yd[idx(j)];
                        }
                        for j in 0..k {
                            dx[idx(j)] = yd[idx(j)] * (dy[idx(j)] - dot);
                        }
                    }
                }
                self.acc(grads, *x, &dx);
            }

            Op::Linear { x, w, b } => {
                let ws = self.shape(*w);
                let (d_in, d_out) = (ws[0], ws[1]);
                let rows = self.value(*x).numel() / d_in;
                if self.needs(*x) {
                    let mut dx = vec![T::zero(); rows * d_in];
                    matmul_a_bt(dy, self.value(*w).data(), &mut dx, rows, d_out, d_in, T::zero());
                    self.acc(grads, *x, &dx);
                }
                if self.needs(*w) {
                    let mut dw = vec![T::zero(); d_in * d_out];
                    matmul_at_b(self.value(*x).data(), dy, &mut dw, d_in, rows, d_out, T::zero());
                    self.acc(grads, *w, &dw);
                }
                if self.needs(*b) {
                    let mut db = vec![T::zero(); d_out];
                    for r in 0..rows {
                        for j in 0..d_out {
                            db[j] += dy[r * d_out + j];
                        }
                    }
                    self.acc(grads, *b, &db);
                }
            }

            Op::LstmSeq {
                x,
                w_ih,
                w_hh,
                bias,
                cache,
            } => {
                let (b, steps, d_in, hidden) =
                    (cache.batch, cache.steps, cache.d_in, cache.hidden);
                let xd = self.value(*x).data();
                let h_all = self.value(Var(i)).data();
                let wih = self.value(*w_ih).data();
                let whh = self.value(*w_hh).data();
                let mut dwih = vec![T::zero(); wih.len()];
                let mut dwhh = vec![T::zero(); whh.len()];
                let mut dbias = vec![T::zero(); 4 * hidden];
                let mut dx = vec![T::zero(); xd.len()];
                let mut dh_next = vec![T::zero(); b * hidden];
                let mut dc_next = vec![T::zero(); b * hidden];

                for t in (0..steps).rev() {
                    let gates = &cache.gates[t];
                    let cells = &cache.cells[t];
                    let mut da = vec![T::zero(); b * 4 * hidden];
                    for s in 0..b {
                        for j in 0..hidden {
                            let base = s * 4 * hidden;
                            let i_g = gates[base + j];
                            let f_g = gates[base + hidden + j];
                            let g_g = gates[base + 2 * hidden + j];
                            let o_g = gates[base + 3 * hidden + j];
                            let c_t = cells[s * hidden + j];
                            let c_prev = if t == 0 {
                                T::zero()
                            } else {
                                cache.cells[t - 1][s * hidden + j]
                            };
                            let tanh_c = c_t.tanh();
                            let dh = dy[(s * steps + t) * hidden + j] + dh_next[s * hidden + j];
                            let mut dc = dc_next[s * hidden + j];
                            let d_o = dh * tanh_c;
                            dc += dh * o_g * (T::one() - tanh_c * tanh_c);
                            let d_i = dc * g_g;
                            let d_g = dc * i_g;
                            let d_f = dc * c_prev;
                            dc_next[s * hidden + j] = dc * f_g;
                            da[base + j] = d_i * i_g * (T::one() - i_g);
                            da[base + hidden + j] = d_f * f_g * (T::one() - f_g);
                            da[base + 2 * hidden + j] = d_g * (T::one() - g_g * g_g);
                            da[base + 3 * hidden + j] = d_o * o_g * (T::one() - o_g);
                        }
                    }
                    // x_t and h_{t-1} views
                    let mut x_t = vec![T::zero(); b * d_in];
                    let mut h_prev = vec![T::zero(); b * hidden];
                    for s in 0..b {
                        x_t[s * d_in..(s + 1) * d_in].copy_from_slice(
                            &xd[(s * steps + t) * d_in..(s * steps + t + 1) * d_in],
                        );
                        if t > 0 {
                            h_prev[s * hidden..(s + 1) * hidden].copy_from_slice(
                                &h_all[(s * steps + t - 1) * hidden
                                    ..(s * steps + t) * hidden],
                            );
                        }
                    }
                    matmul_at_b(&x_t, &da, &mut dwih, d_in, b, 4 * hidden, T::one());
                    matmul_at_b(&h_prev, &da, &mut dwhh, hidden, b, 4 * hidden, T::one());
                    for s in 0..b {
                        for j in 0..4 * hidden {
                            dbias[j] += da[s * 4 * hidden + j];
                        }
                    }
                    let mut dx_t = vec![T::zero(); b * d_in];
                    matmul_a_bt(&da, wih, &mut dx_t, b, 4 * hidden, d_in, T::zero());
                    for s in 0..b {
                        dx[(s * steps + t) * d_in..(s * steps + t + 1) * d_in]
                            .copy_from_slice(&dx_t[s * d_in..(s + 1) * d_in]);
                    }
                    let mut dh_prev = vec![T::zero(); b * hidden];
                    matmul_a_bt(&da, whh, &mut dh_prev, b, 4 * hidden, hidden, T::zero());
                    dh_next = dh_prev;
                }
                if self.needs(*x) {
                    self.acc(grads, *x, &dx);
                }
                self.acc(grads, *w_ih, &dwih);
                self.acc(grads, *w_hh, &dwhh);
                self.acc(grads, *bias, &dbias);
            }

            Op::Embed { y, w } => {
                let ys = self.shape(*y);
                let (b, k, n) = if ys.len() == 3 {
                    (ys[0], ys[1], ys[2])
                } else {
                    (1, ys[0], ys[1])
                };
                let d = self.shape(*w)[1];
                let yd = self.value(*y).data();
                let wd = self.value(*w).data();
                if self.needs(*w) {
                    let mut dw = vec![T::zero(); k * d];
                    for s in 0..b {
                        // dw += y[s] (K,n) @ dy[s] (n,d)
                        unsafe {
                            T::gemm(
                                k,
                                n,
                                d,
                                T::one(),
                                yd.as_ptr().add(s * k * n),
                                n as isize,
                                1,
                                dy.as_ptr().add(s * n * d),
                                d as isize,
                                1,
                                T::one(),
                                dw.as_mut_ptr(),
                                d as isize,
                                1,
                            );
                        }
                    }
                    self.acc(grads, *w, &dw);
                }
                if self.needs(*y) {
                    let mut dyy = vec![T::zero(); b * k * n];
                    for s in 0..b {
                        // dY[s] (K,n): Z = dy[s] (n,d) @ w^T (d,K), stored transposed
                        unsafe {
                            T::gemm(
                                n,
                                d,
                                k,
                                T::one(),
                                dy.as_ptr().add(s * n * d),
                                d as isize,
                                1,
                                wd.as_ptr(),
                                1,
                                d as isize,
                                T::zero(),
                                dyy.as_mut_ptr().add(s * k * n),
                                1,
                                n as isize,
                            );
                        }
                    }
                    self.acc(grads, *y, &dyy);
                }
            }

            Op::PermuteLast2 { x } => {
                let ys = self.shape(Var(i));
                let (a, bdim) = (ys[ys.len() - 2], ys[ys.len() - 1]);
                let outer: usize = ys[..ys.len() - 2].iter().product();
                let mut dx = vec![T::zero(); dy.len()];
                for o in 0..outer {
                    for p in 0..a {
                        for q in 0..bdim {
                            dx[(o * bdim + q) * a + p] = dy[(o * a + p) * bdim + q];
                        }
                    }
                }
                self.acc(grads, *x, &dx);
            }

            Op::Reshape { x } => {
                self.acc(grads, *x, dy);
            }

            Op::Add { a, b } => {
                self.acc(grads, *a, dy);
                self.acc(grads, *b, dy);
            }

            Op::Mul { a, b } => {
                if self.needs(*a) {
                    let da: Vec<T> = dy
                        .iter()
                        .zip(self.value(*b).data())
                        .map(|(&d, &v)| d * v)
                        .collect();
                    self.acc(grads, *a, &da);
                }
                if self.needs(*b) {
                    let db: Vec<T> = dy
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(&d, &v)| d * v)
                        .collect();
                    self.acc(grads, *b, &db);
                }
            }

            Op::SumAll { x } => {
                let dx = vec![dy[0]; self.value(*x).numel()];
                self.acc(grads, *x, &dx);
            }

            Op::SubScalar { x } => {
                self.acc(grads, *x, dy);
            }

            Op::MulScalar { x, c } => {
                let dx: Vec<T> = dy.iter().map(|&d| d * *c).collect();
                self.acc(grads, *x, &dx);
            }

            Op::Square { x } => {
                let two = T::from_f64(2.0);
                let dx: Vec<T> = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(dy)
                    .map(|(&v, &d)| two * v * d)
                    .collect();
                self.acc(grads, *x, &dx);
            }

            Op::MeanAll { x } => {
                let n = self.value(*x).numel();
                let g = dy[0] * T::from_f64(1.0 / n as f64);
                let dx = vec![g; n];
                self.acc(grads, *x, &dx);
            }

            Op::CrossEntropy { logits, labels } => {
                let ls = self.shape(*logits);
                let (b, k, n) = if ls.len() == 3 {
                    (ls[0], ls[1], ls[2])
                } else {
                    (1, ls[0], ls[1])
                };
                let xd = self.value(*logits).data();
                let scale = dy[0] * T::from_f64(1.0 / (b * n) as f64);
                let mut dx = vec![T::zero(); xd.len()];
                for s in 0..b {
                    for pos in 0..n {
                        let idx = |j: usize| (s * k + j) * n + pos;
                        let mut mx = T::neg_infinity();
                        for j in 0..k {
                            mx = mx.max(xd[idx(j)]);
                        }
                        let mut sum = T::zero();
                        for j in 0..k {
                            sum += (xd[idx(j)] - mx).exp();
                        }
                        for j in 0..k {
                            let p = (xd[idx(j)] - mx).exp() / sum;
                            dx[idx(j)] = p * scale;
                        }
                        dx[idx(labels[s * n + pos])] -= scale;
                    }
                }
                self.acc(grads, *logits, &dx);
            }
        }
    }
}
