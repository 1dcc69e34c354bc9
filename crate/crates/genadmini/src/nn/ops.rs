//! Op descriptors and backward kernels for the tape.
//!
//! Each variant stores whatever the backward pass needs beyond parent
//! values: convolution column buffers, normalization statistics, softmax
//! masks. Backward functions return one optional gradient per parent;
//! `None` marks parents that do not require gradients.

use ndarray::{Array1, Array2, ArrayD, Axis, Ix2, IxDyn, Slice};

use super::conv;
use super::matmul;
use crate::scalar::Scalar;

pub(crate) enum Op<F: Scalar> {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale(F),
    AddScalar,
    Silu,
    Relu,
    Sigmoid,
    Tanh,
    Reshape,
    Permute(Vec<usize>),
    Concat {
        axis: usize,
        split: Vec<usize>,
    },
    Slice {
        axis: usize,
        start: usize,
        len: usize,
        full: usize,
    },
    BroadcastAddSuffix,
    BroadcastAddPrefix,
    MeanAll,
    SumAll,
    MeanAxes {
        axes: Vec<usize>,
        full: Vec<usize>,
    },
    CumSumAxis {
        axis: usize,
    },
    MatMul,
    BatchMatMul {
        transpose_rhs: bool,
    },
    /// `cols` is the im2col buffer saved from the forward pass.
    Conv2d {
        stride: usize,
        pad: usize,
        cols: Array2<F>,
    },
    Upsample2x,
    /// Row-wise softmax over the last axis. Masked entries (zero weight in
    /// the forward output) need no special casing in backward.
    SoftmaxLast,
    GroupNorm {
        groups: usize,
        mean: Array2<F>,
        rstd: Array2<F>,
    },
    LayerNormLast {
        mean: Array1<F>,
        rstd: Array1<F>,
    },
    Embedding {
        ids: Vec<usize>,
    },
    TemporalBias {
        t: usize,
    },
}

type PartialGrads<F> = Vec<Option<ArrayD<F>>>;

pub(crate) fn op_backward<F: Scalar>(
    op: &Op<F>,
    g: &ArrayD<F>,
    own: &ArrayD<F>,
    parents: &[&ArrayD<F>],
    needs: &[bool],
) -> PartialGrads<F> {
    match op {
        Op::Leaf => vec![],
        Op::Add => vec![
            needs[0].then(|| g.clone()),
            needs[1].then(|| g.clone()),
        ],
        Op::Sub => vec![
            needs[0].then(|| g.clone()),
            needs[1].then(|| g.mapv(|x| -x)),
        ],
        Op::Mul => vec![
            needs[0].then(|| g * parents[1]),
            needs[1].then(|| g * parents[0]),
        ],
        Op::Scale(c) => vec![needs[0].then(|| g.mapv(|x| x * *c))],
        Op::AddScalar => vec![needs[0].then(|| g.clone())],
        Op::Silu => vec![needs[0].then(|| {
            let mut out = g.clone();
            out.zip_mut_with(parents[0], |gi, &x| {
                let s = F::one() / (F::one() + (-x).exp());
                *gi = *gi * s * (F::one() + x * (F::one() - s));
            });
            out
        })],
        Op::Relu => vec![needs[0].then(|| {
            let mut out = g.clone();
            out.zip_mut_with(parents[0], |gi, &x| {
                if x <= F::zero() {
                    *gi = F::zero();
                }
            });
            out
        })],
        Op::Sigmoid => vec![needs[0].then(|| {
            let mut out = g.clone();
            out.zip_mut_with(own, |gi, &y| *gi = *gi * y * (F::one() - y));
            out
        })],
        Op::Tanh => vec![needs[0].then(|| {
            let mut out = g.clone();
            out.zip_mut_with(own, |gi, &y| *gi = *gi * (F::one() - y * y));
            out
        })],
        Op::Reshape => vec![needs[0].then(|| {
            g.clone()
                .into_shape_with_order(IxDyn(parents[0].shape()))
                .expect("reshape backward")
        })],
        Op::Permute(perm) => vec![needs[0].then(|| {
            let mut inv = vec![0usize; perm.len()];
            for (i, &p) in perm.iter().enumerate() {
                inv[p] = i;
            }
            g.view()
                .permuted_axes(IxDyn(&inv))
                .as_standard_layout()
                .to_owned()
        })],
        Op::Concat { axis, split } => {
            let mut out = Vec::with_capacity(split.len());
            let mut offset = 0;
            for (i, &len) in split.iter().enumerate() {
                out.push(needs[i].then(|| {
                    g.slice_axis(Axis(*axis), Slice::from(offset..offset + len))
                        .as_standard_layout()
                        .to_owned()
                }));
                offset += len;
            }
            out
        }
        Op::Slice {
            axis,
            start,
            len,
            full,
        } => vec![needs[0].then(|| {
            let mut shape = g.shape().to_vec();
            shape[*axis] = *full;
            let mut dx = ArrayD::zeros(IxDyn(&shape));
            dx.slice_axis_mut(Axis(*axis), Slice::from(*start..*start + *len))
                .assign(g);
            dx
        })],
        Op::BroadcastAddSuffix => {
            let dy = needs[1].then(|| {
                let ys = parents[1].shape().to_vec();
                let suffix: usize = ys.iter().product();
                let lead = g.len() / suffix.max(1);
                let g2 = g
                    .view()
                    .into_shape_with_order(IxDyn(&[lead, suffix]))
                    .expect("suffix fold");
                g2.sum_axis(Axis(0))
                    .into_shape_with_order(IxDyn(&ys))
                    .expect("suffix grad shape")
            });
            vec![needs[0].then(|| g.clone()), dy]
        }
        Op::BroadcastAddPrefix => {
            let dy = needs[1].then(|| {
                let ys = parents[1].shape().to_vec();
                let prefix: usize = ys.iter().product();
                let trail = g.len() / prefix.max(1);
                let g2 = g
                    .view()
                    .into_shape_with_order(IxDyn(&[prefix, trail]))
                    .expect("prefix fold");
                g2.sum_axis(Axis(1))
                    .into_shape_with_order(IxDyn(&ys))
                    .expect("prefix grad shape")
            });
            vec![needs[0].then(|| g.clone()), dy]
        }
        Op::MeanAll => vec![needs[0].then(|| {
            let n = F::from_usize(parents[0].len()).unwrap();
            let gv = *g.first().expect("scalar grad") / n;
            ArrayD::from_elem(parents[0].raw_dim(), gv)
        })],
        Op::SumAll => vec![needs[0].then(|| {
            let gv = *g.first().expect("scalar grad");
            ArrayD::from_elem(parents[0].raw_dim(), gv)
        })],
        Op::MeanAxes { axes, full } => vec![needs[0].then(|| {
            let count: usize = axes.iter().map(|&a| full[a]).product();
            let scale = F::one() / F::from_usize(count).unwrap();
            let mut with_ones = full.clone();
            for &a in axes {
                with_ones[a] = 1;
            }
            let gr = g
                .view()
                .into_shape_with_order(IxDyn(&with_ones))
                .expect("mean axes grad reshape");
            let mut dx = ArrayD::<F>::zeros(IxDyn(full));
            dx += &gr;
            dx.mapv_inplace(|x| x * scale);
            dx
        })],
        Op::CumSumAxis { axis } => vec![needs[0].then(|| {
            let mut dx = g.clone();
            dx.invert_axis(Axis(*axis));
            dx.accumulate_axis_inplace(Axis(*axis), |&prev, cur| *cur = *cur + prev);
            dx.invert_axis(Axis(*axis));
            dx.as_standard_layout().to_owned()
        })],
        Op::MatMul => matmul::matmul_backward(g, parents, needs),
        Op::BatchMatMul { transpose_rhs } => {
            matmul::bmm_backward(g, parents, needs, *transpose_rhs)
        }
        Op::Conv2d { stride, pad, cols } => {
            conv::conv2d_backward(g, parents, needs, *stride, *pad, cols)
        }
        Op::Upsample2x => vec![needs[0].then(|| conv::upsample2x_backward(g))],
        Op::SoftmaxLast => vec![needs[0].then(|| {
            // dx = y * (g - sum(g * y)) row-wise; masked entries have y = 0.
            let l = *own.shape().last().expect("softmax needs an axis");
            let rows = own.len() / l;
            let y2 = own
                .view()
                .into_shape_with_order(IxDyn(&[rows, l]))
                .expect("fold");
            let g2 = g
                .view()
                .into_shape_with_order(IxDyn(&[rows, l]))
                .expect("fold");
            let mut dx = ArrayD::<F>::zeros(IxDyn(&[rows, l]));
            {
                let ys = y2.as_slice().unwrap();
                let gs = g2.as_slice().unwrap();
                let ds = dx.as_slice_mut().unwrap();
                for r in 0..rows {
                    let (yr, gr) = (&ys[r * l..(r + 1) * l], &gs[r * l..(r + 1) * l]);
                    let mut dot = F::zero();
                    for j in 0..l {
                        dot = dot + yr[j] * gr[j];
                    }
                    let dr = &mut ds[r * l..(r + 1) * l];
                    for j in 0..l {
                        dr[j] = yr[j] * (gr[j] - dot);
                    }
                }
            }
            dx.into_shape_with_order(IxDyn(own.shape())).expect("unfold")
        })],
        Op::GroupNorm { groups, mean, rstd } => {
            group_norm_backward(g, parents, needs, *groups, mean, rstd)
        }
        Op::LayerNormLast { mean, rstd } => layer_norm_backward(g, parents, needs, mean, rstd),
        Op::Embedding { ids } => vec![needs[0].then(|| {
            let d = parents[0].shape()[1];
            let mut dt = ArrayD::<F>::zeros(parents[0].raw_dim());
            let dts = dt.as_slice_mut().unwrap();
            let gs = g.as_slice().expect("standard layout grad");
            for (i, &id) in ids.iter().enumerate() {
                for k in 0..d {
                    dts[id * d + k] = dts[id * d + k] + gs[i * d + k];
                }
            }
            dt
        })],
        Op::TemporalBias { t } => vec![needs[0].then(|| {
            let heads = parents[0].shape()[0];
            let t_max = parents[0].shape()[1];
            let mut dt = ArrayD::<F>::zeros(IxDyn(&[heads, t_max]));
            let gs = g.as_slice().unwrap();
            for h in 0..heads {
                for i in 0..*t {
                    for j in 0..=i {
                        let d = i - j;
                        dt[[h, d]] = dt[[h, d]] + gs[(h * t + i) * t + j];
                    }
                }
            }
            dt
        })],
    }
}

fn group_norm_backward<F: Scalar>(
    g: &ArrayD<F>,
    parents: &[&ArrayD<F>],
    needs: &[bool],
    groups: usize,
    mean: &Array2<F>,
    rstd: &Array2<F>,
) -> PartialGrads<F> {
    let x = parents[0];
    let gamma = parents[1];
    let (n, c) = (x.shape()[0], x.shape()[1]);
    let spatial: usize = x.shape()[2..].iter().product();
    let cg = c / groups;
    let m = cg * spatial;
    let mf = F::from_usize(m).unwrap();

    let xs = x.as_slice().unwrap();
    let gs = g.as_slice().unwrap();
    let gam = gamma.as_slice().unwrap();

    let mut dx = needs[0].then(|| ArrayD::<F>::zeros(x.raw_dim()));
    let mut dgamma = vec![F::zero(); c];
    let mut dbeta = vec![F::zero(); c];

    for ni in 0..n {
        for gi in 0..groups {
            let mu = mean[[ni, gi]];
            let rs = rstd[[ni, gi]];
            // First pass: accumulate the two group sums.
            let mut sum1 = F::zero();
            let mut sum2 = F::zero();
            for ci in gi * cg..(gi + 1) * cg {
                let base = (ni * c + ci) * spatial;
                for s in 0..spatial {
                    let idx = base + s;
                    let xhat = (xs[idx] - mu) * rs;
                    let gg = gs[idx] * gam[ci];
                    sum1 = sum1 + gg;
                    sum2 = sum2 + gg * xhat;
                    dgamma[ci] = dgamma[ci] + gs[idx] * xhat;
                    dbeta[ci] = dbeta[ci] + gs[idx];
                }
            }
            if let Some(dx) = dx.as_mut() {
                let dxs = dx.as_slice_mut().unwrap();
                for ci in gi * cg..(gi + 1) * cg {
                    let base = (ni * c + ci) * spatial;
                    for s in 0..spatial {
                        let idx = base + s;
                        let xhat = (xs[idx] - mu) * rs;
                        let gg = gs[idx] * gam[ci];
                        dxs[idx] = rs * (gg - (sum1 + xhat * sum2) / mf);
                    }
                }
            }
        }
    }

    vec![
        dx,
        needs[1].then(|| ArrayD::from_shape_vec(IxDyn(&[c]), dgamma).unwrap()),
        needs[2].then(|| ArrayD::from_shape_vec(IxDyn(&[c]), dbeta).unwrap()),
    ]
}

fn layer_norm_backward<F: Scalar>(
    g: &ArrayD<F>,
    parents: &[&ArrayD<F>],
    needs: &[bool],
    mean: &Array1<F>,
    rstd: &Array1<F>,
) -> PartialGrads<F> {
    let x = parents[0];
    let gamma = parents[1];
    let d = *x.shape().last().unwrap();
    let rows = x.len() / d;
    let df = F::from_usize(d).unwrap();

    let xs = x.as_slice().unwrap();
    let gs = g.as_slice().unwrap();
    let gam = gamma.as_slice().unwrap();

    let mut dx = needs[0].then(|| ArrayD::<F>::zeros(x.raw_dim()));
    let mut dgamma = vec![F::zero(); d];
    let mut dbeta = vec![F::zero(); d];

    for r in 0..rows {
        let mu = mean[r];
        let rs = rstd[r];
        let base = r * d;
        let mut sum1 = F::zero();
        let mut sum2 = F::zero();
        for k in 0..d {
            let xhat = (xs[base + k] - mu) * rs;
            let gg = gs[base + k] * gam[k];
            sum1 = sum1 + gg;
            sum2 = sum2 + gg * xhat;
            dgamma[k] = dgamma[k] + gs[base + k] * xhat;
            dbeta[k] = dbeta[k] + gs[base + k];
        }
        if let Some(dx) = dx.as_mut() {
            let dxs = dx.as_slice_mut().unwrap();
            for k in 0..d {
                let xhat = (xs[base + k] - mu) * rs;
                let gg = gs[base + k] * gam[k];
                dxs[base + k] = rs * (gg - (sum1 + xhat * sum2) / df);
            }
        }
    }

    vec![
        dx,
        needs[1].then(|| ArrayD::from_shape_vec(IxDyn(&[d]), dgamma).unwrap()),
        needs[2].then(|| ArrayD::from_shape_vec(IxDyn(&[d]), dbeta).unwrap()),
    ]
}

// ---- forward builders that carry op state ----

use super::graph::{Graph, Var};

impl<F: Scalar> Graph<F> {
    /// Row-wise softmax over the last axis, with an optional validity mask
    /// (shape `(rows, last)`, `true` = position may receive weight).
    pub fn softmax_last(&mut self, a: Var, mask: Option<Array2<bool>>) -> Var {
        let shape = self.shape(a).to_vec();
        let l = *shape.last().expect("softmax needs an axis");
        let rows: usize = shape.iter().product::<usize>() / l;
        if let Some(m) = &mask {
            assert_eq!(m.shape(), &[rows, l], "softmax mask shape");
        }
        let mut out = self.val(a).clone();
        {
            let data = out.as_slice_mut().unwrap();
            for r in 0..rows {
                let row = &mut data[r * l..(r + 1) * l];
                let valid = |j: usize| mask.as_ref().map_or(true, |m| m[[r, j]]);
                let mut mx = F::neg_infinity();
                for (j, &v) in row.iter().enumerate() {
                    if valid(j) && v > mx {
                        mx = v;
                    }
                }
                let mut sum = F::zero();
                for j in 0..l {
                    if valid(j) {
                        row[j] = (row[j] - mx).exp();
                        sum = sum + row[j];
                    } else {
                        row[j] = F::zero();
                    }
                }
                if sum > F::zero() {
                    for v in row.iter_mut() {
                        *v = *v / sum;
                    }
                }
            }
        }
        self.push_auto(out, vec![a], Op::SoftmaxLast)
    }

    /// Group normalization over `(N, C, ...)` with per-channel affine.
    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize, eps: f64) -> Var {
        let shape = self.shape(x).to_vec();
        let (n, c) = (shape[0], shape[1]);
        assert_eq!(c % groups, 0, "channels not divisible by groups");
        let spatial: usize = shape[2..].iter().product();
        let cg = c / groups;
        let m = cg * spatial;

        let mut mean = Array2::<F>::zeros((n, groups));
        let mut rstd = Array2::<F>::zeros((n, groups));
        let mut out = self.val(x).clone();
        {
            let xs = self.val(x).as_slice().unwrap();
            let os = out.as_slice_mut().unwrap();
            let gam = self.val(gamma).as_slice().unwrap();
            let bet = self.val(beta).as_slice().unwrap();
            for ni in 0..n {
                for gi in 0..groups {
                    let mut acc = 0f64;
                    let mut acc2 = 0f64;
                    for ci in gi * cg..(gi + 1) * cg {
                        let base = (ni * c + ci) * spatial;
                        for s in 0..spatial {
                            let v = xs[base + s].into_f64();
                            acc += v;
                            acc2 += v * v;
                        }
                    }
                    let mf = m as f64;
                    let mu = acc / mf;
                    let var = (acc2 / mf - mu * mu).max(0.0);
                    let rs = 1.0 / (var + eps).sqrt();
                    mean[[ni, gi]] = F::of_f64(mu);
                    rstd[[ni, gi]] = F::of_f64(rs);
                    for ci in gi * cg..(gi + 1) * cg {
                        let base = (ni * c + ci) * spatial;
                        for s in 0..spatial {
                            let xhat = (xs[base + s] - mean[[ni, gi]]) * rstd[[ni, gi]];
                            os[base + s] = gam[ci] * xhat + bet[ci];
                        }
                    }
                }
            }
        }
        self.push_auto(
            out,
            vec![x, gamma, beta],
            Op::GroupNorm { groups, mean, rstd },
        )
    }

    /// Layer normalization over the last axis with affine parameters.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().expect("layer norm needs an axis");
        let rows = shape.iter().product::<usize>() / d;

        let mut mean = Array1::<F>::zeros(rows);
        let mut rstd = Array1::<F>::zeros(rows);
        let mut out = self.val(x).clone();
        {
            let xs = self.val(x).as_slice().unwrap();
            let os = out.as_slice_mut().unwrap();
            let gam = self.val(gamma).as_slice().unwrap();
            let bet = self.val(beta).as_slice().unwrap();
            for r in 0..rows {
                let base = r * d;
                let mut acc = 0f64;
                let mut acc2 = 0f64;
                for k in 0..d {
                    let v = xs[base + k].into_f64();
                    acc += v;
                    acc2 += v * v;
                }
                let df = d as f64;
                let mu = acc / df;
                let var = (acc2 / df - mu * mu).max(0.0);
                let rs = 1.0 / (var + eps).sqrt();
                mean[r] = F::of_f64(mu);
                rstd[r] = F::of_f64(rs);
                for k in 0..d {
                    let xhat = (xs[base + k] - mean[r]) * rstd[r];
                    os[base + k] = gam[k] * xhat + bet[k];
                }
            }
        }
        self.push_auto(out, vec![x, gamma, beta], Op::LayerNormLast { mean, rstd })
    }

    /// Row lookup into an embedding table `(V, D)`, producing `(ids.len(), D)`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Var {
        let tshape = self.shape(table).to_vec();
        let (v, d) = (tshape[0], tshape[1]);
        let mut out = ArrayD::<F>::zeros(IxDyn(&[ids.len(), d]));
        {
            let ts = self.val(table).as_slice().unwrap();
            let os = out.as_slice_mut().unwrap();
            for (i, &id) in ids.iter().enumerate() {
                assert!(id < v, "token id out of range");
                os[i * d..(i + 1) * d].copy_from_slice(&ts[id * d..(id + 1) * d]);
            }
        }
        self.push_auto(out, vec![table], Op::Embedding { ids: ids.to_vec() })
    }

    /// Expands a per-(head, offset) bias table into a `(heads, t, t)` logit
    /// bias: entry `(h, i, j)` is `table[h, i - j]` for `j <= i`, zero above
    /// the diagonal (those positions are causally masked anyway).
    pub fn temporal_bias(&mut self, table: Var, t: usize) -> Var {
        let tshape = self.shape(table).to_vec();
        let (heads, t_max) = (tshape[0], tshape[1]);
        assert!(t <= t_max, "sequence length exceeds bias table range");
        let mut out = ArrayD::<F>::zeros(IxDyn(&[heads, t, t]));
        {
            let ts = self.val(table).as_slice().unwrap();
            let os = out.as_slice_mut().unwrap();
            for h in 0..heads {
                for i in 0..t {
                    for j in 0..=i {
                        os[(h * t + i) * t + j] = ts[h * t_max + (i - j)];
                    }
                }
            }
        }
        self.push_auto(out, vec![table], Op::TemporalBias { t })
    }

    /// 2-D matrix product `(m, k) x (k, n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let av = self
            .val(a)
            .view()
            .into_dimensionality::<Ix2>()
            .expect("matmul lhs 2-d");
        let bv = self
            .val(b)
            .view()
            .into_dimensionality::<Ix2>()
            .expect("matmul rhs 2-d");
        let out = matmul::mm(&av, &bv, false, false);
        self.push_auto(out.into_dyn(), vec![a, b], Op::MatMul)
    }

    /// Batched matrix product `(B, m, k) x (B, k, n)`, or with
    /// `transpose_rhs` the product `(B, m, k) x (B, n, k)^T`.
    pub fn bmm(&mut self, a: Var, b: Var, transpose_rhs: bool) -> Var {
        let out = matmul::bmm(self.val(a), self.val(b), false, transpose_rhs);
        self.push_auto(out, vec![a, b], Op::BatchMatMul { transpose_rhs })
    }

    /// 2-D convolution over `(N, Cin, H, W)` with weight `(Cout, Cin, kh, kw)`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let (out, cols) = conv::conv2d_forward(
            self.val(x),
            self.val(w),
            b.map(|b| self.val(b)),
            stride,
            pad,
        );
        let mut parents = vec![x, w];
        if let Some(b) = b {
            parents.push(b);
        }
        self.push_auto(out, parents, Op::Conv2d { stride, pad, cols })
    }

    /// Nearest-neighbor 2x spatial upsampling of `(N, C, H, W)`.
    pub fn upsample2x(&mut self, x: Var) -> Var {
        let out = conv::upsample2x_forward(self.val(x));
        self.push_auto(out, vec![x], Op::Upsample2x)
    }
}
