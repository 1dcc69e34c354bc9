//! Reusable layer modules: thin structs of [`ParamId`]s plus a forward
//! method on a [`Ctx`]. Construction order is fixed so a model seed fully
//! determines initialization.

use ndarray::Array2;

use super::graph::Var;
use super::params::{Ctx, InitKind, ModuleBuilder, ParamId};
use crate::scalar::Scalar;

/// Fully connected layer; weight stored as `(in, out)`.
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new<F: Scalar>(
        b: &mut ModuleBuilder<F>,
        prefix: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
    ) -> Self {
        Linear {
            w: b.param(format!("{prefix}.w"), &[d_in, d_out], InitKind::Glorot(d_in, d_out)),
            b: bias.then(|| b.param(format!("{prefix}.b"), &[d_out], InitKind::Zeros)),
        }
    }

    /// Variant whose weight and bias start at exactly zero (the residual
    /// gates appended to every stage-two sub-layer).
    pub fn new_zeroed<F: Scalar>(
        b: &mut ModuleBuilder<F>,
        prefix: &str,
        d_in: usize,
        d_out: usize,
    ) -> Self {
        Linear {
            w: b.param(format!("{prefix}.w"), &[d_in, d_out], InitKind::Zeros),
            b: Some(b.param(format!("{prefix}.b"), &[d_out], InitKind::Zeros)),
        }
    }

    /// Applies to the last axis of `x`.
    pub fn forward<F: Scalar>(&self, ctx: &mut Ctx<F>, x: Var) -> Var {
        let shape = ctx.g.shape(x).to_vec();
        let d_in = *shape.last().expect("linear input axis");
        let rows: usize = shape.iter().product::<usize>() / d_in;
        let w = ctx.param(self.w);
        let d_out = ctx.g.shape(w)[1];
        let x2 = ctx.g.reshape(x, &[rows, d_in]);
        let mut y = ctx.g.matmul(x2, w);
        if let Some(bid) = self.b {
            let b = ctx.param(bid);
            y = ctx.g.broadcast_add_suffix(y, b);
        }
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = d_out;
        ctx.g.reshape(y, &out_shape)
    }
}

/// 2-D convolution layer.
pub struct Conv2d {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<F: Scalar>(
        b: &mut ModuleBuilder<F>,
        prefix: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    ) -> Self {
        let fan_in = c_in * k * k;
        Conv2d {
            w: b.param(
                format!("{prefix}.w"),
                &[c_out, c_in, k, k],
                InitKind::He(fan_in),
            ),
            b: bias.then(|| b.param(format!("{prefix}.b"), &[c_out], InitKind::Zeros)),
            stride,
            pad,
        }
    }

    /// Variant initialized to zero (used for the denoiser output projection).
    #[allow(clippy::too_many_arguments)]
    pub fn new_zeroed<F: Scalar>(
        b: &mut ModuleBuilder<F>,
        prefix: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        Conv2d {
            w: b.param(format!("{prefix}.w"), &[c_out, c_in, k, k], InitKind::Zeros),
            b: Some(b.param(format!("{prefix}.b"), &[c_out], InitKind::Zeros)),
            stride,
            pad,
        }
    }

    pub fn forward<F: Scalar>(&self, ctx: &mut Ctx<F>, x: Var) -> Var {
        let w = ctx.param(self.w);
        let b = self.b.map(|bid| ctx.param(bid));
        ctx.g.conv2d(x, w, b, self.stride, self.pad)
    }
}

/// Group normalization with per-channel affine.
pub struct GroupNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub groups: usize,
}

impl GroupNorm {
    pub fn new<F: Scalar>(b: &mut ModuleBuilder<F>, prefix: &str, channels: usize, groups: usize) -> Self {
        assert_eq!(channels % groups, 0);
        GroupNorm {
            gamma: b.param(format!("{prefix}.gamma"), &[channels], InitKind::Ones),
            beta: b.param(format!("{prefix}.beta"), &[channels], InitKind::Zeros),
            groups,
        }
    }

    pub fn forward<F: Scalar>(&self, ctx: &mut Ctx<F>, x: Var) -> Var {
        let gamma = ctx.param(self.gamma);
        let beta = ctx.param(self.beta);
        ctx.g.group_norm(x, gamma, beta, self.groups, 1e-5)
    }
}

/// Layer normalization over the last axis.
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new<F: Scalar>(b: &mut ModuleBuilder<F>, prefix: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: b.param(format!("{prefix}.gamma"), &[dim], InitKind::Ones),
            beta: b.param(format!("{prefix}.beta"), &[dim], InitKind::Zeros),
        }
    }

    pub fn forward<F: Scalar>(&self, ctx: &mut Ctx<F>, x: Var) -> Var {
        let gamma = ctx.param(self.gamma);
        let beta = ctx.param(self.beta);
        ctx.g.layer_norm(x, gamma, beta, 1e-5)
    }
}

/// Attention masking strategies.
pub enum AttnMask {
    None,
    /// Query at position `i` may attend to keys `j <= i`.
    Causal,
    /// Cross-attention onto padded sequences: batch row `b` may attend to
    /// the first `lens[b]` key positions.
    KvLens(Vec<usize>),
}

/// Multi-head attention parameters (separate q/k/v/out projections).
pub struct Attention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
}

impl Attention {
    /// `zero_out` controls whether the output projection starts at zero.
    pub fn new<F: Scalar>(
        b: &mut ModuleBuilder<F>,
        prefix: &str,
        dim: usize,
        kv_dim: usize,
        heads: usize,
        zero_out: bool,
    ) -> Self {
        assert_eq!(dim % heads, 0, "dim must divide into heads");
        Attention {
            wq: Linear::new(b, &format!("{prefix}.q"), dim, dim, true),
            wk: Linear::new(b, &format!("{prefix}.k"), kv_dim, dim, true),
            wv: Linear::new(b, &format!("{prefix}.v"), kv_dim, dim, true),
            wo: if zero_out {
                Linear::new_zeroed(b, &format!("{prefix}.o"), dim, dim)
            } else {
                Linear::new(b, &format!("{prefix}.o"), dim, dim, true)
            },
            heads,
        }
    }

    /// `q_in`: `(B, Lq, C)`; `kv_in`: `(B, Lk, Ckv)`.
    ///
    /// `logit_bias`, when present, has shape `(heads, Lq, Lk)` and is added
    /// to the scores of every batch row. `probe_name` records the softmax
    /// weights `(B, heads, Lq, Lk)` when the context has probes enabled.
    pub fn forward<F: Scalar>(
        &self,
        ctx: &mut Ctx<F>,
        q_in: Var,
        kv_in: Var,
        mask: &AttnMask,
        logit_bias: Option<Var>,
        probe_name: Option<&str>,
    ) -> Var {
        let (b, lq, c) = {
            let s = ctx.g.shape(q_in);
            (s[0], s[1], s[2])
        };
        let lk = ctx.g.shape(kv_in)[1];
        let h = self.heads;
        let dh = c / h;

        let q = self.wq.forward(ctx, q_in);
        let k = self.wk.forward(ctx, kv_in);
        let v = self.wv.forward(ctx, kv_in);

        // (B, L, C) -> (B*H, L, dh)
        let fold = |ctx: &mut Ctx<F>, x: Var, l: usize| {
            let x = ctx.g.reshape(x, &[b, l, h, dh]);
            let x = ctx.g.permute(x, &[0, 2, 1, 3]);
            ctx.g.reshape(x, &[b * h, l, dh])
        };
        let qf = fold(ctx, q, lq);
        let kf = fold(ctx, k, lk);
        let vf = fold(ctx, v, lk);

        let mut scores = ctx.g.bmm(qf, kf, true);
        let scale = F::of_f64(1.0 / (dh as f64).sqrt());
        scores = ctx.g.scale(scores, scale);
        if let Some(bias) = logit_bias {
            let s4 = ctx.g.reshape(scores, &[b, h, lq, lk]);
            let s4 = ctx.g.broadcast_add_suffix(s4, bias);
            scores = ctx.g.reshape(s4, &[b * h, lq, lk]);
        }

        let mask_rows = b * h * lq;
        let mask_arr: Option<Array2<bool>> = match mask {
            AttnMask::None => None,
            AttnMask::Causal => {
                assert_eq!(lq, lk, "causal mask needs square attention");
                Some(Array2::from_shape_fn((mask_rows, lk), |(r, j)| {
                    j <= r % lq
                }))
            }
            AttnMask::KvLens(lens) => {
                assert_eq!(lens.len(), b, "one kv length per batch row");
                Some(Array2::from_shape_fn((mask_rows, lk), |(r, j)| {
                    j < lens[r / (h * lq)]
                }))
            }
        };
        let weights = ctx.g.softmax_last(scores, mask_arr);
        if let Some(name) = probe_name {
            let w4 = ctx.g.reshape(weights, &[b, h, lq, lk]);
            ctx.probe(name, w4);
        }

        let out = ctx.g.bmm(weights, vf, false);
        // (B*H, Lq, dh) -> (B, Lq, C)
        let out = ctx.g.reshape(out, &[b, h, lq, dh]);
        let out = ctx.g.permute(out, &[0, 2, 1, 3]);
        let out = ctx.g.reshape(out, &[b, lq, c]);
        self.wo.forward(ctx, out)
    }
}

/// Two-layer feed-forward with SiLU.
pub struct FeedForward {
    pub lin1: Linear,
    pub lin2: Linear,
}

impl FeedForward {
    pub fn new<F: Scalar>(
        b: &mut ModuleBuilder<F>,
        prefix: &str,
        dim: usize,
        hidden: usize,
        zero_out: bool,
    ) -> Self {
        FeedForward {
            lin1: Linear::new(b, &format!("{prefix}.fc1"), dim, hidden, true),
            lin2: if zero_out {
                Linear::new_zeroed(b, &format!("{prefix}.fc2"), hidden, dim)
            } else {
                Linear::new(b, &format!("{prefix}.fc2"), hidden, dim, true)
            },
        }
    }

    pub fn forward<F: Scalar>(&self, ctx: &mut Ctx<F>, x: Var) -> Var {
        let h = self.lin1.forward(ctx, x);
        let h = ctx.g.silu(h);
        self.lin2.forward(ctx, h)
    }
}
