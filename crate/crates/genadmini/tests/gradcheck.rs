//! Finite-difference oracles for every backward rule in the tensor engine.
//!
//! Each check rebuilds the graph from scratch per perturbed element and
//! compares the analytic gradient against a central difference in `f64`.

use genadmini::nn::layers::{AttnMask, Attention, Conv2d, FeedForward, GroupNorm, LayerNorm, Linear};
use genadmini::nn::{Ctx, Graph, ModuleBuilder, ParamGroup, ParamStore, Var};
use genadmini::rng::{normal_array, rng_from_seed, uniform_array};
use ndarray::{Array2, ArrayD};

const H: f64 = 1e-5;
const TOL: f64 = 2e-6;

/// Weighted sum makes every output element contribute a distinct gradient.
fn weighted_loss(g: &mut Graph<f64>, out: Var, weights: &ArrayD<f64>) -> Var {
    let w = g.constant(weights.clone());
    let prod = g.mul(out, w);
    g.sum_all(prod)
}

/// Checks d(loss)/d(inputs[i]) for a graph described by `build`.
fn fd_check(inputs: &[ArrayD<f64>], build: impl Fn(&mut Graph<f64>, &[Var]) -> Var) {
    let run = |values: &[ArrayD<f64>]| -> (Graph<f64>, Vec<Var>, Var) {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|v| g.leaf(v.clone())).collect();
        let loss = build(&mut g, &vars);
        assert!(g.shape(loss).is_empty(), "loss must be scalar");
        (g, vars, loss)
    };

    let (g, vars, loss) = run(inputs);
    let grads = g.backward(loss);

    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[i])
            .unwrap_or_else(|| panic!("no grad for input {i}"))
            .clone();
        let mut perturbed: Vec<ArrayD<f64>> = inputs.to_vec();
        for idx in 0..input.len() {
            let base = input.as_slice().unwrap()[idx];
            perturbed[i].as_slice_mut().unwrap()[idx] = base + H;
            let (gp, _, lp) = run(&perturbed);
            let up = *gp.val(lp).first().unwrap();
            perturbed[i].as_slice_mut().unwrap()[idx] = base - H;
            let (gm, _, lm) = run(&perturbed);
            let down = *gm.val(lm).first().unwrap();
            perturbed[i].as_slice_mut().unwrap()[idx] = base;
            let numeric = (up - down) / (2.0 * H);
            let got = analytic.as_slice().unwrap()[idx];
            assert!(
                (got - numeric).abs() <= TOL * (1.0 + numeric.abs()),
                "input {i} element {idx}: analytic {got} vs numeric {numeric}"
            );
        }
    }
}

fn arr(rng: &mut genadmini::rng::SeedRng, shape: &[usize]) -> ArrayD<f64> {
    normal_array(rng, shape)
}

#[test]
fn elementwise_ops() {
    let mut rng = rng_from_seed(11);
    let a = arr(&mut rng, &[3, 4]);
    let b = arr(&mut rng, &[3, 4]);
    let w = arr(&mut rng, &[3, 4]);

    fd_check(&[a.clone(), b.clone()], |g, v| {
        let s = g.add(v[0], v[1]);
        weighted_loss(g, s, &w)
    });
    fd_check(&[a.clone(), b.clone()], |g, v| {
        let s = g.sub(v[0], v[1]);
        weighted_loss(g, s, &w)
    });
    fd_check(&[a.clone(), b.clone()], |g, v| {
        let s = g.mul(v[0], v[1]);
        weighted_loss(g, s, &w)
    });
    fd_check(&[a.clone()], |g, v| {
        let s = g.scale(v[0], -1.7);
        weighted_loss(g, s, &w)
    });
    fd_check(&[a.clone()], |g, v| {
        let s = g.add_scalar(v[0], 0.3);
        weighted_loss(g, s, &w)
    });
    fd_check(&[a.clone()], |g, v| {
        let s = g.square(v[0]);
        weighted_loss(g, s, &w)
    });
    fd_check(&[a, b], |g, v| g.mse(v[0], v[1]));
}

#[test]
fn activations() {
    let mut rng = rng_from_seed(12);
    let mut a = arr(&mut rng, &[2, 5]);
    // keep relu away from its kink
    a.mapv_inplace(|x| if x.abs() < 0.05 { x + 0.2 } else { x });
    let w = arr(&mut rng, &[2, 5]);

    for act in ["silu", "relu", "sigmoid", "tanh"] {
        let a = a.clone();
        let w = w.clone();
        fd_check(&[a], move |g, v| {
            let s = match act {
                "silu" => g.silu(v[0]),
                "relu" => g.relu(v[0]),
                "sigmoid" => g.sigmoid(v[0]),
                _ => g.tanh(v[0]),
            };
            weighted_loss(g, s, &w)
        });
    }
}

#[test]
fn shape_ops() {
    let mut rng = rng_from_seed(13);
    let a = arr(&mut rng, &[2, 3, 4]);
    let b = arr(&mut rng, &[2, 2, 4]);

    let w1 = arr(&mut rng, &[4, 6]);
    fd_check(&[a.clone()], |g, v| {
        let s = g.reshape(v[0], &[4, 6]);
        weighted_loss(g, s, &w1)
    });

    let w2 = arr(&mut rng, &[4, 2, 3]);
    fd_check(&[a.clone()], |g, v| {
        let s = g.permute(v[0], &[2, 0, 1]);
        weighted_loss(g, s, &w2)
    });

    let w3 = arr(&mut rng, &[2, 5, 4]);
    fd_check(&[a.clone(), b.clone()], |g, v| {
        let s = g.concat(1, &[v[0], v[1]]);
        weighted_loss(g, s, &w3)
    });

    let w4 = arr(&mut rng, &[2, 2, 4]);
    fd_check(&[a.clone()], |g, v| {
        let s = g.slice_axis(v[0], 1, 1, 2);
        weighted_loss(g, s, &w4)
    });

    let w5 = arr(&mut rng, &[2, 3, 4]);
    fd_check(&[a.clone()], |g, v| {
        let s = g.cumsum_axis(v[0], 1);
        weighted_loss(g, s, &w5)
    });
}

#[test]
fn broadcast_and_reductions() {
    let mut rng = rng_from_seed(14);
    let x = arr(&mut rng, &[2, 3, 4]);
    let suffix = arr(&mut rng, &[3, 4]);
    let prefix = arr(&mut rng, &[2, 3]);
    let w = arr(&mut rng, &[2, 3, 4]);

    fd_check(&[x.clone(), suffix], |g, v| {
        let s = g.broadcast_add_suffix(v[0], v[1]);
        weighted_loss(g, s, &w)
    });
    fd_check(&[x.clone(), prefix], |g, v| {
        let s = g.broadcast_add_prefix(v[0], v[1]);
        weighted_loss(g, s, &w)
    });
    fd_check(&[x.clone()], |g, v| g.mean_all(v[0]));
    fd_check(&[x.clone()], |g, v| {
        let s = g.sum_all(v[0]);
        g.scale(s, 0.25)
    });
    let wm = arr(&mut rng, &[3]);
    fd_check(&[x], |g, v| {
        let s = g.mean_axes(v[0], &[0, 2]);
        weighted_loss(g, s, &wm)
    });
}

#[test]
fn matrix_products() {
    let mut rng = rng_from_seed(15);
    let a = arr(&mut rng, &[3, 4]);
    let b = arr(&mut rng, &[4, 5]);
    let w = arr(&mut rng, &[3, 5]);
    fd_check(&[a, b], |g, v| {
        let s = g.matmul(v[0], v[1]);
        weighted_loss(g, s, &w)
    });

    let a3 = arr(&mut rng, &[2, 3, 4]);
    let b3 = arr(&mut rng, &[2, 4, 5]);
    let w3 = arr(&mut rng, &[2, 3, 5]);
    fd_check(&[a3.clone(), b3], |g, v| {
        let s = g.bmm(v[0], v[1], false);
        weighted_loss(g, s, &w3)
    });

    let bt = arr(&mut rng, &[2, 5, 4]);
    fd_check(&[a3, bt], |g, v| {
        let s = g.bmm(v[0], v[1], true);
        weighted_loss(g, s, &w3)
    });
}

#[test]
fn conv_and_upsample() {
    let mut rng = rng_from_seed(16);
    let x = arr(&mut rng, &[2, 3, 5, 6]);
    let wt = arr(&mut rng, &[4, 3, 3, 3]);
    let bias = arr(&mut rng, &[4]);

    let w_out = arr(&mut rng, &[2, 4, 5, 6]);
    fd_check(&[x.clone(), wt.clone(), bias.clone()], |g, v| {
        let s = g.conv2d(v[0], v[1], Some(v[2]), 1, 1);
        weighted_loss(g, s, &w_out)
    });

    let w_s2 = arr(&mut rng, &[2, 4, 3, 3]);
    fd_check(&[x.clone(), wt, bias], |g, v| {
        let s = g.conv2d(v[0], v[1], Some(v[2]), 2, 1);
        weighted_loss(g, s, &w_s2)
    });

    let w_up = arr(&mut rng, &[2, 3, 10, 12]);
    fd_check(&[x], |g, v| {
        let s = g.upsample2x(v[0]);
        weighted_loss(g, s, &w_up)
    });
}

#[test]
fn softmax_plain_and_masked() {
    let mut rng = rng_from_seed(17);
    let x = arr(&mut rng, &[4, 5]);
    let w = arr(&mut rng, &[4, 5]);
    fd_check(&[x.clone()], |g, v| {
        let s = g.softmax_last(v[0], None);
        weighted_loss(g, s, &w)
    });

    let mask = Array2::from_shape_fn((4, 5), |(r, j)| j <= r + 1);
    fd_check(&[x], move |g, v| {
        let s = g.softmax_last(v[0], Some(mask.clone()));
        weighted_loss(g, s, &w)
    });
}

#[test]
fn normalizations() {
    let mut rng = rng_from_seed(18);
    let x = arr(&mut rng, &[2, 4, 3, 2]);
    let gamma = uniform_array(&mut rng, &[4], 0.5, 1.5);
    let beta = arr(&mut rng, &[4]);
    let w = arr(&mut rng, &[2, 4, 3, 2]);
    fd_check(&[x, gamma, beta], |g, v| {
        let s = g.group_norm(v[0], v[1], v[2], 2, 1e-5);
        weighted_loss(g, s, &w)
    });

    let x2 = arr(&mut rng, &[6, 5]);
    let gamma2 = uniform_array(&mut rng, &[5], 0.5, 1.5);
    let beta2 = arr(&mut rng, &[5]);
    let w2 = arr(&mut rng, &[6, 5]);
    fd_check(&[x2, gamma2, beta2], |g, v| {
        let s = g.layer_norm(v[0], v[1], v[2], 1e-5);
        weighted_loss(g, s, &w2)
    });
}

#[test]
fn embedding_and_temporal_bias() {
    let mut rng = rng_from_seed(19);
    let table = arr(&mut rng, &[7, 3]);
    let w = arr(&mut rng, &[4, 3]);
    let ids = vec![3usize, 0, 6, 3];
    fd_check(&[table], move |g, v| {
        let s = g.embedding(v[0], &ids);
        weighted_loss(g, s, &w)
    });

    let bias = arr(&mut rng, &[2, 6]);
    let w2 = arr(&mut rng, &[2, 4, 4]);
    fd_check(&[bias], |g, v| {
        let s = g.temporal_bias(v[0], 4);
        weighted_loss(g, s, &w2)
    });
}

/// End-to-end check through the layer modules: parameters receive correct
/// gradients through attention, feed-forward, norms, and convolution.
#[test]
fn attention_block_params() {
    let mut rng = rng_from_seed(20);
    let mut store = ParamStore::<f64>::new();
    let mut rng_init = rng_from_seed(77);
    let mut b = ModuleBuilder::new(&mut store, &mut rng_init, ParamGroup::Theta);
    let attn = Attention::new(&mut b, "attn", 6, 6, 2, false);
    let ln = LayerNorm::new(&mut b, "ln", 6);
    let ff = FeedForward::new(&mut b, "ff", 6, 12, false);
    let lin = Linear::new(&mut b, "lin", 6, 6, true);
    let gn = GroupNorm::new(&mut b, "gn", 6, 2);
    let conv = Conv2d::new(&mut b, "conv", 6, 2, 3, 1, 1, true);

    let x = normal_array::<f64>(&mut rng, &[2, 4, 6]);
    let ximg = normal_array::<f64>(&mut rng, &[1, 6, 4, 4]);
    let w = normal_array::<f64>(&mut rng, &[2, 4, 6]);
    let wimg = normal_array::<f64>(&mut rng, &[1, 2, 4, 4]);

    let build = |ctx: &mut Ctx<f64>| {
        let xv = ctx.g.constant(x.clone());
        let h = ln.forward(ctx, xv);
        let h = attn.forward(ctx, h, h, &AttnMask::Causal, None, None);
        let h = ff.forward(ctx, h);
        let h = lin.forward(ctx, h);
        let wv = ctx.g.constant(w.clone());
        let lhs = ctx.g.mul(h, wv);
        let l1 = ctx.g.sum_all(lhs);

        let iv = ctx.g.constant(ximg.clone());
        let h2 = gn.forward(ctx, iv);
        let h2 = conv.forward(ctx, h2);
        let wv2 = ctx.g.constant(wimg.clone());
        let rhs = ctx.g.mul(h2, wv2);
        let l2 = ctx.g.sum_all(rhs);
        ctx.g.add(l1, l2)
    };

    let grads = {
        let mut ctx = Ctx::new(&store, &[ParamGroup::Theta]);
        let loss = build(&mut ctx);
        ctx.grads(loss)
    };

    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let analytic = grads.get(id).cloned().unwrap();
        let n = store.value(id).len();
        // large tensors: spot-check a strided subset to keep runtime sane
        let stride = (n / 24).max(1);
        for idx in (0..n).step_by(stride) {
            let orig = store.value(id).as_slice().unwrap()[idx];

            store.value_mut(id).as_slice_mut().unwrap()[idx] = orig + H;
            let up = {
                let mut c = Ctx::eval(&store);
                let l = build(&mut c);
                *c.g.val(l).first().unwrap()
            };
            store.value_mut(id).as_slice_mut().unwrap()[idx] = orig - H;
            let down = {
                let mut c = Ctx::eval(&store);
                let l = build(&mut c);
                *c.g.val(l).first().unwrap()
            };
            store.value_mut(id).as_slice_mut().unwrap()[idx] = orig;

            let numeric = (up - down) / (2.0 * H);
            let got = analytic.as_slice().unwrap()[idx];
            assert!(
                (got - numeric).abs() <= 5e-6 * (1.0 + numeric.abs()),
                "param {} element {idx}: analytic {got} vs numeric {numeric}",
                store.name(id)
            );
        }
    }
}
