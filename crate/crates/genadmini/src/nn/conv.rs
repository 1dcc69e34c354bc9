//! Convolution kernels: im2col lowering plus nearest-neighbor upsampling.

use ndarray::{Array2, ArrayD, ArrayView2, IxDyn};
use rayon::prelude::*;

use super::matmul::mm;
use crate::scalar::Scalar;

fn out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

/// Lowers `(N, Cin, H, W)` into `(N*Ho*Wo, Cin*kh*kw)` patch rows.
fn im2col<F: Scalar>(
    x: &ArrayD<F>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Array2<F> {
    let (n, cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let ho = out_extent(h, kh, stride, pad);
    let wo = out_extent(w, kw, stride, pad);
    let k_total = cin * kh * kw;
    let xs = x.as_slice().expect("standard layout input");

    let mut cols = Array2::<F>::zeros((n * ho * wo, k_total));
    let per_sample = ho * wo * k_total;
    cols.as_slice_mut()
        .unwrap()
        .par_chunks_mut(per_sample)
        .enumerate()
        .for_each(|(ni, chunk)| {
            for oh in 0..ho {
                let ih0 = (oh * stride) as isize - pad as isize;
                for ow in 0..wo {
                    let iw0 = (ow * stride) as isize - pad as isize;
                    let row = (oh * wo + ow) * k_total;
                    for ci in 0..cin {
                        let x_base = (ni * cin + ci) * h * w;
                        for ki in 0..kh {
                            let ih = ih0 + ki as isize;
                            let dst = row + (ci * kh + ki) * kw;
                            if ih < 0 || ih >= h as isize {
                                continue; // zeros already present
                            }
                            let src_row = x_base + ih as usize * w;
                            for kj in 0..kw {
                                let iw = iw0 + kj as isize;
                                if iw >= 0 && iw < w as isize {
                                    chunk[dst + kj] = xs[src_row + iw as usize];
                                }
                            }
                        }
                    }
                }
            }
        });
    cols
}

/// Scatters patch-row gradients back onto the input grid.
fn col2im<F: Scalar>(
    dcols: &Array2<F>,
    x_shape: &[usize],
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> ArrayD<F> {
    let (_n, cin, h, w) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let ho = out_extent(h, kh, stride, pad);
    let wo = out_extent(w, kw, stride, pad);
    let k_total = cin * kh * kw;
    let ds = dcols.as_slice().expect("standard layout cols");

    let mut dx = ArrayD::<F>::zeros(IxDyn(x_shape));
    let per_sample_x = cin * h * w;
    let per_sample_rows = ho * wo * k_total;
    dx.as_slice_mut()
        .unwrap()
        .par_chunks_mut(per_sample_x)
        .enumerate()
        .for_each(|(ni, xchunk)| {
            let col_base = ni * per_sample_rows;
            for oh in 0..ho {
                let ih0 = (oh * stride) as isize - pad as isize;
                for ow in 0..wo {
                    let iw0 = (ow * stride) as isize - pad as isize;
                    let row = col_base + (oh * wo + ow) * k_total;
                    for ci in 0..cin {
                        let x_base = ci * h * w;
                        for ki in 0..kh {
                            let ih = ih0 + ki as isize;
                            if ih < 0 || ih >= h as isize {
                                continue;
                            }
                            let dst_row = x_base + ih as usize * w;
                            let src = row + (ci * kh + ki) * kw;
                            for kj in 0..kw {
                                let iw = iw0 + kj as isize;
                                if iw >= 0 && iw < w as isize {
                                    let idx = dst_row + iw as usize;
                                    xchunk[idx] = xchunk[idx] + ds[src + kj];
                                }
                            }
                        }
                    }
                }
            }
        });
    dx
}

pub(crate) fn conv2d_forward<F: Scalar>(
    x: &ArrayD<F>,
    w: &ArrayD<F>,
    bias: Option<&ArrayD<F>>,
    stride: usize,
    pad: usize,
) -> (ArrayD<F>, Array2<F>) {
    let (n, cin, h, win) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (cout, cin_w, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    assert_eq!(cin, cin_w, "conv2d channel mismatch");
    let ho = out_extent(h, kh, stride, pad);
    let wo = out_extent(win, kw, stride, pad);

    let cols = im2col(x, kh, kw, stride, pad);
    let wmat = w
        .view()
        .into_shape_with_order(IxDyn(&[cout, cin * kh * kw]))
        .unwrap();
    let wmat2: ArrayView2<F> = wmat.into_dimensionality().unwrap();
    // (N*Ho*Wo, K) x (K, Cout)
    let mut flat = mm(&cols.view(), &wmat2, false, true);
    if let Some(b) = bias {
        let bs = b.as_slice().unwrap();
        for mut row in flat.rows_mut() {
            for (v, &bv) in row.iter_mut().zip(bs.iter()) {
                *v = *v + bv;
            }
        }
    }
    let out = flat
        .into_shape_with_order((n, ho, wo, cout))
        .unwrap()
        .permuted_axes([0, 3, 1, 2])
        .as_standard_layout()
        .to_owned()
        .into_dyn();
    (out, cols)
}

pub(crate) fn conv2d_backward<F: Scalar>(
    g: &ArrayD<F>,
    parents: &[&ArrayD<F>],
    needs: &[bool],
    stride: usize,
    pad: usize,
    cols: &Array2<F>,
) -> Vec<Option<ArrayD<F>>> {
    let x = parents[0];
    let w = parents[1];
    let (cout, cin, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    let (n, ho, wo) = (g.shape()[0], g.shape()[2], g.shape()[3]);

    // (N, Cout, Ho, Wo) -> (N*Ho*Wo, Cout)
    let gm = g
        .view()
        .permuted_axes(IxDyn(&[0, 2, 3, 1]))
        .as_standard_layout()
        .to_owned()
        .into_shape_with_order(IxDyn(&[n * ho * wo, cout]))
        .unwrap();
    let gm2: ArrayView2<F> = gm.view().into_dimensionality().unwrap();

    let dx = needs[0].then(|| {
        let wmat = w
            .view()
            .into_shape_with_order(IxDyn(&[cout, cin * kh * kw]))
            .unwrap();
        let wmat2: ArrayView2<F> = wmat.into_dimensionality().unwrap();
        let dcols = mm(&gm2, &wmat2, false, false);
        col2im(&dcols, x.shape(), kh, kw, stride, pad)
    });
    let dw = needs[1].then(|| {
        mm(&gm2, &cols.view(), true, false)
            .into_shape_with_order((cout, cin, kh, kw))
            .unwrap()
            .into_dyn()
    });
    let mut out = vec![dx, dw];
    if needs.len() > 2 {
        out.push(needs[2].then(|| gm.sum_axis(ndarray::Axis(0)).into_dyn()));
    }
    out
}

pub(crate) fn upsample2x_forward<F: Scalar>(x: &ArrayD<F>) -> ArrayD<F> {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let xs = x.as_slice().unwrap();
    let mut out = ArrayD::<F>::zeros(IxDyn(&[n, c, 2 * h, 2 * w]));
    {
        let os = out.as_slice_mut().unwrap();
        for nc in 0..n * c {
            let src = nc * h * w;
            let dst = nc * 4 * h * w;
            for i in 0..h {
                for j in 0..w {
                    let v = xs[src + i * w + j];
                    let base = dst + 2 * i * 2 * w + 2 * j;
                    os[base] = v;
                    os[base + 1] = v;
                    os[base + 2 * w] = v;
                    os[base + 2 * w + 1] = v;
                }
            }
        }
    }
    out
}

pub(crate) fn upsample2x_backward<F: Scalar>(g: &ArrayD<F>) -> ArrayD<F> {
    let (n, c, h2, w2) = (g.shape()[0], g.shape()[1], g.shape()[2], g.shape()[3]);
    let (h, w) = (h2 / 2, w2 / 2);
    let gs = g.as_slice().unwrap();
    let mut dx = ArrayD::<F>::zeros(IxDyn(&[n, c, h, w]));
    {
        let ds = dx.as_slice_mut().unwrap();
        for nc in 0..n * c {
            let src = nc * h2 * w2;
            let dst = nc * h * w;
            for i in 0..h {
                for j in 0..w {
                    let base = src + 2 * i * w2 + 2 * j;
                    ds[dst + i * w + j] =
                        gs[base] + gs[base + 1] + gs[base + w2] + gs[base + w2 + 1];
                }
            }
        }
    }
    dx
}
