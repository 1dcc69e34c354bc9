//! Matrix-product kernels shared by the forward builders and backward rules.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayD, ArrayView2, ArrayViewMut2, Ix3, IxDyn};
use rayon::prelude::*;

use crate::scalar::Scalar;

/// Work size under which a batched product is not worth parallelizing.
const PAR_FLOP_THRESHOLD: usize = 1 << 20;

pub(crate) fn mm<F: Scalar>(
    a: &ArrayView2<F>,
    b: &ArrayView2<F>,
    transpose_lhs: bool,
    transpose_rhs: bool,
) -> Array2<F> {
    let av = if transpose_lhs { a.t() } else { a.view() };
    let bv = if transpose_rhs { b.t() } else { b.view() };
    assert_eq!(av.shape()[1], bv.shape()[0], "matmul inner dim");
    let mut out = Array2::<F>::zeros((av.shape()[0], bv.shape()[1]));
    general_mat_mul(F::one(), &av, &bv, F::zero(), &mut out.view_mut());
    out
}

/// Batched product over the leading axis of two rank-3 tensors.
pub(crate) fn bmm<F: Scalar>(
    a: &ArrayD<F>,
    b: &ArrayD<F>,
    transpose_lhs: bool,
    transpose_rhs: bool,
) -> ArrayD<F> {
    let a3 = a.view().into_dimensionality::<Ix3>().expect("bmm lhs rank 3");
    let b3 = b.view().into_dimensionality::<Ix3>().expect("bmm rhs rank 3");
    let batch = a3.shape()[0];
    assert_eq!(batch, b3.shape()[0], "bmm batch mismatch");

    let (m, k) = if transpose_lhs {
        (a3.shape()[2], a3.shape()[1])
    } else {
        (a3.shape()[1], a3.shape()[2])
    };
    let (kb, n) = if transpose_rhs {
        (b3.shape()[2], b3.shape()[1])
    } else {
        (b3.shape()[1], b3.shape()[2])
    };
    assert_eq!(k, kb, "bmm inner dim");

    let mut out = ArrayD::<F>::zeros(IxDyn(&[batch, m, n]));
    {
        let mut out3 = out.view_mut().into_dimensionality::<Ix3>().unwrap();
        let mut views: Vec<(usize, ArrayViewMut2<F>)> =
            out3.outer_iter_mut().enumerate().collect();
        let run = |(i, c): &mut (usize, ArrayViewMut2<F>)| {
            let ai = a3.index_axis(ndarray::Axis(0), *i);
            let bi = b3.index_axis(ndarray::Axis(0), *i);
            let av = if transpose_lhs { ai.t() } else { ai.view() };
            let bv = if transpose_rhs { bi.t() } else { bi.view() };
            general_mat_mul(F::one(), &av, &bv, F::zero(), c);
        };
        if batch >= 4 && batch * m * k * n >= PAR_FLOP_THRESHOLD {
            views.par_iter_mut().for_each(run);
        } else {
            views.iter_mut().for_each(run);
        }
    }
    out
}

pub(crate) fn matmul_backward<F: Scalar>(
    g: &ArrayD<F>,
    parents: &[&ArrayD<F>],
    needs: &[bool],
) -> Vec<Option<ArrayD<F>>> {
    let a = parents[0].view().into_dimensionality().unwrap();
    let b = parents[1].view().into_dimensionality().unwrap();
    let g2: ArrayView2<F> = g.view().into_dimensionality().unwrap();
    vec![
        needs[0].then(|| mm(&g2, &b, false, true).into_dyn()),
        needs[1].then(|| mm(&a, &g2, true, false).into_dyn()),
    ]
}

pub(crate) fn bmm_backward<F: Scalar>(
    g: &ArrayD<F>,
    parents: &[&ArrayD<F>],
    needs: &[bool],
    transpose_rhs: bool,
) -> Vec<Option<ArrayD<F>>> {
    let a = parents[0];
    let b = parents[1];
    if transpose_rhs {
        // c_i = a_i · b_i^T  =>  da_i = g_i · b_i ; db_i = g_i^T · a_i
        vec![
            needs[0].then(|| bmm(g, b, false, false)),
            needs[1].then(|| bmm(g, a, true, false)),
        ]
    } else {
        // c_i = a_i · b_i    =>  da_i = g_i · b_i^T ; db_i = a_i^T · g_i
        vec![
            needs[0].then(|| bmm(g, b, false, true)),
            needs[1].then(|| bmm(a, g, true, false)),
        ]
    }
}
