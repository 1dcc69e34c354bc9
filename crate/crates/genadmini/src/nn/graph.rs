//! Reverse-mode automatic differentiation over `ndarray` tensors.
//!
//! A [`Graph`] is a flat tape: every operation appends a node holding its
//! forward value, its parent indices, and the op descriptor needed for the
//! backward pass. Node values are always standard-layout (C-order) arrays.
//! Backward walks the tape in reverse insertion order, which makes gradient
//! accumulation order — and therefore the whole training process — fully
//! deterministic.

use ndarray::{ArrayD, Axis, IxDyn, Slice};

use super::ops::{op_backward, Op};
use crate::scalar::Scalar;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Var(pub(crate) usize);

pub(crate) struct Node<F: Scalar> {
    pub value: ArrayD<F>,
    pub parents: Vec<Var>,
    pub op: Op<F>,
    pub needs_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Grads<F: Scalar> {
    table: Vec<Option<ArrayD<F>>>,
}

impl<F: Scalar> Grads<F> {
    /// Gradient of the loss with respect to `v`, if any flowed there.
    pub fn get(&self, v: Var) -> Option<&ArrayD<F>> {
        self.table.get(v.0).and_then(|g| g.as_ref())
    }

    /// Owned gradient for `v`.
    pub fn take(&mut self, v: Var) -> Option<ArrayD<F>> {
        self.table.get_mut(v.0).and_then(|g| g.take())
    }
}

/// The autodiff tape.
pub struct Graph<F: Scalar> {
    pub(crate) nodes: Vec<Node<F>>,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Forward value of a node.
    pub fn val(&self, v: Var) -> &ArrayD<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Inserts a node that does not require gradients.
    pub fn constant(&mut self, value: ArrayD<F>) -> Var {
        self.push(value, vec![], Op::Leaf, false)
    }

    /// Inserts a differentiable leaf (parameter or probed input).
    pub fn leaf(&mut self, value: ArrayD<F>) -> Var {
        self.push(value, vec![], Op::Leaf, true)
    }

    pub(crate) fn push(
        &mut self,
        value: ArrayD<F>,
        parents: Vec<Var>,
        op: Op<F>,
        needs_grad: bool,
    ) -> Var {
        debug_assert!(value.is_standard_layout());
        self.nodes.push(Node {
            value,
            parents,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn push_auto(&mut self, value: ArrayD<F>, parents: Vec<Var>, op: Op<F>) -> Var {
        let needs = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.push(value, parents, op, needs)
    }

    /// Reverse pass from a scalar root. Returns per-node gradients.
    pub fn backward(&self, root: Var) -> Grads<F> {
        let mut table: Vec<Option<ArrayD<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        let seed = ArrayD::from_elem(self.nodes[root.0].value.raw_dim(), F::one());
        table[root.0] = Some(seed);

        for id in (0..=root.0).rev() {
            if table[id].is_none() || !self.nodes[id].needs_grad {
                continue;
            }
            let node = &self.nodes[id];
            if node.parents.is_empty() {
                continue;
            }
            let grad_out = table[id].take().expect("checked above");
            let needs: Vec<bool> = node
                .parents
                .iter()
                .map(|p| self.nodes[p.0].needs_grad)
                .collect();
            let parent_values: Vec<&ArrayD<F>> =
                node.parents.iter().map(|p| &self.nodes[p.0].value).collect();
            let contrib = op_backward(&node.op, &grad_out, &node.value, &parent_values, &needs);
            for (slot, grad) in node.parents.iter().zip(contrib) {
                if let Some(grad) = grad {
                    match &mut table[slot.0] {
                        Some(acc) => *acc += &grad,
                        empty => *empty = Some(grad),
                    }
                }
            }
        }
        Grads { table }
    }

    // ---- elementwise and arithmetic ----

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add: shape mismatch");
        let v = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push_auto(v, vec![a, b], Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub: shape mismatch");
        let v = &self.nodes[a.0].value - &self.nodes[b.0].value;
        self.push_auto(v, vec![a, b], Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul: shape mismatch");
        let v = &self.nodes[a.0].value * &self.nodes[b.0].value;
        self.push_auto(v, vec![a, b], Op::Mul)
    }

    pub fn scale(&mut self, a: Var, c: F) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| x * c);
        self.push_auto(v, vec![a], Op::Scale(c))
    }

    pub fn add_scalar(&mut self, a: Var, c: F) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| x + c);
        self.push_auto(v, vec![a], Op::AddScalar)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    /// Mean of squared differences over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        let s = self.square(d);
        self.mean_all(s)
    }

    // ---- activations ----

    pub fn silu(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0]
            .value
            .mapv(|x| x / (F::one() + (-x).exp()));
        self.push_auto(v, vec![a], Op::Silu)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| x.max(F::zero()));
        self.push_auto(v, vec![a], Op::Relu)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0]
            .value
            .mapv(|x| F::one() / (F::one() + (-x).exp()));
        self.push_auto(v, vec![a], Op::Sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| x.tanh());
        self.push_auto(v, vec![a], Op::Tanh)
    }

    // ---- shape manipulation ----

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let n: usize = shape.iter().product();
        assert_eq!(n, self.nodes[a.0].value.len(), "reshape: element count");
        let v = self.nodes[a.0]
            .value
            .clone()
            .into_shape_with_order(IxDyn(shape))
            .expect("contiguous reshape");
        self.push_auto(v, vec![a], Op::Reshape)
    }

    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Var {
        let v = self.nodes[a.0]
            .value
            .view()
            .permuted_axes(IxDyn(&perm.to_vec()))
            .as_standard_layout()
            .to_owned();
        self.push_auto(v, vec![a], Op::Permute(perm.to_vec()))
    }

    pub fn concat(&mut self, axis: usize, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|p| self.nodes[p.0].value.view()).collect();
        let v = ndarray::concatenate(Axis(axis), &views).expect("concat shapes");
        let split = parts
            .iter()
            .map(|p| self.nodes[p.0].value.shape()[axis])
            .collect();
        let parents = parts.to_vec();
        let v = v.as_standard_layout().to_owned();
        self.push_auto(v, parents, Op::Concat { axis, split })
    }

    pub fn slice_axis(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Var {
        let full = self.shape(a)[axis];
        assert!(start + len <= full, "slice out of range");
        let v = self.nodes[a.0]
            .value
            .slice_axis(Axis(axis), Slice::from(start..start + len))
            .as_standard_layout()
            .to_owned();
        self.push_auto(
            v,
            vec![a],
            Op::Slice {
                axis,
                start,
                len,
                full,
            },
        )
    }

    // ---- broadcasting adds ----

    /// `x + y` where `y.shape` equals the trailing dims of `x.shape`.
    pub fn broadcast_add_suffix(&mut self, x: Var, y: Var) -> Var {
        let xs = self.shape(x).to_vec();
        let ys = self.shape(y).to_vec();
        assert!(ys.len() <= xs.len() && xs[xs.len() - ys.len()..] == ys[..]);
        let v = &self.nodes[x.0].value + &self.nodes[y.0].value;
        self.push_auto(v, vec![x, y], Op::BroadcastAddSuffix)
    }

    /// `x + y` where `y.shape` equals the leading dims of `x.shape`
    /// (e.g. a per-(sample, channel) embedding added over spatial dims).
    pub fn broadcast_add_prefix(&mut self, x: Var, y: Var) -> Var {
        let xs = self.shape(x).to_vec();
        let ys = self.shape(y).to_vec();
        assert!(ys.len() <= xs.len() && xs[..ys.len()] == ys[..]);
        let mut bshape = ys.clone();
        bshape.extend(std::iter::repeat(1).take(xs.len() - ys.len()));
        let yb = self.nodes[y.0]
            .value
            .view()
            .into_shape_with_order(IxDyn(&bshape))
            .expect("prefix broadcast reshape");
        let v = &self.nodes[x.0].value + &yb;
        self.push_auto(v, vec![x, y], Op::BroadcastAddPrefix)
    }

    // ---- reductions ----

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = F::from_usize(self.nodes[a.0].value.len()).unwrap();
        let s = self.nodes[a.0].value.sum() / n;
        let v = ArrayD::from_elem(IxDyn(&[]), s);
        self.push_auto(v, vec![a], Op::MeanAll)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.sum();
        let v = ArrayD::from_elem(IxDyn(&[]), s);
        self.push_auto(v, vec![a], Op::SumAll)
    }

    /// Mean over a set of axes; reduced axes are removed from the shape.
    pub fn mean_axes(&mut self, a: Var, axes: &[usize]) -> Var {
        let mut sorted = axes.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut v = self.nodes[a.0].value.clone();
        for &ax in sorted.iter().rev() {
            v = v.mean_axis(Axis(ax)).expect("nonempty axis");
        }
        let full = self.shape(a).to_vec();
        self.push_auto(
            v.as_standard_layout().to_owned(),
            vec![a],
            Op::MeanAxes { axes: sorted, full },
        )
    }

    pub fn cumsum_axis(&mut self, a: Var, axis: usize) -> Var {
        let mut v = self.nodes[a.0].value.clone();
        v.accumulate_axis_inplace(Axis(axis), |&prev, cur| *cur = *cur + prev);
        self.push_auto(v, vec![a], Op::CumSumAxis { axis })
    }
}
