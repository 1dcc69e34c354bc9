//! Tensor engine: a small reverse-mode autodiff tape over `ndarray`, plus
//! the layers and optimizer built on it. Deterministic by construction —
//! fixed tape order, fixed gemm blocking, batch-level parallelism only over
//! disjoint outputs.

mod conv;
mod graph;
mod matmul;
mod ops;

pub mod layers;
pub mod optim;
pub mod params;

pub use graph::{Grads, Graph, Var};
pub use params::{Ctx, GradMap, InitKind, ModuleBuilder, ParamGroup, ParamId, ParamStore};
