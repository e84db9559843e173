//! Minimal reverse-mode automatic differentiation: the operator set the
//! network needs, AdamW, a cosine schedule, a finite-difference checker and
//! checkpoint I/O.

pub mod check;
pub mod checkpoint;
pub mod conv;
pub mod graph;
pub mod optim;
pub mod tensor;

pub use check::{grad_check, grad_check_multi, relative_error, DEFAULT_EPS};
pub use conv::{param_count, ConvSpec};
pub use graph::{softmax, Graph, PoolKind, Var};
pub use optim::{adamw_step, cosine_lr, AdamWConfig, OptimState};
pub use tensor::Tensor;
