#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod error;
pub mod linalg;
pub mod topology;
pub mod model;
pub mod prox;
pub mod inner;
pub mod solvers;
pub mod diagnostics;
pub mod bench;
