//! Dense tensors, a reverse-mode tape and the layers built on it.

pub mod adam;
pub mod conv;
pub mod gradcheck;
pub mod graph;
pub mod init;
pub mod linalg;
pub mod macs;
pub mod nn;
pub mod ops;
pub mod params;
pub mod reduce;
pub mod scatter;
pub mod tensor;

pub use graph::{BackwardCtx, BackwardFn, Gradients, Graph, Var};
pub use params::{ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
