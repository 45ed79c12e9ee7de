//! Dense CPU tensors with a tape-based reverse-mode autodiff engine.
//!
//! The op set is exactly what the segmentation and alignment networks need:
//! strided-1 2D/3D convolution, batch norm, pooling, bilinear resampling,
//! batched matmul, softmax and a handful of pointwise ops. Everything is
//! single-threaded with a fixed reduction order, so identical inputs give
//! bit-identical outputs.

pub mod gradcheck;
mod graph;
pub mod kernels;
mod ops;
mod optim;
mod param;
mod real;
mod tensor;

pub use graph::{BackwardCtx, Grads, Graph, Var};
pub use ops::stable_sigmoid;
pub use optim::Adam;
pub use param::{fan_in_uniform, kaiming_uniform, ParamEntry, ParamId, ParamStore};
pub use real::{gemm, Real};
pub use tensor::{numel, strides, Tensor};
