//! Raw slice-level kernels behind the differentiable ops.

pub mod conv;
pub mod norm;
pub mod pool;
pub mod resize;

pub use conv::ConvGeometry;
pub use resize::resize_bilinear;
