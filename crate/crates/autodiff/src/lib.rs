//! Double-precision tensors with a tape-based reverse-mode differentiator:
//! grouped 1D/2D convolution, layer normalization, GELU, fixed linear maps,
//! AdamW with a cosine schedule, gradient clipping, finite-difference
//! gradient checks and a versioned checkpoint format.

pub mod checkpoint;
mod conv;
pub mod gradcheck;
mod graph;
mod linear_map;
mod norm;
mod optim;
mod params;
mod tensor;

pub use conv::{Conv1dSpec, Conv2dSpec};
pub use graph::{gelu, Gradients, Graph, Var};
pub use linear_map::LinearMap;
pub use norm::LAYER_NORM_EPS;
pub use optim::{cosine_lr, AdamW, AdamWConfig};
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;
