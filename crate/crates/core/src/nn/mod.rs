//! Differentiable building blocks with hand-derived gradients.

pub mod encoder;
pub mod heads;
pub mod linear;
pub mod lstm;
pub mod model;
pub mod ops;
pub mod tensor;

pub use encoder::Encoder;
pub use heads::{classifier_head, filter_head, regressor_head, span_repr_inner, span_repr_outer};
pub use linear::{Linear, Mlp};
pub use lstm::{BiLstm, Lstm};
pub use model::{Dims, Encoding, PassConfig, SpanModel};
pub use tensor::Tensor;
