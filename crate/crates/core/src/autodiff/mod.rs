//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The engine is a define-by-run Wengert tape: every operation computes its
//! value immediately and records enough structure to replay the chain rule
//! in reverse. A fresh [`Tape`] is built per training step; there is no
//! graph caching.

mod gradcheck;
mod optim;
mod tape;
mod tensor;

pub use gradcheck::{check_gradients, GradCheckReport};
pub use optim::{adam_step, AdamHyper, Parameter};
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::Tensor;
