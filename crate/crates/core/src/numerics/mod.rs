//! Dense tensors, a reverse-mode tape and finite-difference checking.

mod check;
mod tape;
mod tensor;

pub use check::{grad_check, grad_check_many};
pub use tape::{Adjacency, Gradients, Tape, Var};
pub use tensor::{scaled_dot_attention, softmax_rows, Tensor};
