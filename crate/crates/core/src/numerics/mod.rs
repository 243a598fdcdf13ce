//! Minimal dense tensors with reverse-mode automatic differentiation.
//!
//! Forward values are computed eagerly and recorded on a [`Tape`]; calling
//! [`Tape::backward`] walks the recording in reverse and accumulates exact
//! analytical gradients. All arithmetic is `f64` and single-threaded, so a
//! given sequence of operations always produces bit-identical results.

mod adam;
mod checkpoint;
mod gradcheck;
pub mod kernels;
mod tape;
mod tensor;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{check_registered_ops, gradient_check, GradCheckReport, REGISTERED_OPS};
pub use tape::{concat, Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("{op}: incompatible shapes {shapes:?}")]
    Shape { op: &'static str, shapes: Vec<Vec<usize>> },
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: {message}")]
    Invalid { op: &'static str, message: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
