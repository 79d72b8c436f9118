//! Layer geometry, tensors, workload files and the reference kernels.

mod golden;
mod layer;
mod tensor;
mod workload;

use std::path::Path;

use thiserror::Error;

pub use golden::{expand_input, golden_conv, golden_conv_acc, golden_layer, golden_tconv};
pub use layer::{LayerKind, LayerSpec, ModelRole};
pub use tensor::Tensor;
pub use workload::{load_workload, store_workload, Workload};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("layer {layer}: field {field}: {message}")]
    Dimension {
        layer: String,
        field: &'static str,
        message: String,
    },
    #[error("invalid workload: {0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("malformed dump at byte {offset}: {message}")]
    Format { offset: usize, message: String },
}

impl ModelError {
    pub(crate) fn in_file(self, path: &Path) -> Self {
        match self {
            ModelError::Parse(m) => ModelError::Parse(format!("{}: {m}", path.display())),
            ModelError::Invalid(m) => ModelError::Invalid(format!("{}: {m}", path.display())),
            other => other,
        }
    }
}
