//! CPU-hosted CNN inference runtime built around tiled matrix-multiplication
//! jobs, heterogeneous simulated accelerator clusters with work stealing, and
//! a multi-frame layer pipeline.
//!
//! The numeric kernels are generic over [`scalar::Scalar`] (`f32`/`f64`);
//! the runtime itself works in `f32` through the aliases below.

pub mod accel;
pub mod config;
pub mod error;
pub mod jobs;
pub mod layers;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod scheduler;
pub mod synth;
pub mod tensor;
pub mod weights;

pub use error::{Error, Result};
pub use jobs::LayerId;
pub use layers::Activation;
pub use scheduler::MappingMode;
pub use tensor::ConvParams;

/// Feature map in the runtime's working precision.
pub type Tensor3 = tensor::Tensor3<f32>;
/// Matrix in the runtime's working precision.
pub type Matrix = tensor::Matrix<f32>;
/// Shared matrix handle in the runtime's working precision.
pub type SharedMatrix = jobs::SharedMatrix<f32>;
/// Tile job in the runtime's working precision.
pub type Job = jobs::Job<f32>;
