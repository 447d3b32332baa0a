//! Raw-waveform audio anti-spoofing toolkit.
//!
//! A desk-scale training and evaluation stack for bona-fide vs. spoofed
//! speech detection: a sinc-filterbank encoder with residual blocks and
//! optional attention refinement (SE / CBAM / parameter-free energy
//! attention), angular-margin and relation-network objectives, episodic
//! sampling, and detection metrics (EER, min t-DCF).
//!
//! All numeric code is generic over the scalar type ([`scalar::Scalar`]):
//! f64 for tests and oracles, f32 for faster training loops.

pub mod attention;
pub mod data;
pub mod encoder;
pub mod episodic;
pub mod error;
pub mod graph;
pub mod losses;
pub mod metrics;
pub mod scalar;
pub mod selfcheck;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::{grad_check, grad_check_multi, Graph, PoolTarget, Var};
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Concrete aliases for the two supported precisions.
pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Graph32 = Graph<f32>;
pub type Graph64 = Graph<f64>;
