//! Steering a frozen image generator with a frozen classifier.
//!
//! This crate trains a small "input generator" that maps a one-hot class
//! label to the parameters of a latent Gaussian. Latents sampled from that
//! Gaussian are pushed through a frozen generator and a frozen classifier;
//! minimizing the classifier's cross-entropy on the requested label makes
//! the generator produce class-conditional samples without touching either
//! frozen network.
//!
//! Modules build bottom-up: tensors and a deterministic RNG, a reverse-mode
//! autodiff graph, network definitions, pretraining (the frozen nets),
//! steering (the input generator), and evaluation utilities.

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod linalg;
pub mod nets;
pub mod optim;
pub mod pretrain;
pub mod rng;
pub mod steer;
pub mod tensor;

pub use autodiff::{Activation, Graph, NodeId};
pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::Tensor;
