//! Few-shot adversarial colorization with cluster-defined tasks and Reptile
//! meta-updates.
//!
//! The pipeline has five stages, each in its own module:
//!
//! * [`colorlab`]: sRGB/CIE Lab conversion and the L/ab plane data model.
//! * [`taskforge`]: backbone features, MAC descriptors, PCA and K-means tasks.
//! * [`netcore`]: the U-Net generator and conv-BN-ReLU discriminator.
//! * [`advloss`]: adversarial and L1 losses with hand-derived gradients.
//! * [`metatrain`]: the meta-training loop, the plain cGAN baseline and checkpoints.
//! * [`evalkit`]: Inception Score and sample-grid export.
//! * [`datapipe`]: ingestion, splits, batches and the synthetic toy corpus.

pub mod advloss;
pub mod colorlab;
pub mod datapipe;
mod error;
pub mod evalkit;
pub mod metatrain;
pub mod netcore;
pub mod rng;
pub mod taskforge;
pub mod tensor;

pub use error::{Error, Result};
