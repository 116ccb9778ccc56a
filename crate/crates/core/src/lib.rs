//! Cross-modal embedding learning through shared covariate classifiers.
//!
//! Two modality-specific encoders (modality A, voice-like; modality B,
//! face-like) are trained only on their own samples and coupled solely
//! through classifier heads shared across modalities. The crate also holds
//! the synthetic corpus generator, the cross-modal evaluation protocols, and
//! closed-form analyses of what covariate-only matching can achieve, each
//! paired with a Monte Carlo simulator.

pub mod error;
pub mod evalkit;
pub mod netcore;
pub mod oracle;
pub mod par;
pub mod rng;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
