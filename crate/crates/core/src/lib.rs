//! Non-negative autoencoders (NAEs) and KL-NMF for supervised audio source
//! separation.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense matrices, softplus, the generalized KL cost, iRprop−.
//! - [`nmf`]: KL-NMF with multiplicative updates, the baseline separator.
//! - [`nae`]: shallow and multilayer non-negative autoencoders, full-batch
//!   training, and latent fitting against frozen decoders.
//! - [`dsp`]: √Hann STFT/iSTFT, WAV I/O, mixing and soft-mask reconstruction.
//! - [`separation`]: per-source model training, joint mixture fitting and
//!   the end-to-end `separate` pipeline.
//! - [`metrics`]: projection-based SDR/SIR/SAR and median/IQR summaries.
//! - [`harness`]: synthetic corpora, the toy note sequence, and the
//!   experiment runner behind the `nae` CLI.

pub mod dsp;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nae;
pub mod nmf;
pub mod numerics;
pub mod persist;
pub mod separation;

pub use error::{Error, Result};
pub use numerics::Matrix;
