// SPDX-License-Identifier: MIT OR Apache-2.0

//! Artificial-entanglement profiling of matrices.
//!
//! A matrix is reshaped into a higher-order tensor over its prime-factor
//! sites, swept into a matrix product state by sequential SVDs, and the
//! Schmidt spectrum at every bond is turned into von Neumann / Rényi
//! entropies. Around that core sit random-matrix reference laws, a synthetic
//! softmax-attention generator, LoRA / MPS-adapter constructors and the
//! experiment drivers used by the `aent` binary.

pub mod adapters;
pub mod attention;
pub mod entropy;
pub mod error;
pub mod experiments;
pub mod format;
pub mod linalg;
pub mod matrix_file;
pub mod mps;
pub mod report;
pub mod rmt;
pub mod seed;
pub mod tensor;

pub use entropy::{EntanglementProfile, LogBase};
pub use error::{Error, Result};
pub use mps::{MpsChain, SchmidtSpectrum};
pub use tensor::{DenseTensor, SiteLayout};

/// Version string embedded in every report.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
