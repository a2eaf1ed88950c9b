//! Differentially private estimators for GLMs, sparse GLMs, Bradley-Terry-Luce
//! ranking and Fourier-series regression, with score-attack diagnostics and a
//! reproducible experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod btl;
pub mod dp_glm;
pub mod error;
pub mod glm;
pub mod harness;
pub mod mechanisms;
pub mod nonparam;
pub mod rng;
pub mod sparse;
pub mod stats;

pub use dp_glm::{fit_dp_glm, DpGlmConfig, DpGlmResult};
pub use error::{Error, Result};
pub use glm::{DesignSpec, GlmDataset, GlmFamily, GlmParams};
pub use mechanisms::PrivacyBudget;
pub use rng::{NoiseSource, SeededRng, ZeroNoise};
