//! Flatness-aware neural architecture search.
//!
//! This crate searches a discrete space of small convolutional networks for
//! architectures that are simultaneously accurate and robust to multiplicative
//! Gaussian perturbations of their weights, under a soft parameter-count
//! constraint. The search is surrogate-assisted: candidate quality is
//! predicted from previously evaluated architectures, and only the most
//! promising candidates from an NSGA-II pass over the surrogate landscape are
//! actually trained.
//!
//! Entry points:
//! - [`search_space`]: gene encoding of architectures and variation operators.
//! - [`nn_core`]: the networks themselves, plus training (SGD / sharpness-aware).
//! - [`objectives`]: accuracy, weight-perturbation robustness, and the scalar
//!   figures of merit the search optimizes.
//! - [`surrogate`]: interpolating predictors with rank-correlation model switching.
//! - [`nsga2`]: the multi-objective genetic optimizer.
//! - [`corruption`]: image corruption families and corruption-error reports.
//! - [`engine`]: the archive-driven search loop tying everything together.
//!
//! The `examples/` directory demonstrates each capability end to end.

pub mod corruption;
pub mod engine;
pub mod error;
pub mod nn_core;
pub mod nsga2;
pub mod objectives;
pub mod search_space;
pub mod seed;
pub mod surrogate;

pub use error::{Error, Result};
pub use search_space::{ArchGene, NetworkConfig, SearchSpaceDef};
