//! Transfer latent representation (TLR) for unsupervised domain adaptation.
//!
//! Source and target samples are mapped through a joint kernel matrix `K`;
//! a projection `W` is then found in closed form that trades off the
//! maximum mean discrepancy between the projected domains against how well
//! a linear autoencoder `x ↦ x W Wᵀ` reconstructs each domain. Target labels
//! are predicted with 1-NN in the latent space.
//!
//! ```
//! use tlr_adapt::dataset::{standardize_pair, synth_shift_pair, SynthConfig, ZScoreMode};
//! use tlr_adapt::kernel::KernelSpec;
//! use tlr_adapt::tlr::{fit, TlrHyperparams};
//! use tlr_adapt::classify::knn1_predict;
//!
//! let pair = synth_shift_pair(&SynthConfig {
//!     n_per_class: 20, dim: 5, classes: 3,
//!     rotation_deg: 20.0, translation: 1.0, noise_std: 0.5, seed: 1,
//! }).unwrap();
//! let pair = standardize_pair(&pair, ZScoreMode::PerDomain).unwrap();
//! let fitted = fit(&pair, &KernelSpec::Linear, &TlrHyperparams::new(0.01, 1.0, 10).unwrap()).unwrap();
//! let pred = knn1_predict(&fitted.p_source, pair.source_labels(), &fitted.p_target).unwrap();
//! assert_eq!(pred.predicted.len(), 60);
//! ```

pub mod bench;
pub mod classify;
pub mod dataset;
pub mod error;
pub mod kernel;
pub mod mmd;
pub mod tlr;

pub use nalgebra;

pub use error::{Result, TlrError};
