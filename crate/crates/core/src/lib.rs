#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Finite-window estimators for localized infinite matrices, synthesis
//! operators and integral operators: localization norms, `ℓᵖ`-stability
//! constants across `p`, symbol and inverse-decay checks.

pub mod corpus;
pub mod error;
pub mod kernelop;
pub mod lattice;
pub mod matalg;
pub mod norm;
pub mod quadrature;
pub mod stability;
pub mod synthesis;

pub use error::{Error, Result};
pub use kernelop::{KernelOperator, KernelRule};
pub use lattice::{cutoff_partition_check, cutoff_psi, separation_constant, CutoffOperator, IndexSet, Window};
pub use matalg::{LocalizedMatrix, OffsetProfile, Weight};
pub use norm::{lp_norm, PNorm};
pub use synthesis::{DyadicFunction, GeneratorFamily, Profile1D, TensorProfile};
