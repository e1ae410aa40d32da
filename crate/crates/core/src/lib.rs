//! Safety index synthesis for control-affine polynomial systems with
//! state-dependent control limits.
//!
//! The pipeline: build a [`system::SymbolicSystem`], derive the
//! [`safety_index::SafetyIndexFamily`], enumerate refute cases, search for a
//! Gram-matrix certificate with [`feasibility::solve`], then audit the
//! resulting index with the [`falsifier`] and the closed-loop [`sim`].
//!
//! Numeric code is generic over [`Scalar`] (`f32`, `f64`); the aliases below
//! fix `f64`.

pub mod config;
pub mod controller;
pub mod falsifier;
pub mod feasibility;
pub mod polynomial;
pub mod refute;
pub mod safety_index;
pub mod scalar;
pub mod sim;
pub mod system;

pub use scalar::Scalar;

pub type Polynomial = polynomial::Polynomial<f64>;
pub type SymbolicSystem = system::SymbolicSystem<f64>;
pub type SafetyIndexFamily = safety_index::SafetyIndexFamily<f64>;
pub type SafetyIndex = safety_index::SafetyIndex<f64>;
pub type IndexParams = safety_index::IndexParams<f64>;
pub type SynthesisProblem = feasibility::SynthesisProblem<f64>;
pub type Setup = config::Setup<f64>;
