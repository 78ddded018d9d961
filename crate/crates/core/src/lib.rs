//! depforge: dependability analysis for component-based architectures.
//!
//! Models are written in a small textual language ([`dsl`]), validated
//! ([`validate`]), instantiated for a parameter configuration
//! ([`instance`]) and handed to the analysis engines.

pub mod contract;
pub mod dsl;
pub mod engine;
pub mod expr;
pub mod instance;
pub mod model;
pub mod safety;
pub mod san;
pub mod trace;
pub mod typing;
pub mod validate;
pub mod workbench;
