//! Numerical realization of fields of local cross sections for regular
//! flows on compact metric spaces.
//!
//! The crate builds cross-section fields from topological 1-forms (a
//! Whitney-style construction followed by a time form, a monotonizing form
//! and an antisymmetrization), certifies their parameters on finite nets,
//! and runs sectional-flow diagnostics: stable and unstable sets at finite
//! horizon, diameter decay, stable-point and wandering checks, and
//! expansivity scans.

pub mod error;
pub mod expansivity;
pub mod config;
pub mod dynamics;
pub mod numerics;
pub mod flow;
pub mod forms;
pub mod sections;
pub mod space;

pub use error::{Error, Result};
