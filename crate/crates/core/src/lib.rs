//! Stochastic network calculus with moment generating functions.
//!
//! End-to-end delay and backlog bounds for a flow crossing a tandem of
//! constant-rate servers shared with cross traffic, computed in log space
//! over a grid of the free parameter θ.

pub mod bounds;
pub mod closed_form;
pub mod error;
pub mod experiments;
pub mod mgf;
pub mod numeric;
pub mod scenario;
pub mod service;
pub mod sim;
pub mod traffic;
pub mod validation;

pub use error::{Error, Result};
