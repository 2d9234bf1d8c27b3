//! Exact multi-parameter persistent homology of Liouville tori, with
//! filtration learning by projected subgradient descent.
//!
//! Pipeline: [`spectral`] turns a series into circle radii, [`barcode`]
//! evaluates closed-form barcodes along a filtration ray or curve,
//! [`vectorize`] draws persistence images, [`network`] classifies them and
//! [`learner`] pushes the loss gradient back onto the filtration
//! directions. [`multipers_ref`] holds the two-parameter reference
//! vectorizations used for comparison.

pub mod barcode;
pub mod dataset;
pub mod direction;
pub mod error;
pub mod learner;
pub mod multipers_ref;
pub mod network;
pub mod spectral;
pub mod vectorize;

pub use error::{EmphError, Result};
