//! Forensics toolkit for image-patch classification corpora.
//!
//! Audits a labeled corpus for non-biological shortcuts (class color
//! signatures, inconsistent JPEG compression, blue-channel clipping) and
//! measures how far shallow classifiers get by exploiting them.
//!
//! The crate is organized by pipeline stage:
//!
//! - [`corpus`]: directory-per-class scanning, manifests, image decoding
//! - [`features`]: mean-RGB and color-histogram descriptors, feature CSVs
//! - [`forensics`]: color audit, blockiness, quality bands, clipping
//! - [`classify`]: random forest, softmax probe, confusion-matrix metrics
//! - [`perturb`]: JPEG re-encoding, hue rotation, robustness sweeps
//! - [`synth`]: synthetic corpora with known, injected defects

pub mod classify;
pub mod corpus;
mod error;
pub mod features;
pub mod forensics;
mod par;
pub mod perturb;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};

/// Version stamped into every JSON artifact written by this crate.
pub const FORMAT_VERSION: u32 = 1;
