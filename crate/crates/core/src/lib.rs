//! Monte Carlo laboratory for the local time of the continuous-time simple random
//! walk on wired lattice approximations of planar domains.
//!
//! The walk lives on `V ∪ {ρ}` where `ρ` is a single boundary vertex absorbing every
//! edge that leaves `V`, and time is measured by the local time accumulated at `ρ`.
//! The crate simulates the local-time field, samples the associated Gaussian free
//! fields, extracts thick/thin/light/avoided point sets with their normalized point
//! measures, and provides exact single-site laws and tail bounds to test against.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gff;
pub mod green;
pub mod io;
pub mod lattice;
pub mod measures;
pub mod oracle;
pub mod rng;
pub mod run;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
pub use gff::{GaussianField, PinnedField, PinnedSampler};
pub use green::{GreenOperator, PotentialKernel};
pub use lattice::{DomainSpec, LatticeGraph, Rect};
pub use measures::{Mode, Parameters, PointMeasure, ProfileMeasure};
pub use oracle::{LimitConstants, SiteLaw};
pub use walk::{HoldingMode, LocalTimeField};

/// `g = 1/(2π)`: the coefficient in `G(x,x) = g log N + O(1)` for unit conductances
/// with local time normalized by the degree.
pub const G_CONST: f64 = 1.0 / (2.0 * std::f64::consts::PI);

/// Degree of every lattice vertex (edges leaving `V` end at `ρ`).
pub const SITE_DEGREE: f64 = 4.0;
