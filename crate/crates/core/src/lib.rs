//! Descendants of tuples of two-variable means, spectral uniqueness
//! certificates for their fixed points, and M-convexity checks of
//! extended-real functions through second-order divided differences.

// `!(a < b)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convexity;
pub mod descend;
pub mod error;
pub mod means;
pub mod rational;
pub mod spectral;
pub mod xreal;

pub use convexity::{ConvexityReport, ExtendedFunction, RationalClass, RationalParamSet, Sampler, Verdict};
pub use descend::{ContractionCertificate, DescendantProblem, FixedPointResult, SolveOptions};
pub use error::{Error, Result};
pub use means::{Interval, Mean, MonotoneFn};
pub use rational::ExactRational;
pub use spectral::{PerronPair, SpectralReport, TwoDiagonalMatrix};
pub use xreal::{Extended, XRational, XReal};
