//! FDX-controlling step-down procedures for discrete and heterogeneous
//! p-values.
//!
//! A procedure is described by a [`ProcedureSpec`], turned into its
//! transformation functions by [`make_transform`], and applied with
//! [`reject`] (adjusted p-values) or [`critical_values`] plus
//! [`stepdown_explicit`].

pub mod distributions;
pub mod error;
pub mod fisher;
pub mod simharness;
pub mod stepdown;
pub mod transforms;
pub mod weighting;

pub use distributions::{CdfFamily, Domain, NullCdf, StepCdf};
pub use error::{FdxError, Result};
pub use fisher::{fisher_pvalue, fisher_support_cdf, FisherMargins, FisherSupport, FisherTable, Sided};
pub use stepdown::{
    adjusted_pvalues, critical_values, reject, reject_early_exit, stepdown_explicit, CriticalValues,
    RejectionResult,
};
pub use transforms::{make_transform, Alpha, ProcedureKind, ProcedureSpec, TransformFamily};
pub use weighting::WeightProfile;
