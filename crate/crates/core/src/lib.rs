// SPDX-License-Identifier: MIT OR Apache-2.0

//! Covariance Assisted Screening and Estimation (CASE) for linear models whose Gram
//! matrix is dense but becomes sparse after a short linear filter.
//!
//! The pipeline filters `X'Y`, builds the Graph Of Strong Dependence (GOSD) of the
//! filtered pair, screens small connected subgraphs with patched chi-square tests and
//! cleans the survivors by exact penalized least squares on each component. Alongside
//! it live the rate exponents of the Rare/Weak model, comparison baselines and a seeded
//! Monte Carlo runner.

#![forbid(unsafe_code)]
// `!(x > 0.0)` style checks deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod estimation;
pub mod gosd;
pub mod gram;
pub mod linalg;
pub mod pipeline;
pub mod quad;
pub mod rates;
pub mod screening;
pub mod simlab;
pub mod sparsify;

pub use error::{CaseError, Result};
pub use estimation::{CpPatchMode, LargeComponentPolicy, PeConfig, SelectionResult};
pub use gosd::{build_gosd, enumerate_connected_subgraphs, ExpandedGraph, Gosd};
pub use gram::{gram_changepoint, gram_dense, gram_farima, gram_powerdecay, GramKind, GramModel, LinearFilter};
pub use pipeline::{case_select, CaseConfig, CasePipeline, Observation};
pub use screening::{ps_screen, BranchRule, ScreenConfig, ScreeningState, ThresholdMode};
pub use sparsify::{sparsify, SparsifiedPair};
