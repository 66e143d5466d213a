//! Design-space exploration of binary coding tool profiles.
//!
//! The crate is split along the stages of a profiling run:
//!
//! - [`profiles`]: tool catalogs and on/off tool profiles
//! - [`bdmetrics`]: PSNR aggregation and Bjontegaard-Delta metrics
//! - [`evaluator`]: turning a profile into operating curves
//! - [`measurement`]: repeated energy measurement with a confidence stopping rule
//! - [`dse`]: greedy search, exhaustive search and profile selection

pub mod bdmetrics;
pub mod dse;
pub mod evaluator;
pub mod measurement;
pub mod profiles;

pub use bdmetrics::{BdError, BdResult, BdSummary, BdValue, InterpolationMethod, RdCurve, RdPoint};
pub use evaluator::{CachedEvaluator, EvalError, Evaluator, Purity, SyntheticLandscape};
pub use profiles::{CodingConfig, ProfileError, ToolCatalog, ToolProfile};
