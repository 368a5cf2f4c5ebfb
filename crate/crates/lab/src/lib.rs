//! Experiment harness for the decaying Anderson model: JSON specs, a
//! thread-pool executor, run records and CSV/JSON export.
//!
//! Per-sample seeds are `sample_seed(root_seed, index)` (SplitMix64 of the
//! pair, see `anderson_core::sampling`), so output never depends on the
//! worker count.

pub mod error;
pub mod exec;
pub mod export;
pub mod record;
pub mod run;
pub mod spec;

pub use error::{LabError, Result};
pub use exec::Pool;
pub use export::Format;
pub use record::RunRecord;
pub use run::run;
pub use spec::{ExperimentSpec, Kind};
