//! Built-in cases and the `run`/`study` pipelines behind the command line.

pub mod cases;
pub mod report;
pub mod run;
pub mod settings;
pub mod study;

pub use cases::{cases, find_case, CaseDefinition, Pipeline};
pub use run::{configure_threads, run_case, RunSummary};
pub use settings::{ResolvedCase, RunSettings};
pub use study::{convergence_study, StudyMode, StudyOutcome};
