//! Evaluation protocols: differential language analysis, convergent
//! validity, test-retest stability and dropout reliability.

mod convergent;
mod dla;
mod dropout;
mod retest;

pub use convergent::{convergent_matrix, ConvergentMatrix};
pub use dla::{dla, DlaEntry, DlaReport, FactorDla};
pub use dropout::{dropout_reliability, kept_indices, DropoutConfig, DropoutReport, RunPair};
pub use retest::{test_retest, PeriodCorrelation, PeriodSummary, RetestConfig, RetestReport, RetestRun};

#[cfg(test)]
mod tests;
