//! Latent linguistic traits from per-user text.
//!
//! The crate turns a corpus of user messages into a user-term matrix, fits a
//! latent factor model over it (principal-axis factor analysis with
//! orthomax / promax rotation, with truncated SVD and LDA as baselines), scores
//! users on the resulting factors, and evaluates those factors for predictive
//! validity and stability.
//!
//! Modules follow the pipeline order:
//!
//! - [`corpus`]: message ingestion, tokenization, user-level filtering
//! - [`utm`]: vocabulary selection, user-term matrix, standardization, residualization
//! - [`factors`]: factor analysis, SVD, LDA, rotations, factor scores
//! - [`align`]: Hungarian assignment and factor matching
//! - [`predict`]: ridge / logistic models, metrics, cross-validated evaluation
//! - [`nmfcluster`]: NMF clustering of user likes into classification targets
//! - [`evalsuite`]: differential language analysis, convergent validity, test-retest, dropout reliability

pub mod align;
pub mod corpus;
pub mod csr;
pub mod error;
pub mod evalsuite;
pub mod factors;
pub mod fixture;
pub mod io;
pub mod linalg;
pub mod nmfcluster;
pub mod pipeline;
pub mod predict;
pub mod utm;

pub use align::{align_scores, hungarian, Assignment};
pub use corpus::{FilterConfig, Message, Tokenizer, UserCorpus, UserRecord};
pub use error::{Error, Result};
pub use factors::{FactorModel, FactorScores, Method, RotationKind, TopicModel};
pub use pipeline::{FactorConfig, FittedPipeline};
pub use predict::{EvalReport, Task};
pub use utm::{ColumnStats, Covariates, StandardizedMatrix, UserTermMatrix, Vocabulary};
