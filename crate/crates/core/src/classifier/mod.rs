//! Proposal labeling, co-occurrence probability tables, feature vectors and
//! the linear scorer.

mod features;
mod svm;
mod tables;

pub use features::{featurize, FeatureLayout};
pub use svm::{train_linear, LinearModel, SvmParams};
pub use tables::{build_tables, label_proposals, ProbabilityTables};
