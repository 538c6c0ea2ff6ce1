//! Image privacy classification from interpretable privacy features and
//! precomputed deep features.

pub mod data_io;
pub mod feature_model;
pub mod analysis;
pub mod classifiers;
pub mod experiment;
pub mod extractors;
pub mod metrics;
