//! Honest random forests with generalized fiducial uncertainty quantification.
//!
//! The workflow is: train an [`HonestForest`], weight its trees and draw a
//! [`FiducialEnsemble`], then query point estimates and intervals for the
//! regression function, a future response, or the noise scale.

pub mod archive;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod fiducial;
pub mod ingest;
pub mod report;
pub mod rng;
pub mod tree;

pub use archive::{load_model, save_model, ModelArchive};
pub use dataset::{Dataset, DatasetFingerprint};
pub use error::{Error, ErrorClass, Result};
pub use fiducial::{
    fit_ensemble, generate_ensemble, log_weight, normalize_weights, percentile, prediction_key,
    FiducialDraw, FiducialEnsemble, FiducialWeights, Interval, Prediction,
};
pub use ingest::{
    read_csv, read_feature_csv, train_test_split, ColumnRef, ColumnSpec, CsvData, FeatureTable,
};
pub use report::{write_report, ReportDocument, ReportFormat};
pub use rng::{make_stream, RandomStream, StreamKey};
pub use tree::{
    best_split, train_forest, ForestParams, HonestForest, HonestTree, Split, SseMode, TreeStructure,
};
