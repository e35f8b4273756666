//! Wrist-worn IMU gait analysis pipeline: two-peripheral telemetry ingest,
//! synthetic gait generation, per-session feature extraction, mutual-information
//! feature ranking, and five from-scratch classifiers with a cross-validation
//! and grid-search harness.
//!
//! The crate is organized along the pipeline stages:
//!
//! - [`telemetry`] — wire protocol, frame codec, session assembly, session CSV
//! - [`gaitsim`] — seeded synthetic two-wrist gait sessions and cohorts
//! - [`features`] — filtering, step detection, and the gait feature catalog
//! - [`dataset`] — labeled feature tables, standardization, stratified splits
//! - [`select`] — mutual-information feature ranking
//! - [`learn`] — KNN, logistic regression, linear SVM, random forest, boosted trees
//! - [`eval`] — stratified k-fold CV, grid search, holdout evaluation

pub mod dataset;
pub mod eval;
pub mod features;
pub mod gaitsim;
pub mod learn;
pub mod select;
pub mod telemetry;
