//! Core engine for DDoS detection on a digital-twin replica of an ISP core
//! network.
//!
//! The pipeline, bottom to top: YANG-described sensors feed router twins;
//! snapshots of a twin become 92-dimensional feature vectors; an automated
//! feature-selection stage picks the 10 most useful sensors; an unsupervised
//! labeling ensemble turns unlabeled traffic windows into training data; a
//! small MLP classifies each vector; a per-router detector tracks verdict
//! quality online and retrains itself when its metrics degrade.
//!
//! Everything in this crate is synchronous and deterministic given a seed.
//! The HTTP service and CLI live in sibling crates.

pub mod autofs;
pub mod config;
pub mod data;
pub mod detector;
pub mod labeling;
pub mod matrix;
pub mod mlp;
pub mod prep;
pub mod replay;
pub mod report;
pub mod runner;
pub mod synth;
pub mod twin;
pub mod yang;

mod seed;

pub use data::ClassLabel;
pub use matrix::Matrix;
pub use seed::derive_seed;
