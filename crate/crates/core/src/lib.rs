//! Navigational context recognition from GNSS measurements.
//!
//! This crate turns raw NMEA-0183 receiver logs into a per-epoch environment
//! classification over seven context classes (open sky, tree-lined avenue,
//! semi-outdoor, urban canyon, viaduct-down, shallow indoor, deep indoor).
//! The pipeline is:
//!
//! 1. [`nmea`] — parse sentence streams, validate checksums, and assemble
//!    satellite observations into 5 Hz epochs;
//! 2. [`features`] — per-epoch C/N0 statistics plus the C/N0-weighted
//!    azimuth distribution factor;
//! 3. [`dataset`] — labeled recordings, normalization, sliding windows, and
//!    leakage-free set-wise splits;
//! 4. [`gru`] — a from-scratch stacked GRU sequence classifier (forward,
//!    BPTT, Adam, training loop, JSON model serialization);
//! 5. [`svm`] — a linear one-vs-rest SVM plus majority temporal filter
//!    ("SVM-TF") comparison baseline;
//! 6. [`eval`] — confusion matrices, ablation runs, and transition-delay
//!    measurement;
//! 7. [`synth`] — synthetic epoch and transition-trace generation used both
//!    as test oracle data and as a stand-in dataset.
//!
//! Batch kernels (feature extraction, batch gradients, prediction) run on
//! rayon when the default `parallel` feature is enabled and fall back to
//! sequential loops without it. Both paths reduce in a fixed chunk order, so
//! results are bit-identical across thread counts and across the two builds.

pub mod batch;
pub mod class;
pub mod dataset;
pub mod eval;
pub mod features;
pub mod gru;
pub mod linalg;
pub mod nmea;
pub mod svm;
pub mod synth;

pub use class::{ContextClass, CLASS_COUNT};
pub use features::{FeatureMode, FeatureVector};
pub use nmea::{Epoch, SatelliteObservation};
