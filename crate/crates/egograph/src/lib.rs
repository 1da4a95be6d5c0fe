//! Activity classification for body-worn (first-person) video.
//!
//! The camera wearer's movement leaves a global signature in dense optical
//! flow: walking pushes a looming radial field, turning sweeps flow
//! sideways, standing still leaves noise. This crate classifies fixed-length
//! video segments by that signature, end to end:
//!
//! 1. [`flow`] — dense optical flow between consecutive frames (a classic
//!    global-smoothness estimator), `.flo` I/O, PGM frame loading, and
//!    synthetic flow generators for testing.
//! 2. [`descriptor`] — each segment becomes a histogram: the frame is cut
//!    into fixed-size cells, and every flow vector votes into one of 8
//!    direction octants per cell, accumulated over the segment's fields.
//! 3. [`reduction`] — histograms are compressed by non-negative matrix
//!    factorization (multiplicative updates); new data can be projected
//!    onto a fixed basis by non-negative least squares; coefficient tracks
//!    are smoothed by a centered moving average that restarts at recording
//!    boundaries.
//! 4. [`spectrum`] — segments form a graph with Gaussian affinities
//!    (locally scaled or global bandwidth); the leading eigenpairs of the
//!    symmetric normalized Laplacian come from a dense solve or a landmark
//!    (low-rank completion) approximation that never forms the full matrix.
//! 5. [`mbo`] — a small labeled subset anchors threshold dynamics
//!    (diffuse in the spectral basis, then snap rows to indicators) that
//!    labels every segment; long recordings can be classified in batches.
//! 6. [`eval`] — confusion matrices, precision/recall, and plot images.
//! 7. [`pipeline`] — a JSON-configured, resumable, deterministic run tying
//!    the stages together behind a directory lock; [`formats`] defines the
//!    intermediate file formats.
//!
//! Every random choice is seeded, so identical inputs and parameters
//! reproduce identical outputs byte for byte.

pub mod descriptor;
pub mod error;
pub mod eval;
pub mod flow;
pub mod formats;
pub mod mbo;
pub mod pipeline;
pub mod reduction;
pub mod spectrum;

pub use error::{Error, Result};
