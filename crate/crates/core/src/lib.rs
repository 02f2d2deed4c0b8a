//! Remote photoplethysmography (rPPG) toolkit.
//!
//! The pipeline runs from raw camera frames to heart-rate agreement metrics:
//!
//! - [`frames`]: demosaic, downsample, gray-world white balance, ROI crop, frame directories
//! - [`traces`]: spatial ROI averaging and temporal normalization
//! - [`rppg`]: CHROM / POS pulse extraction and surrogate label generation
//! - [`dsp`]: Butterworth band-pass design, filtering, Hann window, spectra
//! - [`hr`]: windowed spectral heart-rate estimation and amplitude-based outlier rejection
//! - [`eval`]: MAE / RMSE / Pearson, Bland-Altman, ROI-increment sweeps
//! - [`synth`]: synthetic pulsatile video with exactly known heart rate
//! - [`clips`]: fixed-length training clip export with a seeded train/validation split
//! - [`io`]: CSV / JSON file contracts shared with external tools

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` rejects NaN too

pub mod clips;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod frames;
pub mod hr;
pub mod io;
pub mod rppg;
pub mod synth;
pub mod traces;

pub use error::{Error, Result};
