//! Per-frame ROI averaging and temporal normalization of RGB traces.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frames::{FrameSequence, Roi};

/// Spatially averaged R, G and B values, one sample per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbTrace {
    pub r: Vec<f64>,
    pub g: Vec<f64>,
    pub b: Vec<f64>,
    pub fps: f64,
    /// Time of the first sample in seconds.
    pub t0: f64,
}

impl RgbTrace {
    pub fn new(r: Vec<f64>, g: Vec<f64>, b: Vec<f64>, fps: f64, t0: f64) -> Result<Self> {
        if r.is_empty() || r.len() != g.len() || r.len() != b.len() {
            return Err(Error::Dimension(format!(
                "trace channels must be non-empty and equal length, got {}/{}/{}",
                r.len(),
                g.len(),
                b.len()
            )));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::Argument(format!("fps must be positive, got {fps}")));
        }
        Ok(Self { r, g, b, fps, t0 })
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn channels(&self) -> [&[f64]; 3] {
        [&self.r, &self.g, &self.b]
    }

    pub fn time_at(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.fps
    }

    /// Sub-trace covering samples `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> RgbTrace {
        RgbTrace {
            r: self.r[start..end].to_vec(),
            g: self.g[start..end].to_vec(),
            b: self.b[start..end].to_vec(),
            fps: self.fps,
            t0: self.time_at(start),
        }
    }
}

/// Channels divided by their window mean, minus one.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedTrace {
    pub rn: Vec<f64>,
    pub gn: Vec<f64>,
    pub bn: Vec<f64>,
    pub fps: f64,
}

/// Mean of each channel over `roi`, per frame, without quantization.
pub fn spatial_average(seq: &FrameSequence, roi: Roi) -> Result<RgbTrace> {
    let (w, h) = seq
        .dims()
        .ok_or_else(|| Error::InsufficientData("empty frame sequence".into()))?;
    roi.check_within(w, h)?;
    let area = roi.area() as f64;
    let means: Vec<[f64; 3]> = seq
        .frames
        .par_iter()
        .map(|frame| {
            frame.planes.each_ref().map(|plane| {
                let sum: u64 = (roi.y..roi.y + roi.h)
                    .map(|y| {
                        plane[y * frame.width + roi.x..][..roi.w]
                            .iter()
                            .map(|&v| v as u64)
                            .sum::<u64>()
                    })
                    .sum();
                sum as f64 / area
            })
        })
        .collect();
    let [r, g, b] = [0, 1, 2].map(|c| means.iter().map(|m| m[c]).collect::<Vec<_>>());
    RgbTrace::new(r, g, b, seq.fps, 0.0)
}

/// Returns `x / mean(x) - 1`. Fails when the mean is zero.
pub fn normalize_window(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::InsufficientData("empty normalization window".into()));
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    if mean == 0.0 || !mean.is_finite() {
        return Err(Error::Degenerate(
            "window mean is zero; temporal normalization undefined".into(),
        ));
    }
    Ok(x.iter().map(|v| v / mean - 1.0).collect())
}

/// Divides every channel by its mean over consecutive windows of
/// `window_len` samples. A trailing partial window is normalized on its own.
pub fn temporal_normalize(trace: &RgbTrace, window_len: usize) -> Result<NormalizedTrace> {
    if window_len < 2 {
        return Err(Error::Argument(format!(
            "normalization window must span at least 2 samples, got {window_len}"
        )));
    }
    let norm = |x: &[f64]| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(x.len());
        for chunk in x.chunks(window_len) {
            out.extend(normalize_window(chunk)?);
        }
        Ok(out)
    };
    Ok(NormalizedTrace {
        rn: norm(&trace.r)?,
        gn: norm(&trace.g)?,
        bn: norm(&trace.b)?,
        fps: trace.fps,
    })
}
