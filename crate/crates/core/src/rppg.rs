//! Chrominance-based pulse extraction (CHROM, POS) and surrogate label
//! generation.
//!
//! Both methods slide a short window over the RGB trace, normalize each
//! channel by its window mean, project onto a fixed chrominance plane, tune the
//! projection per window with a standard-deviation ratio, and overlap-add the
//! window outputs back into one signal of the original length.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::{butterworth_bandpass, filter_zero_phase, hann_window};
use crate::error::{Error, Result};
use crate::frames::{FrameSequence, Roi};
use crate::traces::{normalize_window, spatial_average, RgbTrace};

/// Default surrogate-label band, 78–240 bpm.
pub const SGT_BAND_HZ: (f64, f64) = (1.3, 4.0);
/// Butterworth prototype order for surrogate-label filtering.
pub const SGT_FILTER_ORDER: usize = 4;

/// Below this standard deviation a projected window is treated as flat.
const FLAT_SIGMA: f64 = 1e-12;

/// Single-channel pulse waveform sampled at the video frame rate.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseSignal {
    pub samples: Vec<f64>,
    pub fps: f64,
    pub t0: f64,
}

impl PulseSignal {
    pub fn new(samples: Vec<f64>, fps: f64, t0: f64) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::Argument(format!("fps must be positive, got {fps}")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("pulse sample {i} is not finite")));
        }
        Ok(Self { samples, fps, t0 })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_at(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.fps
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }
}

pub(crate) fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn std_dev(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    #[default]
    Chrom,
    Pos,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Chrom => "CHROM",
            Method::Pos => "POS",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "chrom" => Ok(Method::Chrom),
            "pos" => Ok(Method::Pos),
            other => Err(Error::Argument(format!("unknown method {other:?}, expected chrom or pos"))),
        }
    }
}

/// Sliding-window settings shared by CHROM and POS.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChromParams {
    pub window_s: f64,
    /// Fraction of a window shared with its successor.
    pub overlap: f64,
    /// Band applied to the CHROM projections inside each window.
    pub band_hz: (f64, f64),
    /// Prototype order of the in-window CHROM band-pass.
    pub filter_order: usize,
}

impl Default for ChromParams {
    fn default() -> Self {
        Self {
            window_s: 1.6,
            overlap: 0.5,
            band_hz: SGT_BAND_HZ,
            filter_order: 3,
        }
    }
}

impl ChromParams {
    fn validate(&self) -> Result<()> {
        if !(self.window_s > 0.0 && self.window_s.is_finite()) {
            return Err(Error::Argument(format!("window_s must be positive, got {}", self.window_s)));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::Argument(format!("overlap must lie in [0, 1), got {}", self.overlap)));
        }
        Ok(())
    }

    /// Window starts covering `n` samples: a regular hop plus a final window
    /// flush with the end of the trace.
    fn layout(&self, n: usize, fps: f64) -> Result<(usize, Vec<usize>)> {
        self.validate()?;
        let len = (self.window_s * fps).round() as usize;
        if len < 2 {
            return Err(Error::Argument(format!(
                "window of {} s at {fps} fps spans fewer than 2 samples",
                self.window_s
            )));
        }
        if n < len {
            return Err(Error::TooShort(format!(
                "trace of {n} samples is shorter than one {len}-sample window"
            )));
        }
        let hop = ((len as f64 * (1.0 - self.overlap)).round() as usize).max(1);
        let mut starts: Vec<usize> = (0..=n - len).step_by(hop).collect();
        if starts.last() != Some(&(n - len)) {
            starts.push(n - len);
        }
        Ok((len, starts))
    }
}

/// Per-window bookkeeping from an extraction run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExtractionDiagnostics {
    /// Start sample of every processed window.
    pub window_starts: Vec<usize>,
    /// Indices into `window_starts` whose projection had zero spread.
    pub degenerate_windows: Vec<usize>,
}

fn normalized_window(trace: &RgbTrace, start: usize, len: usize) -> Result<[Vec<f64>; 3]> {
    let [r, g, b] = trace.channels();
    Ok([
        normalize_window(&r[start..start + len])?,
        normalize_window(&g[start..start + len])?,
        normalize_window(&b[start..start + len])?,
    ])
}

/// CHROM extraction with per-window diagnostics.
pub fn chrom_with_diagnostics(
    trace: &RgbTrace,
    params: &ChromParams,
) -> Result<(PulseSignal, ExtractionDiagnostics)> {
    let n = trace.len();
    let (len, starts) = params.layout(n, trace.fps)?;
    let band = butterworth_bandpass(params.filter_order, params.band_hz.0, params.band_hz.1, trace.fps)?;
    let hann = hann_window(len)?;

    let mut out = vec![0.0; n];
    let mut diag = ExtractionDiagnostics {
        window_starts: starts.clone(),
        ..Default::default()
    };
    for (wi, &start) in starts.iter().enumerate() {
        let [rn, gn, bn] = normalized_window(trace, start, len)?;
        let x: Vec<f64> = rn.iter().zip(&gn).map(|(r, g)| 3.0 * r - 2.0 * g).collect();
        let y: Vec<f64> = rn
            .iter()
            .zip(&gn)
            .zip(&bn)
            .map(|((r, g), b)| 1.5 * r + g - 1.5 * b)
            .collect();
        let xf = filter_zero_phase(&x, &band)?;
        let yf = filter_zero_phase(&y, &band)?;
        let sy = std_dev(&yf);
        let alpha = if sy <= FLAT_SIGMA {
            diag.degenerate_windows.push(wi);
            0.0
        } else {
            std_dev(&xf) / sy
        };
        for (k, (xv, yv)) in xf.iter().zip(&yf).enumerate() {
            out[start + k] += (xv - alpha * yv) * hann[k];
        }
    }
    Ok((PulseSignal::new(out, trace.fps, trace.t0)?, diag))
}

/// CHROM: `S = X_f - α Y_f` with `X = 3R - 2G`, `Y = 1.5R + G - 1.5B` on
/// window-normalized channels and `α = σ(X_f) / σ(Y_f)`.
pub fn chrom(trace: &RgbTrace, params: &ChromParams) -> Result<PulseSignal> {
    chrom_with_diagnostics(trace, params).map(|(p, _)| p)
}

/// POS extraction with per-window diagnostics.
pub fn pos_with_diagnostics(
    trace: &RgbTrace,
    params: &ChromParams,
) -> Result<(PulseSignal, ExtractionDiagnostics)> {
    let n = trace.len();
    let (len, starts) = params.layout(n, trace.fps)?;
    let mut out = vec![0.0; n];
    let mut diag = ExtractionDiagnostics {
        window_starts: starts.clone(),
        ..Default::default()
    };
    for (wi, &start) in starts.iter().enumerate() {
        let [rn, gn, bn] = normalized_window(trace, start, len)?;
        let s1: Vec<f64> = gn.iter().zip(&bn).map(|(g, b)| g - b).collect();
        let s2: Vec<f64> = rn
            .iter()
            .zip(&gn)
            .zip(&bn)
            .map(|((r, g), b)| g + b - 2.0 * r)
            .collect();
        let sd2 = std_dev(&s2);
        let ratio = if sd2 <= FLAT_SIGMA {
            diag.degenerate_windows.push(wi);
            0.0
        } else {
            std_dev(&s1) / sd2
        };
        let h: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| a + ratio * b).collect();
        let mean = h.iter().sum::<f64>() / len as f64;
        for (k, v) in h.iter().enumerate() {
            out[start + k] += v - mean;
        }
    }
    Ok((PulseSignal::new(out, trace.fps, trace.t0)?, diag))
}

/// POS: `h = S1 + (σ(S1) / σ(S2)) S2` with `S1 = G - B`, `S2 = G + B - 2R`.
pub fn pos(trace: &RgbTrace, params: &ChromParams) -> Result<PulseSignal> {
    pos_with_diagnostics(trace, params).map(|(p, _)| p)
}

pub fn extract(trace: &RgbTrace, method: Method, params: &ChromParams) -> Result<PulseSignal> {
    match method {
        Method::Chrom => chrom(trace, params),
        Method::Pos => pos(trace, params),
    }
}

/// Surrogate ground-truth pulse labels for one ROI of one recording.
#[derive(Clone, Debug, PartialEq)]
pub struct SgtLabels {
    pub pulse: PulseSignal,
    pub method: Method,
    pub band_hz: (f64, f64),
    pub source_roi: Roi,
    pub source_id: String,
}

/// Checks that `band` lies strictly inside `(0, fps / 2)`.
pub fn check_band(band: (f64, f64), fps: f64) -> Result<()> {
    if !(band.0 > 0.0 && band.0 < band.1 && band.1 < fps / 2.0) {
        return Err(Error::Argument(format!(
            "band ({}, {}) Hz must satisfy 0 < low < high < Nyquist ({} Hz)",
            band.0,
            band.1,
            fps / 2.0
        )));
    }
    Ok(())
}

/// Trace → projection → zero-phase band-pass, for an already averaged trace.
pub fn sgt_from_trace(trace: &RgbTrace, method: Method, band: (f64, f64)) -> Result<PulseSignal> {
    check_band(band, trace.fps)?;
    let params = ChromParams {
        band_hz: band,
        ..ChromParams::default()
    };
    let raw = extract(trace, method, &params)?;
    let filter = butterworth_bandpass(SGT_FILTER_ORDER, band.0, band.1, trace.fps)?;
    let samples = filter_zero_phase(&raw.samples, &filter)?;
    PulseSignal::new(samples, raw.fps, raw.t0)
}

/// Generates surrogate labels: ROI average, CHROM or POS projection, then a
/// 4th-order zero-phase Butterworth band-pass. One label per frame.
pub fn generate_sgt(
    seq: &FrameSequence,
    roi: Roi,
    method: Method,
    band: (f64, f64),
) -> Result<SgtLabels> {
    check_band(band, seq.fps)?;
    let trace = spatial_average(seq, roi)?;
    let pulse = sgt_from_trace(&trace, method, band)?;
    Ok(SgtLabels {
        pulse,
        method,
        band_hz: band,
        source_roi: roi,
        source_id: seq.source_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn trace_from(f: impl Fn(f64) -> [f64; 3], fps: f64, n: usize) -> RgbTrace {
        let samples: Vec<[f64; 3]> = (0..n).map(|i| f(i as f64 / fps)).collect();
        RgbTrace::new(
            samples.iter().map(|s| s[0]).collect(),
            samples.iter().map(|s| s[1]).collect(),
            samples.iter().map(|s| s[2]).collect(),
            fps,
            0.0,
        )
        .unwrap()
    }

    fn flicker(t: f64) -> f64 {
        1.0 + 0.1 * (2.0 * PI * 0.5 * t).sin() + 0.05 * (2.0 * PI * 2.2 * t).sin()
    }

    #[test]
    fn common_mode_cancels() {
        let tr = trace_from(|t| [120.0 * flicker(t); 3], 25.0, 500);
        let input_rms = rms(&tr.r);
        for method in [Method::Chrom, Method::Pos] {
            let out = extract(&tr, method, &ChromParams::default()).unwrap();
            assert_eq!(out.len(), 500);
            assert!(out.rms() <= 1e-6 * input_rms, "{method}: {}", out.rms());
        }
    }

    #[test]
    fn constant_trace_gives_zero_pulse_with_flags() {
        let tr = trace_from(|_| [150.0, 100.0, 80.0], 25.0, 200);
        let (p, d) = chrom_with_diagnostics(&tr, &ChromParams::default()).unwrap();
        assert!(p.samples.iter().all(|&v| v == 0.0));
        assert_eq!(d.degenerate_windows.len(), d.window_starts.len());
        let (p, d) = pos_with_diagnostics(&tr, &ChromParams::default()).unwrap();
        assert!(p.samples.iter().all(|&v| v == 0.0));
        assert_eq!(d.degenerate_windows.len(), d.window_starts.len());
    }

    #[test]
    fn window_layout_reaches_end() {
        let p = ChromParams::default();
        let (len, starts) = p.layout(101, 25.0).unwrap();
        assert_eq!(len, 40);
        assert_eq!(starts, vec![0, 20, 40, 60, 61]);
        assert!(matches!(p.layout(39, 25.0), Err(Error::TooShort(_))));
        let bad = ChromParams { overlap: 1.0, ..p };
        assert!(bad.layout(100, 25.0).is_err());
    }

    #[test]
    fn zero_mean_channel_is_an_error() {
        let tr = trace_from(|_| [150.0, 0.0, 80.0], 25.0, 100);
        assert!(matches!(chrom(&tr, &ChromParams::default()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn channel_gain_invariance() {
        let tr = trace_from(
            |t| {
                let p = (2.0 * PI * 1.7 * t).sin();
                [150.0 + 0.8 * p, 100.0 + 1.5 * p, 80.0 + 0.6 * p]
            },
            25.0,
            400,
        );
        for method in [Method::Chrom, Method::Pos] {
            let base = extract(&tr, method, &ChromParams::default()).unwrap();
            let mut scaled = tr.clone();
            scaled.g.iter_mut().for_each(|v| *v *= 1.37);
            let out = extract(&scaled, method, &ChromParams::default()).unwrap();
            let scale = base.rms();
            for (a, b) in base.samples.iter().zip(&out.samples) {
                assert!((a - b).abs() <= 1e-6 * scale, "{method}");
            }
        }
    }

    #[test]
    fn sgt_band_checks() {
        let tr = trace_from(|_| [1.0, 2.0, 3.0], 25.0, 100);
        assert!(check_band((1.3, 4.0), 25.0).is_ok());
        assert!(matches!(check_band((1.3, 15.0), 25.0), Err(Error::Argument(_))));
        assert!(sgt_from_trace(&tr, Method::Chrom, (4.0, 1.3)).is_err());
    }

    #[test]
    fn method_names() {
        assert_eq!("CHROM".parse::<Method>().unwrap(), Method::Chrom);
        assert_eq!("pos".parse::<Method>().unwrap(), Method::Pos);
        assert_eq!(Method::Pos.to_string(), "POS");
        assert!("ica".parse::<Method>().is_err());
    }
}
