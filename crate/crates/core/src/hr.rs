//! Windowed spectral heart-rate estimation and amplitude-based outlier
//! rejection.

use serde::{Deserialize, Serialize};

use crate::dsp::{default_nfft, hann_window, magnitude_spectrum};
use crate::error::{Error, Result};
use crate::rppg::PulseSignal;

/// Post-processing band used for heart-rate peak search, 90–240 bpm.
pub const POST_BAND_BPM: (f64, f64) = (90.0, 240.0);
/// Surrogate-label band, 78–240 bpm.
pub const SGT_BAND_BPM: (f64, f64) = (78.0, 240.0);

/// Heart-rate estimates on a regular window grid.
#[derive(Clone, Debug, PartialEq)]
pub struct HrSeries {
    /// Window-center timestamps in seconds.
    pub t_s: Vec<f64>,
    pub bpm: Vec<f64>,
    pub valid: Vec<bool>,
    pub window_s: f64,
    pub stride_s: f64,
}

impl HrSeries {
    pub fn new(t_s: Vec<f64>, bpm: Vec<f64>, valid: Vec<bool>, window_s: f64, stride_s: f64) -> Result<Self> {
        if t_s.len() != bpm.len() || t_s.len() != valid.len() {
            return Err(Error::Dimension(format!(
                "HR columns differ in length: {}/{}/{}",
                t_s.len(),
                bpm.len(),
                valid.len()
            )));
        }
        if t_s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument("HR timestamps must be strictly increasing".into()));
        }
        Ok(Self {
            t_s,
            bpm,
            valid,
            window_s,
            stride_s,
        })
    }

    pub fn len(&self) -> usize {
        self.t_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_s.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Window, hop and search band for [`estimate_hr`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HrConfig {
    pub window_s: f64,
    pub stride_s: f64,
    pub band_bpm: (f64, f64),
}

impl Default for HrConfig {
    fn default() -> Self {
        Self {
            window_s: 10.0,
            stride_s: 1.0,
            band_bpm: POST_BAND_BPM,
        }
    }
}

/// Sample geometry of a sliding-window analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowGrid {
    pub len: usize,
    pub stride: usize,
    pub count: usize,
}

impl WindowGrid {
    /// `floor((n - W) / S) + 1` windows of `W = round(window_s·fps)` samples,
    /// `S = round(stride_s·fps)` apart.
    pub fn new(n: usize, fps: f64, window_s: f64, stride_s: f64) -> Result<Self> {
        if !(window_s > 0.0 && stride_s > 0.0) {
            return Err(Error::Argument(format!(
                "window ({window_s} s) and stride ({stride_s} s) must be positive"
            )));
        }
        let len = (window_s * fps).round() as usize;
        let stride = ((stride_s * fps).round() as usize).max(1);
        if len < 2 {
            return Err(Error::Argument(format!("{window_s} s window spans fewer than 2 samples")));
        }
        if n < len {
            return Err(Error::TooShort(format!(
                "pulse of {n} samples is shorter than one {len}-sample window"
            )));
        }
        Ok(Self {
            len,
            stride,
            count: (n - len) / stride + 1,
        })
    }

    pub fn start(&self, i: usize) -> usize {
        i * self.stride
    }

    /// Center of window `i` in seconds after the first sample.
    pub fn center_s(&self, i: usize, fps: f64) -> f64 {
        (self.start(i) as f64 + self.len as f64 / 2.0) / fps
    }
}

/// Spectral and amplitude features of one analysis window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowFeatures {
    pub peak_hz: f64,
    /// Peak-to-peak amplitude of the mean-removed window.
    pub peak_to_peak: f64,
    /// Energy near the spectral peak relative to the rest of the band, in dB.
    pub snr_db: f64,
}

struct WindowAnalyzer {
    hann: Vec<f64>,
    nfft: usize,
    fps: f64,
    band_hz: (f64, f64),
    /// Half-width of the Hann main lobe in Hz.
    lobe_hz: f64,
}

impl WindowAnalyzer {
    fn new(len: usize, fps: f64, band_bpm: (f64, f64)) -> Result<Self> {
        let nyquist_bpm = fps / 2.0 * 60.0;
        if !(band_bpm.0 > 0.0 && band_bpm.0 < band_bpm.1 && band_bpm.1 <= nyquist_bpm) {
            return Err(Error::Argument(format!(
                "HR band ({}, {}) bpm must lie inside (0, {nyquist_bpm}] bpm",
                band_bpm.0, band_bpm.1
            )));
        }
        Ok(Self {
            hann: hann_window(len)?,
            nfft: default_nfft(len),
            fps,
            band_hz: (band_bpm.0 / 60.0, band_bpm.1 / 60.0),
            lobe_hz: 2.0 * fps / len as f64,
        })
    }

    fn analyze(&self, window: &[f64]) -> Result<WindowFeatures> {
        let mean = window.iter().sum::<f64>() / window.len() as f64;
        let (lo, hi) = window.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v - mean), hi.max(v - mean))
        });
        let tapered: Vec<f64> = window
            .iter()
            .zip(&self.hann)
            .map(|(v, w)| (v - mean) * w)
            .collect();
        let spec = magnitude_spectrum(&tapered, self.fps, self.nfft)?;
        let peak = spec.peak_in_band(self.band_hz.0, self.band_hz.1).ok_or_else(|| {
            Error::Argument(format!(
                "no spectral bins inside {:?} Hz at nfft {}",
                self.band_hz, self.nfft
            ))
        })?;
        let peak_hz = spec.freqs_hz[peak];
        let (mut signal, mut noise) = (0.0, 0.0);
        for i in spec.band_bins(self.band_hz.0, self.band_hz.1) {
            let p = spec.magnitudes[i].powi(2);
            if (spec.freqs_hz[i] - peak_hz).abs() <= self.lobe_hz {
                signal += p;
            } else {
                noise += p;
            }
        }
        let snr_db = if signal == 0.0 {
            f64::NEG_INFINITY
        } else if noise == 0.0 {
            f64::INFINITY
        } else {
            10.0 * (signal / noise).log10()
        };
        Ok(WindowFeatures {
            peak_hz,
            peak_to_peak: hi - lo,
            snr_db,
        })
    }
}

/// Features of every window of `pulse` on the grid defined by `config`.
pub fn window_features(pulse: &PulseSignal, config: &HrConfig) -> Result<(WindowGrid, Vec<WindowFeatures>)> {
    let grid = WindowGrid::new(pulse.len(), pulse.fps, config.window_s, config.stride_s)?;
    let analyzer = WindowAnalyzer::new(grid.len, pulse.fps, config.band_bpm)?;
    let features = (0..grid.count)
        .map(|i| analyzer.analyze(&pulse.samples[grid.start(i)..][..grid.len]))
        .collect::<Result<Vec<_>>>()?;
    Ok((grid, features))
}

/// Sliding-window heart rate: mean removal, Hann taper, zero-padded FFT and
/// the largest in-band magnitude, reported as `60 × frequency`.
pub fn estimate_hr(pulse: &PulseSignal, config: &HrConfig) -> Result<HrSeries> {
    let (grid, features) = window_features(pulse, config)?;
    let t_s = (0..grid.count)
        .map(|i| pulse.t0 + grid.center_s(i, pulse.fps))
        .collect();
    let bpm = features.iter().map(|f| f.peak_hz * 60.0).collect();
    HrSeries::new(t_s, bpm, vec![true; grid.count], config.window_s, config.stride_s)
}

/// Parameters of the amplitude/SNR outlier filter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeFilterParams {
    /// Span of neighboring windows (by center time) used for the robust statistics.
    pub context_s: f64,
    /// Maximum robust z-score of a window's peak-to-peak amplitude.
    pub z_max: f64,
    /// Minimum spectral SNR of the heart-rate peak.
    pub min_snr_db: f64,
    /// Floor on the robust spread, as a fraction of the context median amplitude.
    pub min_rel_spread: f64,
}

impl Default for AmplitudeFilterParams {
    fn default() -> Self {
        Self {
            context_s: 30.0,
            z_max: 3.0,
            min_snr_db: 2.0,
            min_rel_spread: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudeFilterOutcome {
    pub series: HrSeries,
    /// Windows marked invalid by this pass.
    pub rejected: Vec<usize>,
    /// Set when no window survived; `series.bpm` is then left untouched.
    pub all_invalid: bool,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Scale factor making the MAD a consistent estimator of a normal sigma.
const MAD_TO_SIGMA: f64 = 1.4826;

/// Invalidates windows whose peak-to-peak amplitude is an outlier within its
/// rolling context, or whose spectral peak is too weak, then fills their bpm by
/// linear interpolation between the nearest valid windows.
pub fn amplitude_filter(
    hr: &HrSeries,
    pulse: &PulseSignal,
    band_bpm: (f64, f64),
    params: &AmplitudeFilterParams,
) -> Result<AmplitudeFilterOutcome> {
    if !(params.z_max > 0.0) {
        return Err(Error::Argument(format!("z_max must be positive, got {}", params.z_max)));
    }
    if params.context_s < hr.window_s {
        return Err(Error::Argument(format!(
            "context ({} s) must be at least the window length ({} s)",
            params.context_s, hr.window_s
        )));
    }
    let config = HrConfig {
        window_s: hr.window_s,
        stride_s: hr.stride_s,
        band_bpm,
    };
    let (grid, features) = window_features(pulse, &config)?;
    if grid.count != hr.len() {
        return Err(Error::Dimension(format!(
            "HR series has {} windows but the pulse yields {}",
            hr.len(),
            grid.count
        )));
    }

    let amps: Vec<f64> = features.iter().map(|f| f.peak_to_peak).collect();
    let half = params.context_s / 2.0;
    let mut valid = hr.valid.clone();
    let mut rejected = Vec::new();
    for i in 0..hr.len() {
        let ctx: Vec<f64> = (0..hr.len())
            .filter(|&j| (hr.t_s[j] - hr.t_s[i]).abs() <= half + 1e-9)
            .map(|j| amps[j])
            .collect();
        let mut sorted = ctx.clone();
        let med = median(&mut sorted);
        let mut dev: Vec<f64> = ctx.iter().map(|a| (a - med).abs()).collect();
        let spread = (MAD_TO_SIGMA * median(&mut dev)).max(params.min_rel_spread * med.abs());
        let deviation = (amps[i] - med).abs();
        let z = if spread > 0.0 {
            deviation / spread
        } else if deviation == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        let weak = !(features[i].snr_db >= params.min_snr_db);
        if valid[i] && (z > params.z_max || weak) {
            valid[i] = false;
            rejected.push(i);
        }
    }

    let mut series = hr.clone();
    series.valid = valid;
    let all_invalid = series.valid_count() == 0;
    if !all_invalid {
        interpolate_invalid(&mut series);
    }
    Ok(AmplitudeFilterOutcome {
        series,
        rejected,
        all_invalid,
    })
}

/// Replaces bpm of invalid windows by linear interpolation in time between
/// the nearest valid neighbors; leading/trailing runs copy the nearest valid value.
pub fn interpolate_invalid(series: &mut HrSeries) {
    let valid_idx: Vec<usize> = (0..series.len()).filter(|&i| series.valid[i]).collect();
    let (Some(&first), Some(&last)) = (valid_idx.first(), valid_idx.last()) else {
        return;
    };
    for i in 0..series.len() {
        if series.valid[i] {
            continue;
        }
        series.bpm[i] = if i < first {
            series.bpm[first]
        } else if i > last {
            series.bpm[last]
        } else {
            let k = valid_idx.partition_point(|&v| v < i);
            let (a, b) = (valid_idx[k - 1], valid_idx[k]);
            let frac = (series.t_s[i] - series.t_s[a]) / (series.t_s[b] - series.t_s[a]);
            series.bpm[a] + frac * (series.bpm[b] - series.bpm[a])
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(freqs: &[(f64, f64)], fps: f64, secs: f64) -> PulseSignal {
        let n = (fps * secs).round() as usize;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / fps;
                freqs.iter().map(|(f, a)| a * (2.0 * PI * f * t).sin()).sum()
            })
            .collect();
        PulseSignal::new(samples, fps, 0.0).unwrap()
    }

    const STEP_BPM: f64 = 25.0 * 60.0 / 4096.0;

    #[test]
    fn pure_tones() {
        let cfg = HrConfig {
            band_bpm: SGT_BAND_BPM,
            ..HrConfig::default()
        };
        for (f, bpm) in [(2.0, 120.0), (1.3, 78.0)] {
            let hr = estimate_hr(&tone(&[(f, 1.0)], 25.0, 60.0), &cfg).unwrap();
            assert_eq!(hr.len(), 51);
            for v in &hr.bpm {
                assert!((v - bpm).abs() <= STEP_BPM, "{v} vs {bpm}");
            }
        }
    }

    #[test]
    fn dominant_peak_wins() {
        let hr = estimate_hr(&tone(&[(1.5, 1.0), (3.0, 0.5)], 25.0, 30.0), &HrConfig::default()).unwrap();
        for v in &hr.bpm {
            assert!((v - 90.0).abs() <= STEP_BPM, "{v}");
        }
    }

    #[test]
    fn grid_geometry() {
        let g = WindowGrid::new(1500, 25.0, 10.0, 1.0).unwrap();
        assert_eq!((g.len, g.stride, g.count), (250, 25, 51));
        assert_eq!(g.center_s(0, 25.0), 5.0);
        assert_eq!(g.center_s(50, 25.0), 55.0);
        assert_eq!(WindowGrid::new(260, 25.0, 10.0, 0.3).unwrap().count, (260 - 250) / 8 + 1);
        assert!(matches!(WindowGrid::new(249, 25.0, 10.0, 1.0), Err(Error::TooShort(_))));
    }

    #[test]
    fn band_outside_nyquist_rejected() {
        let p = tone(&[(2.0, 1.0)], 25.0, 12.0);
        let cfg = HrConfig {
            band_bpm: (60.0, 900.0),
            ..HrConfig::default()
        };
        assert!(estimate_hr(&p, &cfg).is_err());
    }

    #[test]
    fn clean_signal_passes_filter_untouched() {
        let p = tone(&[(2.0, 1.0)], 25.0, 60.0);
        let cfg = HrConfig::default();
        let hr = estimate_hr(&p, &cfg).unwrap();
        let out = amplitude_filter(&hr, &p, cfg.band_bpm, &AmplitudeFilterParams::default()).unwrap();
        assert!(out.rejected.is_empty());
        assert!(!out.all_invalid);
        assert_eq!(out.series, hr);
    }

    #[test]
    fn interpolation_rules() {
        let mut s = HrSeries::new(
            vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            vec![0.0, 100.0, 0.0, 0.0, 130.0, 0.0],
            vec![false, true, false, false, true, false],
            10.0,
            1.0,
        )
        .unwrap();
        interpolate_invalid(&mut s);
        assert_eq!(s.bpm, vec![100.0, 100.0, 110.0, 120.0, 130.0, 130.0]);
        assert_eq!(s.valid, vec![false, true, false, false, true, false]);
    }

    #[test]
    fn series_validation() {
        assert!(HrSeries::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![true; 2], 10.0, 1.0).is_err());
        assert!(HrSeries::new(vec![0.0], vec![1.0, 1.0], vec![true], 10.0, 1.0).is_err());
    }
}
