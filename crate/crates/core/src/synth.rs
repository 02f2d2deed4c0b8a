//! Synthetic pulsatile video with exactly known heart rate.
//!
//! A rectangular skin patch is modulated per channel by `sin(φ(t))`, where
//! `φ` integrates a constant or linearly chirped pulse frequency. Global
//! multiplicative flicker, whole-pixel jitter of the patch and Gaussian sensor
//! noise can be layered on top. Noise for frame `k` comes from stream `k` of a
//! ChaCha generator seeded with the config seed, so frames are generated in
//! parallel and the output is bit-identical for a given seed.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{FrameSequence, RgbFrame, Roi};
use crate::hr::{HrSeries, WindowGrid};
use crate::rppg::PulseSignal;
use crate::traces::RgbTrace;

/// Jitter oscillation frequency in Hz.
pub const JITTER_HZ: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseRate {
    Constant(f64),
    /// Linear sweep from `start` to `end` bpm over the whole duration.
    Chirp { start: f64, end: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub duration_s: f64,
    pub skin_region: Roi,
    pub base_rgb: [u8; 3],
    pub background_rgb: [u8; 3],
    pub pulse_bpm: PulseRate,
    /// Modulation amplitude per channel, in intensity levels.
    pub pulse_amp_rgb: [f64; 3],
    pub noise_sigma: f64,
    /// `(frequency_hz, relative_amplitude)` of global flicker.
    pub flicker: Option<(f64, f64)>,
    /// Maximum translation of the skin patch in pixels.
    pub jitter_px: Option<usize>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            fps: 25.0,
            duration_s: 60.0,
            skin_region: Roi::new(16, 16, 32, 32),
            base_rgb: [150, 100, 80],
            background_rgb: [90, 90, 90],
            pulse_bpm: PulseRate::Constant(120.0),
            pulse_amp_rgb: [0.8, 1.5, 0.6],
            noise_sigma: 2.0,
            flicker: None,
            jitter_px: None,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.fps).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if !(self.duration_s > 0.0) || self.frame_count() == 0 {
            return bad(format!("duration {} s yields no frames", self.duration_s));
        }
        let nyquist_bpm = self.fps / 2.0 * 60.0;
        let rates = match self.pulse_bpm {
            PulseRate::Constant(b) => vec![b],
            PulseRate::Chirp { start, end } => vec![start, end],
        };
        if rates.iter().any(|&b| !(b > 0.0 && b < nyquist_bpm)) {
            return bad(format!("pulse rates {rates:?} bpm must lie in (0, {nyquist_bpm})"));
        }
        if self.pulse_amp_rgb.iter().any(|&a| !(a >= 0.0)) || !(self.noise_sigma >= 0.0) {
            return bad("amplitudes and noise sigma must be non-negative".into());
        }
        if let Some((f, a)) = self.flicker {
            if !(f > 0.0 && f < self.fps / 2.0 && a >= 0.0) {
                return bad(format!("flicker ({f} Hz, {a}) is invalid"));
            }
        }
        let j = self.jitter_px.unwrap_or(0);
        let r = self.skin_region;
        if r.w == 0 || r.h == 0 || r.x < j || r.y < j || r.x + r.w + j > self.width || r.y + r.h + j > self.height {
            return bad(format!(
                "skin region {r} with jitter {j} px does not fit a {}x{} frame",
                self.width, self.height
            ));
        }
        Ok(())
    }

    /// Instantaneous pulse frequency in Hz at time `t`.
    pub fn pulse_hz(&self, t: f64) -> f64 {
        match self.pulse_bpm {
            PulseRate::Constant(b) => b / 60.0,
            PulseRate::Chirp { start, end } => {
                (start + (end - start) * t / self.duration_s) / 60.0
            }
        }
    }

    /// Pulse phase `φ(t) = 2π ∫₀ᵗ f(τ) dτ`.
    pub fn phase(&self, t: f64) -> f64 {
        match self.pulse_bpm {
            PulseRate::Constant(b) => 2.0 * PI * b / 60.0 * t,
            PulseRate::Chirp { start, end } => {
                let (f0, f1) = (start / 60.0, end / 60.0);
                2.0 * PI * (f0 * t + (f1 - f0) * t * t / (2.0 * self.duration_s))
            }
        }
    }

    /// Mean pulse rate over `[a, b]` seconds, in bpm.
    pub fn mean_bpm(&self, a: f64, b: f64) -> f64 {
        match self.pulse_bpm {
            PulseRate::Constant(bpm) => bpm,
            PulseRate::Chirp { start, end } => {
                start + (end - start) * (a + b) / (2.0 * self.duration_s)
            }
        }
    }

    pub fn flicker_gain(&self, t: f64) -> f64 {
        match self.flicker {
            Some((f, a)) => 1.0 + a * (2.0 * PI * f * t).sin(),
            None => 1.0,
        }
    }

    /// Skin patch placement at time `t`.
    pub fn skin_at(&self, t: f64) -> Roi {
        let mut r = self.skin_region;
        if let Some(j) = self.jitter_px.filter(|&j| j > 0) {
            let j = j as f64;
            let dx = (j * (2.0 * PI * JITTER_HZ * t).sin()).round() as isize;
            let dy = (j * (2.0 * PI * JITTER_HZ * t).cos()).round() as isize;
            r.x = (r.x as isize + dx) as usize;
            r.y = (r.y as isize + dy) as usize;
        }
        r
    }

    fn render(&self, k: usize) -> RgbFrame {
        let t = k as f64 / self.fps;
        let pulse = self.phase(t).sin();
        let gain = self.flicker_gain(t);
        let skin = self.skin_at(t);
        let skin_val: [f64; 3] =
            std::array::from_fn(|c| (self.base_rgb[c] as f64 + self.pulse_amp_rgb[c] * pulse) * gain);
        let bg_val: [f64; 3] = self.background_rgb.map(|v| v as f64 * gain);

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(k as u64);
        let noise = (self.noise_sigma > 0.0)
            .then(|| Normal::new(0.0, self.noise_sigma).expect("sigma validated"));

        let n = self.width * self.height;
        let mut planes: [Vec<u8>; 3] = std::array::from_fn(|_| Vec::with_capacity(n));
        for y in 0..self.height {
            let in_rows = y >= skin.y && y < skin.y + skin.h;
            for x in 0..self.width {
                let inside = in_rows && x >= skin.x && x < skin.x + skin.w;
                let v = if inside { &skin_val } else { &bg_val };
                for (c, plane) in planes.iter_mut().enumerate() {
                    let e = noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
                    plane.push((v[c] + e).round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        RgbFrame {
            width: self.width,
            height: self.height,
            planes,
        }
    }

    /// Noise-free, unquantized ROI average the generator would produce.
    pub fn ideal_trace(&self, roi: Roi) -> Result<RgbTrace> {
        self.validate()?;
        roi.check_within(self.width, self.height)?;
        let area = roi.area() as f64;
        let (mut r, mut g, mut b) = (Vec::new(), Vec::new(), Vec::new());
        for k in 0..self.frame_count() {
            let t = k as f64 / self.fps;
            let skin = self.skin_at(t);
            let ox = (roi.x + roi.w).min(skin.x + skin.w).saturating_sub(roi.x.max(skin.x));
            let oy = (roi.y + roi.h).min(skin.y + skin.h).saturating_sub(roi.y.max(skin.y));
            let frac = (ox * oy) as f64 / area;
            let pulse = self.phase(t).sin();
            let gain = self.flicker_gain(t);
            let ch = |c: usize| {
                let skin_v = self.base_rgb[c] as f64 + self.pulse_amp_rgb[c] * pulse;
                (frac * skin_v + (1.0 - frac) * self.background_rgb[c] as f64) * gain
            };
            r.push(ch(0));
            g.push(ch(1));
            b.push(ch(2));
        }
        RgbTrace::new(r, g, b, self.fps, 0.0)
    }
}

/// Ground truth that accompanies a generated sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthTruth {
    /// Injected modulation `sin(φ(t))` at each frame time.
    pub pulse: PulseSignal,
    pub hr: HrSeries,
}

/// Window-mean heart rate on the same window grid [`crate::hr::estimate_hr`] uses.
pub fn truth_hr(config: &SynthConfig, window_s: f64, stride_s: f64) -> Result<HrSeries> {
    config.validate()?;
    let grid = WindowGrid::new(config.frame_count(), config.fps, window_s, stride_s)?;
    let fps = config.fps;
    let (t_s, bpm) = (0..grid.count)
        .map(|i| {
            let a = grid.start(i) as f64 / fps;
            let b = (grid.start(i) + grid.len) as f64 / fps;
            (grid.center_s(i, fps), config.mean_bpm(a, b))
        })
        .unzip();
    HrSeries::new(t_s, bpm, vec![true; grid.count], window_s, stride_s)
}

/// Renders the sequence and its truth (10 s windows, 1 s stride).
pub fn generate(config: &SynthConfig) -> Result<(FrameSequence, SynthTruth)> {
    config.validate()?;
    let n = config.frame_count();
    let frames: Vec<RgbFrame> = (0..n).into_par_iter().map(|k| config.render(k)).collect();
    let seq = FrameSequence::new(frames, config.fps, format!("synth-{}", config.seed))?;
    let pulse = PulseSignal::new(
        (0..n).map(|k| config.phase(k as f64 / config.fps).sin()).collect(),
        config.fps,
        0.0,
    )?;
    let hr = match truth_hr(config, 10.0, 1.0) {
        Ok(hr) => hr,
        // Recordings shorter than one window carry no HR truth.
        Err(Error::TooShort(_)) => HrSeries::new(vec![], vec![], vec![], 10.0, 1.0)?,
        Err(e) => return Err(e),
    };
    Ok((seq, SynthTruth { pulse, hr }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traces::spatial_average;

    fn clean(bpm: PulseRate) -> SynthConfig {
        SynthConfig {
            pulse_bpm: bpm,
            noise_sigma: 0.0,
            duration_s: 12.0,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn clean_green_trace_is_sinusoid() {
        let cfg = clean(PulseRate::Constant(120.0));
        let (seq, truth) = generate(&cfg).unwrap();
        let tr = spatial_average(&seq, cfg.skin_region).unwrap();
        for (k, g) in tr.g.iter().enumerate() {
            let t = k as f64 / 25.0;
            let expected = 100.0 + 1.5 * (2.0 * PI * 2.0 * t).sin();
            assert!((g - expected).abs() <= 0.5, "frame {k}: {g} vs {expected}");
        }
        assert_eq!(truth.pulse.len(), 300);
        assert!(truth.hr.bpm.iter().all(|&b| b == 120.0));
    }

    #[test]
    fn background_is_constant_gray() {
        let (seq, _) = generate(&clean(PulseRate::Constant(100.0))).unwrap();
        assert!(seq.frames.iter().all(|f| f.pixel(0, 0) == [90, 90, 90]));
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = SynthConfig {
            duration_s: 2.0,
            flicker: Some((0.5, 0.1)),
            jitter_px: Some(2),
            ..SynthConfig::default()
        };
        let (a, _) = generate(&cfg).unwrap();
        let (b, _) = generate(&cfg).unwrap();
        assert_eq!(a, b);
        let (c, _) = generate(&SynthConfig { seed: 7, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn chirp_truth() {
        let cfg = SynthConfig {
            pulse_bpm: PulseRate::Chirp { start: 90.0, end: 150.0 },
            duration_s: 60.0,
            ..SynthConfig::default()
        };
        let hr = truth_hr(&cfg, 10.0, 1.0).unwrap();
        assert_eq!(hr.t_s[0], 5.0);
        assert!((hr.bpm[0] - 95.0).abs() < 1e-9);
        for (t, b) in hr.t_s.iter().zip(&hr.bpm) {
            assert!((b - (90.0 + 60.0 * t / 60.0)).abs() < 1e-9);
        }
        let coarse = truth_hr(&cfg, 10.0, 5.0).unwrap();
        for (t, b) in coarse.t_s.iter().zip(&coarse.bpm) {
            let j = hr.t_s.iter().position(|x| x == t).unwrap();
            assert_eq!(*b, hr.bpm[j]);
        }
    }

    #[test]
    fn phase_integrates_frequency() {
        let cfg = SynthConfig {
            pulse_bpm: PulseRate::Chirp { start: 90.0, end: 150.0 },
            ..SynthConfig::default()
        };
        // Trapezoid-rule integral of the instantaneous frequency.
        let (t_end, steps) = (37.0, 100_000);
        let dt = t_end / steps as f64;
        let integral: f64 = (0..steps)
            .map(|i| 0.5 * (cfg.pulse_hz(i as f64 * dt) + cfg.pulse_hz((i + 1) as f64 * dt)) * dt)
            .sum();
        assert!((cfg.phase(t_end) - 2.0 * PI * integral).abs() < 1e-6);
    }

    #[test]
    fn truth_independent_of_nuisance() {
        let a = SynthConfig::default();
        let b = SynthConfig {
            noise_sigma: 9.0,
            flicker: Some((0.7, 0.2)),
            jitter_px: Some(3),
            ..a.clone()
        };
        assert_eq!(truth_hr(&a, 10.0, 1.0).unwrap(), truth_hr(&b, 10.0, 1.0).unwrap());
    }

    #[test]
    fn invalid_configs() {
        let base = SynthConfig::default();
        for cfg in [
            SynthConfig { pulse_bpm: PulseRate::Constant(800.0), ..base.clone() },
            SynthConfig { skin_region: Roi::new(40, 40, 32, 32), ..base.clone() },
            SynthConfig { jitter_px: Some(20), ..base.clone() },
            SynthConfig { noise_sigma: -1.0, ..base.clone() },
            SynthConfig { fps: 0.0, ..base.clone() },
        ] {
            assert!(generate(&cfg).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn ideal_trace_matches_clean_render() {
        let cfg = SynthConfig {
            jitter_px: Some(3),
            ..clean(PulseRate::Constant(96.0))
        };
        let (seq, _) = generate(&cfg).unwrap();
        let roi = Roi::new(10, 10, 40, 40);
        let ideal = cfg.ideal_trace(roi).unwrap();
        let got = spatial_average(&seq, roi).unwrap();
        for (a, b) in ideal.r.iter().zip(&got.r) {
            assert!((a - b).abs() <= 0.5);
        }
    }
}
