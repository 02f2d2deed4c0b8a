#![allow(dead_code)]

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rppg_core::eval::{align, mae, ALIGN_TOL_S};
use rppg_core::frames::{CfaLayout, RawBayerFrame, RgbFrame};
use rppg_core::hr::{amplitude_filter, estimate_hr, AmplitudeFilterParams, HrConfig, HrSeries, SGT_BAND_BPM};
use rppg_core::rppg::{generate_sgt, Method, SGT_BAND_HZ};
use rppg_core::synth::{generate, truth_hr, SynthConfig};

/// Naive O(n^2) DFT magnitude over bins `0..=nfft/2` of the zero-padded signal.
pub fn naive_dft_magnitudes(x: &[f64], nfft: usize) -> Vec<f64> {
    (0..=nfft / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &v) in x.iter().enumerate() {
                let a = -2.0 * PI * (k * n) as f64 / nfft as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            re.hypot(im)
        })
        .collect()
}

/// Textbook bilinear demosaic, one pixel at a time. Missing neighbors are
/// taken from the mirrored position across the border.
pub fn scalar_demosaic(raw: &RawBayerFrame) -> RgbFrame {
    let (w, h) = (raw.width as isize, raw.height as isize);
    let mirror = |i: isize, n: isize| if i < 0 { -i } else if i >= n { 2 * n - 2 - i } else { i };
    let at = |x: isize, y: isize| raw.get(mirror(x, w) as usize, mirror(y, h) as usize) as u32;
    let avg = |pts: &[(isize, isize)], x: isize, y: isize| {
        let s: u32 = pts.iter().map(|&(dx, dy)| at(x + dx, y + dy)).sum();
        let n = pts.len() as u32;
        ((s + n / 2) / n) as u8
    };
    let cross = [(-1, 0), (1, 0), (0, -1), (0, 1)];
    let diag = [(-1, -1), (1, -1), (-1, 1), (1, 1)];
    let horiz = [(-1, 0), (1, 0)];
    let vert = [(0, -1), (0, 1)];

    let mut out = RgbFrame::filled(raw.width, raw.height, [0, 0, 0]);
    for y in 0..h {
        for x in 0..w {
            let c = raw.layout.channel_at(x as usize, y as usize);
            let own = at(x, y) as u8;
            let px = match c {
                0 => [own, avg(&cross, x, y), avg(&diag, x, y)],
                2 => [avg(&diag, x, y), avg(&cross, x, y), own],
                _ => {
                    // Green site: red lies either along the row or along the column.
                    let red_in_row = raw.layout.channel_at(x as usize + 1, y as usize) == 0;
                    let (r_pts, b_pts) = if red_in_row { (&horiz, &vert) } else { (&vert, &horiz) };
                    [avg(r_pts, x, y), own, avg(b_pts, x, y)]
                }
            };
            out.set_pixel(x as usize, y as usize, px);
        }
    }
    out
}

pub const LAYOUTS: [CfaLayout; 4] = [CfaLayout::Rggb, CfaLayout::Bggr, CfaLayout::Grbg, CfaLayout::Gbrg];

/// Result of the synthetic end-to-end pipeline.
pub struct PipelineRun {
    pub estimated: HrSeries,
    pub filtered: HrSeries,
    pub truth: HrSeries,
}

impl PipelineRun {
    pub fn mae(&self) -> f64 {
        mae(&align(&self.filtered, &self.truth, ALIGN_TOL_S).unwrap()).unwrap()
    }

    /// Per-window absolute error of the filtered series against truth.
    pub fn abs_errors(&self) -> Vec<f64> {
        self.filtered
            .bpm
            .iter()
            .zip(&self.truth.bpm)
            .map(|(a, b)| (a - b).abs())
            .collect()
    }
}

/// synth → SGT over the skin region → 10 s / 1 s HR in the SGT band → amplitude filter.
pub fn run_pipeline(cfg: &SynthConfig, method: Method) -> PipelineRun {
    let (seq, _) = generate(cfg).unwrap();
    let labels = generate_sgt(&seq, cfg.skin_region, method, SGT_BAND_HZ).unwrap();
    let hr_cfg = HrConfig {
        band_bpm: SGT_BAND_BPM,
        ..HrConfig::default()
    };
    let estimated = estimate_hr(&labels.pulse, &hr_cfg).unwrap();
    let filtered = amplitude_filter(&estimated, &labels.pulse, SGT_BAND_BPM, &AmplitudeFilterParams::default())
        .unwrap()
        .series;
    let truth = truth_hr(cfg, hr_cfg.window_s, hr_cfg.stride_s).unwrap();
    assert_eq!(truth.t_s, estimated.t_s);
    PipelineRun {
        estimated,
        filtered,
        truth,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
