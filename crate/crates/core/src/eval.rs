//! Agreement between predicted and reference heart rate: MAE, RMSE, Pearson r,
//! Bland-Altman statistics, and the ROI-increment robustness sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{FrameSequence, Roi};
use crate::hr::{estimate_hr, HrConfig, HrSeries};
use crate::rppg::{generate_sgt, Method};

/// Default nearest-timestamp matching tolerance in seconds.
pub const ALIGN_TOL_S: f64 = 0.5;
/// Bland-Altman limits of agreement, in standard deviations.
pub const LOA_Z: f64 = 1.96;
pub const SWEEP_INCREMENTS_PX: [usize; 4] = [10, 20, 30, 40];
pub const HISTOGRAM_BIN_BPM: f64 = 5.0;
pub const HISTOGRAM_MIN_SPAN_BPM: f64 = 60.0;

/// One predicted/reference heart-rate pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub t_s: f64,
    pub pred: f64,
    pub reference: f64,
}

impl Pair {
    pub fn new(pred: f64, reference: f64) -> Self {
        Self {
            t_s: 0.0,
            pred,
            reference,
        }
    }

    pub fn diff(&self) -> f64 {
        self.pred - self.reference
    }
}

/// Pairs each predicted window with the reference window nearest in time,
/// when within `tol_s` and both are valid.
pub fn align(pred: &HrSeries, reference: &HrSeries, tol_s: f64) -> Result<Vec<Pair>> {
    if pred.is_empty() || reference.is_empty() {
        return Err(Error::Alignment("cannot align an empty HR series".into()));
    }
    let mut pairs = Vec::new();
    for i in 0..pred.len() {
        let t = pred.t_s[i];
        let k = reference.t_s.partition_point(|&r| r < t);
        let nearest = [k.checked_sub(1), (k < reference.len()).then_some(k)]
            .into_iter()
            .flatten()
            .min_by(|&a, &b| {
                (reference.t_s[a] - t)
                    .abs()
                    .total_cmp(&(reference.t_s[b] - t).abs())
            });
        let Some(j) = nearest else { continue };
        if (reference.t_s[j] - t).abs() <= tol_s && pred.valid[i] && reference.valid[j] {
            pairs.push(Pair {
                t_s: t,
                pred: pred.bpm[i],
                reference: reference.bpm[j],
            });
        }
    }
    if pairs.is_empty() {
        return Err(Error::Alignment(format!(
            "no valid windows matched within {tol_s} s"
        )));
    }
    Ok(pairs)
}

/// Averages raw reference samples `(t, bpm)` over each window of `grid`
/// (centers `grid.t_s`, width `grid.window_s`). Windows without samples are invalid.
pub fn resample_reference(samples: &[(f64, f64)], grid: &HrSeries) -> Result<HrSeries> {
    let half = grid.window_s / 2.0;
    let (bpm, valid): (Vec<f64>, Vec<bool>) = grid
        .t_s
        .iter()
        .map(|&c| {
            let inside: Vec<f64> = samples
                .iter()
                .filter(|(t, _)| *t >= c - half && *t < c + half)
                .map(|(_, v)| *v)
                .collect();
            if inside.is_empty() {
                (f64::NAN, false)
            } else {
                (inside.iter().sum::<f64>() / inside.len() as f64, true)
            }
        })
        .unzip();
    HrSeries::new(grid.t_s.clone(), bpm, valid, grid.window_s, grid.stride_s)
}

fn require(pairs: &[Pair], n: usize, what: &str) -> Result<()> {
    if pairs.len() < n {
        return Err(Error::InsufficientData(format!(
            "{what} needs at least {n} pair(s), got {}",
            pairs.len()
        )));
    }
    Ok(())
}

pub fn mae(pairs: &[Pair]) -> Result<f64> {
    require(pairs, 1, "MAE")?;
    Ok(pairs.iter().map(|p| p.diff().abs()).sum::<f64>() / pairs.len() as f64)
}

pub fn rmse(pairs: &[Pair]) -> Result<f64> {
    require(pairs, 1, "RMSE")?;
    Ok((pairs.iter().map(|p| p.diff().powi(2)).sum::<f64>() / pairs.len() as f64).sqrt())
}

/// Pearson correlation between predicted and reference values.
pub fn pearson(pairs: &[Pair]) -> Result<f64> {
    require(pairs, 2, "Pearson correlation")?;
    let n = pairs.len() as f64;
    let mp = pairs.iter().map(|p| p.pred).sum::<f64>() / n;
    let mr = pairs.iter().map(|p| p.reference).sum::<f64>() / n;
    let (mut cov, mut vp, mut vr) = (0.0, 0.0, 0.0);
    for p in pairs {
        let (a, b) = (p.pred - mp, p.reference - mr);
        cov += a * b;
        vp += a * a;
        vr += b * b;
    }
    if vp == 0.0 || vr == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "one of the series is constant".into(),
        ));
    }
    Ok((cov / (vp.sqrt() * vr.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlandAltmanStats {
    pub bias: f64,
    pub sd: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    /// `(mean, difference)` per pair, for plotting.
    pub pairs: Vec<(f64, f64)>,
}

/// Bias, sample standard deviation and 95 % limits of agreement of `pred - ref`.
pub fn bland_altman(pairs: &[Pair]) -> Result<BlandAltmanStats> {
    require(pairs, 2, "Bland-Altman analysis")?;
    let n = pairs.len() as f64;
    let bias = pairs.iter().map(Pair::diff).sum::<f64>() / n;
    let sd = (pairs.iter().map(|p| (p.diff() - bias).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok(BlandAltmanStats {
        bias,
        sd,
        loa_low: bias - LOA_Z * sd,
        loa_high: bias + LOA_Z * sd,
        pairs: pairs
            .iter()
            .map(|p| ((p.pred + p.reference) / 2.0, p.diff()))
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    /// `None` when the correlation is undefined and that was allowed.
    pub pearson_r: Option<f64>,
    pub n: usize,
    pub bland_altman: BlandAltmanStats,
}

/// All agreement metrics. With `allow_constant`, an undefined correlation is
/// reported as `None` instead of failing.
pub fn metrics(pairs: &[Pair], allow_constant: bool) -> Result<MetricsReport> {
    let pearson_r = match pearson(pairs) {
        Ok(r) => Some(r),
        Err(Error::UndefinedCorrelation(_)) if allow_constant => None,
        Err(e) => return Err(e),
    };
    Ok(MetricsReport {
        mae: mae(pairs)?,
        rmse: rmse(pairs)?,
        pearson_r,
        n: pairs.len(),
        bland_altman: bland_altman(pairs)?,
    })
}

/// Fixed-width histogram bins `[lo, lo + width)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Bins of `width` covering at least `[-span, span]` and every value.
    pub fn symmetric(values: &[f64], width: f64, span: f64) -> Self {
        let min = values.iter().copied().fold(-span, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = (min / width).floor() * width;
        let hi = span.max(((max / width).floor() + 1.0) * width);
        let nbins = ((hi - lo) / width).round() as usize;
        let edges: Vec<f64> = (0..=nbins).map(|i| lo + i as f64 * width).collect();
        let mut counts = vec![0; nbins];
        for &v in values {
            let i = (((v - lo) / width).floor() as usize).min(nbins - 1);
            counts[i] += 1;
        }
        Self { edges, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `(bin_lo, bin_hi, count)` rows.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (self.edges[i], self.edges[i + 1], c))
    }
}

/// Settings of the end-to-end pipeline run by [`roi_sweep`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepConfig {
    pub method: Method,
    pub sgt_band_hz: (f64, f64),
    pub hr: HrConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            method: Method::Chrom,
            sgt_band_hz: crate::rppg::SGT_BAND_HZ,
            hr: HrConfig {
                band_bpm: crate::hr::SGT_BAND_BPM,
                ..HrConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoiSweepResult {
    pub increments_px: Vec<usize>,
    pub base: HrSeries,
    /// HR per increment, in `increments_px` order.
    pub per_increment: Vec<HrSeries>,
    /// Per-window `hr(increment) - hr(base)`, pooled over increments.
    pub relative_changes_bpm: Vec<f64>,
    pub histogram: Histogram,
}

fn roi_hr(seq: &FrameSequence, roi: Roi, config: &SweepConfig) -> Result<HrSeries> {
    let labels = generate_sgt(seq, roi, config.method, config.sgt_band_hz)?;
    estimate_hr(&labels.pulse, &config.hr)
}

/// Re-runs extraction and HR estimation on ROIs grown by each increment
/// (`w + k`, `h + k`) and pools the per-window HR changes against the base ROI.
pub fn roi_sweep(
    seq: &FrameSequence,
    base: Roi,
    increments: &[usize],
    config: &SweepConfig,
) -> Result<RoiSweepResult> {
    let (w, h) = seq
        .dims()
        .ok_or_else(|| Error::InsufficientData("empty frame sequence".into()))?;
    base.check_within(w, h)?;
    for &k in increments {
        base.grown(k).check_within(w, h).map_err(|_| {
            Error::Bounds(format!(
                "ROI {base} grown by increment {k} px exceeds the {w}x{h} frame"
            ))
        })?;
    }
    let base_hr = roi_hr(seq, base, config)?;
    let per_increment = increments
        .par_iter()
        .map(|&k| roi_hr(seq, base.grown(k), config))
        .collect::<Result<Vec<_>>>()?;
    let relative_changes_bpm: Vec<f64> = per_increment
        .iter()
        .flat_map(|s| s.bpm.iter().zip(&base_hr.bpm).map(|(a, b)| a - b))
        .collect();
    let histogram = Histogram::symmetric(&relative_changes_bpm, HISTOGRAM_BIN_BPM, HISTOGRAM_MIN_SPAN_BPM);
    Ok(RoiSweepResult {
        increments_px: increments.to_vec(),
        base: base_hr,
        per_increment,
        relative_changes_bpm,
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(pred: &[f64], reference: &[f64]) -> Vec<Pair> {
        pred.iter().zip(reference).map(|(&p, &r)| Pair::new(p, r)).collect()
    }

    fn series(t: &[f64], bpm: &[f64], valid: &[bool]) -> HrSeries {
        HrSeries::new(t.to_vec(), bpm.to_vec(), valid.to_vec(), 10.0, 1.0).unwrap()
    }

    #[test]
    fn mae_rmse_examples() {
        let same = pairs(&[100.0, 110.0], &[100.0, 110.0]);
        assert_eq!(mae(&same).unwrap(), 0.0);
        assert_eq!(rmse(&same).unwrap(), 0.0);

        let p = pairs(&[120.0, 125.0], &[118.0, 121.0]);
        assert_eq!(mae(&p).unwrap(), 3.0);
        assert!((rmse(&p).unwrap() - 10f64.sqrt()).abs() < 1e-12);
        assert!((rmse(&p).unwrap() - 3.1623).abs() < 1e-4);
        assert_eq!(mae(&pairs(&[100.0], &[90.0])).unwrap(), 10.0);

        let offset = pairs(&[101.5, 91.5, 141.5], &[100.0, 90.0, 140.0]);
        assert_eq!(mae(&offset).unwrap(), 1.5);
        assert_eq!(rmse(&offset).unwrap(), 1.5);
        assert!(mae(&[]).is_err());
        assert!(rmse(&[]).is_err());
    }

    #[test]
    fn pearson_examples() {
        let r: Vec<f64> = (0..10).map(|i| 80.0 + i as f64 * 3.0).collect();
        let p: Vec<f64> = r.iter().map(|v| 2.0 * v + 5.0).collect();
        assert!((pearson(&pairs(&p, &r)).unwrap() - 1.0).abs() < 1e-12);
        let n: Vec<f64> = r.iter().map(|v| -v).collect();
        assert!((pearson(&pairs(&n, &r)).unwrap() + 1.0).abs() < 1e-12);
        let v = pearson(&pairs(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0])).unwrap();
        assert!((v - 0.8).abs() < 1e-12);
        assert!(matches!(
            pearson(&pairs(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0])),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(pearson(&pairs(&[1.0], &[2.0])).is_err());
    }

    #[test]
    fn bland_altman_examples() {
        let same = pairs(&[100.0, 120.0, 130.0], &[100.0, 120.0, 130.0]);
        let ba = bland_altman(&same).unwrap();
        assert_eq!((ba.bias, ba.sd, ba.loa_low, ba.loa_high), (0.0, 0.0, 0.0, 0.0));

        let shifted = pairs(&[102.0, 122.0, 132.0], &[100.0, 120.0, 130.0]);
        let ba = bland_altman(&shifted).unwrap();
        assert_eq!((ba.bias, ba.sd), (2.0, 0.0));
        assert_eq!(ba.pairs[0], (101.0, 2.0));

        let anti = pairs(&[100.0, 120.0], &[120.0, 100.0]);
        assert_eq!(bland_altman(&anti).unwrap().bias, 0.0);
        assert!(bland_altman(&pairs(&[1.0], &[1.0])).is_err());
    }

    #[test]
    fn constant_series_allowed_when_requested() {
        let p = pairs(&[120.0; 5], &[120.0; 5]);
        assert!(metrics(&p, false).is_err());
        let m = metrics(&p, true).unwrap();
        assert_eq!(m.pearson_r, None);
        assert_eq!(m.mae, 0.0);
        assert_eq!(m.n, 5);
    }

    #[test]
    fn align_examples() {
        let t: Vec<f64> = (0..10).map(|i| 5.0 + i as f64).collect();
        let bpm = vec![100.0; 10];
        let pred = series(&t, &bpm, &[true; 10]);
        assert_eq!(align(&pred, &pred, ALIGN_TOL_S).unwrap().len(), 10);

        let shifted = |d: f64| series(&t.iter().map(|v| v + d).collect::<Vec<_>>(), &bpm, &[true; 10]);
        assert_eq!(align(&pred, &shifted(0.4), 0.5).unwrap().len(), 10);
        assert!(matches!(align(&pred, &shifted(100.0), 0.5), Err(Error::Alignment(_))));

        let pv = [true, false, true, true, false, true, true, true, false, true];
        let rv = [true, true, false, true, false, true, false, true, true, true];
        let expected = pv.iter().zip(&rv).filter(|(a, b)| **a && **b).count();
        let got = align(&series(&t, &bpm, &pv), &series(&t, &bpm, &rv), 0.5).unwrap();
        assert_eq!(got.len(), expected);
    }

    #[test]
    fn reference_resampling() {
        let grid = series(&[5.0, 6.0, 30.0], &[0.0; 3], &[true; 3]);
        let samples: Vec<(f64, f64)> = (0..12).map(|i| (i as f64, 100.0 + i as f64)).collect();
        let r = resample_reference(&samples, &grid).unwrap();
        assert_eq!(r.bpm[0], 104.5);
        assert_eq!(r.bpm[1], (101..=110).sum::<i32>() as f64 / 10.0);
        assert!(!r.valid[2]);
    }

    #[test]
    fn histogram_covers_span() {
        let h = Histogram::symmetric(&[0.0, 0.1, -0.1, 4.9, 5.0], 5.0, 60.0);
        assert_eq!(h.edges[0], -60.0);
        assert_eq!(*h.edges.last().unwrap(), 60.0);
        assert_eq!(h.counts.len(), 24);
        assert_eq!(h.total(), 5);
        let wide = Histogram::symmetric(&[-72.0, 60.0, 81.0], 5.0, 60.0);
        assert_eq!(wide.edges[0], -75.0);
        assert!(*wide.edges.last().unwrap() > 81.0);
        assert_eq!(wide.total(), 3);
    }
}
