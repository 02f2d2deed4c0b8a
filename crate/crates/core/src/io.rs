//! File contracts: trace, pulse/label, HR and reference CSVs, the metrics
//! report JSON and plot-data CSVs. Floats are written in shortest round-trip
//! form so every file reads back bit-exactly. All writes are atomic.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Histogram, MetricsReport, Pair};
use crate::frames::Roi;
use crate::hr::HrSeries;
use crate::rppg::{Method, PulseSignal, SgtLabels};
use crate::traces::RgbTrace;

/// Writes `bytes` to a temporary file next to `path`, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| Error::io(parent, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn csv_bytes<F>(header: &[&str], rows: usize, mut row: F) -> Vec<u8>
where
    F: FnMut(usize) -> Vec<String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for i in 0..rows {
        w.write_record(row(i)).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Parsed CSV with named columns.
struct Table {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(&bytes[..]);
        let header = r
            .headers()
            .map_err(|e| Error::format(path, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = r
            .records()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, e.to_string()))?;
        Ok(Self {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.column(name).ok_or_else(|| {
            Error::format(&self.path, format!("missing column {name:?} (header {:?})", self.header))
        })
    }

    fn floats(&self, col: usize) -> Result<Vec<f64>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                let cell = rec.get(col).unwrap_or("");
                cell.parse::<f64>().ok().filter(|v| !v.is_nan()).ok_or_else(|| {
                    Error::format(
                        &self.path,
                        format!("row {}: {:?} is not a number in column {:?}", i + 2, cell, self.header[col]),
                    )
                })
            })
            .collect()
    }

    fn flags(&self, col: usize) -> Result<Vec<bool>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, rec)| match rec.get(col).unwrap_or("") {
                "1" | "true" => Ok(true),
                "0" | "false" => Ok(false),
                other => Err(Error::format(
                    &self.path,
                    format!("row {}: valid must be 0 or 1, got {other:?}", i + 2),
                )),
            })
            .collect()
    }
}

/// Sample rate implied by an evenly spaced time column.
fn infer_fps(path: &Path, t: &[f64]) -> Result<f64> {
    if t.len() < 2 {
        return Err(Error::format(
            path,
            "cannot infer the sample rate from fewer than 2 rows; provide a sidecar JSON",
        ));
    }
    let span = t[t.len() - 1] - t[0];
    if !(span > 0.0) {
        return Err(Error::format(path, "time column is not increasing"));
    }
    Ok((t.len() - 1) as f64 / span)
}

pub fn write_trace_csv(path: &Path, trace: &RgbTrace) -> Result<()> {
    let bytes = csv_bytes(&["frame_index", "time_s", "r", "g", "b"], trace.len(), |i| {
        vec![
            i.to_string(),
            trace.time_at(i).to_string(),
            trace.r[i].to_string(),
            trace.g[i].to_string(),
            trace.b[i].to_string(),
        ]
    });
    write_atomic(path, &bytes)
}

pub fn read_trace_csv(path: &Path) -> Result<RgbTrace> {
    let t = Table::read(path)?;
    let time = t.floats(t.require("time_s")?)?;
    let fps = infer_fps(path, &time)?;
    RgbTrace::new(
        t.floats(t.require("r")?)?,
        t.floats(t.require("g")?)?,
        t.floats(t.require("b")?)?,
        fps,
        time[0],
    )
}

/// Sidecar of a pulse CSV, stored next to it with a `.json` extension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_hz: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roi: Option<Roi>,
    pub fps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
}

impl PulseMeta {
    pub fn for_labels(labels: &SgtLabels) -> Self {
        Self {
            method: Some(labels.method),
            band_hz: Some([labels.band_hz.0, labels.band_hz.1]),
            roi: Some(labels.source_roi),
            fps: labels.pulse.fps,
            source_id: Some(labels.source_id.clone()),
        }
    }
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `frame_index,time_s,ppg` plus the sidecar.
pub fn write_pulse_csv(path: &Path, pulse: &PulseSignal, meta: &PulseMeta) -> Result<()> {
    let bytes = csv_bytes(&["frame_index", "time_s", "ppg"], pulse.len(), |i| {
        vec![i.to_string(), pulse.time_at(i).to_string(), pulse.samples[i].to_string()]
    });
    write_atomic(path, &bytes)?;
    let json = serde_json::to_vec_pretty(meta).expect("pulse metadata serializes");
    write_atomic(&sidecar_path(path), &json)
}

pub fn write_labels(path: &Path, labels: &SgtLabels) -> Result<()> {
    write_pulse_csv(path, &labels.pulse, &PulseMeta::for_labels(labels))
}

pub fn read_pulse_meta(csv_path: &Path) -> Result<Option<PulseMeta>> {
    let path = sidecar_path(csv_path);
    match fs::read(&path) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| Error::format(&path, e.to_string())),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(&path, e)),
    }
}

/// Reads a pulse CSV. The rate comes from the sidecar when present, otherwise
/// from the time column.
pub fn read_pulse_csv(path: &Path) -> Result<(PulseSignal, Option<PulseMeta>)> {
    let t = Table::read(path)?;
    let time = t.floats(t.require("time_s")?)?;
    let ppg = t.floats(t.require("ppg")?)?;
    if ppg.is_empty() {
        return Err(Error::format(path, "no samples"));
    }
    let meta = read_pulse_meta(path)?;
    let fps = match &meta {
        Some(m) => m.fps,
        None => infer_fps(path, &time)?,
    };
    let pulse = PulseSignal::new(ppg, fps, time[0]).map_err(|e| Error::format(path, e.to_string()))?;
    Ok((pulse, meta))
}

/// Writes `t_s,bpm,valid` with validity as 0/1.
pub fn write_hr_csv(path: &Path, hr: &HrSeries) -> Result<()> {
    let bytes = csv_bytes(&["t_s", "bpm", "valid"], hr.len(), |i| {
        vec![
            hr.t_s[i].to_string(),
            hr.bpm[i].to_string(),
            (hr.valid[i] as u8).to_string(),
        ]
    });
    write_atomic(path, &bytes)
}

/// Reads an HR CSV. The `valid` column is optional (all valid when absent);
/// the stride is taken from the first two timestamps.
pub fn read_hr_csv(path: &Path, window_s: f64) -> Result<HrSeries> {
    let t = Table::read(path)?;
    let t_s = t.floats(t.require("t_s")?)?;
    let bpm = t.floats(t.require("bpm")?)?;
    let valid = match t.column("valid") {
        Some(c) => t.flags(c)?,
        None => vec![true; t_s.len()],
    };
    let stride = if t_s.len() >= 2 { t_s[1] - t_s[0] } else { window_s };
    HrSeries::new(t_s, bpm, valid, window_s, stride).map_err(|e| Error::format(path, e.to_string()))
}

/// Reads reference samples `t_s,bpm`, dropping rows flagged invalid when a
/// `valid` column exists.
pub fn read_reference_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let t = Table::read(path)?;
    let t_s = t.floats(t.require("t_s")?)?;
    let bpm = t.floats(t.require("bpm")?)?;
    let valid = match t.column("valid") {
        Some(c) => t.flags(c)?,
        None => vec![true; t_s.len()],
    };
    Ok(t_s
        .into_iter()
        .zip(bpm)
        .zip(valid)
        .filter_map(|(s, v)| v.then_some(s))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlandAltmanJson {
    pub bias: f64,
    pub sd: f64,
    pub loa: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub mae: f64,
    pub rmse: f64,
    pub pearson_r: Option<f64>,
    pub n: usize,
    pub bland_altman: BlandAltmanJson,
}

impl From<&MetricsReport> for ReportJson {
    fn from(m: &MetricsReport) -> Self {
        Self {
            mae: m.mae,
            rmse: m.rmse,
            pearson_r: m.pearson_r,
            n: m.n,
            bland_altman: BlandAltmanJson {
                bias: m.bland_altman.bias,
                sd: m.bland_altman.sd,
                loa: [m.bland_altman.loa_low, m.bland_altman.loa_high],
            },
        }
    }
}

pub fn write_report_json(path: &Path, report: &MetricsReport) -> Result<()> {
    let json = serde_json::to_vec_pretty(&ReportJson::from(report)).expect("report serializes");
    write_atomic(path, &json)
}

pub fn read_report_json(path: &Path) -> Result<ReportJson> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))
}

/// Bland-Altman plot data, `mean,diff`.
pub fn write_ba_csv(path: &Path, report: &MetricsReport) -> Result<()> {
    let pts = &report.bland_altman.pairs;
    let bytes = csv_bytes(&["mean", "diff"], pts.len(), |i| {
        vec![pts[i].0.to_string(), pts[i].1.to_string()]
    });
    write_atomic(path, &bytes)
}

/// Correlation plot data, `ref,pred`.
pub fn write_corr_csv(path: &Path, pairs: &[Pair]) -> Result<()> {
    let bytes = csv_bytes(&["ref", "pred"], pairs.len(), |i| {
        vec![pairs[i].reference.to_string(), pairs[i].pred.to_string()]
    });
    write_atomic(path, &bytes)
}

/// Histogram plot data, `bin_lo,bin_hi,count`.
pub fn write_histogram_csv(path: &Path, hist: &Histogram) -> Result<()> {
    let rows: Vec<_> = hist.rows().collect();
    let bytes = csv_bytes(&["bin_lo", "bin_hi", "count"], rows.len(), |i| {
        vec![rows[i].0.to_string(), rows[i].1.to_string(), rows[i].2.to_string()]
    });
    write_atomic(path, &bytes)
}

pub fn read_histogram_csv(path: &Path) -> Result<Histogram> {
    let t = Table::read(path)?;
    let lo = t.floats(t.require("bin_lo")?)?;
    let hi = t.floats(t.require("bin_hi")?)?;
    let counts_col = t.require("count")?;
    let counts = t
        .rows
        .iter()
        .map(|r| {
            r.get(counts_col)
                .and_then(|c| c.parse::<usize>().ok())
                .ok_or_else(|| Error::format(path, "count must be a non-negative integer"))
        })
        .collect::<Result<Vec<_>>>()?;
    if lo.is_empty() || lo.windows(2).zip(&hi).any(|(w, h)| w[1] != *h) {
        return Err(Error::format(path, "bins must be non-empty and contiguous"));
    }
    let mut edges = lo;
    edges.push(*hi.last().expect("non-empty"));
    Ok(Histogram { edges, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{align, metrics};

    #[test]
    fn pulse_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.csv");
        let samples: Vec<f64> = (0..257).map(|i| (i as f64 * 0.37).sin() * 1e-3 + 1.0 / 3.0).collect();
        let pulse = PulseSignal::new(samples, 25.0, 0.0).unwrap();
        let labels = SgtLabels {
            pulse: pulse.clone(),
            method: Method::Pos,
            band_hz: (1.3, 4.0),
            source_roi: Roi::new(1, 2, 3, 4),
            source_id: "s01".into(),
        };
        write_labels(&p, &labels).unwrap();
        let (back, meta) = read_pulse_csv(&p).unwrap();
        assert_eq!(back, pulse);
        assert_eq!(meta.unwrap(), PulseMeta::for_labels(&labels));
        let json: serde_json::Value =
            serde_json::from_slice(&fs::read(dir.path().join("labels.json")).unwrap()).unwrap();
        assert_eq!(json["method"], "POS");
        assert_eq!(json["roi"]["w"], 3);
        assert_eq!(json["band_hz"][1], 4.0);
    }

    #[test]
    fn pulse_without_sidecar_infers_fps() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        fs::write(&p, "frame_index,time_s,ppg\n0,0,1\n1,0.04,2\n2,0.08,3\n").unwrap();
        let (pulse, meta) = read_pulse_csv(&p).unwrap();
        assert!(meta.is_none());
        assert!((pulse.fps - 25.0).abs() < 1e-9);
        assert_eq!(pulse.samples, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn hr_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("hr.csv");
        let hr = HrSeries::new(
            vec![5.0, 6.0, 7.0],
            vec![120.1234567890123, 0.1 + 0.2, 99.0],
            vec![true, false, true],
            10.0,
            1.0,
        )
        .unwrap();
        write_hr_csv(&p, &hr).unwrap();
        assert_eq!(read_hr_csv(&p, 10.0).unwrap(), hr);
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("t_s,bpm,valid\n5,120.1234567890123,1\n"));
    }

    #[test]
    fn trace_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trace.csv");
        let tr = RgbTrace::new(vec![1.5, 2.25], vec![100.0 / 3.0, 7.0], vec![0.0, 1e-300], 30.0, 0.0).unwrap();
        write_trace_csv(&p, &tr).unwrap();
        let back = read_trace_csv(&p).unwrap();
        assert_eq!((back.r, back.g, back.b), (tr.r, tr.g, tr.b));
        assert!((back.fps - 30.0).abs() < 1e-9);
    }

    #[test]
    fn reference_with_optional_valid() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ref.csv");
        fs::write(&p, "t_s,bpm\n0.5,120\n1.5,121\n").unwrap();
        assert_eq!(read_reference_csv(&p).unwrap(), vec![(0.5, 120.0), (1.5, 121.0)]);
        fs::write(&p, "t_s,bpm,valid\n0.5,120,0\n1.5,121,1\n").unwrap();
        assert_eq!(read_reference_csv(&p).unwrap(), vec![(1.5, 121.0)]);
    }

    #[test]
    fn malformed_inputs_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "t_s,heart\n1,2\n").unwrap();
        assert!(matches!(read_hr_csv(&p, 10.0), Err(Error::Format { .. })));
        fs::write(&p, "t_s,bpm,valid\n1,abc,1\n").unwrap();
        assert!(matches!(read_hr_csv(&p, 10.0), Err(Error::Format { .. })));
        fs::write(&p, "t_s,bpm,valid\n1,2,7\n").unwrap();
        assert!(matches!(read_hr_csv(&p, 10.0), Err(Error::Format { .. })));
        let missing = dir.path().join("nope.csv");
        assert_eq!(read_hr_csv(&missing, 10.0).unwrap_err().kind(), crate::error::ErrorKind::Input);
    }

    #[test]
    fn report_and_plot_files() {
        let dir = tempfile::tempdir().unwrap();
        let hr = |b: Vec<f64>| {
            let n = b.len();
            HrSeries::new((0..n).map(|i| 5.0 + i as f64).collect(), b, vec![true; n], 10.0, 1.0).unwrap()
        };
        let pairs = align(&hr(vec![100.0, 110.0, 121.0]), &hr(vec![101.0, 108.0, 120.0]), 0.5).unwrap();
        let m = metrics(&pairs, false).unwrap();
        let rp = dir.path().join("report.json");
        write_report_json(&rp, &m).unwrap();
        let back = read_report_json(&rp).unwrap();
        assert_eq!(back, ReportJson::from(&m));
        write_ba_csv(&dir.path().join("ba.csv"), &m).unwrap();
        write_corr_csv(&dir.path().join("corr.csv"), &pairs).unwrap();
        let ba = fs::read_to_string(dir.path().join("ba.csv")).unwrap();
        assert_eq!(ba.lines().count(), 4);
        assert_eq!(ba.lines().next(), Some("mean,diff"));

        let h = Histogram::symmetric(&[-3.0, 0.0, 4.0, 12.0], 5.0, 60.0);
        let hp = dir.path().join("hist.csv");
        write_histogram_csv(&hp, &h).unwrap();
        assert_eq!(read_histogram_csv(&hp).unwrap(), h);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
