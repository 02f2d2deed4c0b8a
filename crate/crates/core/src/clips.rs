//! Training-clip export: fixed-length clips of ROI crops resized to a square,
//! each with its slice of the pulse labels, plus a seeded train/validation split.
//!
//! Layout under the output directory:
//!
//! ```text
//! clip_0000/frame_000001.ppm ... meta.json labels.csv labels.json clip.json
//! clip_0001/...
//! split.json
//! ```
//!
//! `labels.csv` rows are indexed from 0 within the clip; `time_s` keeps the
//! recording clock so predictions line up with reference HR.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::imageops::{self, FilterType};
use image::RgbImage;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{crop_roi, load_sequence, write_sequence, FrameSequence, RgbFrame, Roi};
use crate::io::{read_pulse_csv, write_atomic, write_pulse_csv, PulseMeta};
use crate::rppg::{Method, PulseSignal};

pub const CLIP_FRAMES: usize = 148;
pub const CLIP_SIZE: usize = 128;
pub const SPLIT_FILE: &str = "split.json";
pub const MANIFEST_FILE: &str = "clip.json";
pub const LABELS_FILE: &str = "labels.csv";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resize {
    #[default]
    Bilinear,
    Nearest,
}

impl Resize {
    fn filter(self) -> FilterType {
        match self {
            Resize::Bilinear => FilterType::Triangle,
            Resize::Nearest => FilterType::Nearest,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Resize::Bilinear => "bilinear",
            Resize::Nearest => "nearest",
        }
    }
}

impl FromStr for Resize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bilinear" => Ok(Resize::Bilinear),
            "nearest" => Ok(Resize::Nearest),
            _ => Err(Error::Argument(format!("resize must be bilinear or nearest, got {s:?}"))),
        }
    }
}

impl std::fmt::Display for Resize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClipConfig {
    pub clip_len: usize,
    pub stride: usize,
    pub size: usize,
    pub resize: Resize,
    /// Crop applied before resizing; the whole frame when `None`.
    pub roi: Option<Roi>,
    pub train_ratio: f64,
    pub seed: u64,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self {
            clip_len: CLIP_FRAMES,
            stride: CLIP_FRAMES,
            size: CLIP_SIZE,
            resize: Resize::default(),
            roi: None,
            train_ratio: 0.6,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipManifest {
    pub clip_id: String,
    pub source_id: String,
    pub start_frame: usize,
    pub n_frames: usize,
    pub fps: f64,
    pub roi: Roi,
    pub size: [usize; 2],
    pub resize: Resize,
    pub channels: usize,
    pub labels: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_hz: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub train_ratio: f64,
    pub train: Vec<String>,
    pub val: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClipExport {
    pub clips: Vec<ClipManifest>,
    pub split: Split,
    /// Trailing frames not covered by any clip.
    pub unused_frames: usize,
}

/// Start frames of the clips tiling `n` frames.
pub fn clip_starts(n: usize, clip_len: usize, stride: usize) -> Vec<usize> {
    if n < clip_len || clip_len == 0 || stride == 0 {
        return Vec::new();
    }
    (0..=(n - clip_len) / stride).map(|i| i * stride).collect()
}

/// Seeded shuffle of `ids`; the first `round(ratio * n)` go to training.
pub fn split_ids(ids: &[String], ratio: f64, seed: u64) -> Result<Split> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Argument(format!("train ratio must lie in [0, 1], got {ratio}")));
    }
    let mut order = ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (ratio * ids.len() as f64).round() as usize;
    let val = order.split_off(n_train);
    Ok(Split {
        seed,
        train_ratio: ratio,
        train: order,
        val,
    })
}

pub fn resize_frame(frame: &RgbFrame, size: usize, resize: Resize) -> Result<RgbFrame> {
    if size == 0 {
        return Err(Error::Argument("clip size must be positive".into()));
    }
    if frame.width == size && frame.height == size {
        return Ok(frame.clone());
    }
    let img = RgbImage::from_raw(frame.width as u32, frame.height as u32, frame.to_interleaved())
        .ok_or_else(|| Error::Dimension("frame buffer does not match its size".into()))?;
    let out = imageops::resize(&img, size as u32, size as u32, resize.filter());
    RgbFrame::from_interleaved(size, size, out.as_raw())
}

pub fn clip_id(i: usize) -> String {
    format!("clip_{i:04}")
}

/// Exports clips of `seq` with the matching `labels`, one sample per frame.
/// A recording shorter than one clip yields no clips.
pub fn export_clips(
    seq: &FrameSequence,
    labels: &PulseSignal,
    label_meta: Option<&PulseMeta>,
    out: &Path,
    config: &ClipConfig,
) -> Result<ClipExport> {
    if labels.len() != seq.len() {
        return Err(Error::Argument(format!(
            "{} labels for {} frames",
            labels.len(),
            seq.len()
        )));
    }
    if config.clip_len == 0 || config.stride == 0 {
        return Err(Error::Argument("clip length and stride must be positive".into()));
    }
    let (w, h) = seq
        .dims()
        .ok_or_else(|| Error::InsufficientData("empty frame sequence".into()))?;
    let roi = config.roi.unwrap_or(Roi::full(w, h));
    roi.check_within(w, h)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let starts = clip_starts(seq.len(), config.clip_len, config.stride);
    let mut clips = Vec::with_capacity(starts.len());
    for (i, &start) in starts.iter().enumerate() {
        let id = clip_id(i);
        let dir = out.join(&id);
        let frames = seq.frames[start..start + config.clip_len]
            .iter()
            .map(|f| resize_frame(&crop_roi(f, roi)?, config.size, config.resize))
            .collect::<Result<Vec<_>>>()?;
        let clip_seq = FrameSequence::new(frames, seq.fps, seq.source_id.clone())?;
        write_sequence(&dir, &clip_seq)?;

        let clip_labels = PulseSignal::new(
            labels.samples[start..start + config.clip_len].to_vec(),
            labels.fps,
            labels.time_at(start),
        )?;
        let meta = PulseMeta {
            fps: labels.fps,
            roi: Some(roi),
            ..label_meta.cloned().unwrap_or(PulseMeta {
                method: None,
                band_hz: None,
                roi: None,
                fps: labels.fps,
                source_id: Some(seq.source_id.clone()),
            })
        };
        write_pulse_csv(&dir.join(LABELS_FILE), &clip_labels, &meta)?;

        let manifest = ClipManifest {
            clip_id: id,
            source_id: seq.source_id.clone(),
            start_frame: start,
            n_frames: config.clip_len,
            fps: seq.fps,
            roi,
            size: [config.size, config.size],
            resize: config.resize,
            channels: 3,
            labels: LABELS_FILE.into(),
            method: meta.method,
            band_hz: meta.band_hz,
        };
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        write_atomic(&dir.join(MANIFEST_FILE), &json)?;
        clips.push(manifest);
    }

    let ids: Vec<String> = clips.iter().map(|c| c.clip_id.clone()).collect();
    let split = split_ids(&ids, config.train_ratio, config.seed)?;
    let json = serde_json::to_vec_pretty(&split).expect("split serializes");
    write_atomic(&out.join(SPLIT_FILE), &json)?;

    let covered = starts.last().map_or(0, |s| s + config.clip_len);
    Ok(ClipExport {
        clips,
        split,
        unused_frames: seq.len() - covered,
    })
}

/// A clip read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub frames: FrameSequence,
    pub labels: PulseSignal,
    pub manifest: ClipManifest,
}

pub fn read_clip(dir: &Path) -> Result<Clip> {
    let mpath = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: ClipManifest =
        serde_json::from_slice(&bytes).map_err(|e| Error::format(&mpath, e.to_string()))?;
    let frames = load_sequence(dir)?;
    let (labels, _) = read_pulse_csv(&dir.join(&manifest.labels))?;
    if frames.len() != manifest.n_frames || labels.len() != manifest.n_frames {
        return Err(Error::format(
            dir,
            format!(
                "manifest says {} frames, found {} frames and {} labels",
                manifest.n_frames,
                frames.len(),
                labels.len()
            ),
        ));
    }
    Ok(Clip {
        frames,
        labels,
        manifest,
    })
}

pub fn read_split(out: &Path) -> Result<Split> {
    let path: PathBuf = out.join(SPLIT_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(&path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiling() {
        let s = clip_starts(1500, 148, 148);
        assert_eq!(s.len(), 10);
        assert_eq!(1500 - (s[9] + 148), 20);
        assert!(clip_starts(147, 148, 148).is_empty());
        assert_eq!(clip_starts(148, 148, 148), vec![0]);
        assert_eq!(clip_starts(300, 148, 74), vec![0, 74, 148]);
    }

    #[test]
    fn split_is_seeded_partition() {
        let ids: Vec<String> = (0..10).map(clip_id).collect();
        let a = split_ids(&ids, 0.6, 42).unwrap();
        assert_eq!((a.train.len(), a.val.len()), (6, 4));
        assert_eq!(a, split_ids(&ids, 0.6, 42).unwrap());
        let mut all: Vec<_> = a.train.iter().chain(&a.val).cloned().collect();
        all.sort();
        assert_eq!(all, ids);
        assert!(split_ids(&ids, 1.5, 42).is_err());
    }

    #[test]
    fn resize_constant_and_identity() {
        let f = RgbFrame::filled(40, 30, [10, 20, 30]);
        for mode in [Resize::Bilinear, Resize::Nearest] {
            let r = resize_frame(&f, 128, mode).unwrap();
            assert_eq!((r.width, r.height), (128, 128));
            assert!(r.planes[1].iter().all(|&v| v == 20));
        }
        let sq = RgbFrame::filled(128, 128, [1, 2, 3]);
        assert_eq!(resize_frame(&sq, 128, Resize::Bilinear).unwrap(), sq);
    }

    #[test]
    fn resize_parse() {
        assert_eq!("Nearest".parse::<Resize>().unwrap(), Resize::Nearest);
        assert!("cubic".parse::<Resize>().is_err());
    }
}
