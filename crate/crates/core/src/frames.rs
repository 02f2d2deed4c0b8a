//! Frame types and the camera preprocessing chain.
//!
//! Raw Bayer mosaics are demosaiced bilinearly, box-downsampled, and white
//! balanced per frame under the gray-world assumption. All arithmetic is done
//! in `f64`/integers and quantized to 8 bits only when a frame is returned.
//!
//! Frame directories hold one binary PNM per frame (`P6` for RGB, `P5` for
//! Bayer or single-channel data) next to a `meta.json` sidecar.

use std::fmt;
use std::fs;
use std::io::{BufReader, Cursor};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::codecs::pnm::{PnmDecoder, PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ColorType, ExtendedColorType, ImageDecoder, ImageEncoder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const META_FILE: &str = "meta.json";

/// Color filter array ordering of the top-left 2×2 Bayer cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CfaLayout {
    #[default]
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

impl CfaLayout {
    /// Channel index (0 = R, 1 = G, 2 = B) sampled at pixel `(x, y)`.
    #[inline]
    pub fn channel_at(self, x: usize, y: usize) -> usize {
        let cell = match self {
            CfaLayout::Rggb => [0, 1, 1, 2],
            CfaLayout::Bggr => [2, 1, 1, 0],
            CfaLayout::Grbg => [1, 0, 2, 1],
            CfaLayout::Gbrg => [1, 2, 0, 1],
        };
        cell[(y & 1) * 2 + (x & 1)]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CfaLayout::Rggb => "rggb",
            CfaLayout::Bggr => "bggr",
            CfaLayout::Grbg => "grbg",
            CfaLayout::Gbrg => "gbrg",
        }
    }
}

impl fmt::Display for CfaLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CfaLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rggb" => Ok(CfaLayout::Rggb),
            "bggr" => Ok(CfaLayout::Bggr),
            "grbg" => Ok(CfaLayout::Grbg),
            "gbrg" => Ok(CfaLayout::Gbrg),
            other => Err(Error::Argument(format!("unknown CFA layout {other:?}"))),
        }
    }
}

/// Single-plane sensor readout in Bayer layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawBayerFrame {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<u8>,
    pub layout: CfaLayout,
}

impl RawBayerFrame {
    pub fn new(width: usize, height: usize, samples: Vec<u8>, layout: CfaLayout) -> Result<Self> {
        if width == 0 || height == 0 || !width.is_multiple_of(2) || !height.is_multiple_of(2) {
            return Err(Error::Dimension(format!(
                "Bayer frame must have even, non-zero dimensions, got {width}x{height}"
            )));
        }
        if samples.len() != width * height {
            return Err(Error::Dimension(format!(
                "expected {} samples for {width}x{height}, got {}",
                width * height,
                samples.len()
            )));
        }
        Ok(Self {
            width,
            height,
            samples,
            layout,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.samples[y * self.width + x]
    }
}

/// Planar 8-bit RGB frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbFrame {
    pub width: usize,
    pub height: usize,
    /// R, G, B planes, each row-major with `width * height` entries.
    pub planes: [Vec<u8>; 3],
}

impl RgbFrame {
    pub fn new(width: usize, height: usize, planes: [Vec<u8>; 3]) -> Result<Self> {
        let n = width * height;
        if planes.iter().any(|p| p.len() != n) {
            return Err(Error::Dimension(format!(
                "every plane of a {width}x{height} frame needs {n} samples"
            )));
        }
        Ok(Self {
            width,
            height,
            planes,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            planes: rgb.map(|v| vec![v; n]),
        }
    }

    /// Expands a single-channel image into three identical planes.
    pub fn from_gray(width: usize, height: usize, gray: Vec<u8>) -> Result<Self> {
        Self::new(width, height, [gray.clone(), gray.clone(), gray])
    }

    /// Builds a frame from interleaved `RGBRGB...` bytes.
    pub fn from_interleaved(width: usize, height: usize, data: &[u8]) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::Dimension(format!(
                "interleaved buffer of {} bytes does not match {width}x{height}x3",
                data.len()
            )));
        }
        let mut planes: [Vec<u8>; 3] = Default::default();
        for (c, plane) in planes.iter_mut().enumerate() {
            *plane = data.iter().skip(c).step_by(3).copied().collect();
        }
        Ok(Self {
            width,
            height,
            planes,
        })
    }

    pub fn to_interleaved(&self) -> Vec<u8> {
        let n = self.width * self.height;
        let mut out = Vec::with_capacity(n * 3);
        for i in 0..n {
            out.extend(self.planes.iter().map(|p| p[i]));
        }
        out
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = y * self.width + x;
        [self.planes[0][i], self.planes[1][i], self.planes[2][i]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = y * self.width + x;
        for (plane, v) in self.planes.iter_mut().zip(rgb) {
            plane[i] = v;
        }
    }

    pub fn channel_means(&self) -> [f64; 3] {
        let n = (self.width * self.height) as f64;
        self.planes
            .each_ref()
            .map(|p| p.iter().map(|&v| v as u64).sum::<u64>() as f64 / n)
    }
}

/// Pixel rectangle; `(x, y)` is the top-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Roi {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Roi {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::new(0, 0, width, height)
    }

    /// Grows width and height by `k` pixels, keeping the top-left corner.
    pub fn grown(&self, k: usize) -> Self {
        Self::new(self.x, self.y, self.w + k, self.h + k)
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn check_within(&self, width: usize, height: usize) -> Result<()> {
        if self.w == 0 || self.h == 0 {
            return Err(Error::Bounds(format!("ROI {self} is empty")));
        }
        if self.x + self.w > width || self.y + self.h > height {
            return Err(Error::Bounds(format!(
                "ROI {self} exceeds frame of {width}x{height}"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Roi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x, self.y, self.w, self.h)
    }
}

impl FromStr for Roi {
    type Err = Error;

    /// Parses `x,y,w,h`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Argument(format!("ROI must be x,y,w,h, got {s:?}")))?;
        match parts[..] {
            [x, y, w, h] if w > 0 && h > 0 => Ok(Roi::new(x, y, w, h)),
            _ => Err(Error::Argument(format!(
                "ROI must be x,y,w,h with positive size, got {s:?}"
            ))),
        }
    }
}

/// Ordered RGB frames sharing one size, with their acquisition rate.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    pub frames: Vec<RgbFrame>,
    pub fps: f64,
    pub source_id: String,
}

impl FrameSequence {
    pub fn new(frames: Vec<RgbFrame>, fps: f64, source_id: impl Into<String>) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::Argument(format!("fps must be positive, got {fps}")));
        }
        if let Some(first) = frames.first() {
            if let Some((i, f)) = frames
                .iter()
                .enumerate()
                .find(|(_, f)| f.width != first.width || f.height != first.height)
            {
                return Err(Error::InconsistentDimensions(format!(
                    "frame {i} is {}x{}, expected {}x{}",
                    f.width, f.height, first.width, first.height
                )));
            }
        }
        Ok(Self {
            frames,
            fps,
            source_id: source_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(width, height)` of the frames, or `None` for an empty sequence.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.frames.first().map(|f| (f.width, f.height))
    }

    pub fn duration_s(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }
}

/// Reflects an out-of-range coordinate back inside `[0, n)` without repeating
/// the edge sample, which keeps the Bayer parity of the neighbor intact.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r.clamp(0, n - 1) as usize
}

const ORTHOGONAL: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
const DIAGONAL: [(isize, isize); 4] = [(-1, -1), (1, -1), (-1, 1), (1, 1)];

/// Neighbor offsets that carry `channel` around a site of the given Bayer phase.
fn interpolation_offsets(layout: CfaLayout, px: usize, py: usize, channel: usize) -> Vec<(isize, isize)> {
    let at = |dx: isize, dy: isize| {
        layout.channel_at((px as isize + dx + 2) as usize, (py as isize + dy + 2) as usize)
    };
    let ortho: Vec<_> = ORTHOGONAL
        .into_iter()
        .filter(|&(dx, dy)| at(dx, dy) == channel)
        .collect();
    if !ortho.is_empty() {
        return ortho;
    }
    DIAGONAL
        .into_iter()
        .filter(|&(dx, dy)| at(dx, dy) == channel)
        .collect()
}

/// Bilinear demosaic. Sampled channels keep their raw value; the other two are
/// the rounded mean of the 2 or 4 nearest same-channel samples. Borders mirror
/// the mosaic so every site sees a full neighborhood.
pub fn demosaic_bilinear(raw: &RawBayerFrame) -> Result<RgbFrame> {
    let (w, h) = (raw.width, raw.height);
    if w == 0 || h == 0 || w % 2 != 0 || h % 2 != 0 {
        return Err(Error::Dimension(format!(
            "Bayer frame must have even dimensions, got {w}x{h}"
        )));
    }
    if raw.samples.len() != w * h {
        return Err(Error::Dimension("sample count does not match dimensions".into()));
    }

    // offsets[phase][channel], phase = (y & 1) * 2 + (x & 1)
    let offsets: Vec<Vec<Vec<(isize, isize)>>> = (0..4)
        .map(|phase| {
            (0..3)
                .map(|c| interpolation_offsets(raw.layout, phase & 1, phase >> 1, c))
                .collect()
        })
        .collect();

    let mut planes: [Vec<u8>; 3] = [vec![0; w * h], vec![0; w * h], vec![0; w * h]];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let own = raw.layout.channel_at(x, y);
            let phase = (y & 1) * 2 + (x & 1);
            for (c, plane) in planes.iter_mut().enumerate() {
                plane[i] = if c == own {
                    raw.samples[i]
                } else {
                    let offs = &offsets[phase][c];
                    let sum: u32 = offs
                        .iter()
                        .map(|&(dx, dy)| {
                            let nx = reflect(x as isize + dx, w);
                            let ny = reflect(y as isize + dy, h);
                            raw.samples[ny * w + nx] as u32
                        })
                        .sum();
                    let n = offs.len() as u32;
                    ((sum + n / 2) / n) as u8
                };
            }
        }
    }
    Ok(RgbFrame {
        width: w,
        height: h,
        planes,
    })
}

/// Samples an RGB frame through a color filter array (the inverse of demosaicing
/// at sampled sites). Used to build synthetic raw captures.
pub fn mosaic(frame: &RgbFrame, layout: CfaLayout) -> Result<RawBayerFrame> {
    let (w, h) = (frame.width, frame.height);
    let samples = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| frame.planes[layout.channel_at(x, y)][y * w + x])
        .collect();
    RawBayerFrame::new(w, h, samples, layout)
}

/// Box-filter downsampling: each output pixel is the rounded mean of a
/// `factor`×`factor` block. Rows and columns that do not fill a block are dropped.
pub fn downsample(frame: &RgbFrame, factor: usize) -> Result<RgbFrame> {
    if factor == 0 {
        return Err(Error::Argument("downsample factor must be at least 1".into()));
    }
    if factor == 1 {
        return Ok(frame.clone());
    }
    let (ow, oh) = (frame.width / factor, frame.height / factor);
    if ow == 0 || oh == 0 {
        return Err(Error::Dimension(format!(
            "{}x{} frame is smaller than downsample factor {factor}",
            frame.width, frame.height
        )));
    }
    let area = (factor * factor) as u32;
    let planes = frame.planes.each_ref().map(|plane| {
        let mut out = Vec::with_capacity(ow * oh);
        for by in 0..oh {
            for bx in 0..ow {
                let mut sum = 0u32;
                for y in by * factor..(by + 1) * factor {
                    let row = &plane[y * frame.width + bx * factor..][..factor];
                    sum += row.iter().map(|&v| v as u32).sum::<u32>();
                }
                out.push(((sum + area / 2) / area) as u8);
            }
        }
        out
    });
    Ok(RgbFrame {
        width: ow,
        height: oh,
        planes,
    })
}

/// Per-channel gains that equalize channel means to their common average.
pub fn gray_world_gains(frame: &RgbFrame) -> Result<[f64; 3]> {
    if frame.width == 0 || frame.height == 0 {
        return Err(Error::Degenerate("empty frame".into()));
    }
    let means = frame.channel_means();
    if let Some(c) = means.iter().position(|&m| m == 0.0) {
        return Err(Error::Degenerate(format!(
            "channel {} has zero mean; gray-world gain undefined",
            ["R", "G", "B"][c]
        )));
    }
    let gray = means.iter().sum::<f64>() / 3.0;
    Ok(means.map(|m| gray / m))
}

/// Gray-world white balance: scales each channel by `mean(all) / mean(channel)`.
pub fn gray_world_balance(frame: &RgbFrame) -> Result<RgbFrame> {
    let gains = gray_world_gains(frame)?;
    let mut planes: [Vec<u8>; 3] = Default::default();
    for (c, out) in planes.iter_mut().enumerate() {
        *out = frame.planes[c]
            .iter()
            .map(|&v| (v as f64 * gains[c]).round().clamp(0.0, 255.0) as u8)
            .collect();
    }
    Ok(RgbFrame {
        width: frame.width,
        height: frame.height,
        planes,
    })
}

pub fn crop_roi(frame: &RgbFrame, roi: Roi) -> Result<RgbFrame> {
    roi.check_within(frame.width, frame.height)?;
    let planes = frame.planes.each_ref().map(|plane| {
        (roi.y..roi.y + roi.h)
            .flat_map(|y| plane[y * frame.width + roi.x..][..roi.w].iter().copied())
            .collect()
    });
    Ok(RgbFrame {
        width: roi.w,
        height: roi.h,
        planes,
    })
}

/// White-balance options for [`preprocess_frame`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WhiteBalance {
    #[default]
    GrayWorld,
    None,
}

impl FromStr for WhiteBalance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "grayworld" | "gray-world" => Ok(WhiteBalance::GrayWorld),
            "none" => Ok(WhiteBalance::None),
            other => Err(Error::Argument(format!("unknown white balance {other:?}"))),
        }
    }
}

/// Downsample followed by optional white balance.
pub fn preprocess_frame(frame: &RgbFrame, factor: usize, wb: WhiteBalance) -> Result<RgbFrame> {
    let small = downsample(frame, factor)?;
    match wb {
        WhiteBalance::GrayWorld => gray_world_balance(&small),
        WhiteBalance::None => Ok(small),
    }
}

/// Runs demosaic (for raw input), downsampling and white balance over a whole
/// capture. Frames are processed in parallel; output order follows input order.
pub fn preprocess_raw(raw: &RawSequence, factor: usize, wb: WhiteBalance) -> Result<FrameSequence> {
    let frames = match &raw.frames {
        RawFrames::Rgb(frames) => frames
            .par_iter()
            .map(|f| preprocess_frame(f, factor, wb))
            .collect::<Result<Vec<_>>>()?,
        RawFrames::Bayer(frames) => frames
            .par_iter()
            .map(|f| preprocess_frame(&demosaic_bilinear(f)?, factor, wb))
            .collect::<Result<Vec<_>>>()?,
        RawFrames::Gray(frames) => frames
            .par_iter()
            .map(|(w, h, data)| preprocess_frame(&RgbFrame::from_gray(*w, *h, data.clone())?, factor, wb))
            .collect::<Result<Vec<_>>>()?,
    };
    FrameSequence::new(frames, raw.fps, raw.source_id.clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorKind {
    Rgb,
    Bayer,
    Gray,
}

/// Contents of a frame directory's `meta.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub fps: f64,
    pub color: ColorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfa: Option<CfaLayout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RawFrames {
    Rgb(Vec<RgbFrame>),
    Bayer(Vec<RawBayerFrame>),
    /// `(width, height, samples)` per frame.
    Gray(Vec<(usize, usize, Vec<u8>)>),
}

impl RawFrames {
    pub fn len(&self) -> usize {
        match self {
            RawFrames::Rgb(f) => f.len(),
            RawFrames::Bayer(f) => f.len(),
            RawFrames::Gray(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A frame directory exactly as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSequence {
    pub fps: f64,
    pub source_id: String,
    pub frames: RawFrames,
}

pub fn read_meta(dir: &Path) -> Result<FrameMeta> {
    let path = dir.join(META_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingMetadata(path));
        }
        Err(e) => return Err(Error::io(&path, e)),
    };
    let meta: FrameMeta =
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    if !(meta.fps.is_finite() && meta.fps > 0.0) {
        return Err(Error::format(&path, format!("fps must be positive, got {}", meta.fps)));
    }
    if meta.color == ColorKind::Bayer && meta.cfa.is_none() {
        return Err(Error::format(&path, "color \"bayer\" requires a \"cfa\" field"));
    }
    Ok(meta)
}

/// Frame files of a directory (`*.ppm` / `*.pgm`) in lexical order.
pub fn list_frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if matches!(ext.as_deref(), Some("ppm" | "pgm")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn decode_pnm(path: &Path) -> Result<(usize, usize, ColorType, Vec<u8>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = PnmDecoder::new(BufReader::new(file))
        .map_err(|e| Error::UnsupportedFormat(format!("{}: {e}", path.display())))?;
    let (w, h) = decoder.dimensions();
    let color = decoder.color_type();
    if !matches!(color, ColorType::L8 | ColorType::Rgb8) {
        return Err(Error::UnsupportedFormat(format!(
            "{}: only 8-bit P5/P6 images are supported, got {color:?}",
            path.display()
        )));
    }
    let mut buf = vec![0; decoder.total_bytes() as usize];
    decoder
        .read_image(&mut buf)
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok((w as usize, h as usize, color, buf))
}

/// Reads a frame directory without any conversion.
pub fn load_raw(dir: &Path) -> Result<RawSequence> {
    let meta = read_meta(dir)?;
    let files = list_frame_files(dir)?;
    let decoded = files
        .par_iter()
        .map(|p| decode_pnm(p).map(|d| (p, d)))
        .collect::<Result<Vec<_>>>()?;

    if let Some((_, (w0, h0, _, _))) = decoded.first() {
        if let Some((p, (w, h, _, _))) = decoded.iter().find(|(_, (w, h, _, _))| w != w0 || h != h0) {
            return Err(Error::InconsistentDimensions(format!(
                "{} is {w}x{h}, expected {w0}x{h0}",
                p.display()
            )));
        }
    }
    let expect = match meta.color {
        ColorKind::Rgb => ColorType::Rgb8,
        ColorKind::Bayer | ColorKind::Gray => ColorType::L8,
    };
    if let Some((p, _)) = decoded.iter().find(|(_, (_, _, c, _))| *c != expect) {
        return Err(Error::UnsupportedFormat(format!(
            "{} does not match declared color {:?}",
            p.display(),
            meta.color
        )));
    }

    let frames = match meta.color {
        ColorKind::Rgb => RawFrames::Rgb(
            decoded
                .into_iter()
                .map(|(_, (w, h, _, data))| RgbFrame::from_interleaved(w, h, &data))
                .collect::<Result<_>>()?,
        ),
        ColorKind::Bayer => {
            let layout = meta.cfa.unwrap_or_default();
            RawFrames::Bayer(
                decoded
                    .into_iter()
                    .map(|(_, (w, h, _, data))| RawBayerFrame::new(w, h, data, layout))
                    .collect::<Result<_>>()?,
            )
        }
        ColorKind::Gray => RawFrames::Gray(
            decoded
                .into_iter()
                .map(|(_, (w, h, _, data))| (w, h, data))
                .collect(),
        ),
    };
    let source_id = meta.source_id.clone().unwrap_or_else(|| {
        dir.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    Ok(RawSequence {
        fps: meta.fps,
        source_id,
        frames,
    })
}

/// Loads a frame directory as RGB. Bayer data is demosaiced bilinearly and
/// single-channel data is replicated into three planes.
pub fn load_sequence(dir: &Path) -> Result<FrameSequence> {
    let raw = load_raw(dir)?;
    let frames = match raw.frames {
        RawFrames::Rgb(frames) => frames,
        RawFrames::Bayer(frames) => frames
            .par_iter()
            .map(demosaic_bilinear)
            .collect::<Result<_>>()?,
        RawFrames::Gray(frames) => frames
            .into_iter()
            .map(|(w, h, data)| RgbFrame::from_gray(w, h, data))
            .collect::<Result<_>>()?,
    };
    FrameSequence::new(frames, raw.fps, raw.source_id)
}

pub fn frame_file_name(index: usize, ext: &str) -> String {
    format!("frame_{:06}.{ext}", index + 1)
}

fn encode_pnm(width: usize, height: usize, data: &[u8], gray: bool) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    let (subtype, color) = if gray {
        (PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8)
    } else {
        (PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8)
    };
    PnmEncoder::new(&mut buf)
        .with_subtype(subtype)
        .write_image(data, width as u32, height as u32, color)
        .map_err(|e| Error::UnsupportedFormat(e.to_string()))?;
    Ok(buf.into_inner())
}

fn write_meta(dir: &Path, meta: &FrameMeta) -> Result<()> {
    let json = serde_json::to_vec_pretty(meta).expect("frame metadata serializes");
    write_atomic(&dir.join(META_FILE), &json)
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes an RGB sequence as `P6` frames plus `meta.json` with `color = "rgb"`.
pub fn write_sequence(dir: &Path, seq: &FrameSequence) -> Result<()> {
    prepare_dir(dir)?;
    seq.frames.par_iter().enumerate().try_for_each(|(i, f)| {
        let bytes = encode_pnm(f.width, f.height, &f.to_interleaved(), false)?;
        write_atomic(&dir.join(frame_file_name(i, "ppm")), &bytes)
    })?;
    write_meta(
        dir,
        &FrameMeta {
            fps: seq.fps,
            color: ColorKind::Rgb,
            cfa: None,
            source_id: Some(seq.source_id.clone()),
        },
    )
}

/// Writes raw Bayer mosaics as `P5` frames plus `meta.json` with `color = "bayer"`.
pub fn write_bayer_sequence(
    dir: &Path,
    frames: &[RawBayerFrame],
    fps: f64,
    source_id: &str,
) -> Result<()> {
    prepare_dir(dir)?;
    let layout = frames.first().map(|f| f.layout).unwrap_or_default();
    frames.par_iter().enumerate().try_for_each(|(i, f)| {
        let bytes = encode_pnm(f.width, f.height, &f.samples, true)?;
        write_atomic(&dir.join(frame_file_name(i, "pgm")), &bytes)
    })?;
    write_meta(
        dir,
        &FrameMeta {
            fps,
            color: ColorKind::Bayer,
            cfa: Some(layout),
            source_id: Some(source_id.to_string()),
        },
    )
}
