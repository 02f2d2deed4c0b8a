use std::fs;

use anyhow::{Context, Result};
use rppg_core::clips::{export_clips, ClipConfig};
use rppg_core::dsp::{butterworth_bandpass, filter_zero_phase};
use rppg_core::eval::{align, metrics, resample_reference, roi_sweep, SweepConfig};
use rppg_core::frames::{
    load_raw, load_sequence, mosaic, preprocess_raw, write_bayer_sequence, write_sequence, RawBayerFrame,
    RawFrames, Roi,
};
use rppg_core::hr::{amplitude_filter, estimate_hr, AmplitudeFilterParams, HrConfig};
use rppg_core::io::{
    read_hr_csv, read_pulse_csv, read_reference_csv, write_ba_csv, write_corr_csv, write_histogram_csv,
    write_hr_csv, write_labels, write_pulse_csv, write_report_json, write_trace_csv, PulseMeta, ReportJson,
};
use rppg_core::rppg::{generate_sgt, PulseSignal};
use rppg_core::synth::{generate, truth_hr, PulseRate, SynthConfig};
use rppg_core::traces::spatial_average;

use crate::{
    ClipsArgs, EvalArgs, Floats, HrArgs, PreprocessArgs, SgtArgs, SweepArgs, SynthArgs, UsageError,
};

pub fn preprocess(a: &PreprocessArgs) -> Result<()> {
    let mut raw = load_raw(&a.input)?;
    if let Some(layout) = a.cfa {
        match &mut raw.frames {
            RawFrames::Bayer(frames) => frames.iter_mut().for_each(|f| f.layout = layout),
            _ => eprintln!("warning: --cfa ignored, {} is not a Bayer capture", a.input.display()),
        }
    }
    let seq = preprocess_raw(&raw, a.downsample, a.white_balance)?;
    write_sequence(&a.output, &seq)?;
    let (w, h) = seq.dims().unwrap_or((0, 0));
    eprintln!("wrote {} frames ({w}x{h}) to {}", seq.len(), a.output.display());
    Ok(())
}

pub fn sgt(a: &SgtArgs) -> Result<()> {
    let seq = load_sequence(&a.input)?;
    if let Some(path) = &a.trace {
        write_trace_csv(path, &spatial_average(&seq, a.roi)?)?;
    }
    let labels = generate_sgt(&seq, a.roi, a.method, a.band.pair())?;
    write_labels(&a.output, &labels)?;
    eprintln!("wrote {} labels to {}", labels.pulse.len(), a.output.display());
    Ok(())
}

pub fn hr(a: &HrArgs) -> Result<()> {
    let (pulse, _) = read_pulse_csv(&a.input)?;
    let pulse = if a.no_post_filter {
        pulse
    } else {
        let (lo, hi) = a.post_band.pair();
        let spec = butterworth_bandpass(a.post_order, lo, hi, pulse.fps).context("post-processing band-pass")?;
        PulseSignal::new(filter_zero_phase(&pulse.samples, &spec)?, pulse.fps, pulse.t0)?
    };
    let config = HrConfig {
        window_s: a.window,
        stride_s: a.stride,
        band_bpm: a.band_bpm.pair(),
    };
    let mut series = estimate_hr(&pulse, &config)?;
    if !a.no_filter {
        let params = AmplitudeFilterParams {
            context_s: a.context,
            z_max: a.z_max,
            min_snr_db: a.min_snr_db,
            min_rel_spread: a.min_rel_spread,
        };
        let outcome = amplitude_filter(&series, &pulse, config.band_bpm, &params)?;
        if outcome.all_invalid {
            eprintln!("warning: every window was rejected by the amplitude filter");
        } else if !outcome.rejected.is_empty() {
            eprintln!("rejected {} of {} windows", outcome.rejected.len(), series.len());
        }
        series = outcome.series;
    }
    write_hr_csv(&a.output, &series)?;
    eprintln!("wrote {} windows to {}", series.len(), a.output.display());
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    if !(a.tolerance >= 0.0) {
        return Err(UsageError(format!("--tolerance must be non-negative, got {}", a.tolerance)).into());
    }
    let pred = read_hr_csv(&a.pred, a.window)?;
    let reference = if a.no_resample {
        read_hr_csv(&a.reference, a.window)?
    } else {
        resample_reference(&read_reference_csv(&a.reference)?, &pred)?
    };
    let pairs = align(&pred, &reference, a.tolerance)?;
    let report = metrics(&pairs, a.allow_constant)?;
    fs::create_dir_all(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
    write_report_json(&a.output.join("report.json"), &report)?;
    write_ba_csv(&a.output.join("bland_altman.csv"), &report)?;
    write_corr_csv(&a.output.join("correlation.csv"), &pairs)?;
    println!("{}", serde_json::to_string_pretty(&ReportJson::from(&report))?);
    Ok(())
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let seq = load_sequence(&a.input)?;
    let config = SweepConfig {
        method: a.method,
        sgt_band_hz: a.band.pair(),
        hr: HrConfig {
            window_s: a.window,
            stride_s: a.stride,
            band_bpm: a.band_bpm.pair(),
        },
    };
    let result = roi_sweep(&seq, a.roi, &a.increments.0, &config)?;
    write_histogram_csv(&a.output, &result.histogram)?;
    let n = result.relative_changes_bpm.len();
    let within = result.relative_changes_bpm.iter().filter(|d| d.abs() <= 5.0).count();
    println!(
        "increments {:?}: {n} window changes, {within} within +-5 bpm ({:.1} %)",
        result.increments_px,
        100.0 * within as f64 / n.max(1) as f64
    );
    Ok(())
}

fn rgb8(v: &Floats<3>, flag: &str) -> Result<[u8; 3]> {
    let mut out = [0u8; 3];
    for (o, &x) in out.iter_mut().zip(&v.0) {
        if !(0.0..=255.0).contains(&x) || x.fract() != 0.0 {
            return Err(UsageError(format!("--{flag} needs integer levels in 0..=255, got {v}")).into());
        }
        *o = x as u8;
    }
    Ok(out)
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let config = SynthConfig {
        width: a.width,
        height: a.height,
        fps: a.fps,
        duration_s: a.duration,
        skin_region: a.skin,
        base_rgb: rgb8(&a.base_rgb, "base-rgb")?,
        background_rgb: rgb8(&a.background, "background")?,
        pulse_bpm: match &a.chirp {
            Some(c) => PulseRate::Chirp { start: c.0[0], end: c.0[1] },
            None => PulseRate::Constant(a.bpm),
        },
        pulse_amp_rgb: a.amp_rgb.0,
        noise_sigma: a.noise,
        flicker: a.flicker.as_ref().map(Floats::pair),
        jitter_px: a.jitter,
        seed: a.seed,
    };
    let (seq, truth) = generate(&config)?;
    if a.bayer {
        let raw = seq
            .frames
            .iter()
            .map(|f| mosaic(f, a.cfa))
            .collect::<rppg_core::Result<Vec<RawBayerFrame>>>()?;
        write_bayer_sequence(&a.output, &raw, seq.fps, &seq.source_id)?;
    } else {
        write_sequence(&a.output, &seq)?;
    }
    let meta = PulseMeta {
        method: None,
        band_hz: None,
        roi: Some(config.skin_region),
        fps: config.fps,
        source_id: Some(seq.source_id.clone()),
    };
    write_pulse_csv(&a.output.join("truth_pulse.csv"), &truth.pulse, &meta)?;
    match truth_hr(&config, a.window, a.stride) {
        Ok(hr) => write_hr_csv(&a.output.join("truth_hr.csv"), &hr)?,
        Err(rppg_core::Error::TooShort(_)) => {
            eprintln!("warning: recording shorter than one {} s window, no truth_hr.csv", a.window)
        }
        Err(e) => return Err(e.into()),
    }
    eprintln!("wrote {} frames to {}", seq.len(), a.output.display());
    Ok(())
}

pub fn clips(a: &ClipsArgs) -> Result<()> {
    let seq = load_sequence(&a.frames)?;
    let (labels, meta) = read_pulse_csv(&a.labels)?;
    let roi = a.roi.or_else(|| meta.as_ref().and_then(|m| m.roi));
    let config = ClipConfig {
        clip_len: a.clip_len,
        stride: a.stride,
        size: a.size,
        resize: a.resize,
        roi: roi.or_else(|| seq.dims().map(|(w, h)| Roi::full(w, h))),
        train_ratio: a.train_ratio,
        seed: a.seed,
    };
    let export = export_clips(&seq, &labels, meta.as_ref(), &a.output, &config)?;
    if export.clips.is_empty() {
        eprintln!(
            "warning: {} frames is fewer than one {}-frame clip; no clips written",
            seq.len(),
            a.clip_len
        );
        return Ok(());
    }
    println!(
        "{} clips ({} train, {} val), {} trailing frames unused",
        export.clips.len(),
        export.split.train.len(),
        export.split.val.len(),
        export.unused_frames
    );
    Ok(())
}
