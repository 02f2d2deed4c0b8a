//! Signal-processing primitives: Butterworth band-pass design and filtering,
//! Hann windows and zero-padded FFT magnitude spectra.
//!
//! Band-pass filters are designed from the analog Butterworth low-pass
//! prototype, moved to a band-pass with the standard `s -> (s² + W0²) / (B s)`
//! substitution and mapped to discrete time with a pre-warped bilinear
//! transform. A prototype of order `n` yields `n` second-order sections
//! (a transfer function of order `2n`); the sections are what the filters run,
//! and the expanded `b`/`a` polynomials are kept for inspection.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One second-order section, `a[0] == 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + z_inv * self.b[1] + z2 * self.b[2])
            / (self.a[0] + z_inv * self.a[1] + z2 * self.a[2])
    }

    /// Direct-form II transposed state after settling on a constant unit input.
    fn steady_state(&self) -> [f64; 2] {
        let dc = (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[1] + self.a[2]);
        let z2 = self.b[2] - self.a[2] * dc;
        let z1 = self.b[1] - self.a[1] * dc + z2;
        [z1, z2]
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[1] + self.a[2])
    }

    /// Filters `x` in place starting from state `z`.
    fn run(&self, x: &mut [f64], mut z: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + z[0];
            z[0] = b1 * input - a1 * y + z[1];
            z[1] = b2 * input - a2 * y;
            *v = y;
        }
    }
}

/// A designed Butterworth band-pass filter.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterSpec {
    /// Order of the low-pass prototype.
    pub order: usize,
    pub band_hz: (f64, f64),
    pub fs: f64,
    pub sections: Vec<Biquad>,
    /// Expanded numerator of the full transfer function.
    pub b: Vec<f64>,
    /// Expanded denominator, `a[0] == 1`.
    pub a: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FilterSpecJson {
    order: usize,
    band_hz: [f64; 2],
    fs: f64,
    b: Vec<f64>,
    a: Vec<f64>,
}

impl Serialize for FilterSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FilterSpecJson {
            order: self.order,
            band_hz: [self.band_hz.0, self.band_hz.1],
            fs: self.fs,
            b: self.b.clone(),
            a: self.a.clone(),
        }
        .serialize(s)
    }
}

impl FilterSpec {
    /// Complex response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / self.fs);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).norm()
    }

    /// Poles of every section.
    pub fn poles(&self) -> Vec<Complex64> {
        self.sections
            .iter()
            .flat_map(|s| {
                let (a1, a2) = (s.a[1], s.a[2]);
                let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
                [(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
            })
            .collect()
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }

    /// Samples needed for the slowest mode to decay by `1e-9`.
    fn settle_len(&self) -> usize {
        let r = self.poles().iter().map(|p| p.norm()).fold(0.0, f64::max);
        if r <= 0.0 {
            return 1;
        }
        (1e-9f64.ln() / r.ln()).ceil().max(1.0) as usize
    }
}

fn poly_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, a) in p.iter().enumerate() {
        for (j, b) in q.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

fn conjugate_section(z: Complex64) -> Biquad {
    Biquad {
        b: [1.0, 0.0, -1.0],
        a: [1.0, -2.0 * z.re, z.norm_sqr()],
    }
}

fn validate_band(low_hz: f64, high_hz: f64, fs: f64) -> Result<()> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::Argument(format!("sampling rate must be positive, got {fs}")));
    }
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0) {
        return Err(Error::Argument(format!(
            "band ({low_hz}, {high_hz}) Hz must satisfy 0 < low < high < fs/2 = {}",
            fs / 2.0
        )));
    }
    Ok(())
}

/// Designs a Butterworth band-pass of prototype order `order` with -3 dB
/// edges at `low_hz` and `high_hz`.
pub fn butterworth_bandpass(order: usize, low_hz: f64, high_hz: f64, fs: f64) -> Result<FilterSpec> {
    if order == 0 {
        return Err(Error::Argument("filter order must be at least 1".into()));
    }
    validate_band(low_hz, high_hz, fs)?;

    let k = 2.0 * fs;
    let w_lo = k * (PI * low_hz / fs).tan();
    let w_hi = k * (PI * high_hz / fs).tan();
    let bw = w_hi - w_lo;
    let w0_sq = w_lo * w_hi;

    // Only prototype poles with Im >= 0 are visited; the conjugates produce the
    // conjugate band-pass poles. Every section has one zero at z = 1 and one
    // at z = -1.
    let n = order;
    let mut sections = Vec::with_capacity(n);
    let mut real_poles = Vec::new();
    for i in 0..n {
        let theta = PI * (2 * i + n + 1) as f64 / (2 * n) as f64;
        let p = Complex64::from_polar(1.0, theta);
        if p.im < -1e-12 {
            continue;
        }
        let half = p * bw / 2.0;
        let disc = (half * half - w0_sq).sqrt();
        let to_z = |s: Complex64| (k + s) / (k - s);
        let pair = [to_z(half + disc), to_z(half - disc)];
        if p.im.abs() <= 1e-12 {
            // Real prototype pole: a conjugate pair or two real poles.
            let [z1, z2] = pair;
            if z1.im.abs() > 1e-12 {
                sections.push(conjugate_section(z1));
            } else {
                real_poles.extend([z1.re, z2.re]);
            }
        } else {
            // Each pole pairs with its conjugate from the conjugate prototype pole.
            sections.extend(pair.map(conjugate_section));
        }
    }
    for pair in real_poles.chunks(2) {
        sections.push(Biquad {
            b: [1.0, 0.0, -1.0],
            a: [1.0, -(pair[0] + pair[1]), pair[0] * pair[1]],
        });
    }
    debug_assert_eq!(sections.len(), n);
    sections.sort_by(|x, y| x.a[2].total_cmp(&y.a[2]));

    // Unit gain at the digital image of the analog center frequency.
    let f_center = fs / PI * (w0_sq.sqrt() / k).atan();
    let mut spec = FilterSpec {
        order,
        band_hz: (low_hz, high_hz),
        fs,
        sections,
        b: Vec::new(),
        a: Vec::new(),
    };
    let gain = spec.magnitude(f_center);
    for v in spec.sections[0].b.iter_mut() {
        *v /= gain;
    }
    let (b, a) = spec
        .sections
        .iter()
        .fold((vec![1.0], vec![1.0]), |(b, a), s| (poly_mul(&b, &s.b), poly_mul(&a, &s.a)));
    spec.b = b;
    spec.a = a;
    Ok(spec)
}

/// Causal filtering from a zero initial state.
pub fn filter_forward(signal: &[f64], spec: &FilterSpec) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(Error::InsufficientData("cannot filter an empty signal".into()));
    }
    let mut y = signal.to_vec();
    for s in &spec.sections {
        s.run(&mut y, [0.0, 0.0]);
    }
    Ok(y)
}

/// Runs the cascade starting from the steady state for a constant input of `x0`.
fn filter_steady(x: &mut [f64], spec: &FilterSpec) {
    let mut level = x[0];
    for s in &spec.sections {
        let zi = s.steady_state().map(|v| v * level);
        s.run(x, zi);
        level *= s.dc_gain();
    }
}

/// Padding used by [`filter_zero_phase`] for a signal of `len` samples.
pub fn zero_phase_padding(spec: &FilterSpec, len: usize) -> usize {
    (3 * 2 * spec.order).max(spec.settle_len()).min(len.saturating_sub(1))
}

/// Zero-phase (forward-backward) filtering.
///
/// The signal is extended at both ends by odd reflection, run forward and
/// backward through the cascade with steady-state initial conditions, and
/// cropped back to its original length. The result is averaged with the same
/// pass applied to the reversed signal, so reversing the input reverses the
/// output exactly even when the record is too short for edge transients to die out.
pub fn filter_zero_phase(signal: &[f64], spec: &FilterSpec) -> Result<Vec<f64>> {
    let n = signal.len();
    if n <= 3 * spec.order {
        return Err(Error::TooShort(format!(
            "zero-phase filtering needs more than {} samples, got {n}",
            3 * spec.order
        )));
    }
    let forward = forward_backward(signal, spec);
    let mut reversed: Vec<f64> = signal.iter().rev().copied().collect();
    reversed = forward_backward(&reversed, spec);
    reversed.reverse();
    Ok(forward.iter().zip(&reversed).map(|(a, b)| 0.5 * (a + b)).collect())
}

fn forward_backward(signal: &[f64], spec: &FilterSpec) -> Vec<f64> {
    let n = signal.len();
    let pad = zero_phase_padding(spec, n);
    let (first, last) = (signal[0], signal[n - 1]);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - signal[i]));
    ext.extend_from_slice(signal);
    ext.extend((1..=pad).map(|i| 2.0 * last - signal[n - 1 - i]));

    filter_steady(&mut ext, spec);
    ext.reverse();
    filter_steady(&mut ext, spec);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Symmetric Hann window, `w[k] = 0.5 (1 - cos(2πk / (n - 1)))`.
pub fn hann_window(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Argument(format!("Hann window needs n >= 2, got {n}")));
    }
    let m = (n - 1) as f64;
    Ok((0..n)
        .map(|k| 0.5 * (1.0 - (2.0 * PI * k as f64 / m).cos()))
        .collect())
}

/// One-sided magnitude spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub freqs_hz: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub nfft: usize,
}

impl Spectrum {
    /// Bin spacing in Hz.
    pub fn resolution(&self) -> f64 {
        self.freqs_hz.get(1).copied().unwrap_or(0.0)
    }

    /// Indices of bins whose frequency lies in `[lo_hz, hi_hz]`.
    pub fn band_bins(&self, lo_hz: f64, hi_hz: f64) -> std::ops::Range<usize> {
        let start = self.freqs_hz.partition_point(|&f| f < lo_hz);
        let end = self.freqs_hz.partition_point(|&f| f <= hi_hz);
        start..end.max(start)
    }

    /// Bin with the largest magnitude inside `[lo_hz, hi_hz]`; the lowest
    /// frequency wins ties.
    pub fn peak_in_band(&self, lo_hz: f64, hi_hz: f64) -> Option<usize> {
        let range = self.band_bins(lo_hz, hi_hz);
        range
            .clone()
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if self.magnitudes[b] >= self.magnitudes[i] => Some(b),
                _ => Some(i),
            })
    }
}

/// Smallest power of two that is at least `max(4096, len)`.
pub fn default_nfft(len: usize) -> usize {
    len.max(4096).next_power_of_two()
}

/// Magnitudes of the zero-padded real DFT for bins `0..=nfft/2`.
pub fn magnitude_spectrum(signal: &[f64], fs: f64, nfft: usize) -> Result<Spectrum> {
    if !nfft.is_power_of_two() || nfft < 2 {
        return Err(Error::Argument(format!("nfft must be a power of two, got {nfft}")));
    }
    if nfft < signal.len() {
        return Err(Error::Argument(format!(
            "nfft {nfft} is smaller than the signal length {}",
            signal.len()
        )));
    }
    let mut buf: Vec<Complex64> = signal
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(nfft)
        .collect();
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
    let half = nfft / 2;
    Ok(Spectrum {
        freqs_hz: (0..=half).map(|k| k as f64 * fs / nfft as f64).collect(),
        magnitudes: buf[..=half].iter().map(|c| c.norm()).collect(),
        nfft,
    })
}
