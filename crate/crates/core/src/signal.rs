//! Sampled-waveform primitives shared by the whole link.
//!
//! Every waveform in the simulator is treated as one period of a periodic
//! signal: filters, resampling and the Hilbert transform all operate on the
//! full-length DFT. A frame of `N` symbols therefore has no edges, and rate
//! changes that keep an integer number of samples per frame are exact.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Forward DFT in place, no normalization.
pub(crate) fn fft_in_place(buf: &mut [Complex64]) {
    if buf.len() > 1 {
        plan(buf.len(), false).process(buf);
    }
}

/// Inverse DFT in place, normalized by `1/N`.
pub(crate) fn ifft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    if n > 1 {
        plan(n, true).process(buf);
        let k = 1.0 / n as f64;
        buf.iter_mut().for_each(|x| *x *= k);
    }
}

/// Signed frequency of DFT bin `k` for a length-`n` transform at `rate_hz`.
/// For even `n` the Nyquist bin maps to `-rate/2`.
pub(crate) fn bin_freq(k: usize, n: usize, rate_hz: f64) -> f64 {
    let signed = if k < n.div_ceil(2) {
        k as f64
    } else {
        k as f64 - n as f64
    };
    signed * rate_hz / n as f64
}

/// Uniformly sampled complex waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<Complex64>,
    sample_rate_hz: f64,
}

impl Waveform {
    pub fn new(samples: Vec<Complex64>, sample_rate_hz: f64) -> Result<Self> {
        check_rate(sample_rate_hz)?;
        Ok(Waveform {
            samples,
            sample_rate_hz,
        })
    }

    pub fn from_real(samples: &[f64], sample_rate_hz: f64) -> Result<Self> {
        Waveform::new(
            samples.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            sample_rate_hz,
        )
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Mean of `|x|²`; zero for an empty waveform.
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }

    /// New waveform at the same rate.
    pub fn with_samples(&self, samples: Vec<Complex64>) -> Waveform {
        Waveform {
            samples,
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    pub fn scaled(&self, k: f64) -> Waveform {
        self.with_samples(self.samples.iter().map(|&x| x * k).collect())
    }

    /// Real parts as a [`RealWaveform`].
    pub fn re(&self) -> RealWaveform {
        RealWaveform {
            samples: self.samples.iter().map(|x| x.re).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    pub(crate) fn non_empty(&self) -> Result<()> {
        if self.samples.is_empty() {
            Err(Error::EmptyWaveform)
        } else {
            Ok(())
        }
    }
}

/// Uniformly sampled real waveform (photocurrents, ADC output).
#[derive(Debug, Clone, PartialEq)]
pub struct RealWaveform {
    samples: Vec<f64>,
    sample_rate_hz: f64,
}

impl RealWaveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        check_rate(sample_rate_hz)?;
        Ok(RealWaveform {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.samples.iter().sum::<f64>() / self.samples.len() as f64
        }
    }

    pub fn with_samples(&self, samples: Vec<f64>) -> RealWaveform {
        RealWaveform {
            samples,
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Adds a constant to every sample.
    pub fn offset(&self, dc: f64) -> RealWaveform {
        self.with_samples(self.samples.iter().map(|&x| x + dc).collect())
    }

    pub fn to_complex(&self) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveRate(rate))
    }
}

pub(crate) fn mean_power(x: &[Complex64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64
    }
}

/// Two-sided power spectral density, DC centered.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freq_hz: Vec<f64>,
    /// dB relative to unit power per Hz.
    pub psd_db_hz: Vec<f64>,
}

/// Floor applied before taking logarithms of a PSD, in linear units.
const PSD_FLOOR: f64 = 1e-45;

impl Spectrum {
    pub fn len(&self) -> usize {
        self.freq_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq_hz.is_empty()
    }

    pub fn resolution_hz(&self) -> f64 {
        if self.freq_hz.len() < 2 {
            0.0
        } else {
            self.freq_hz[1] - self.freq_hz[0]
        }
    }

    /// Linear PSD values.
    pub fn psd_linear(&self) -> Vec<f64> {
        self.psd_db_hz.iter().map(|&d| 10f64.powf(d / 10.0)).collect()
    }

    /// Power integrated over bins with `lo_hz <= f < hi_hz`.
    pub fn band_power(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        let df = self.resolution_hz();
        self.freq_hz
            .iter()
            .zip(&self.psd_db_hz)
            .filter(|(&f, _)| f >= lo_hz && f < hi_hz)
            .map(|(_, &d)| 10f64.powf(d / 10.0) * df)
            .sum()
    }

    /// Total integrated power.
    pub fn total_power(&self) -> f64 {
        self.band_power(f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Index and frequency of the largest bin.
    pub fn peak(&self) -> (usize, f64) {
        let (i, _) = self
            .psd_db_hz
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &v)| {
                    if v > acc.1 {
                        (i, v)
                    } else {
                        acc
                    }
                },
            );
        (i, self.freq_hz[i])
    }
}

/// Root-raised-cosine pulse description.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RrcSpec {
    pub rolloff_beta: f64,
    pub samples_per_symbol: usize,
    pub span_symbols: usize,
}

impl RrcSpec {
    pub fn new(rolloff_beta: f64, samples_per_symbol: usize, span_symbols: usize) -> Result<Self> {
        let spec = RrcSpec {
            rolloff_beta,
            samples_per_symbol,
            span_symbols,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rolloff_beta) {
            return Err(Error::InvalidRolloff(self.rolloff_beta));
        }
        if self.samples_per_symbol < 2 {
            return Err(Error::InvalidParameter(format!(
                "samples_per_symbol must be >= 2, got {}",
                self.samples_per_symbol
            )));
        }
        if self.span_symbols < 16 || !self.span_symbols.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "span_symbols must be an even number >= 16, got {}",
                self.span_symbols
            )));
        }
        Ok(())
    }

    /// Occupied two-sided bandwidth for a given symbol rate.
    pub fn occupied_bandwidth_hz(&self, baud_hz: f64) -> f64 {
        baud_hz * (1.0 + self.rolloff_beta)
    }
}

/// Raised-cosine spectrum (peak 1) at frequency `f_hz`.
pub fn raised_cosine_spectrum(f_hz: f64, baud_hz: f64, beta: f64) -> f64 {
    let f = f_hz.abs();
    let lo = 0.5 * (1.0 - beta) * baud_hz;
    let hi = 0.5 * (1.0 + beta) * baud_hz;
    if f < lo {
        1.0
    } else if f > hi {
        0.0
    } else if beta == 0.0 {
        // band edge of the brick-wall limit
        0.5
    } else {
        0.5 * (1.0 + (PI / (beta * baud_hz) * (f - lo)).cos())
    }
}

/// Root-raised-cosine amplitude response (peak 1).
pub fn rrc_amplitude(f_hz: f64, baud_hz: f64, beta: f64) -> f64 {
    raised_cosine_spectrum(f_hz, baud_hz, beta).sqrt()
}

/// Time-domain RRC taps sampled at `samples_per_symbol`, spanning
/// `span_symbols` symbols (length `span * sps + 1`), unit energy.
pub fn rrc_taps(spec: &RrcSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let sps = spec.samples_per_symbol as f64;
    let beta = spec.rolloff_beta;
    let half = (spec.span_symbols * spec.samples_per_symbol / 2) as isize;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|n| rrc_impulse(n as f64 / sps, beta))
        .collect();
    let energy = taps.iter().map(|t| t * t).sum::<f64>().sqrt();
    taps.iter_mut().for_each(|t| *t /= energy);
    Ok(taps)
}

/// Continuous RRC impulse response, `t` in symbol periods.
fn rrc_impulse(t: f64, beta: f64) -> f64 {
    if t == 0.0 {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    if beta > 0.0 && ((4.0 * beta * t).abs() - 1.0).abs() < 1e-12 {
        let a = PI / (4.0 * beta);
        return beta / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    let num = (PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos();
    let den = PI * t * (1.0 - (4.0 * beta * t).powi(2));
    num / den
}

/// Circular filtering with an arbitrary frequency response `h(f)`.
pub fn filter_frequency<F>(w: &Waveform, h: F) -> Result<Waveform>
where
    F: Fn(f64) -> Complex64,
{
    filter_and_resample(w, h, w.sample_rate_hz())
}

/// Applies `h(f)` and changes the rate in a single DFT pass. The output
/// keeps the frame duration: its length is `round(N * new/old)` and its rate
/// is the one implied by that length.
pub fn filter_and_resample<F>(w: &Waveform, h: F, new_rate_hz: f64) -> Result<Waveform>
where
    F: Fn(f64) -> Complex64,
{
    w.non_empty()?;
    check_rate(new_rate_hz)?;
    let n = w.len();
    let rate = w.sample_rate_hz();
    let m = ((n as f64) * new_rate_hz / rate).round().max(1.0) as usize;

    let mut spec = w.samples().to_vec();
    fft_in_place(&mut spec);
    for (k, x) in spec.iter_mut().enumerate() {
        *x *= h(bin_freq(k, n, rate));
    }
    let mut out = if m == n { spec } else { respace_spectrum(&spec, m) };
    ifft_in_place(&mut out);
    let scale = m as f64 / n as f64;
    if m != n {
        out.iter_mut().for_each(|x| *x *= scale);
    }
    Waveform::new(out, rate * m as f64 / n as f64)
}

/// Moves a length-`n` spectrum onto a length-`m` grid with the same bin
/// spacing, truncating or zero-padding the high frequencies. An input
/// Nyquist bin is split evenly between `±n/2` when growing; an output
/// Nyquist bin is left empty when shrinking.
fn respace_spectrum(x: &[Complex64], m: usize) -> Vec<Complex64> {
    let n = x.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut y = vec![zero; m];
    y[0] = x[0];
    let kp = ((n - 1) / 2).min((m - 1) / 2);
    for k in 1..=kp {
        y[k] = x[k];
        y[m - k] = x[n - k];
    }
    if m > n && n.is_multiple_of(2) && n >= 2 {
        let nyq = x[n / 2] * 0.5;
        y[n / 2] += nyq;
        y[m - n / 2] += nyq;
    }
    y
}

/// Smallest integer `>= n` whose only prime factors are 2, 3 and 5.
/// Transforms of such lengths are several times faster than lengths with
/// large prime factors.
pub fn fast_len(n: usize) -> usize {
    let mut best = usize::MAX;
    let mut p2 = 1usize;
    while p2 < 2 * n.max(1) {
        let mut p3 = p2;
        while p3 < 2 * n.max(1) {
            let mut p5 = p3;
            while p5 < n {
                p5 *= 5;
            }
            best = best.min(p5);
            p3 *= 3;
        }
        p2 *= 2;
    }
    best
}

/// Rational-ratio resampling by DFT zero-padding or truncation.
///
/// Content below the smaller of the two Nyquist frequencies is preserved.
/// When `new_rate_hz` does not give an integer number of samples over the
/// frame, the nearest integer length is used and the reported rate follows
/// from it.
pub fn resample(w: &Waveform, new_rate_hz: f64) -> Result<Waveform> {
    w.non_empty()?;
    check_rate(new_rate_hz)?;
    let m = ((w.len() as f64) * new_rate_hz / w.sample_rate_hz()).round() as usize;
    if m == w.len() {
        return Ok(w.clone());
    }
    filter_and_resample(w, |_| Complex64::new(1.0, 0.0), new_rate_hz)
}

/// Real-valued variant of [`resample`].
pub fn resample_real(w: &RealWaveform, new_rate_hz: f64) -> Result<RealWaveform> {
    let out = resample(&w.to_complex(), new_rate_hz)?;
    Ok(out.re())
}

/// FFT-based Hilbert transform.
///
/// Positive-frequency bins are multiplied by `-j`, negative ones by `+j`;
/// DC and (for even lengths) Nyquist are zeroed. `hilbert(cos) = sin`.
pub fn hilbert(x: &[f64]) -> Result<Vec<f64>> {
    const MIN_LEN: usize = 8;
    if x.len() < MIN_LEN {
        return Err(Error::TooShort {
            needed: MIN_LEN,
            got: x.len(),
        });
    }
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut buf);
    let pos_end = n.div_ceil(2); // bins 1..pos_end are positive
    buf[0] = Complex64::new(0.0, 0.0);
    for (k, v) in buf.iter_mut().enumerate().skip(1) {
        if k < pos_end {
            *v = Complex64::new(v.im, -v.re);
        } else if n.is_multiple_of(2) && k == n / 2 {
            *v = Complex64::new(0.0, 0.0);
        } else {
            *v = Complex64::new(-v.im, v.re);
        }
    }
    ifft_in_place(&mut buf);
    Ok(buf.into_iter().map(|v| v.re).collect())
}

/// Welch PSD estimate: Hann window, 50 % overlap, two-sided, DC centered.
///
/// Normalized so that summing the linear PSD times the bin width returns
/// the mean power of the input.
pub fn psd(w: &Waveform, segment_len: usize) -> Result<Spectrum> {
    if segment_len < 2 || !segment_len.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "segment length must be a power of two >= 2, got {segment_len}"
        )));
    }
    if w.len() < segment_len {
        return Err(Error::TooShort {
            needed: segment_len,
            got: w.len(),
        });
    }
    let fs = w.sample_rate_hz();
    let window: Vec<f64> = (0..segment_len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / segment_len as f64).cos())
        .collect();
    let window_energy: f64 = window.iter().map(|v| v * v).sum();
    let hop = segment_len / 2;
    let n_seg = (w.len() - segment_len) / hop + 1;

    let mut acc = vec![0.0f64; segment_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); segment_len];
    for s in 0..n_seg {
        let seg = &w.samples()[s * hop..s * hop + segment_len];
        for ((b, &x), &wv) in buf.iter_mut().zip(seg).zip(&window) {
            *b = x * wv;
        }
        fft_in_place(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }
    let norm = 1.0 / (n_seg as f64 * fs * window_energy);
    let half = segment_len / 2;
    let mut freq_hz = Vec::with_capacity(segment_len);
    let mut psd_db_hz = Vec::with_capacity(segment_len);
    // bins half..N are the negative frequencies
    for i in 0..segment_len {
        let k = (i + half) % segment_len;
        freq_hz.push((i as f64 - half as f64) * fs / segment_len as f64);
        psd_db_hz.push(10.0 * (acc[k] * norm).max(PSD_FLOOR).log10());
    }
    Ok(Spectrum { freq_hz, psd_db_hz })
}

/// Exact power of `w` within `lo_hz <= f < hi_hz`, from the full-length DFT.
pub fn band_power(w: &Waveform, lo_hz: f64, hi_hz: f64) -> Result<f64> {
    w.non_empty()?;
    let n = w.len();
    let mut spec = w.samples().to_vec();
    fft_in_place(&mut spec);
    let norm = 1.0 / (n as f64 * n as f64);
    Ok(spec
        .iter()
        .enumerate()
        .filter(|(k, _)| {
            let f = bin_freq(*k, n, w.sample_rate_hz());
            f >= lo_hz && f < hi_hz
        })
        .map(|(_, x)| x.norm_sqr() * norm)
        .sum())
}

/// Multiplies by `exp(j 2π f t)`, `t = n / rate`.
pub fn frequency_shift(w: &Waveform, shift_hz: f64) -> Waveform {
    let step = 2.0 * PI * shift_hz / w.sample_rate_hz();
    w.with_samples(
        w.samples()
            .iter()
            .enumerate()
            .map(|(n, &x)| x * Complex64::from_polar(1.0, step * n as f64))
            .collect(),
    )
}

/// Complex amplitude of the tone at `freq_hz`, estimated by projecting onto
/// `exp(j2π f t)` over a whole number of tone periods.
pub fn project_tone(w: &Waveform, freq_hz: f64) -> Complex64 {
    let n = w.len();
    if n == 0 {
        return Complex64::new(0.0, 0.0);
    }
    let fs = w.sample_rate_hz();
    let periods = n as f64 * freq_hz.abs() / fs;
    let use_len = if freq_hz == 0.0 || (periods - periods.round()).abs() < 1e-6 {
        n
    } else {
        let whole = periods.floor().max(1.0);
        ((whole * fs / freq_hz.abs()).round() as usize).clamp(1, n)
    };
    let step = -2.0 * PI * freq_hz / fs;
    let sum: Complex64 = w.samples()[..use_len]
        .iter()
        .enumerate()
        .map(|(i, &x)| x * Complex64::from_polar(1.0, step * i as f64))
        .sum();
    sum / use_len as f64
}

/// Nearest frequency that completes an integer number of cycles over the
/// frame of `w`; tones on this grid are exactly periodic in the simulation.
pub fn snap_to_frame_grid(freq_hz: f64, len: usize, sample_rate_hz: f64) -> f64 {
    let df = sample_rate_hz / len as f64;
    (freq_hz / df).round() * df
}
