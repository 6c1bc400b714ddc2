//! Kramers-Kronig receiver.
//!
//! The AC-coupled photocurrent gets a DC bias added back, the optical field
//! is rebuilt from intensity alone, the carrier is removed and the signal is
//! brought to baseband, matched filtered, aligned to the known symbols and
//! equalized by a supervised LMS filter.
//!
//! The reconstructed field is expressed in the frame of the carrier: the
//! carrier sits at DC, and the signal lies on one side of it. Which side is
//! set by [`Sideband`] and decides the sign of the phase.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics;
use crate::signal::{self, RealWaveform, RrcSpec, Waveform};

/// Position of the signal relative to the carrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sideband {
    /// Signal above the carrier.
    Upper,
    /// Signal below the carrier (tone at a positive offset from the signal).
    #[default]
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct KkConfig {
    pub upsample_factor: usize,
    /// Lower clamp on the biased photocurrent, relative to its mean.
    pub clip_floor: f64,
    pub sideband: Sideband,
}

impl Default for KkConfig {
    fn default() -> Self {
        KkConfig {
            upsample_factor: 2,
            clip_floor: 1e-6,
            sideband: Sideband::Lower,
        }
    }
}

impl KkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.upsample_factor == 0 || !(self.clip_floor > 0.0) {
            return Err(Error::ConfigInvariantViolated(
                "KK upsample factor must be >= 1 and clip floor > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Maximum tolerated fraction of clamped photocurrent samples.
pub const MAX_CLIPPED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BiasSearch {
    /// Multipliers applied to the base bias estimate.
    pub grid: Vec<f64>,
    pub metric_block_symbols: usize,
}

impl Default for BiasSearch {
    fn default() -> Self {
        // geometric 0.5 .. 2.0 so that 1.0 is a grid point
        let grid = (0..21).map(|k| 0.5 * 4f64.powf(k as f64 / 20.0)).collect();
        BiasSearch {
            grid,
            metric_block_symbols: 4096,
        }
    }
}

impl BiasSearch {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::ConfigInvariantViolated("bias grid is empty".into()));
        }
        if self.grid.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(Error::ConfigInvariantViolated(
                "bias grid entries must be positive".into(),
            ));
        }
        if self.grid.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::ConfigInvariantViolated(
                "bias grid must be strictly increasing".into(),
            ));
        }
        if self.metric_block_symbols == 0 {
            return Err(Error::ConfigInvariantViolated(
                "bias metric block must hold at least one symbol".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EqualizerConfig {
    pub num_taps: usize,
    pub step_mu: f64,
    pub samples_per_symbol: usize,
    pub training_passes: usize,
}

impl Default for EqualizerConfig {
    fn default() -> Self {
        EqualizerConfig {
            num_taps: 51,
            step_mu: 1e-3,
            samples_per_symbol: 2,
            training_passes: 2,
        }
    }
}

impl EqualizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_taps.is_multiple_of(2) {
            return Err(Error::EvenTaps(self.num_taps));
        }
        if !(self.step_mu >= 0.0) || !self.step_mu.is_finite() {
            return Err(Error::ConfigInvariantViolated(format!(
                "LMS step must be finite and non-negative, got {}",
                self.step_mu
            )));
        }
        if self.samples_per_symbol != 2 {
            return Err(Error::ConfigInvariantViolated(
                "the equalizer runs at 2 samples per symbol".into(),
            ));
        }
        if self.training_passes == 0 {
            return Err(Error::ConfigInvariantViolated(
                "at least one training pass is required".into(),
            ));
        }
        Ok(())
    }
}

/// Bias candidates `grid × (-min(i_ac))`.
///
/// `-min(i_ac)` is the smallest bias that keeps the photocurrent
/// non-negative; for a minimum-phase field it is close to the removed mean.
pub fn estimate_bias_candidates(i_ac: &RealWaveform, search: &BiasSearch) -> Result<Vec<f64>> {
    search.validate()?;
    if i_ac.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    let (lo, hi) = i_ac
        .samples()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if !(hi > lo) {
        return Err(Error::ConstantInput);
    }
    let base = if lo < 0.0 { -lo } else { hi - lo };
    Ok(search.grid.iter().map(|g| g * base).collect())
}

/// Reconstructed field and the share of photocurrent samples that had to
/// be clamped.
#[derive(Debug, Clone)]
pub struct KkOutput {
    pub field: Waveform,
    pub clipped_fraction: f64,
}

/// Upsamples the photocurrent by at least `kk.upsample_factor`. The output
/// length is rounded up to a 2-3-5 smooth size for fast transforms, so the
/// actual factor can exceed the nominal one by a small fraction.
pub fn upsample_current(i: &RealWaveform, kk: &KkConfig) -> Result<RealWaveform> {
    kk.validate()?;
    if kk.upsample_factor == 1 || i.is_empty() {
        return Ok(i.clone());
    }
    let m = signal::fast_len(i.len() * kk.upsample_factor);
    signal::resample_real(i, i.sample_rate_hz() * m as f64 / i.len() as f64)
}

/// KK field reconstruction from a biased photocurrent.
pub fn kk_reconstruct(i_biased: &RealWaveform, kk: &KkConfig) -> Result<KkOutput> {
    kk.validate()?;
    if i_biased.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    let mean = i_biased.mean();
    if !(mean > 0.0) {
        return Err(Error::NonPositiveMean(mean));
    }
    let up = upsample_current(i_biased, kk)?;
    kk_from_samples(up.samples(), 0.0, up.sample_rate_hz(), kk)
}

/// Reconstruction of `x + bias`, with `x` already at the processing rate.
fn kk_from_samples(x: &[f64], bias: f64, rate_hz: f64, kk: &KkConfig) -> Result<KkOutput> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64 + bias;
    if !(mean > 0.0) {
        return Err(Error::NonPositiveMean(mean));
    }
    let floor = kk.clip_floor * mean;
    let mut clipped = 0usize;
    let log_amp: Vec<f64> = x
        .iter()
        .map(|&v| {
            let i = v + bias;
            let i = if i < floor {
                clipped += 1;
                floor
            } else {
                i
            };
            0.5 * i.ln()
        })
        .collect();
    let clipped_fraction = clipped as f64 / n as f64;
    if clipped_fraction > MAX_CLIPPED_FRACTION {
        return Err(Error::ExcessiveClipping {
            fraction: clipped_fraction,
        });
    }
    let h = signal::hilbert(&log_amp)?;
    let sign = match kk.sideband {
        Sideband::Upper => 1.0,
        Sideband::Lower => -1.0,
    };
    let field: Vec<Complex64> = log_amp
        .iter()
        .zip(&h)
        .map(|(&la, &ph)| Complex64::from_polar(la.exp(), sign * ph))
        .collect();
    Ok(KkOutput {
        field: Waveform::new(field, rate_hz)?,
        clipped_fraction,
    })
}

/// Removes the carrier, which the reconstruction leaves at DC, then shifts
/// the signal up by `tone_offset_hz` to baseband.
pub fn downconvert_and_strip_carrier(field: &Waveform, tone_offset_hz: f64) -> Result<Waveform> {
    field.non_empty()?;
    let nyq = field.sample_rate_hz() / 2.0;
    if tone_offset_hz.abs() >= nyq {
        return Err(Error::ToneAboveNyquist {
            offset_hz: tone_offset_hz,
            nyquist_hz: nyq,
        });
    }
    let n = field.len() as f64;
    let mean: Complex64 = field.samples().iter().sum::<Complex64>() / n;
    let stripped = field.with_samples(field.samples().iter().map(|&x| x - mean).collect());
    if tone_offset_hz == 0.0 {
        return Ok(stripped);
    }
    Ok(signal::frequency_shift(&stripped, tone_offset_hz))
}

/// RRC matched filter followed by resampling to 2 samples per symbol.
pub fn matched_filter_downsample(w: &Waveform, rrc: &RrcSpec, baud_hz: f64) -> Result<Waveform> {
    rrc.validate()?;
    w.non_empty()?;
    if w.sample_rate_hz() < 2.0 * baud_hz * (1.0 - 1e-9) {
        return Err(Error::RateTooLow {
            rate_hz: w.sample_rate_hz(),
            baud_hz,
        });
    }
    let beta = rrc.rolloff_beta;
    signal::filter_and_resample(
        w,
        |f| Complex64::new(signal::rrc_amplitude(f, baud_hz, beta), 0.0),
        2.0 * baud_hz,
    )
}

/// Outcome of [`synchronize`].
#[derive(Debug, Clone)]
pub struct SyncResult {
    /// Circular delay in samples (2 per symbol).
    pub delay: usize,
    pub phase_rad: f64,
    pub gain: f64,
    /// `rx` advanced by `delay`, de-rotated and scaled so that even samples
    /// line up with the transmitted symbols.
    pub aligned: Vec<Complex64>,
}

/// Minimum number of symbols [`synchronize`] accepts.
pub const MIN_SYNC_SYMBOLS: usize = 1024;

/// Circular cross-correlation against the known symbols at 2 samples per
/// symbol. The peak must clear three times the noise floor
/// `rms|c| · sqrt(ln L)`, the expected maximum of `L` uncorrelated lags.
pub fn synchronize(rx: &[Complex64], tx_symbols: &[Complex64]) -> Result<SyncResult> {
    if tx_symbols.len() < MIN_SYNC_SYMBOLS {
        return Err(Error::TooShort {
            needed: MIN_SYNC_SYMBOLS,
            got: tx_symbols.len(),
        });
    }
    let l = 2 * tx_symbols.len();
    if rx.len() != l {
        return Err(Error::LengthMismatch {
            left: rx.len(),
            right: l,
        });
    }
    let mut reference = vec![Complex64::new(0.0, 0.0); l];
    for (k, &s) in tx_symbols.iter().enumerate() {
        reference[2 * k] = s;
    }
    let mut rx_spec = rx.to_vec();
    signal::fft_in_place(&mut rx_spec);
    signal::fft_in_place(&mut reference);
    let mut corr: Vec<Complex64> = rx_spec
        .iter()
        .zip(&reference)
        .map(|(a, b)| a * b.conj())
        .collect();
    signal::ifft_in_place(&mut corr);

    let mut best = 0;
    let mut best_mag = -1.0;
    let mut sum_sq = 0.0;
    for (d, c) in corr.iter().enumerate() {
        let m = c.norm();
        sum_sq += m * m;
        if m > best_mag {
            best_mag = m;
            best = d;
        }
    }
    let rms = (sum_sq / l as f64).sqrt();
    let threshold = 3.0 * rms * (l as f64).ln().sqrt();
    if !(best_mag >= threshold) {
        return Err(Error::NoCorrelationPeak {
            peak: best_mag,
            threshold,
        });
    }
    let phase = corr[best].arg();
    let energy: f64 = tx_symbols.iter().map(|s| s.norm_sqr()).sum();
    let gain = best_mag / energy;
    let rot = Complex64::from_polar(1.0 / gain, -phase);
    let aligned = (0..l).map(|n| rx[(n + best) % l] * rot).collect();
    Ok(SyncResult {
        delay: best,
        phase_rad: phase,
        gain,
        aligned,
    })
}

/// Output of the LMS equalizer.
#[derive(Debug, Clone)]
pub struct LmsOutput {
    pub symbols: Vec<Complex64>,
    pub taps: Vec<Complex64>,
    /// Mean-square error of each training pass.
    pub training_mse: Vec<f64>,
}

/// Fractionally spaced, fully supervised LMS over the whole (periodic)
/// frame: `training_passes` adaptive passes, then a pass with frozen taps
/// that produces the output.
pub fn lms_equalize(rx: &[Complex64], tx_symbols: &[Complex64], eq: &EqualizerConfig) -> Result<LmsOutput> {
    if rx.len() != 2 * tx_symbols.len() {
        return Err(Error::LengthMismatch {
            left: rx.len(),
            right: 2 * tx_symbols.len(),
        });
    }
    lms_span(rx, tx_symbols, 0, tx_symbols.len(), eq)
}

/// LMS restricted to symbols `start .. start + count` (indices wrap).
fn lms_span(
    rx: &[Complex64],
    tx_symbols: &[Complex64],
    start: usize,
    count: usize,
    eq: &EqualizerConfig,
) -> Result<LmsOutput> {
    eq.validate()?;
    if tx_symbols.is_empty() || count == 0 {
        return Err(Error::EmptySymbols);
    }
    let l = rx.len();
    let n_sym = tx_symbols.len();
    let t = eq.num_taps;
    let center = t / 2;
    let mut taps = vec![Complex64::new(0.0, 0.0); t];
    taps[center] = Complex64::new(1.0, 0.0);
    let mu = eq.step_mu;
    let ref_power = (0..count)
        .map(|i| tx_symbols[(start + i) % n_sym].norm_sqr())
        .sum::<f64>()
        / count as f64;

    let mut window = vec![Complex64::new(0.0, 0.0); t];
    let fill = |k: usize, window: &mut [Complex64]| {
        // input sample 2k sits at the centre tap
        let base = (2 * k + l * (t / l + 1) - center) % l;
        for (j, w) in window.iter_mut().enumerate() {
            *w = rx[(base + j) % l];
        }
    };
    let check = |power: f64| -> Result<()> {
        if !(power <= 100.0 * ref_power) {
            return Err(Error::Diverged {
                output_power: power,
                reference_power: ref_power,
            });
        }
        Ok(())
    };

    let mut training_mse = Vec::with_capacity(eq.training_passes);
    for _ in 0..eq.training_passes {
        let mut sq_err = 0.0;
        let mut out_power = 0.0;
        for i in 0..count {
            let k = (start + i) % n_sym;
            fill(k, &mut window);
            let y: Complex64 = taps.iter().zip(&window).map(|(a, b)| a * b).sum();
            let e = tx_symbols[k] - y;
            sq_err += e.norm_sqr();
            out_power += y.norm_sqr();
            let g = e * mu;
            for (w, x) in taps.iter_mut().zip(&window) {
                *w += g * x.conj();
            }
        }
        check(out_power / count as f64)?;
        training_mse.push(sq_err / count as f64);
    }

    let mut symbols: Vec<Complex64> = Vec::with_capacity(count);
    for i in 0..count {
        let k = (start + i) % n_sym;
        fill(k, &mut window);
        symbols.push(taps.iter().zip(&window).map(|(a, b)| a * b).sum());
    }
    let out_power = symbols.iter().map(|y| y.norm_sqr()).sum::<f64>() / count as f64;
    check(out_power)?;
    Ok(LmsOutput {
        symbols,
        taps,
        training_mse,
    })
}

/// Everything the receiver needs besides the photocurrent.
#[derive(Debug, Clone)]
pub struct ReceiverContext<'a> {
    pub tx_symbols: &'a [Complex64],
    pub rrc: RrcSpec,
    pub baud_hz: f64,
    pub tone_offset_hz: f64,
    pub kk: KkConfig,
    pub eq: EqualizerConfig,
}

/// KK, carrier removal, matched filter and sync for one bias value, on a
/// photocurrent that is already at the KK processing rate.
fn front_end(up_ac: &RealWaveform, bias: f64, ctx: &ReceiverContext<'_>) -> Result<(SyncResult, f64)> {
    let kk = kk_from_samples(up_ac.samples(), bias, up_ac.sample_rate_hz(), &ctx.kk)?;
    let base = downconvert_and_strip_carrier(&kk.field, ctx.tone_offset_hz)?;
    let two_sps = matched_filter_downsample(&base, &ctx.rrc, ctx.baud_hz)?;
    let sync = synchronize(two_sps.samples(), ctx.tx_symbols)?;
    Ok((sync, kk.clipped_fraction))
}

/// Full receiver output for one bias value.
#[derive(Debug, Clone)]
pub struct ReceiverOutput {
    pub bias: f64,
    pub symbols: Vec<Complex64>,
    pub clipped_fraction: f64,
    pub delay: usize,
    pub phase_rad: f64,
    pub training_mse: Vec<f64>,
}

/// Runs the receiver over the whole frame with a fixed bias. `up_ac` is the
/// AC-coupled photocurrent after [`upsample_current`].
pub fn receive(up_ac: &RealWaveform, bias: f64, ctx: &ReceiverContext<'_>) -> Result<ReceiverOutput> {
    let (sync, clipped_fraction) = front_end(up_ac, bias, ctx)?;
    let eq = lms_equalize(&sync.aligned, ctx.tx_symbols, &ctx.eq)?;
    Ok(ReceiverOutput {
        bias,
        symbols: eq.symbols,
        clipped_fraction,
        delay: sync.delay,
        phase_rad: sync.phase_rad,
        training_mse: eq.training_mse,
    })
}

/// Bias scan result.
#[derive(Debug, Clone)]
pub struct BiasOutcome {
    pub candidates: Vec<f64>,
    /// Post-equalization SNR per candidate; `None` where the chain failed.
    pub metric_db: Vec<Option<f64>>,
    pub best_index: usize,
    pub best_bias: f64,
}

/// Scans the bias candidates and keeps the one with the highest
/// post-equalization SNR on a block of `metric_block_symbols` symbols.
/// Ties go to the lowest candidate index.
pub fn optimize_dc_bias(
    i_ac: &RealWaveform,
    ctx: &ReceiverContext<'_>,
    search: &BiasSearch,
) -> Result<BiasOutcome> {
    let candidates = estimate_bias_candidates(i_ac, search)?;
    let up = upsample_current(i_ac, &ctx.kk)?;
    optimize_dc_bias_upsampled(&up, &candidates, ctx, search)
}

/// [`optimize_dc_bias`] for a photocurrent already at the KK rate and a
/// precomputed candidate list.
pub fn optimize_dc_bias_upsampled(
    up_ac: &RealWaveform,
    candidates: &[f64],
    ctx: &ReceiverContext<'_>,
    search: &BiasSearch,
) -> Result<BiasOutcome> {
    let block = search.metric_block_symbols.min(ctx.tx_symbols.len());
    let metric_db: Vec<Option<f64>> = candidates
        .par_iter()
        .map(|&b| {
            let (sync, _) = front_end(up_ac, b, ctx).ok()?;
            let out = lms_span(&sync.aligned, ctx.tx_symbols, 0, block, &ctx.eq).ok()?;
            let (snr, _) = metrics::snr_evm(&out.symbols, &ctx.tx_symbols[..block]).ok()?;
            snr.is_finite().then_some(snr)
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, m) in metric_db.iter().enumerate() {
        if let Some(v) = *m {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    let (best_index, _) = best.ok_or(Error::AllCandidatesFailed)?;
    Ok(BiasOutcome {
        candidates: candidates.to_vec(),
        metric_db,
        best_index,
        best_bias: candidates[best_index],
    })
}
