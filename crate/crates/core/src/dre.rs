//! DAC quantization and the digital resolution enhancer (DRE).
//!
//! Plain rounding leaves white quantization noise across the whole DAC band.
//! The DRE instead picks, for every sample, one of the `n_soft` levels
//! nearest to the input such that the quantization error filtered by a short
//! FIR model of the useful band has minimum energy. The filter is a lowpass
//! covering the signal and the carrier, so the search pushes the error
//! towards frequencies the link does not use.
//!
//! The search is an M-algorithm (beam search) over the trellis whose state
//! is the last `len(h) - 1` errors. Survivor sets are pruned in a nested
//! fashion: the survivors of a width-`W` search always contain those of a
//! width-`W/2` search run on the same input, so widening the beam can never
//! increase the final cost. The plain-rounding sequence is scored as well and
//! returned whenever it beats the beam survivor, which makes the DRE output
//! never worse than rounding.

use std::cmp::Ordering;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::{self, Spectrum, Waveform};

/// Mid-rise uniform quantizer on `[-full_scale, full_scale]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuantizerSpec {
    pub bits: u32,
    #[serde(default = "one")]
    pub full_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl QuantizerSpec {
    pub fn new(bits: u32) -> Result<Self> {
        let q = QuantizerSpec {
            bits,
            full_scale: 1.0,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.bits) {
            return Err(Error::ConfigInvariantViolated(format!(
                "quantizer bits must be in 1..=16, got {}",
                self.bits
            )));
        }
        if !(self.full_scale > 0.0) {
            return Err(Error::ConfigInvariantViolated(format!(
                "full scale must be positive, got {}",
                self.full_scale
            )));
        }
        Ok(())
    }

    pub fn n_levels(&self) -> usize {
        1usize << self.bits
    }

    /// Level spacing Δ.
    pub fn step(&self) -> f64 {
        2.0 * self.full_scale / self.n_levels() as f64
    }

    /// Level `k`: `-FS + Δ/2 + kΔ`.
    pub fn level(&self, k: usize) -> f64 {
        let d = self.step();
        -self.full_scale + 0.5 * d + k as f64 * d
    }

    pub fn levels(&self) -> Vec<f64> {
        (0..self.n_levels()).map(|k| self.level(k)).collect()
    }

    /// Index of the nearest level; inputs exactly between two levels go to
    /// the lower one, out-of-range inputs clamp.
    pub fn nearest_index(&self, x: f64) -> usize {
        let u = (x + self.full_scale) / self.step();
        let k = u.ceil() - 1.0;
        if k.is_nan() || k < 0.0 {
            0
        } else {
            (k as usize).min(self.n_levels() - 1)
        }
    }

    /// First index of the `n` consecutive levels nearest to `x`; equal
    /// distances prefer the lower level.
    pub fn candidate_window(&self, x: f64, n: usize) -> usize {
        let top = self.n_levels() - 1;
        let mut lo = self.nearest_index(x);
        let mut hi = lo;
        while hi - lo + 1 < n {
            let grow_lo = lo > 0;
            let grow_hi = hi < top;
            if grow_lo && grow_hi {
                let d_lo = (x - self.level(lo - 1)).abs();
                let d_hi = (self.level(hi + 1) - x).abs();
                if d_lo <= d_hi {
                    lo -= 1;
                } else {
                    hi += 1;
                }
            } else if grow_lo {
                lo -= 1;
            } else {
                hi += 1;
            }
        }
        lo
    }
}

/// FIR model of the useful band, used to weight the quantization error.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ShapingFilter {
    pub taps: Vec<f64>,
    pub passband_edge_hz: f64,
}

impl ShapingFilter {
    /// Frequency response at `f_hz` for sample rate `fs_hz`.
    pub fn response(&self, f_hz: f64, fs_hz: f64) -> Complex64 {
        let w = 2.0 * std::f64::consts::PI * f_hz / fs_hz;
        self.taps
            .iter()
            .enumerate()
            .map(|(k, &h)| Complex64::from_polar(h, -w * k as f64))
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.taps.is_empty() || self.taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::ConfigInvariantViolated(
                "shaping filter needs at least one finite tap".into(),
            ));
        }
        Ok(())
    }
}

/// Beam-search parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DreConfig {
    /// Candidate levels per sample.
    pub n_soft: usize,
    pub beam_width: usize,
}

impl Default for DreConfig {
    fn default() -> Self {
        DreConfig {
            n_soft: 3,
            beam_width: 16,
        }
    }
}

impl DreConfig {
    pub fn validate(&self, q: &QuantizerSpec) -> Result<()> {
        if self.n_soft == 0 || self.beam_width == 0 {
            return Err(Error::ConfigInvariantViolated(
                "n_soft and beam_width must be at least 1".into(),
            ));
        }
        if self.n_soft > q.n_levels() {
            return Err(Error::ConfigInvariantViolated(format!(
                "n_soft = {} exceeds the {} quantizer levels",
                self.n_soft,
                q.n_levels()
            )));
        }
        Ok(())
    }
}

/// Linear-phase least-squares lowpass with `n_taps` taps and cutoff
/// `passband_edge_hz`, scaled to unit peak magnitude.
///
/// With no transition band the least-squares solution is the truncated
/// ideal lowpass impulse response.
pub fn design_shaping_filter(
    passband_edge_hz: f64,
    sample_rate_hz: f64,
    n_taps: usize,
) -> Result<ShapingFilter> {
    let nyquist = sample_rate_hz / 2.0;
    if !(passband_edge_hz > 0.0 && passband_edge_hz < nyquist) {
        return Err(Error::InvalidEdge {
            edge_hz: passband_edge_hz,
            nyquist_hz: nyquist,
        });
    }
    if n_taps.is_multiple_of(2) {
        return Err(Error::EvenTaps(n_taps));
    }
    let wc = 2.0 * passband_edge_hz / sample_rate_hz;
    let center = (n_taps / 2) as f64;
    let mut taps: Vec<f64> = (0..n_taps)
        .map(|k| {
            let m = k as f64 - center;
            if m == 0.0 {
                wc
            } else {
                (std::f64::consts::PI * wc * m).sin() / (std::f64::consts::PI * m)
            }
        })
        .collect();
    let mut filter = ShapingFilter {
        taps: taps.clone(),
        passband_edge_hz,
    };
    let peak = (0..=4096)
        .map(|i| {
            filter
                .response(nyquist * i as f64 / 4096.0, sample_rate_hz)
                .norm()
        })
        .fold(0.0, f64::max);
    taps.iter_mut().for_each(|t| *t /= peak);
    filter.taps = taps;
    Ok(filter)
}

/// Rounds every sample to the nearest level, clamping out-of-range inputs.
pub fn quantize_uniform(x: &[f64], q: &QuantizerSpec) -> Vec<f64> {
    x.iter().map(|&v| q.level(q.nearest_index(v))).collect()
}

/// Energy of `(y - x) ⋆ h`, full linear convolution including the
/// `len(h) - 1` tail outputs after the last sample.
pub fn filtered_error_energy(x: &[f64], y: &[f64], h: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    let l = h.len();
    let e: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - a).collect();
    let mut total = 0.0;
    for out in 0..n + l.saturating_sub(1) {
        let mut acc = 0.0;
        for (k, &hk) in h.iter().enumerate() {
            if out >= k && out - k < n {
                acc += hk * e[out - k];
            }
        }
        total += acc * acc;
    }
    total
}

#[derive(Clone, Copy)]
struct Child {
    cost: f64,
    parent: u32,
    cand: u32,
}

fn child_order(a: &Child, b: &Child) -> Ordering {
    a.cost
        .total_cmp(&b.cost)
        .then(a.parent.cmp(&b.parent))
        .then(a.cand.cmp(&b.cand))
}

/// Beam widths of the nested survivor sets: `W, W/2, ..., 1`.
fn tier_widths(beam_width: usize) -> Vec<usize> {
    let mut widths = vec![beam_width];
    while *widths.last().unwrap() > 1 {
        let next = widths.last().unwrap() / 2;
        widths.push(next);
    }
    widths
}

/// Noise-shaping quantization by beam search.
///
/// Each output is one of the `cfg.n_soft` levels nearest to the input
/// sample; the returned sequence has the smallest filtered-error energy
/// among the explored candidates, and never more than [`quantize_uniform`].
pub fn dre_quantize(x: &[f64], q: &QuantizerSpec, h: &ShapingFilter, cfg: &DreConfig) -> Result<Vec<f64>> {
    q.validate()?;
    h.validate()?;
    cfg.validate(q)?;
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let taps = &h.taps;
    let mem = taps.len() - 1;
    let n_soft = cfg.n_soft;
    let widths = tier_widths(cfg.beam_width);
    let deepest = widths.len() - 1;

    // survivors of the current step
    let mut cost = vec![0.0f64];
    let mut state = vec![0.0f64; mem]; // per survivor: e[n-1], e[n-2], ...
    let mut tier = vec![deepest];

    // traceback: per step, survivor -> (parent, level index)
    let mut offsets = Vec::with_capacity(x.len() + 1);
    let mut parents: Vec<u32> = Vec::with_capacity(x.len() * cfg.beam_width.min(64));
    let mut picks: Vec<u16> = Vec::with_capacity(parents.capacity());
    offsets.push(0usize);

    let mut children: Vec<Child> = Vec::new();
    let mut partial: Vec<f64> = Vec::new();
    let mut cand_err = vec![0.0f64; n_soft];
    let mut selected: Vec<bool> = Vec::new();
    let mut child_tier: Vec<usize> = Vec::new();

    for &xn in x {
        let lo = q.candidate_window(xn, n_soft);
        for (c, e) in cand_err.iter_mut().enumerate() {
            *e = q.level(lo + c) - xn;
        }
        let n_surv = cost.len();
        partial.clear();
        partial.extend((0..n_surv).map(|p| {
            let s = &state[p * mem..(p + 1) * mem];
            taps[1..].iter().zip(s).map(|(a, b)| a * b).sum::<f64>()
        }));
        children.clear();
        for p in 0..n_surv {
            for (c, &e) in cand_err.iter().enumerate() {
                let y = taps[0] * e + partial[p];
                children.push(Child {
                    cost: cost[p] + y * y,
                    parent: p as u32,
                    cand: c as u32,
                });
            }
        }
        children.sort_unstable_by(child_order);

        // nested pruning, innermost (width 1) first
        selected.clear();
        selected.resize(children.len(), false);
        child_tier.clear();
        child_tier.resize(children.len(), 0);
        let mut n_selected = 0;
        for j in (0..=deepest).rev() {
            let want = widths[j];
            if n_selected >= want {
                continue;
            }
            for (i, ch) in children.iter().enumerate() {
                if n_selected >= want {
                    break;
                }
                if !selected[i] && tier[ch.parent as usize] >= j {
                    selected[i] = true;
                    child_tier[i] = j;
                    n_selected += 1;
                }
            }
        }

        let mut next_cost = Vec::with_capacity(n_selected);
        let mut next_state = Vec::with_capacity(n_selected * mem);
        let mut next_tier = Vec::with_capacity(n_selected);
        for (i, ch) in children.iter().enumerate() {
            if !selected[i] {
                continue;
            }
            let p = ch.parent as usize;
            next_cost.push(ch.cost);
            next_tier.push(child_tier[i]);
            if mem > 0 {
                next_state.push(cand_err[ch.cand as usize]);
                next_state.extend_from_slice(&state[p * mem..p * mem + mem - 1]);
            }
            parents.push(ch.parent);
            picks.push((lo + ch.cand as usize) as u16);
        }
        offsets.push(parents.len());
        cost = next_cost;
        state = next_state;
        tier = next_tier;
    }

    // flush the filter memory and pick the best survivor
    let mut best = 0;
    let mut best_cost = f64::INFINITY;
    for p in 0..cost.len() {
        let s = &state[p * mem..(p + 1) * mem];
        let tail: f64 = (1..=mem)
            .map(|t| {
                let y: f64 = (t..=mem).map(|k| taps[k] * s[k - t]).sum();
                y * y
            })
            .sum();
        let total = cost[p] + tail;
        if total < best_cost {
            best_cost = total;
            best = p;
        }
    }

    let mut out = vec![0.0; x.len()];
    let mut slot = best;
    for n in (0..x.len()).rev() {
        let idx = offsets[n] + slot;
        out[n] = q.level(picks[idx] as usize);
        slot = parents[idx] as usize;
    }

    let plain = quantize_uniform(x, q);
    if filtered_error_energy(x, &plain, taps) < filtered_error_energy(x, &out, taps) {
        Ok(plain)
    } else {
        Ok(out)
    }
}

/// How the DAC rails are quantized.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantizerMode {
    Plain,
    Dre {
        filter: ShapingFilter,
        config: DreConfig,
    },
}

/// Quantizes the I and Q rails independently.
pub fn quantize_waveform(w: &Waveform, q: &QuantizerSpec, mode: &QuantizerMode) -> Result<Waveform> {
    q.validate()?;
    let re: Vec<f64> = w.samples().iter().map(|v| v.re).collect();
    let im: Vec<f64> = w.samples().iter().map(|v| v.im).collect();
    let (qre, qim) = match mode {
        QuantizerMode::Plain => (quantize_uniform(&re, q), quantize_uniform(&im, q)),
        QuantizerMode::Dre { filter, config } => {
            let (a, b) = rayon::join(
                || dre_quantize(&re, q, filter, config),
                || dre_quantize(&im, q, filter, config),
            );
            (a?, b?)
        }
    };
    Ok(w.with_samples(
        qre.into_iter()
            .zip(qim)
            .map(|(a, b)| Complex64::new(a, b))
            .collect(),
    ))
}

fn check_pair(original: &Waveform, quantized: &Waveform) -> Result<()> {
    if original.len() != quantized.len() {
        return Err(Error::LengthMismatch {
            left: original.len(),
            right: quantized.len(),
        });
    }
    if original.sample_rate_hz() != quantized.sample_rate_hz() {
        return Err(Error::InvalidParameter(format!(
            "sample rates differ: {} vs {}",
            original.sample_rate_hz(),
            quantized.sample_rate_hz()
        )));
    }
    original.non_empty()
}

/// Welch PSD of the complex quantization error `quantized - original`.
pub fn quantization_noise_spectrum(
    original: &Waveform,
    quantized: &Waveform,
    segment_len: usize,
) -> Result<Spectrum> {
    check_pair(original, quantized)?;
    let err = original.with_samples(
        quantized
            .samples()
            .iter()
            .zip(original.samples())
            .map(|(a, b)| a - b)
            .collect(),
    );
    signal::psd(&err, segment_len)
}

/// Reported when the in-band error is exactly zero.
pub const SNR_SENTINEL_DB: f64 = 300.0;

/// Transmitter SNR inside `band_hz = (lo, hi)`, counting only quantization
/// error as noise. The tone at `tone_offset_hz`, if given, is projected out
/// of the reference before measuring signal power.
pub fn tx_snr_inband(
    original: &Waveform,
    quantized: &Waveform,
    band_hz: (f64, f64),
    tone_offset_hz: Option<f64>,
) -> Result<f64> {
    check_pair(original, quantized)?;
    let (lo, hi) = band_hz;
    let nyq = original.sample_rate_hz() / 2.0;
    if !(lo < hi) || lo < -nyq || hi > nyq {
        return Err(Error::InvalidParameter(format!(
            "band ({lo}, {hi}) must be ordered and within ±{nyq} Hz"
        )));
    }
    let reference = match tone_offset_hz {
        Some(f) => {
            let a = signal::project_tone(original, f);
            let step = 2.0 * std::f64::consts::PI * f / original.sample_rate_hz();
            original.with_samples(
                original
                    .samples()
                    .iter()
                    .enumerate()
                    .map(|(n, &x)| x - a * Complex64::from_polar(1.0, step * n as f64))
                    .collect(),
            )
        }
        None => original.clone(),
    };
    let err = original.with_samples(
        quantized
            .samples()
            .iter()
            .zip(original.samples())
            .map(|(a, b)| a - b)
            .collect(),
    );
    let p_sig = signal::band_power(&reference, lo, hi)?;
    let p_err = signal::band_power(&err, lo, hi)?;
    if p_err == 0.0 {
        return Ok(SNR_SENTINEL_DB);
    }
    Ok(10.0 * (p_sig / p_err).log10())
}
