//! Optical channel between the DAC and the ADC.
//!
//! The IQ modulator is ideal, so the complex DAC output is taken as the
//! optical field envelope. The channel applies a brick-wall optical filter,
//! ASE noise loading, chromatic dispersion, square-law detection and the
//! ADC.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dre::QuantizerSpec;
use crate::error::{Error, Result};
use crate::signal::{self, RealWaveform, Waveform};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Value reported by [`measure_cspr`] when no tone is present.
pub const NO_TONE_CSPR_DB: f64 = -100.0;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FiberSpec {
    pub length_km: f64,
    pub dispersion_ps_nm_km: f64,
    pub center_freq_thz: f64,
}

impl Default for FiberSpec {
    fn default() -> Self {
        FiberSpec {
            length_km: 50.0,
            dispersion_ps_nm_km: 17.0,
            center_freq_thz: 193.4,
        }
    }
}

impl FiberSpec {
    pub fn back_to_back() -> Self {
        FiberSpec {
            length_km: 0.0,
            ..FiberSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_km >= 0.0) || !self.length_km.is_finite() {
            return Err(Error::ConfigInvariantViolated(format!(
                "fiber length must be >= 0, got {}",
                self.length_km
            )));
        }
        if !(self.center_freq_thz > 0.0) || !self.dispersion_ps_nm_km.is_finite() {
            return Err(Error::ConfigInvariantViolated(
                "fiber needs a positive center frequency and finite dispersion".into(),
            ));
        }
        Ok(())
    }

    /// Carrier wavelength in metres.
    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / (self.center_freq_thz * 1e12)
    }

    /// Accumulated dispersion `D·L` in s/m.
    pub fn accumulated_dispersion_s_per_m(&self) -> f64 {
        // ps/(nm km) -> s/m^2 is a factor 1e-6
        self.dispersion_ps_nm_km * 1e-6 * self.length_km * 1e3
    }

    /// Differential group delay between two frequencies `delta_f_hz` apart.
    pub fn group_delay_s(&self, delta_f_hz: f64) -> f64 {
        let lambda = self.wavelength_m();
        self.accumulated_dispersion_s_per_m() * lambda * lambda * delta_f_hz / SPEED_OF_LIGHT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct OsnrSpec {
    /// `None` disables noise loading.
    #[serde(with = "crate::experiments::config::optional_f64")]
    pub target_db: Option<f64>,
    pub ref_bandwidth_hz: f64,
}

impl Default for OsnrSpec {
    fn default() -> Self {
        OsnrSpec {
            target_db: None,
            ref_bandwidth_hz: 12.5e9,
        }
    }
}

impl OsnrSpec {
    pub fn at(target_db: f64) -> Self {
        OsnrSpec {
            target_db: Some(target_db),
            ..OsnrSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ref_bandwidth_hz > 0.0) {
            return Err(Error::ConfigInvariantViolated(
                "OSNR reference bandwidth must be positive".into(),
            ));
        }
        if let Some(t) = self.target_db {
            if !t.is_finite() {
                return Err(Error::ConfigInvariantViolated(format!(
                    "OSNR target must be finite, got {t}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PdSpec {
    pub ac_coupled: bool,
    pub responsivity: f64,
}

impl Default for PdSpec {
    fn default() -> Self {
        PdSpec {
            ac_coupled: true,
            responsivity: 1.0,
        }
    }
}

/// Ideal band-pass of width `bandwidth_hz` centred on `center_hz`
/// (baseband frequency). Bins outside `[c - B/2, c + B/2]` are zeroed.
pub fn optical_bpf(w: &Waveform, center_hz: f64, bandwidth_hz: f64) -> Result<Waveform> {
    w.non_empty()?;
    let fs = w.sample_rate_hz();
    if !(bandwidth_hz > 0.0) || bandwidth_hz > fs {
        return Err(Error::BandExceedsNyquist {
            bandwidth_hz,
            sample_rate_hz: fs,
        });
    }
    if bandwidth_hz == fs && center_hz == 0.0 {
        return Ok(w.clone());
    }
    let lo = center_hz - bandwidth_hz / 2.0;
    let hi = center_hz + bandwidth_hz / 2.0;
    signal::filter_frequency(w, |f| {
        // the band may wrap around ±fs/2
        let inside = |g: f64| g >= lo && g <= hi;
        if inside(f) || inside(f + fs) || inside(f - fs) {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Chromatic dispersion as the all-pass `exp(-jπ λ² D L f² / c)`.
pub fn apply_cd(w: &Waveform, fiber: &FiberSpec) -> Result<Waveform> {
    w.non_empty()?;
    let dl = fiber.accumulated_dispersion_s_per_m();
    if dl == 0.0 {
        return Ok(w.clone());
    }
    let lambda = fiber.wavelength_m();
    let k = -PI * lambda * lambda * dl / SPEED_OF_LIGHT;
    signal::filter_frequency(w, |f| Complex64::from_polar(1.0, k * f * f))
}

/// Per-sample variance of complex noise giving `osnr_db` for a field of
/// power `signal_power`.
pub fn osnr_noise_variance(signal_power: f64, sample_rate_hz: f64, osnr: &OsnrSpec, osnr_db: f64) -> f64 {
    signal_power * sample_rate_hz / (osnr.ref_bandwidth_hz * 10f64.powf(osnr_db / 10.0))
}

/// Adds white circular Gaussian noise so that total power over the noise
/// power in `ref_bandwidth_hz` equals the target OSNR.
pub fn load_osnr(w: &Waveform, osnr: &OsnrSpec, seed: u64) -> Result<Waveform> {
    osnr.validate()?;
    let Some(target) = osnr.target_db else {
        return Ok(w.clone());
    };
    w.non_empty()?;
    let var = osnr_noise_variance(w.power(), w.sample_rate_hz(), osnr, target);
    let sd = (var / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = w
        .samples()
        .iter()
        .map(|&x| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            x + Complex64::new(re, im) * sd
        })
        .collect();
    Ok(w.with_samples(samples))
}

/// OSNR read off the spectrum, the way an OSA would: the noise density is
/// taken from bins outside `signal_band_hz`, the signal power is the total
/// minus the noise.
pub fn measure_osnr(w: &Waveform, signal_band_hz: (f64, f64), ref_bandwidth_hz: f64) -> Result<f64> {
    w.non_empty()?;
    let n = w.len();
    let fs = w.sample_rate_hz();
    let mut spec = w.samples().to_vec();
    signal::fft_in_place(&mut spec);
    let norm = 1.0 / (n as f64 * n as f64);
    let (lo, hi) = signal_band_hz;
    let mut total = 0.0;
    let mut out_power = 0.0;
    let mut out_bins = 0usize;
    for (k, x) in spec.iter().enumerate() {
        let p = x.norm_sqr() * norm;
        total += p;
        let f = signal::bin_freq(k, n, fs);
        if f < lo || f > hi {
            out_power += p;
            out_bins += 1;
        }
    }
    if out_bins == 0 {
        return Err(Error::InvalidParameter(
            "signal band leaves no bins for the noise estimate".into(),
        ));
    }
    let per_bin = out_power / out_bins as f64;
    let noise_density = per_bin * n as f64 / fs;
    let signal_power = total - per_bin * n as f64;
    if !(signal_power > 0.0) || noise_density <= 0.0 {
        return Err(Error::NoSignalPower);
    }
    Ok(10.0 * (signal_power / (noise_density * ref_bandwidth_hz)).log10())
}

/// Carrier-to-signal power ratio in dB. The tone is estimated by projection
/// onto `exp(j2π f t)`; everything else counts as signal.
pub fn measure_cspr(w: &Waveform, tone_offset_hz: f64) -> Result<f64> {
    w.non_empty()?;
    let nyq = w.sample_rate_hz() / 2.0;
    if tone_offset_hz.abs() >= nyq {
        return Err(Error::ToneAboveNyquist {
            offset_hz: tone_offset_hz,
            nyquist_hz: nyq,
        });
    }
    let total = w.power();
    let tone = signal::project_tone(w, tone_offset_hz).norm_sqr();
    let sig = total - tone;
    if !(sig > total * 1e-12) {
        return Err(Error::NoSignalPower);
    }
    if tone == 0.0 {
        return Ok(NO_TONE_CSPR_DB);
    }
    Ok((10.0 * (tone / sig).log10()).max(NO_TONE_CSPR_DB))
}

/// Photodiode output. `removed_mean` is kept for diagnostics only; the
/// receiver estimates its own bias.
#[derive(Debug, Clone)]
pub struct Photocurrent {
    pub current: RealWaveform,
    pub removed_mean: f64,
}

/// Square-law detection, optionally AC-coupled.
pub fn photodiode(w: &Waveform, pd: &PdSpec) -> Result<Photocurrent> {
    w.non_empty()?;
    if !(pd.responsivity > 0.0) {
        return Err(Error::ConfigInvariantViolated(format!(
            "responsivity must be positive, got {}",
            pd.responsivity
        )));
    }
    let i: Vec<f64> = w
        .samples()
        .iter()
        .map(|x| pd.responsivity * x.norm_sqr())
        .collect();
    let current = RealWaveform::new(i, w.sample_rate_hz())?;
    if !pd.ac_coupled {
        return Ok(Photocurrent {
            current,
            removed_mean: 0.0,
        });
    }
    let mean = current.mean();
    Ok(Photocurrent {
        current: current.offset(-mean),
        removed_mean: mean,
    })
}

/// Ideal electrical lowpass with cutoff `cutoff_hz`.
pub fn electrical_lowpass(x: &RealWaveform, cutoff_hz: f64) -> Result<RealWaveform> {
    if !(cutoff_hz > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lowpass cutoff must be positive, got {cutoff_hz}"
        )));
    }
    let out = signal::filter_frequency(&x.to_complex(), |f| {
        if f.abs() <= cutoff_hz {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })?;
    Ok(out.re())
}

/// Resamples to `rate_hz` (the DFT truncation is the anti-alias filter) and
/// optionally quantizes with full scale set to the peak magnitude.
pub fn adc(x: &RealWaveform, rate_hz: f64, bits: Option<u32>) -> Result<RealWaveform> {
    if !(rate_hz > 0.0) || !rate_hz.is_finite() {
        return Err(Error::NonPositiveRate(rate_hz));
    }
    if x.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    let y = signal::resample_real(x, rate_hz)?;
    let Some(b) = bits else {
        return Ok(y);
    };
    let peak = y.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Ok(y);
    }
    let q = QuantizerSpec {
        bits: b,
        full_scale: peak,
    };
    q.validate()?;
    let samples = y.samples().iter().map(|&v| q.level(q.nearest_index(v))).collect();
    Ok(y.with_samples(samples))
}
