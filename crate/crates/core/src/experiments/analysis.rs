//! Transmitter-side look at DAC quantization: noise spectra with and
//! without the DRE, and the in-band SNR left by quantization alone.

use rayon::prelude::*;

use crate::dre::{self, QuantizerMode};
use crate::error::{Error, Result, Stage};
use crate::signal::Spectrum;
use crate::txdsp::{self, FrameSpec};

use super::config::LinkConfig;

/// Segment length of the Welch estimate used for the noise spectra.
pub const SPECTRUM_SEGMENT: usize = 4096;

#[derive(Debug, Clone)]
pub struct QuantPoint {
    pub cspr_db: f64,
    pub plain_spectrum: Spectrum,
    pub dre_spectrum: Spectrum,
    pub snr_plain_db: f64,
    pub snr_dre_db: f64,
}

/// Quantizes the same frame with and without the DRE at each CSPR. All
/// points use `base.seed`, so only the tone power changes along the curve.
pub fn analyze_quantization(base: &LinkConfig, cspr_values: &[f64]) -> Result<Vec<QuantPoint>> {
    base.validate()?;
    let q = base
        .quantizer()
        .ok_or_else(|| Error::InvalidConfig("quantization analysis needs dac_bits".into()))?;
    if cspr_values.is_empty() {
        return Err(Error::InvalidConfig("no CSPR values given".into()));
    }
    let rrc = base.rrc()?;
    let half_band = base.signal_half_band_hz();
    cspr_values
        .par_iter()
        .map(|&cspr| {
            let mut tone = base.tone;
            tone.cspr_db = cspr;
            let frame = txdsp::build_frame(&FrameSpec {
                order_m: base.modulation_m,
                n_symbols: base.n_symbols,
                baud_hz: base.baud_hz,
                rrc,
                tone,
                seed: base.seed,
            })
            .map_err(|e| e.at(Stage::Transmitter))?;
            let w = &frame.waveform;
            let dac = || -> Result<_> {
                let filter = base.shaping.design(frame.tone_offset_hz, w.sample_rate_hz())?;
                let plain = dre::quantize_waveform(w, &q, &QuantizerMode::Plain)?;
                let shaped = dre::quantize_waveform(
                    w,
                    &q,
                    &QuantizerMode::Dre {
                        filter,
                        config: base.dre,
                    },
                )?;
                let segment = SPECTRUM_SEGMENT.min(w.len().next_power_of_two() / 2);
                let band = (-half_band, half_band);
                let tone_at = Some(frame.tone_offset_hz);
                Ok(QuantPoint {
                    cspr_db: cspr,
                    plain_spectrum: dre::quantization_noise_spectrum(w, &plain, segment)?,
                    dre_spectrum: dre::quantization_noise_spectrum(w, &shaped, segment)?,
                    snr_plain_db: dre::tx_snr_inband(w, &plain, band, tone_at)?,
                    snr_dre_db: dre::tx_snr_inband(w, &shaped, band, tone_at)?,
                })
            };
            dac().map_err(|e| e.at(Stage::Dac))
        })
        .collect()
}
