//! The end-to-end chain for one configuration.

use crate::channel::{self, Photocurrent};
use crate::dre::{self, QuantizerMode};
use crate::error::{Result, Stage};
use crate::kkrx::{self, BiasOutcome, ReceiverContext};
use crate::metrics::{self, MetricReport};
use crate::signal::Waveform;
use crate::txdsp::{self, ConstellationMap, FrameSpec, TxFrame};

use super::config::LinkConfig;

/// One measurement point. Column order of the CSV output follows the field
/// order here (without `error`).
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub run_id: u64,
    pub dac_bits: Option<u32>,
    pub dre_enabled: bool,
    pub cspr_target_db: f64,
    pub cspr_measured_db: f64,
    /// Measured OSNR; `None` when no noise was loaded.
    pub osnr_db: Option<f64>,
    pub fiber_km: f64,
    pub snr_db: f64,
    pub gmi_bits: f64,
    pub ngmi: f64,
    pub ber: f64,
    pub clipped_fraction: f64,
    pub chosen_bias: f64,
    pub seed: u64,
    /// Failure message for points whose chain did not complete.
    pub error: Option<String>,
}

impl ResultRow {
    /// Row for a point whose chain failed; metrics are NaN.
    pub fn failed(run_id: u64, cfg: &LinkConfig, message: String) -> Self {
        ResultRow {
            run_id,
            dac_bits: cfg.dac_bits,
            dre_enabled: cfg.dre_enabled,
            cspr_target_db: cfg.tone.cspr_db,
            cspr_measured_db: f64::NAN,
            osnr_db: cfg.osnr.target_db.map(|_| f64::NAN),
            fiber_km: cfg.fiber.length_km,
            snr_db: f64::NAN,
            gmi_bits: f64::NAN,
            ngmi: f64::NAN,
            ber: f64::NAN,
            clipped_fraction: f64::NAN,
            chosen_bias: f64::NAN,
            seed: cfg.seed,
            error: Some(message),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    /// Field-wise equality where NaN equals NaN.
    pub fn same_as(&self, other: &ResultRow) -> bool {
        fn eq(a: f64, b: f64) -> bool {
            a == b || (a.is_nan() && b.is_nan())
        }
        self.run_id == other.run_id
            && self.dac_bits == other.dac_bits
            && self.dre_enabled == other.dre_enabled
            && eq(self.cspr_target_db, other.cspr_target_db)
            && eq(self.cspr_measured_db, other.cspr_measured_db)
            && match (self.osnr_db, other.osnr_db) {
                (Some(a), Some(b)) => eq(a, b),
                (None, None) => true,
                _ => false,
            }
            && eq(self.fiber_km, other.fiber_km)
            && eq(self.snr_db, other.snr_db)
            && eq(self.gmi_bits, other.gmi_bits)
            && eq(self.ngmi, other.ngmi)
            && eq(self.ber, other.ber)
            && eq(self.clipped_fraction, other.clipped_fraction)
            && eq(self.chosen_bias, other.chosen_bias)
            && self.seed == other.seed
    }
}

/// Intermediate signals of the transmitter and channel, exposed for
/// analysis and tests.
#[derive(Debug, Clone)]
pub struct ChannelTrace {
    pub frame: TxFrame,
    pub dac_output: Waveform,
    pub cspr_measured_db: f64,
    pub osnr_measured_db: Option<f64>,
    pub photocurrent: Photocurrent,
    /// Photocurrent after the ADC.
    pub adc_output: crate::signal::RealWaveform,
}

/// Everything [`run_detailed`] produces.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub row: ResultRow,
    pub metrics: MetricReport,
    pub bias: BiasOutcome,
    pub training_mse: Vec<f64>,
    /// Mean removed by the AC-coupled photodiode (never used by the
    /// receiver).
    pub removed_mean: f64,
}

/// Transmitter, DAC and channel up to the ADC output.
pub fn transmit(cfg: &LinkConfig) -> Result<ChannelTrace> {
    cfg.validate()?;
    let rrc = cfg.rrc()?;
    let frame = txdsp::build_frame(&FrameSpec {
        order_m: cfg.modulation_m,
        n_symbols: cfg.n_symbols,
        baud_hz: cfg.baud_hz,
        rrc,
        tone: cfg.tone,
        seed: cfg.seed,
    })
    .map_err(|e| e.at(Stage::Transmitter))?;

    let dac_output = dac(cfg, &frame).map_err(|e| e.at(Stage::Dac))?;
    let cspr_measured_db =
        channel::measure_cspr(&dac_output, frame.tone_offset_hz).map_err(|e| e.at(Stage::Dac))?;

    let ch = (|| -> Result<_> {
        let center = cfg.bpf_center_hz();
        let field = channel::optical_bpf(&dac_output, center, cfg.bpf_bandwidth_hz)?;
        let field = channel::load_osnr(&field, &cfg.osnr, cfg.seed.wrapping_add(1))?;
        let osnr_measured = match cfg.osnr.target_db {
            Some(_) => {
                let half = cfg.bpf_bandwidth_hz / 2.0;
                Some(channel::measure_osnr(
                    &field,
                    (center - half, center + half),
                    cfg.osnr.ref_bandwidth_hz,
                )?)
            }
            None => None,
        };
        let field = channel::apply_cd(&field, &cfg.fiber)?;
        let field = channel::optical_bpf(&field, center, cfg.bpf_bandwidth_hz)?;
        let pc = channel::photodiode(&field, &cfg.pd)?;
        let mut current = pc.current.clone();
        if let Some(fc) = cfg.electrical_lowpass_hz {
            current = channel::electrical_lowpass(&current, fc)?;
        }
        let adc_output = channel::adc(&current, cfg.adc_rate_hz, cfg.adc_bits)?;
        Ok((osnr_measured, pc, adc_output))
    })()
    .map_err(|e| e.at(Stage::Channel))?;

    Ok(ChannelTrace {
        frame,
        dac_output,
        cspr_measured_db,
        osnr_measured_db: ch.0,
        photocurrent: ch.1,
        adc_output: ch.2,
    })
}

fn dac(cfg: &LinkConfig, frame: &TxFrame) -> Result<Waveform> {
    let Some(q) = cfg.quantizer() else {
        return Ok(frame.waveform.clone());
    };
    let mode = if cfg.dre_enabled {
        QuantizerMode::Dre {
            filter: cfg
                .shaping
                .design(frame.tone_offset_hz, frame.waveform.sample_rate_hz())?,
            config: cfg.dre,
        }
    } else {
        QuantizerMode::Plain
    };
    dre::quantize_waveform(&frame.waveform, &q, &mode)
}

/// Runs the chain and returns the row with all diagnostics.
pub fn run_detailed(cfg: &LinkConfig, run_id: u64) -> Result<RunOutcome> {
    let trace = transmit(cfg)?;
    let rrc = cfg.rrc()?;
    let ctx = ReceiverContext {
        tx_symbols: &trace.frame.symbols,
        rrc,
        baud_hz: cfg.baud_hz,
        tone_offset_hz: trace.frame.tone_offset_hz,
        kk: cfg.kk,
        eq: cfg.eq,
    };
    let (bias, rx) = (|| -> Result<_> {
        let candidates = kkrx::estimate_bias_candidates(&trace.adc_output, &cfg.bias)?;
        let up = kkrx::upsample_current(&trace.adc_output, &cfg.kk)?;
        let bias = kkrx::optimize_dc_bias_upsampled(&up, &candidates, &ctx, &cfg.bias)?;
        let rx = kkrx::receive(&up, bias.best_bias, &ctx)?;
        Ok((bias, rx))
    })()
    .map_err(|e| e.at(Stage::Receiver))?;

    let map = ConstellationMap::qam(cfg.modulation_m).map_err(|e| e.at(Stage::Metrics))?;
    let report = metrics::evaluate(&rx.symbols, &trace.frame.symbols, &trace.frame.bits, &map)
        .map_err(|e| e.at(Stage::Metrics))?;

    let row = ResultRow {
        run_id,
        dac_bits: cfg.dac_bits,
        dre_enabled: cfg.dre_enabled,
        cspr_target_db: cfg.tone.cspr_db,
        cspr_measured_db: trace.cspr_measured_db,
        osnr_db: trace.osnr_measured_db,
        fiber_km: cfg.fiber.length_km,
        snr_db: report.snr_db,
        gmi_bits: report.gmi_bits,
        ngmi: report.ngmi,
        ber: report.ber,
        clipped_fraction: rx.clipped_fraction,
        chosen_bias: bias.best_bias,
        seed: cfg.seed,
        error: None,
    };
    Ok(RunOutcome {
        row,
        metrics: report,
        bias,
        training_mse: rx.training_mse,
        removed_mean: trace.photocurrent.removed_mean,
    })
}

/// Runs the chain for one configuration. Deterministic in `cfg`: the bits
/// use `cfg.seed`, the ASE noise `cfg.seed + 1`.
pub fn run_single(cfg: &LinkConfig) -> Result<ResultRow> {
    run_detailed(cfg, 0).map(|o| o.row)
}
