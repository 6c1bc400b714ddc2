//! Link configuration, read from JSON. Every field has a default, so an
//! empty document (or `{}`) describes the reference setup.

use std::path::Path;

use crate::channel::{FiberSpec, OsnrSpec, PdSpec};
use crate::dre::{self, DreConfig, QuantizerSpec, ShapingFilter};
use crate::error::{Error, Result};
use crate::kkrx::{BiasSearch, EqualizerConfig, KkConfig};
use crate::signal::RrcSpec;
use crate::txdsp::{ConstellationMap, ToneSpec};

/// Serde helpers for optional numbers that may be written as `null` or
/// `"off"`.
pub mod optional_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => s.serialize_f64(*x),
            None => s.serialize_str("off"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Raw>::deserialize(d)? {
            None => Ok(None),
            Some(Raw::Num(x)) => Ok(Some(x)),
            Some(Raw::Text(t)) if t.eq_ignore_ascii_case("off") => Ok(None),
            Some(Raw::Text(t)) => Err(serde::de::Error::custom(format!(
                "expected a number or \"off\", got {t:?}"
            ))),
        }
    }
}

/// Like [`optional_f64`] for bit counts.
pub mod optional_bits {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(u32),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<u32>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => s.serialize_u32(*x),
            None => s.serialize_str("off"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u32>, D::Error> {
        match Option::<Raw>::deserialize(d)? {
            None => Ok(None),
            Some(Raw::Num(x)) => Ok(Some(x)),
            Some(Raw::Text(t)) if t.eq_ignore_ascii_case("off") => Ok(None),
            Some(Raw::Text(t)) => Err(serde::de::Error::custom(format!(
                "expected a bit count or \"off\", got {t:?}"
            ))),
        }
    }
}

/// Parameters of the DRE shaping filter. The passband edge defaults to the
/// tone offset plus `guard_hz`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ShapingParams {
    pub n_taps: usize,
    pub guard_hz: f64,
    #[serde(with = "optional_f64")]
    pub passband_edge_hz: Option<f64>,
}

impl Default for ShapingParams {
    fn default() -> Self {
        ShapingParams {
            n_taps: 5,
            guard_hz: 2e9,
            passband_edge_hz: None,
        }
    }
}

impl ShapingParams {
    pub fn edge_hz(&self, tone_offset_hz: f64) -> f64 {
        self.passband_edge_hz
            .unwrap_or(tone_offset_hz.abs() + self.guard_hz)
    }

    pub fn design(&self, tone_offset_hz: f64, sample_rate_hz: f64) -> Result<ShapingFilter> {
        dre::design_shaping_filter(self.edge_hz(tone_offset_hz), sample_rate_hz, self.n_taps)
    }
}

/// One end-to-end run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub modulation_m: usize,
    pub baud_hz: f64,
    pub sps_dac: usize,
    pub rolloff_beta: f64,
    pub tone: ToneSpec,
    #[serde(with = "optional_bits")]
    pub dac_bits: Option<u32>,
    pub dre_enabled: bool,
    pub dre: DreConfig,
    pub shaping: ShapingParams,
    pub bpf_bandwidth_hz: f64,
    pub fiber: FiberSpec,
    pub osnr: OsnrSpec,
    pub pd: PdSpec,
    #[serde(with = "optional_f64")]
    pub electrical_lowpass_hz: Option<f64>,
    pub adc_rate_hz: f64,
    #[serde(with = "optional_bits")]
    pub adc_bits: Option<u32>,
    pub kk: KkConfig,
    pub bias: BiasSearch,
    pub eq: EqualizerConfig,
    pub n_symbols: usize,
    pub seed: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            modulation_m: 6,
            baud_hz: 25e9,
            sps_dac: 4,
            rolloff_beta: 0.01,
            tone: ToneSpec::default(),
            dac_bits: Some(6),
            dre_enabled: false,
            dre: DreConfig::default(),
            shaping: ShapingParams::default(),
            bpf_bandwidth_hz: 40e9,
            fiber: FiberSpec::back_to_back(),
            osnr: OsnrSpec::default(),
            pd: PdSpec::default(),
            electrical_lowpass_hz: None,
            adc_rate_hz: 80e9,
            adc_bits: None,
            kk: KkConfig::default(),
            bias: BiasSearch::default(),
            eq: EqualizerConfig::default(),
            n_symbols: 1 << 16,
            seed: 1,
        }
    }
}

/// Smallest frame accepted for runs that report NGMI.
pub const MIN_SYMBOLS: usize = 1 << 14;

/// Span used for the RRC tap description; filtering itself is exact.
const RRC_SPAN: usize = 64;

impl LinkConfig {
    /// Parses a JSON document; blank input gives the defaults.
    pub fn from_json_str(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Ok(LinkConfig::default());
        }
        let cfg: LinkConfig = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn rrc(&self) -> Result<RrcSpec> {
        RrcSpec::new(self.rolloff_beta, self.sps_dac, RRC_SPAN)
            .map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn dac_rate_hz(&self) -> f64 {
        self.baud_hz * self.sps_dac as f64
    }

    /// One-sided width of the signal spectrum.
    pub fn signal_half_band_hz(&self) -> f64 {
        0.5 * self.baud_hz * (1.0 + self.rolloff_beta)
    }

    /// Centre of the optical band-pass: midway between the lower signal
    /// edge and the tone.
    pub fn bpf_center_hz(&self) -> f64 {
        0.5 * (self.tone.offset_hz - self.signal_half_band_hz())
    }

    pub fn quantizer(&self) -> Option<QuantizerSpec> {
        self.dac_bits.map(|bits| QuantizerSpec {
            bits,
            full_scale: 1.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        ConstellationMap::qam(self.modulation_m).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if !(self.baud_hz > 0.0) || !self.baud_hz.is_finite() {
            return bad(format!("baud_hz must be positive, got {}", self.baud_hz));
        }
        self.rrc()?;
        if !(self.adc_rate_hz >= 2.0 * self.baud_hz) {
            return bad(format!(
                "adc_rate_hz {} must be at least twice the symbol rate",
                self.adc_rate_hz
            ));
        }
        if self.n_symbols < MIN_SYMBOLS {
            return bad(format!(
                "n_symbols must be at least {MIN_SYMBOLS}, got {}",
                self.n_symbols
            ));
        }
        if !(self.bpf_bandwidth_hz > 0.0) || self.bpf_bandwidth_hz > self.dac_rate_hz() {
            return bad(format!(
                "bpf_bandwidth_hz {} must lie in (0, {}]",
                self.bpf_bandwidth_hz,
                self.dac_rate_hz()
            ));
        }
        if let Some(f) = self.electrical_lowpass_hz {
            if !(f > 0.0) {
                return bad(format!("electrical_lowpass_hz must be positive, got {f}"));
            }
        }
        self.tone
            .validate(self.signal_half_band_hz(), self.dac_rate_hz())
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let wrap = |r: Result<()>| r.map_err(|e| Error::InvalidConfig(e.to_string()));
        if let Some(q) = self.quantizer() {
            wrap(q.validate())?;
            wrap(self.dre.validate(&q))?;
        }
        if let Some(b) = self.adc_bits {
            wrap(
                QuantizerSpec {
                    bits: b,
                    full_scale: 1.0,
                }
                .validate(),
            )?;
        }
        wrap(
            self.shaping
                .design(self.tone.offset_hz, self.dac_rate_hz())
                .map(|_| ()),
        )?;
        wrap(self.fiber.validate())?;
        wrap(self.osnr.validate())?;
        if !(self.pd.responsivity > 0.0) {
            return bad("pd.responsivity must be positive".into());
        }
        wrap(self.kk.validate())?;
        wrap(self.bias.validate())?;
        wrap(self.eq.validate())?;
        Ok(())
    }
}
