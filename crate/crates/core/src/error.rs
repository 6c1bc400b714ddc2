use std::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Pipeline stage a failure is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Transmitter,
    Dac,
    Channel,
    Receiver,
    Metrics,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Transmitter => "transmitter",
            Stage::Dac => "dac",
            Stage::Channel => "channel",
            Stage::Receiver => "receiver",
            Stage::Metrics => "metrics",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("waveform has no samples")]
    EmptyWaveform,
    #[error("sample rate must be positive and finite, got {0}")]
    NonPositiveRate(f64),
    #[error("roll-off factor must lie in [0, 1], got {0}")]
    InvalidRolloff(f64),
    #[error("input too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("bit count {len} is not divisible by {order} bits per symbol")]
    LengthNotDivisible { len: usize, order: usize },
    #[error("no symbols to shape")]
    EmptySymbols,
    #[error("tone offset {offset_hz} Hz is at or above the Nyquist frequency {nyquist_hz} Hz")]
    ToneAboveNyquist { offset_hz: f64, nyquist_hz: f64 },
    #[error("tone offset {offset_hz} Hz falls inside the signal band (half-width {half_band_hz} Hz)")]
    ToneInsideSignalBand { offset_hz: f64, half_band_hz: f64 },
    #[error("waveform is identically zero")]
    AllZeroWaveform,
    #[error("passband edge {edge_hz} Hz must lie strictly between 0 and Nyquist {nyquist_hz} Hz")]
    InvalidEdge { edge_hz: f64, nyquist_hz: f64 },
    #[error("filter length must be odd, got {0}")]
    EvenTaps(usize),
    #[error("configuration invariant violated: {0}")]
    ConfigInvariantViolated(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("requested bandwidth {bandwidth_hz} Hz exceeds the simulated band {sample_rate_hz} Hz")]
    BandExceedsNyquist { bandwidth_hz: f64, sample_rate_hz: f64 },
    #[error("no signal power left after removing the tone")]
    NoSignalPower,
    #[error("input is constant")]
    ConstantInput,
    #[error("photocurrent mean must be positive, got {0}")]
    NonPositiveMean(f64),
    #[error("{:.3}% of photocurrent samples clipped (limit 1%)", fraction * 100.0)]
    ExcessiveClipping { fraction: f64 },
    #[error("sample rate {rate_hz} Hz is below twice the symbol rate {baud_hz} Bd")]
    RateTooLow { rate_hz: f64, baud_hz: f64 },
    #[error("no correlation peak: peak {peak:.3e} below threshold {threshold:.3e}")]
    NoCorrelationPeak { peak: f64, threshold: f64 },
    #[error("equalizer diverged: output power {output_power:.3e} vs reference {reference_power:.3e}")]
    Diverged { output_power: f64, reference_power: f64 },
    #[error("every DC bias candidate failed")]
    AllCandidatesFailed,
    #[error("noise variance estimate is degenerate ({0})")]
    DegenerateVariance(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps `self` with the pipeline stage it came from. Already tagged
    /// errors keep their original stage.
    pub fn at(self, stage: Stage) -> Error {
        match self {
            tagged @ Error::Stage { .. } => tagged,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// Stage the error is attributed to, if any.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// True for configuration-class errors (bad user input rather than a
    /// numerical failure inside the chain).
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_) | Error::ConfigInvariantViolated(_) | Error::InvalidParameter(_)
        )
    }
}
