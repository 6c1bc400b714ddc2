//! Simulator of a Kramers-Kronig direct-detection link whose carrier is
//! added digitally at the transmitter, with a DAC noise-shaping quantizer
//! (the digital resolution enhancer, DRE).
//!
//! The chain is split into modules that mirror the physical link:
//!
//! | module          | content                                              |
//! |-----------------|------------------------------------------------------|
//! | [`signal`]      | waveforms, RRC, resampling, Hilbert transform, PSD   |
//! | [`txdsp`]       | bits, QAM mapping, pulse shaping, carrier tone       |
//! | [`dre`]         | DAC quantizer and the beam-search DRE                |
//! | [`channel`]     | optical filter, ASE loading, dispersion, PD, ADC     |
//! | [`kkrx`]        | bias search, KK reconstruction, sync, LMS            |
//! | [`metrics`]     | SNR, EVM, BER, GMI and NGMI                          |
//! | [`experiments`] | configuration, end-to-end runs, sweeps, CSV and SVG  |
//!
//! ```
//! use kkdre::experiments::{run_single, LinkConfig};
//!
//! let cfg = LinkConfig {
//!     dac_bits: None,
//!     n_symbols: 1 << 14,
//!     tone: kkdre::txdsp::ToneSpec { offset_hz: 13.9e9, cspr_db: 12.0 },
//!     ..LinkConfig::default()
//! };
//! let row = run_single(&cfg).unwrap();
//! assert!(row.ngmi > 0.99);
//! ```

// `!(x > 0.0)` is how the validators reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod dre;
pub mod error;
pub mod experiments;
pub mod kkrx;
pub mod metrics;
pub mod signal;
pub mod txdsp;

pub use error::{Error, Result, Stage};
pub use signal::{RealWaveform, Spectrum, Waveform};

// The guide's code blocks run as doc-tests, one item per chapter so a
// failure names the file it came from.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    struct Intro;
    #[doc = include_str!("../../../book/src/signals.md")]
    struct Signals;
    #[doc = include_str!("../../../book/src/transmitter.md")]
    struct Transmitter;
    #[doc = include_str!("../../../book/src/dre.md")]
    struct Dre;
    #[doc = include_str!("../../../book/src/channel.md")]
    struct Channel;
    #[doc = include_str!("../../../book/src/receiver.md")]
    struct Receiver;
    #[doc = include_str!("../../../book/src/metrics.md")]
    struct Metrics;
    #[doc = include_str!("../../../book/src/experiments.md")]
    struct Experiments;
}
