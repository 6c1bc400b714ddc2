//! Configuration, the end-to-end chain, sweeps and result files.

pub mod analysis;
pub mod config;
pub mod output;
pub mod pipeline;
pub mod sweep;

pub use analysis::{analyze_quantization, QuantPoint};
pub use config::{LinkConfig, ShapingParams};
pub use output::{emit_csv, emit_svg, parse_csv, Chart, Series};
pub use pipeline::{run_detailed, run_single, transmit, ResultRow, RunOutcome};
pub use sweep::{grid_bits_dre, sweep, GridEntry, GridResult, Optimum, SweepSpec, SweepVariable};
