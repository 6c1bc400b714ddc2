//! Command-line front end for the link simulator.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kkdre::experiments::output::csv_string;
use kkdre::experiments::sweep::sweep_osnr_at_optimum;
use kkdre::experiments::{
    analyze_quantization, emit_svg, grid_bits_dre, run_detailed, sweep, Chart, GridResult, LinkConfig,
    QuantPoint, ResultRow, Series, SweepSpec, SweepVariable,
};
use kkdre::Error;

#[derive(Parser, Debug)]
#[command(
    name = "kkdre",
    version,
    about = "KK direct-detection link with DAC resolution enhancement"
)]
struct Cli {
    /// Base seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Directory for SVG figures.
    #[arg(long, global = true)]
    svg: Option<PathBuf>,
    /// CSV output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Clone)]
struct Range {
    /// First CSPR value in dB.
    #[arg(long, default_value_t = 4.0, allow_negative_numbers = true)]
    from: f64,
    /// Last CSPR value in dB (inclusive).
    #[arg(long, default_value_t = 14.0, allow_negative_numbers = true)]
    to: f64,
    /// CSPR step in dB.
    #[arg(long, default_value_t = 1.0)]
    step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DreChoice {
    On,
    Off,
    Both,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one configuration.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// NGMI versus CSPR.
    SweepCspr {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        range: Range,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// NGMI versus OSNR.
    SweepOsnr {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated OSNR values in dB.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
        /// Fixed CSPR in dB instead of the configured one.
        #[arg(long, conflicts_with = "at_optimum", allow_negative_numbers = true)]
        cspr: Option<f64>,
        /// Pick the CSPR from a prior sweep over --from/--to/--step.
        #[arg(long)]
        at_optimum: bool,
        #[command(flatten)]
        range: Range,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// CSPR sweeps for every DAC resolution and DRE setting.
    Grid {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated DAC resolutions; `off` disables quantization.
        #[arg(long, value_delimiter = ',', default_value = "4,5,6")]
        bits: Vec<String>,
        #[arg(long, value_enum, default_value_t = DreChoice::Both)]
        dre: DreChoice,
        #[command(flatten)]
        range: Range,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// Transmitter quantization noise with and without the DRE.
    AnalyzeQuantnoise {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, default_value_t = 14.0, allow_negative_numbers = true)]
        to: f64,
        #[arg(long, default_value_t = 2.0)]
        step: f64,
    },
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(String),
    Pipeline(Error),
    Output(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Pipeline(e)
        }
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<LinkConfig, Failure> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display())))?;
            LinkConfig::from_json_str(&text).map_err(|e| Failure::Config(e.to_string()))?
        }
        None => LinkConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn grid_values(r: &Range) -> Result<Vec<f64>, Failure> {
    if r.step.is_nan() || r.step <= 0.0 || !r.from.is_finite() || !r.to.is_finite() || r.to < r.from {
        return Err(Failure::Config(format!(
            "bad range: from {} to {} step {}",
            r.from, r.to, r.step
        )));
    }
    let n = ((r.to - r.from) / r.step + 1e-9).floor() as usize;
    // computed from the index to keep values free of accumulated round-off
    Ok((0..=n).map(|i| r.from + i as f64 * r.step).collect())
}

fn parse_bits(list: &[String]) -> Result<Vec<Option<u32>>, Failure> {
    list.iter()
        .map(|s| match s.trim() {
            "off" | "OFF" => Ok(None),
            t => t
                .parse::<u32>()
                .map(Some)
                .map_err(|_| Failure::Config(format!("bad bit depth '{t}'"))),
        })
        .collect()
}

fn write_rows(rows: &[ResultRow], out: Option<&Path>) -> Result<(), Failure> {
    let text = csv_string(rows).map_err(|e| Failure::Output(e.to_string()))?;
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Output(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Output(e.to_string())),
    }
}

fn save_chart(dir: Option<&Path>, name: &str, chart: &Chart) -> Result<(), Failure> {
    let Some(dir) = dir else {
        return Ok(());
    };
    fs::create_dir_all(dir).map_err(|e| Failure::Output(format!("{}: {e}", dir.display())))?;
    emit_svg(chart, &dir.join(name)).map_err(|e| Failure::Output(e.to_string()))
}

fn bits_label(bits: Option<u32>) -> String {
    bits.map_or_else(|| "no DAC".to_string(), |b| format!("{b} bit"))
}

fn grid_chart(grid: &GridResult, values: &[f64], repeats: usize) -> Chart {
    let per_cell = values.len() * repeats;
    let series = grid
        .entries
        .iter()
        .enumerate()
        .map(|(c, e)| {
            let rows = &grid.rows[c * per_cell..(c + 1) * per_cell];
            let points = values
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let reps = &rows[i * repeats..(i + 1) * repeats];
                    (v, reps.iter().map(|r| r.ngmi).sum::<f64>() / repeats as f64)
                })
                .collect();
            Series {
                label: format!(
                    "{}, DRE {}",
                    bits_label(e.dac_bits),
                    if e.dre_enabled { "on" } else { "off" }
                ),
                points,
            }
        })
        .collect();
    Chart {
        title: "NGMI versus CSPR".into(),
        x_label: "CSPR (dB)".into(),
        y_label: "NGMI".into(),
        series,
        fec_line: true,
    }
}

fn quant_chart(points: &[QuantPoint]) -> Chart {
    Chart {
        title: "Transmitter in-band SNR".into(),
        x_label: "CSPR (dB)".into(),
        y_label: "SNR (dB)".into(),
        series: vec![
            Series {
                label: "no DRE".into(),
                points: points.iter().map(|p| (p.cspr_db, p.snr_plain_db)).collect(),
            },
            Series {
                label: "DRE".into(),
                points: points.iter().map(|p| (p.cspr_db, p.snr_dre_db)).collect(),
            },
        ],
        fec_line: false,
    }
}

fn spectrum_chart(p: &QuantPoint) -> Chart {
    let to_ghz = |s: &kkdre::Spectrum| -> Vec<(f64, f64)> {
        s.freq_hz
            .iter()
            .zip(&s.psd_db_hz)
            .map(|(f, d)| (f / 1e9, *d))
            .collect()
    };
    Chart {
        title: format!("Quantization noise at {} dB CSPR", p.cspr_db),
        x_label: "Frequency (GHz)".into(),
        y_label: "PSD (dB/Hz)".into(),
        series: vec![
            Series {
                label: "no DRE".into(),
                points: to_ghz(&p.plain_spectrum),
            },
            Series {
                label: "DRE".into(),
                points: to_ghz(&p.dre_spectrum),
            },
        ],
        fec_line: false,
    }
}

fn series_by(rows: &[ResultRow], x: impl Fn(&ResultRow) -> f64, label: &str) -> Series {
    Series {
        label: label.into(),
        points: rows.iter().map(|r| (x(r), r.ngmi)).collect(),
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    if cli.workers == 0 {
        return Err(Failure::Config("--workers must be at least 1".into()));
    }
    let out = cli.out.as_deref();
    let svg = cli.svg.as_deref();
    match cli.cmd {
        Command::Run { config } => {
            let cfg = load_config(config.as_deref(), cli.seed)?;
            let o = run_detailed(&cfg, 0)?;
            write_rows(&[o.row], out)
        }
        Command::SweepCspr {
            config,
            range,
            repeats,
        } => {
            let cfg = load_config(config.as_deref(), cli.seed)?;
            let spec = SweepSpec {
                variable: SweepVariable::CsprDb,
                values: grid_values(&range)?,
                base: cfg,
                repeats_per_point: repeats,
            };
            let rows = sweep(&spec, cli.workers)?;
            write_rows(&rows, out)?;
            let chart = Chart {
                title: "NGMI versus CSPR".into(),
                x_label: "CSPR (dB)".into(),
                y_label: "NGMI".into(),
                series: vec![series_by(&rows, |r| r.cspr_target_db, "NGMI")],
                fec_line: true,
            };
            save_chart(svg, "ngmi_vs_cspr.svg", &chart)
        }
        Command::SweepOsnr {
            config,
            values,
            cspr,
            at_optimum,
            range,
            repeats,
        } => {
            let mut cfg = load_config(config.as_deref(), cli.seed)?;
            if let Some(c) = cspr {
                cfg.tone.cspr_db = c;
            }
            let rows = if at_optimum {
                let (opt, rows) = sweep_osnr_at_optimum(&cfg, &grid_values(&range)?, &values, cli.workers)?;
                eprintln!("optimum CSPR {} dB (NGMI {:.4})", opt.cspr_db, opt.ngmi);
                rows
            } else {
                let spec = SweepSpec {
                    variable: SweepVariable::OsnrDb,
                    values,
                    base: cfg,
                    repeats_per_point: repeats,
                };
                sweep(&spec, cli.workers)?
            };
            write_rows(&rows, out)?;
            let chart = Chart {
                title: "NGMI versus OSNR".into(),
                x_label: "OSNR (dB)".into(),
                y_label: "NGMI".into(),
                series: vec![series_by(&rows, |r| r.osnr_db.unwrap_or(f64::NAN), "NGMI")],
                fec_line: true,
            };
            save_chart(svg, "ngmi_vs_osnr.svg", &chart)
        }
        Command::Grid {
            config,
            bits,
            dre,
            range,
            repeats,
        } => {
            let cfg = load_config(config.as_deref(), cli.seed)?;
            let bits = parse_bits(&bits)?;
            let modes: &[bool] = match dre {
                DreChoice::On => &[true],
                DreChoice::Off => &[false],
                DreChoice::Both => &[false, true],
            };
            let values = grid_values(&range)?;
            let grid = grid_bits_dre(&cfg, &bits, modes, &values, repeats, cli.workers)?;
            write_rows(&grid.rows, out)?;
            for e in &grid.entries {
                let best = e.best.map_or_else(
                    || "all points failed".to_string(),
                    |b| format!("best NGMI {:.4} at {} dB CSPR", b.ngmi, b.cspr_db),
                );
                eprintln!(
                    "{:>7}  DRE {:<3}  {best}",
                    bits_label(e.dac_bits),
                    if e.dre_enabled { "on" } else { "off" }
                );
            }
            save_chart(svg, "grid_ngmi_vs_cspr.svg", &grid_chart(&grid, &values, repeats))
        }
        Command::AnalyzeQuantnoise {
            config,
            from,
            to,
            step,
        } => {
            let cfg = load_config(config.as_deref(), cli.seed)?;
            let values = grid_values(&Range { from, to, step })?;
            let points = analyze_quantization(&cfg, &values)?;
            let mut text = String::from("cspr_db,snr_plain_db,snr_dre_db\n");
            for p in &points {
                text.push_str(&format!("{},{},{}\n", p.cspr_db, p.snr_plain_db, p.snr_dre_db));
            }
            match out {
                Some(path) => fs::write(path, text).map_err(|e| Failure::Output(e.to_string()))?,
                None => print!("{text}"),
            }
            save_chart(svg, "tx_snr_vs_cspr.svg", &quant_chart(&points))?;
            for p in &points {
                save_chart(
                    svg,
                    &format!("quant_noise_cspr_{}.svg", p.cspr_db),
                    &spectrum_chart(p),
                )?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Pipeline(e)) => {
            match (&e, e.stage()) {
                (Error::Stage { source, .. }, Some(stage)) => {
                    eprintln!("pipeline error in {stage} stage: {source}")
                }
                _ => eprintln!("pipeline error: {e}"),
            }
            ExitCode::from(3)
        }
        Err(Failure::Output(msg)) => {
            eprintln!("output error: {msg}");
            ExitCode::from(1)
        }
    }
}
