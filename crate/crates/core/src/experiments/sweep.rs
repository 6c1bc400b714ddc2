//! Parameter sweeps. Points are independent and may run on a worker pool;
//! output order is always sweep order.

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::config::LinkConfig;
use super::pipeline::{run_detailed, ResultRow};

/// Quantity varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    CsprDb,
    OsnrDb,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub base: LinkConfig,
    pub repeats_per_point: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidConfig("sweep has no values".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) || self.values.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidConfig(
                "sweep values must be finite and strictly increasing".into(),
            ));
        }
        if self.repeats_per_point == 0 {
            return Err(Error::InvalidConfig("repeats_per_point must be >= 1".into()));
        }
        self.base.validate()
    }
}

/// Seed of repeat `repeat` at sweep index `index`.
pub fn point_seed(base_seed: u64, index: usize, repeat: usize) -> u64 {
    base_seed
        .wrapping_add(1000u64.wrapping_mul(index as u64))
        .wrapping_add(repeat as u64)
}

/// Evaluates `configs` on a pool of `workers` threads, in order. Failed
/// points become NaN rows; their error is also reported on stderr.
pub fn run_points(configs: &[LinkConfig], first_run_id: u64, workers: usize) -> Result<Vec<ResultRow>> {
    let job = || {
        configs
            .par_iter()
            .enumerate()
            .map(|(i, cfg)| {
                let id = first_run_id + i as u64;
                match run_detailed(cfg, id) {
                    Ok(o) => o.row,
                    Err(e) => {
                        eprintln!("run {id} failed: {e}");
                        ResultRow::failed(id, cfg, e.to_string())
                    }
                }
            })
            .collect::<Vec<_>>()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(job))
}

fn point_configs(spec: &SweepSpec) -> Vec<LinkConfig> {
    let mut out = Vec::with_capacity(spec.values.len() * spec.repeats_per_point);
    for (i, &v) in spec.values.iter().enumerate() {
        for r in 0..spec.repeats_per_point {
            let mut cfg = spec.base.clone();
            match spec.variable {
                SweepVariable::CsprDb => cfg.tone.cspr_db = v,
                SweepVariable::OsnrDb => cfg.osnr.target_db = Some(v),
            }
            cfg.seed = point_seed(spec.base.seed, i, r);
            out.push(cfg);
        }
    }
    out
}

/// One row per value and repeat, in sweep order.
pub fn sweep(spec: &SweepSpec, workers: usize) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    run_points(&point_configs(spec), 0, workers)
}

/// Best point of a CSPR sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optimum {
    pub ngmi: f64,
    pub cspr_db: f64,
}

/// Argmax of NGMI over `(cspr, ngmi)` pairs; NaN points are skipped, ties
/// go to the lower CSPR.
pub fn best_point(points: &[(f64, f64)]) -> Option<Optimum> {
    let mut sorted: Vec<(f64, f64)> = points.iter().copied().filter(|p| !p.1.is_nan()).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<Optimum> = None;
    for (cspr_db, ngmi) in sorted {
        if best.is_none_or(|b| ngmi > b.ngmi) {
            best = Some(Optimum { ngmi, cspr_db });
        }
    }
    best
}

/// Summary of one (bits, DRE) cell of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEntry {
    pub dac_bits: Option<u32>,
    pub dre_enabled: bool,
    /// Optimum of the repeat-averaged NGMI curve.
    pub best: Option<Optimum>,
    /// Optimum of each repeat on its own.
    pub per_repeat: Vec<Option<Optimum>>,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub rows: Vec<ResultRow>,
    pub entries: Vec<GridEntry>,
}

/// Summarizes CSPR-sweep rows laid out value-major, repeat-minor.
pub fn summarize_cspr_rows(
    rows: &[ResultRow],
    values: &[f64],
    repeats: usize,
) -> (Option<Optimum>, Vec<Option<Optimum>>) {
    let mut mean_curve = Vec::with_capacity(values.len());
    for (i, &v) in values.iter().enumerate() {
        let reps = &rows[i * repeats..(i + 1) * repeats];
        let ok: Vec<f64> = reps.iter().map(|r| r.ngmi).filter(|x| !x.is_nan()).collect();
        let mean = if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().sum::<f64>() / ok.len() as f64
        };
        mean_curve.push((v, mean));
    }
    let per_repeat = (0..repeats)
        .map(|r| {
            let curve: Vec<(f64, f64)> = values
                .iter()
                .enumerate()
                .map(|(i, &v)| (v, rows[i * repeats + r].ngmi))
                .collect();
            best_point(&curve)
        })
        .collect();
    (best_point(&mean_curve), per_repeat)
}

/// CSPR sweep for every (bits, DRE) pair. DRE-on and DRE-off points share
/// seeds, so each pair sees the same bits and noise.
pub fn grid_bits_dre(
    base: &LinkConfig,
    bits_list: &[Option<u32>],
    dre_modes: &[bool],
    cspr_values: &[f64],
    repeats: usize,
    workers: usize,
) -> Result<GridResult> {
    if bits_list.is_empty() || dre_modes.is_empty() {
        return Err(Error::InvalidConfig(
            "grid needs at least one bit depth and DRE mode".into(),
        ));
    }
    let mut specs = Vec::new();
    let mut configs = Vec::new();
    for &bits in bits_list {
        for &dre in dre_modes {
            let mut b = base.clone();
            b.dac_bits = bits;
            b.dre_enabled = dre;
            let spec = SweepSpec {
                variable: SweepVariable::CsprDb,
                values: cspr_values.to_vec(),
                base: b,
                repeats_per_point: repeats,
            };
            spec.validate()?;
            configs.extend(point_configs(&spec));
            specs.push((bits, dre));
        }
    }
    let rows = run_points(&configs, 0, workers)?;
    let per_cell = cspr_values.len() * repeats;
    let entries = specs
        .iter()
        .enumerate()
        .map(|(c, &(bits, dre))| {
            let cell = &rows[c * per_cell..(c + 1) * per_cell];
            let (best, per_repeat) = summarize_cspr_rows(cell, cspr_values, repeats);
            GridEntry {
                dac_bits: bits,
                dre_enabled: dre,
                best,
                per_repeat,
            }
        })
        .collect();
    Ok(GridResult { rows, entries })
}

/// OSNR sweep at the CSPR that maximizes NGMI in a prior CSPR sweep of
/// `cspr_values` (run at the base configuration's own OSNR setting).
pub fn sweep_osnr_at_optimum(
    base: &LinkConfig,
    cspr_values: &[f64],
    osnr_values: &[f64],
    workers: usize,
) -> Result<(Optimum, Vec<ResultRow>)> {
    let cspr_spec = SweepSpec {
        variable: SweepVariable::CsprDb,
        values: cspr_values.to_vec(),
        base: base.clone(),
        repeats_per_point: 1,
    };
    let rows = sweep(&cspr_spec, workers)?;
    let curve: Vec<(f64, f64)> = rows.iter().map(|r| (r.cspr_target_db, r.ngmi)).collect();
    let opt = best_point(&curve)
        .ok_or_else(|| Error::InvalidConfig("every point of the CSPR sweep failed".into()))?;
    let mut at_opt = base.clone();
    at_opt.tone.cspr_db = opt.cspr_db;
    let osnr_spec = SweepSpec {
        variable: SweepVariable::OsnrDb,
        values: osnr_values.to_vec(),
        base: at_opt,
        repeats_per_point: 1,
    };
    Ok((opt, sweep(&osnr_spec, workers)?))
}
