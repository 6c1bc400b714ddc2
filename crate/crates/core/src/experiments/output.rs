//! CSV and SVG emission.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::FEC_NGMI_THRESHOLD;

use super::pipeline::ResultRow;

/// Column order of the results CSV.
pub const CSV_COLUMNS: [&str; 14] = [
    "run_id",
    "dac_bits",
    "dre_enabled",
    "cspr_target_db",
    "cspr_measured_db",
    "osnr_db",
    "fiber_km",
    "snr_db",
    "gmi_bits",
    "ngmi",
    "ber",
    "clipped_fraction",
    "chosen_bias",
    "seed",
];

const OFF: &str = "off";

fn num(x: f64) -> String {
    // shortest representation that round-trips
    format!("{x}")
}

fn record(r: &ResultRow) -> [String; 14] {
    [
        r.run_id.to_string(),
        r.dac_bits.map_or(OFF.to_string(), |b| b.to_string()),
        r.dre_enabled.to_string(),
        num(r.cspr_target_db),
        num(r.cspr_measured_db),
        r.osnr_db.map_or(OFF.to_string(), num),
        num(r.fiber_km),
        num(r.snr_db),
        num(r.gmi_bits),
        num(r.ngmi),
        num(r.ber),
        num(r.clipped_fraction),
        num(r.chosen_bias),
        r.seed.to_string(),
    ]
}

/// Writes the header and one line per row.
pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Csv("no rows to write".into()));
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record(record(r)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[ResultRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is ASCII"))
}

/// Writes `rows` to `path`. Nothing is created when `rows` is empty.
pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let text = csv_string(rows)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads back a results CSV written by [`emit_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::Csv(e.to_string()))?;
    if header.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(Error::Csv(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |i: usize| Error::Csv(format!("row {}: bad {} {:?}", line + 1, CSV_COLUMNS[i], field(i)));
        let f = |i: usize| field(i).parse::<f64>().map_err(|_| bad(i));
        let opt = |i: usize| -> Result<Option<f64>> {
            if field(i) == OFF {
                Ok(None)
            } else {
                f(i).map(Some)
            }
        };
        rows.push(ResultRow {
            run_id: field(0).parse().map_err(|_| bad(0))?,
            dac_bits: if field(1) == OFF {
                None
            } else {
                Some(field(1).parse().map_err(|_| bad(1))?)
            },
            dre_enabled: field(2).parse().map_err(|_| bad(2))?,
            cspr_target_db: f(3)?,
            cspr_measured_db: f(4)?,
            osnr_db: opt(5)?,
            fiber_km: f(6)?,
            snr_db: f(7)?,
            gmi_bits: f(8)?,
            ngmi: f(9)?,
            ber: f(10)?,
            clipped_fraction: f(11)?,
            chosen_bias: f(12)?,
            seed: field(13).parse().map_err(|_| bad(13))?,
            error: None,
        });
    }
    Ok(rows)
}

/// One curve of a line chart.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Chart description for [`svg_chart`].
#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Draw the FEC threshold as a dashed horizontal line.
    pub fec_line: bool,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn nice_bounds(lo: f64, hi: f64) -> (f64, f64) {
    if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders a line chart as a standalone SVG document.
pub fn svg_chart(chart: &Chart) -> String {
    let (w, h) = (720.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 170.0, 40.0, 55.0);
    let pw = w - ml - mr;
    let ph = h - mt - mb;
    let finite: Vec<(f64, f64)> = chart
        .series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let mut ys: Vec<f64> = finite.iter().map(|p| p.1).collect();
    if chart.fec_line {
        ys.push(FEC_NGMI_THRESHOLD);
    }
    let xs: Vec<f64> = finite.iter().map(|p| p.0).collect();
    let fold = |v: &[f64]| {
        v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        })
    };
    let (x0, x1) = if xs.is_empty() {
        (0.0, 1.0)
    } else {
        nice_bounds(fold(&xs).0, fold(&xs).1)
    };
    let (y0, y1) = if ys.is_empty() {
        (0.0, 1.0)
    } else {
        nice_bounds(fold(&ys).0, fold(&ys).1)
    };
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| mt + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        ml + pw / 2.0,
        escape(&chart.title)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
    );
    for i in 0..=5 {
        let fx = x0 + (x1 - x0) * i as f64 / 5.0;
        let fy = y0 + (y1 - y0) * i as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#ddd"/><text x="{0}" y="{3}" text-anchor="middle">{4:.3}</text>"##,
            sx(fx),
            mt,
            mt + ph,
            mt + ph + 16.0,
            fx
        );
        let _ = writeln!(
            s,
            r##"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="#ddd"/><text x="{3}" y="{4}" text-anchor="end">{5:.3}</text>"##,
            ml,
            sy(fy),
            ml + pw,
            ml - 6.0,
            sy(fy) + 4.0,
            fy
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        ml + pw / 2.0,
        h - 15.0,
        escape(&chart.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        mt + ph / 2.0,
        escape(&chart.y_label)
    );
    if chart.fec_line {
        let y = sy(FEC_NGMI_THRESHOLD);
        let _ = writeln!(
            s,
            r##"<line x1="{ml}" y1="{y}" x2="{}" y2="{y}" stroke="#555" stroke-dasharray="6 4"/><text x="{}" y="{}" fill="#555">FEC {FEC_NGMI_THRESHOLD}</text>"##,
            ml + pw,
            ml + 4.0,
            y - 4.0
        );
    }
    for (k, series) in chart.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = series
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = mt + 14.0 + 18.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="{color}" stroke-width="2"/><text x="{3}" y="{4}">{5}</text>"#,
            ml + pw + 10.0,
            ly,
            ml + pw + 30.0,
            ml + pw + 36.0,
            ly + 4.0,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_svg(chart: &Chart, path: &Path) -> Result<()> {
    if chart.series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::InvalidParameter("chart has no data".into()));
    }
    std::fs::write(path, svg_chart(chart))?;
    Ok(())
}
