//! CSV artifacts. Every number is written with 9 significant digits.
//!
//! * metrics: `run_id,epoch,loss_task,loss_sa,loss_s,loss_jsd,sa,ra,seconds`;
//!   `sa`/`ra` are empty for epochs without evaluation.
//! * corruption: `run_id,kind,severity,accuracy`, one row per cell of the
//!   final evaluation.
//! * plot data: `x,sa,ra` where `x` is an epoch, gamma or epoch fraction.
//! * study: `x,epochs,sa,ra,baseline_sa,baseline_ra,delta_sa,delta_ra`,
//!   medians over seeds.

use std::path::Path;

use crate::error::{Error, Result};
use crate::train::{CellAccuracy, EpochMetrics, PairedRow, RunOutput};

pub const METRICS_HEADER: [&str; 9] = [
    "run_id",
    "epoch",
    "loss_task",
    "loss_sa",
    "loss_s",
    "loss_jsd",
    "sa",
    "ra",
    "seconds",
];
pub const CORRUPTION_HEADER: [&str; 4] = ["run_id", "kind", "severity", "accuracy"];
pub const PLOT_HEADER: [&str; 3] = ["x", "sa", "ra"];
pub const STUDY_HEADER: [&str; 8] = [
    "x",
    "epochs",
    "sa",
    "ra",
    "baseline_sa",
    "baseline_ra",
    "delta_sa",
    "delta_ra",
];

/// Shortest decimal that reads back as `v` rounded to 9 significant digits.
pub fn fmt_num(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub run_id: String,
    pub config_hash: String,
    pub rows: Vec<EpochMetrics>,
    pub final_sa: Option<f64>,
    pub final_ra: Option<f64>,
    pub cells: Vec<CellAccuracy>,
}

impl MetricsRecord {
    pub fn from_run(run_id: impl Into<String>, config_hash: impl Into<String>, run: &RunOutput) -> Self {
        let cells = run.metrics.last().map(|m| m.cells.clone()).unwrap_or_default();
        Self {
            run_id: run_id.into(),
            config_hash: config_hash.into(),
            rows: run.metrics.clone(),
            final_sa: run.final_sa(),
            final_ra: run.final_ra(),
            cells,
        }
    }
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is utf-8")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut w = writer();
    w.write_record(METRICS_HEADER).expect("in-memory write");
    for r in records {
        for m in &r.rows {
            w.write_record([
                r.run_id.clone(),
                m.epoch.to_string(),
                fmt_num(m.loss.task),
                fmt_num(m.loss.sa),
                fmt_num(m.loss.s),
                fmt_num(m.loss.jsd),
                opt(m.sa),
                opt(m.ra),
                fmt_num(m.seconds),
            ])
            .expect("in-memory write");
        }
    }
    finish(w)
}

/// One parsed row of a metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub epoch: usize,
    pub loss_task: f64,
    pub loss_sa: f64,
    pub loss_s: f64,
    pub loss_jsd: f64,
    pub sa: Option<f64>,
    pub ra: Option<f64>,
    pub seconds: f64,
}

fn check_header(reader: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<()> {
    let header = reader.headers().map_err(csv_err)?;
    if !header.iter().eq(expected.iter().copied()) {
        return Err(Error::Config(format!(
            "unexpected csv header {:?}, expected {expected:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str, line: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Config(format!("line {line}: bad value for `{name}`")))
}

fn opt_field(rec: &csv::StringRecord, i: usize, name: &str, line: usize) -> Result<Option<f64>> {
    match rec.get(i) {
        Some("") => Ok(None),
        _ => field(rec, i, name, line).map(Some),
    }
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    check_header(&mut reader, &METRICS_HEADER)?;
    let mut out = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = k + 2;
        out.push(MetricsRow {
            run_id: field(&rec, 0, "run_id", line)?,
            epoch: field(&rec, 1, "epoch", line)?,
            loss_task: field(&rec, 2, "loss_task", line)?,
            loss_sa: field(&rec, 3, "loss_sa", line)?,
            loss_s: field(&rec, 4, "loss_s", line)?,
            loss_jsd: field(&rec, 5, "loss_jsd", line)?,
            sa: opt_field(&rec, 6, "sa", line)?,
            ra: opt_field(&rec, 7, "ra", line)?,
            seconds: field(&rec, 8, "seconds", line)?,
        });
    }
    Ok(out)
}

pub fn corruption_csv(records: &[MetricsRecord]) -> String {
    let mut w = writer();
    w.write_record(CORRUPTION_HEADER).expect("in-memory write");
    for r in records {
        for c in &r.cells {
            w.write_record([
                r.run_id.clone(),
                c.spec.kind.name().to_string(),
                c.spec.severity.to_string(),
                fmt_num(c.accuracy),
            ])
            .expect("in-memory write");
        }
    }
    finish(w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotPoint {
    pub x: f64,
    pub sa: f64,
    pub ra: f64,
}

/// Evaluated epochs of a record as `(epoch, sa, ra)`.
pub fn plot_points(record: &MetricsRecord) -> Vec<PlotPoint> {
    record
        .rows
        .iter()
        .filter_map(|m| {
            Some(PlotPoint {
                x: m.epoch as f64,
                sa: m.sa?,
                ra: m.ra?,
            })
        })
        .collect()
}

pub fn plot_csv(points: &[PlotPoint]) -> String {
    let mut w = writer();
    w.write_record(PLOT_HEADER).expect("in-memory write");
    for p in points {
        w.write_record([fmt_num(p.x), fmt_num(p.sa), fmt_num(p.ra)])
            .expect("in-memory write");
    }
    finish(w)
}

pub fn parse_plot_csv(text: &str) -> Result<Vec<PlotPoint>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    check_header(&mut reader, &PLOT_HEADER)?;
    reader
        .records()
        .enumerate()
        .map(|(k, rec)| {
            let rec = rec.map_err(csv_err)?;
            Ok(PlotPoint {
                x: field(&rec, 0, "x", k + 2)?,
                sa: field(&rec, 1, "sa", k + 2)?,
                ra: field(&rec, 2, "ra", k + 2)?,
            })
        })
        .collect()
}

pub fn study_csv(rows: &[PairedRow]) -> String {
    let mut w = writer();
    w.write_record(STUDY_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            fmt_num(r.x),
            r.epochs.to_string(),
            fmt_num(r.median_sa()),
            fmt_num(r.median_ra()),
            fmt_num(r.baseline_median_sa()),
            fmt_num(r.baseline_median_ra()),
            fmt_num(r.delta_sa()),
            fmt_num(r.delta_ra()),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// Study rows as two plot series: `(aligned, baseline)` medians against `x`.
pub fn study_plot_points(rows: &[PairedRow]) -> (Vec<PlotPoint>, Vec<PlotPoint>) {
    rows.iter()
        .map(|r| {
            (
                PlotPoint {
                    x: r.x,
                    sa: r.median_sa(),
                    ra: r.median_ra(),
                },
                PlotPoint {
                    x: r.x,
                    sa: r.baseline_median_sa(),
                    ra: r.baseline_median_ra(),
                },
            )
        })
        .unzip()
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `points` as a plot-data CSV at `path`.
pub fn emit_plot_data(points: &[PlotPoint], path: &Path) -> Result<()> {
    write_file(path, &plot_csv(points))
}
