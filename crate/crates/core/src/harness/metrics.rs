//! `metrics.csv` (one row per outer iteration) and `summary.json`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::AssumptionEstimates;
use crate::trainer::{IterationRecord, Termination, TheoremAudit};

pub const METRICS_HEADER: [&str; 7] = ["t", "objective_F", "gap_upper", "residual_phi", "v_norm_sq", "inner_iters", "alpha_t"];

/// A parsed `metrics.csv` row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub t: usize,
    pub objective_f: f64,
    pub gap_upper: f64,
    pub residual_phi: Option<f64>,
    pub v_norm_sq: f64,
    pub inner_iters: usize,
    pub alpha_t: f64,
}

impl From<&IterationRecord> for MetricsRow {
    fn from(r: &IterationRecord) -> Self {
        Self {
            t: r.t,
            objective_f: r.objective_f,
            gap_upper: r.gap_upper,
            residual_phi: r.residual_phi,
            v_norm_sq: r.v_norm_sq,
            inner_iters: r.inner_iters,
            alpha_t: r.alpha_t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Configuration as read, key by key.
    pub config: BTreeMap<String, String>,
    pub horizon: usize,
    pub iterations_run: usize,
    pub termination: Termination,
    pub final_gap: f64,
    pub estimates: AssumptionEstimates,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<TheoremAudit>,
    /// Reason the audit was not computed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit_skipped: Option<String>,
    /// Inner-GD complexity constant `N` with trajectory estimates substituted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexity_constant: Option<f64>,
    pub certificates_satisfied: bool,
    pub wall_clock_seconds: f64,
}

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the CSV body. Floats use 17 significant digits so values round-trip.
pub fn write_metrics_csv<W: Write>(writer: W, records: &[IterationRecord]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let ser = |e: csv::Error| Error::Serialization(e.to_string());
    csv.write_record(METRICS_HEADER).map_err(ser)?;
    for r in records {
        csv.write_record([
            r.t.to_string(),
            float(r.objective_f),
            float(r.gap_upper),
            r.residual_phi.map(float).unwrap_or_default(),
            float(r.v_norm_sq),
            r.inner_iters.to_string(),
            float(r.alpha_t),
        ])
        .map_err(ser)?;
    }
    csv.flush().map_err(|e| Error::Serialization(e.to_string()))
}

/// Writes `metrics.csv` and `summary.json` into `dir`, creating it if needed.
pub fn emit_metrics(dir: &Path, records: &[IterationRecord], summary: &RunSummary) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let metrics_path = dir.join("metrics.csv");
    let file = std::fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    write_metrics_csv(std::io::BufWriter::new(file), records)?;

    let summary_path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(summary).map_err(|e| Error::Serialization(e.to_string()))?;
    std::fs::write(&summary_path, json + "\n").map_err(|e| Error::io(&summary_path, e))
}

pub fn parse_metrics<R: std::io::Read>(reader: R) -> Result<Vec<MetricsRow>> {
    let mut csv = csv::Reader::from_reader(reader);
    let header = csv.headers().map_err(|e| Error::Serialization(e.to_string()))?;
    if header.iter().ne(METRICS_HEADER) {
        return Err(Error::Dataset {
            line: 1,
            message: format!("unexpected metrics header `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut rows = Vec::new();
    for (k, record) in csv.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| Error::Dataset { line, message: e.to_string() })?;
        let field = |j: usize| record.get(j).unwrap_or("");
        let num = |j: usize| -> Result<f64> {
            field(j).parse().map_err(|_| Error::Dataset {
                line,
                message: format!("bad value `{}` in column {}", field(j), METRICS_HEADER[j]),
            })
        };
        let int = |j: usize| -> Result<usize> {
            field(j).parse().map_err(|_| Error::Dataset {
                line,
                message: format!("bad value `{}` in column {}", field(j), METRICS_HEADER[j]),
            })
        };
        rows.push(MetricsRow {
            t: int(0)?,
            objective_f: num(1)?,
            gap_upper: num(2)?,
            residual_phi: if field(3).is_empty() { None } else { Some(num(3)?) },
            v_norm_sq: num(4)?,
            inner_iters: int(5)?,
            alpha_t: num(6)?,
        });
    }
    Ok(rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_metrics(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: usize, phi: Option<f64>) -> IterationRecord {
        IterationRecord {
            t,
            objective_f: 1.0 / (t as f64 + 3.0),
            gap_upper: 0.1 + t as f64,
            residual_phi: phi,
            v_norm_sq: std::f64::consts::PI * t as f64,
            inner_iters: 7 * t,
            alpha_t: 0.07,
            assumption_snapshot: AssumptionEstimates::default(),
        }
    }

    #[test]
    fn empty_run_has_header_only() {
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,objective_F,gap_upper,residual_phi,v_norm_sq,inner_iters,alpha_t\n");
    }

    #[test]
    fn rows_round_trip_exactly() {
        let records: Vec<_> = (0..5).map(|t| record(t, if t % 2 == 0 { Some(1.0 / 3.0) } else { None })).collect();
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &records).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 6);
        let rows = parse_metrics(buf.as_slice()).unwrap();
        let expected: Vec<MetricsRow> = records.iter().map(MetricsRow::from).collect();
        assert_eq!(rows, expected);
    }

    #[test]
    fn emit_writes_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let summary = RunSummary {
            config: BTreeMap::from([("train.eps".to_string(), "0.1".to_string())]),
            horizon: 2,
            iterations_run: 2,
            termination: Termination::Completed,
            final_gap: 0.5,
            estimates: AssumptionEstimates::default(),
            audit: None,
            audit_skipped: Some("cross-entropy".into()),
            complexity_constant: None,
            certificates_satisfied: true,
            wall_clock_seconds: 0.25,
        };
        let out = dir.path().join("nested");
        emit_metrics(&out, &[record(0, Some(0.0)), record(1, Some(0.0))], &summary).unwrap();
        assert_eq!(read_metrics(&out.join("metrics.csv")).unwrap().len(), 2);
        let back: RunSummary = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        assert_eq!(back, summary);
    }

    #[test]
    fn bad_cell_reports_line() {
        let text = "t,objective_F,gap_upper,residual_phi,v_norm_sq,inner_iters,alpha_t\n0,1,1,,0,0,0.1\n1,x,1,,0,0,0.1\n";
        assert!(matches!(parse_metrics(text.as_bytes()), Err(Error::Dataset { line: 3, .. })));
    }
}
