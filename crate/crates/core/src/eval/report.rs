use super::{EvalReport, ScalingReport};
use crate::error::{Error, Result};
use crate::exec;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// One line of the evaluation CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub method: String,
    pub object_id: String,
    pub v_train: Option<u32>,
    pub v_test: u32,
    pub psnr_db: f64,
    pub wall_ms: f64,
    pub n_lr: usize,
    pub n_hr: usize,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    }
}

/// Writes one row per (report, object).
pub fn write_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in reports {
        for o in &r.objects {
            w.serialize(CsvRow {
                method: r.method.clone(),
                object_id: o.object_id.clone(),
                v_train: r.v_train,
                v_test: r.v_test,
                psnr_db: o.psnr_db,
                wall_ms: o.wall_ms,
                n_lr: o.n_lr,
                n_hr: o.n_hr,
            })
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv_rows(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub v_train: Option<u32>,
    pub v_test: u32,
    pub objects: usize,
    /// `null` when any object was reproduced exactly.
    pub mean_psnr_db: f64,
    pub mean_mse: [f64; 3],
}

/// Structured companion to the CSV, with the effective configuration
/// copied in verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub config: serde_json::Value,
    pub threads: usize,
    pub results: Vec<MethodSummary>,
}

impl EvalSummary {
    pub fn new(config: serde_json::Value, reports: &[EvalReport]) -> Self {
        Self {
            config,
            threads: exec::threads(),
            results: reports
                .iter()
                .map(|r| MethodSummary {
                    method: r.method.clone(),
                    v_train: r.v_train,
                    v_test: r.v_test,
                    objects: r.objects.len(),
                    mean_psnr_db: r.mean_psnr(),
                    mean_mse: r.mean_mse(),
                })
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Gnuplot-friendly columns `n_hr seconds` with the fit in a comment
/// header.
pub fn write_scaling_dat(path: &Path, report: &ScalingReport) -> Result<()> {
    let mut out = Vec::new();
    let f = &report.fit;
    writeln!(out, "# method {} ratio {} threads {}", report.method, report.ratio, report.threads).unwrap();
    writeln!(out, "# fit: seconds = {:e} * n_hr + {:e}  (R^2 = {:.6})", f.slope, f.intercept, f.r2).unwrap();
    writeln!(out, "# n_hr seconds").unwrap();
    for s in &report.samples {
        writeln!(out, "{} {:.6e}", s.n_hr, s.seconds).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
