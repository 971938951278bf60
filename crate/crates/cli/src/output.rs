//! Field and report writers: CSV, legacy VTK point cloud, plain-text
//! summary, and the JSON run record that `export` reads back.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cphm::RunReport;
use serde::{Deserialize, Serialize};

use crate::config::{Format, RunConfig};
use crate::error::CliError;

/// Stage timings and statistics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub dx: f64,
    pub n: usize,
    pub band_time: f64,
    pub operators_time: f64,
    pub reconstruction_time: f64,
    pub heat_time: f64,
    pub poisson_time: f64,
    pub heat_residual: f64,
    pub poisson_residual: f64,
    pub rel_error: Option<f64>,
}

impl From<&RunReport> for ReportRecord {
    fn from(r: &RunReport) -> Self {
        ReportRecord {
            dx: r.dx,
            n: r.n,
            band_time: r.band_time,
            operators_time: r.operators_time,
            reconstruction_time: r.reconstruction_time,
            heat_time: r.heat_time,
            poisson_time: r.poisson_time,
            heat_residual: r.heat_residual,
            poisson_residual: r.poisson_residual,
            rel_error: r.rel_error,
        }
    }
}

/// Everything needed to re-export a finished run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub report: ReportRecord,
    /// `[x, y, z, phi]` per on-surface sample.
    pub samples: Vec<[f64; 4]>,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(path.to_path_buf(), e)
}

pub fn write_csv(path: &Path, samples: &[[f64; 4]]) -> Result<(), CliError> {
    let mut w = create(path)?;
    let run = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "x,y,z,phi")?;
        for s in samples {
            writeln!(w, "{},{},{},{}", s[0], s[1], s[2], s[3])?;
        }
        w.flush()
    };
    run(&mut w).map_err(io(path))
}

/// Legacy ASCII VTK unstructured grid with one vertex cell per sample.
pub fn write_vtk(path: &Path, samples: &[[f64; 4]]) -> Result<(), CliError> {
    let mut w = create(path)?;
    let n = samples.len();
    let run = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "cphm distance field")?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(w, "POINTS {n} double")?;
        for s in samples {
            writeln!(w, "{} {} {}", s[0], s[1], s[2])?;
        }
        writeln!(w, "CELLS {n} {}", 2 * n)?;
        for i in 0..n {
            writeln!(w, "1 {i}")?;
        }
        writeln!(w, "CELL_TYPES {n}")?;
        for _ in 0..n {
            writeln!(w, "1")?;
        }
        writeln!(w, "POINT_DATA {n}")?;
        writeln!(w, "SCALARS phi double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for s in samples {
            writeln!(w, "{}", s[3])?;
        }
        w.flush()
    };
    run(&mut w).map_err(io(path))
}

/// Report table in the layout `dx  N  reconstruction  heat  poisson`,
/// one row per run, followed by the errors.
pub fn summary_text(reports: &[ReportRecord]) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:>10} {:>10} {:>16} {:>12} {:>12} {:>12}\n",
        "dx", "N", "reconstruct(s)", "heat(s)", "poisson(s)", "rel_error"
    ));
    for r in reports {
        let err = r.rel_error.map_or("-".to_string(), |e| format!("{e:.4e}"));
        s.push_str(&format!(
            "{:>10} {:>10} {:>16.4} {:>12.4} {:>12.4} {:>12}\n",
            r.dx, r.n, r.reconstruction_time, r.heat_time, r.poisson_time, err
        ));
    }
    s
}

pub fn write_summary(path: &Path, reports: &[ReportRecord]) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(summary_text(reports).as_bytes())
        .and_then(|_| w.flush())
        .map_err(io(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(std::io::Error::from)
        .and_then(|_| w.flush())
        .map_err(io(path))
}

pub fn read_record(path: &Path) -> Result<RunRecord, CliError> {
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Write `record` in `format` to `path`.
pub fn export(record: &RunRecord, format: Format, path: &Path) -> Result<(), CliError> {
    match format {
        Format::Csv => write_csv(path, &record.samples),
        Format::Vtk => write_vtk(path, &record.samples),
        Format::Summary => write_summary(path, std::slice::from_ref(&record.report)),
    }
}

/// `<dir>/phi.<ext>` for each format.
pub fn output_paths(dir: &Path, formats: &[Format]) -> Vec<(Format, PathBuf)> {
    formats
        .iter()
        .map(|&f| {
            let stem = if f == Format::Summary { "summary" } else { "phi" };
            (f, dir.join(format!("{stem}.{}", f.extension())))
        })
        .collect()
}
