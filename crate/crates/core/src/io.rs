//! CSV input and output. Numbers are written in Rust's shortest
//! round-trip form, so reading a file back reproduces every bit.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::diagnostics::DiagnosticRecord;
use crate::error::{CrowdError, Result};
use crate::evolution::LedgerEntry;
use crate::field::ScalarField;
use crate::grid::Grid2D;
use crate::limit::PSweepResult;

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path)?;
    Ok(csv::WriterBuilder::new()
        .flexible(true)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn csv_err(e: csv::Error) -> CrowdError {
    CrowdError::Io(e.into())
}

fn finish(mut w: csv::Writer<File>) -> Result<()> {
    w.flush()?;
    Ok(())
}

/// A cell field as read from disk: the header gives `nx,ny` or `t,nx,ny`,
/// followed by `nx·ny` row-major values in any line layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldFile {
    pub t: Option<f64>,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

pub fn read_field_file(path: &Path) -> Result<FieldFile> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let mut records = rdr.records();
    let head = records
        .next()
        .ok_or_else(|| CrowdError::Data(format!("{}: empty file", path.display())))?
        .map_err(csv_err)?;
    let bad_header = || {
        CrowdError::Data(format!(
            "{}: header must be `nx,ny` or `t,nx,ny`",
            path.display()
        ))
    };
    let fields: Vec<&str> = head.iter().collect();
    let (t, dims) = match fields.len() {
        2 => (None, &fields[..]),
        3 => (
            Some(fields[0].parse::<f64>().map_err(|_| bad_header())?),
            &fields[1..],
        ),
        _ => return Err(bad_header()),
    };
    let nx: usize = dims[0].parse().map_err(|_| bad_header())?;
    let ny: usize = dims[1].parse().map_err(|_| bad_header())?;
    let mut values = Vec::with_capacity(nx * ny);
    for (line, rec) in records.enumerate() {
        let rec = rec.map_err(csv_err)?;
        for cell in rec.iter().filter(|c| !c.is_empty()) {
            let x: f64 = cell.parse().map_err(|_| {
                CrowdError::Data(format!(
                    "{}: line {}: `{cell}` is not a number",
                    path.display(),
                    line + 2
                ))
            })?;
            values.push(x);
        }
    }
    if values.len() != nx * ny {
        return Err(CrowdError::Structure(format!(
            "{}: header says {nx}×{ny} but found {} values",
            path.display(),
            values.len()
        )));
    }
    Ok(FieldFile { t, nx, ny, values })
}

/// Reads a field and checks it against `grid`.
pub fn read_field_csv(path: &Path, grid: &Grid2D) -> Result<ScalarField> {
    let f = read_field_file(path)?;
    if f.nx != grid.nx() || f.ny != grid.ny() {
        return Err(CrowdError::Structure(format!(
            "{}: field is {}×{}, grid is {}×{}",
            path.display(),
            f.nx,
            f.ny,
            grid.nx(),
            grid.ny()
        )));
    }
    ScalarField::from_vec(grid, f.values)
}

/// `nx,ny` then one line per grid row.
pub fn write_field_csv(path: &Path, field: &ScalarField, nx: usize) -> Result<()> {
    write_rows(
        path,
        vec![nx.to_string(), (field.len() / nx.max(1)).to_string()],
        field.values(),
        nx,
    )
}

/// `t,nx,ny` then one line per grid row.
pub fn write_snapshot_csv(path: &Path, t: f64, values: &[f64], nx: usize, ny: usize) -> Result<()> {
    write_rows(
        path,
        vec![fmt_f64(t), nx.to_string(), ny.to_string()],
        values,
        nx,
    )
}

fn write_rows(path: &Path, header: Vec<String>, values: &[f64], nx: usize) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(&header).map_err(csv_err)?;
    for row in values.chunks(nx.max(1)) {
        w.write_record(row.iter().map(|&x| fmt_f64(x)))
            .map_err(csv_err)?;
    }
    finish(w)
}

/// `u_000123.csv`-style name.
pub fn snapshot_name(prefix: &str, step: usize) -> String {
    format!("{prefix}_{step:06}.csv")
}

pub fn write_ledger_csv(path: &Path, ledger: &[LedgerEntry]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "step",
        "t",
        "mass",
        "delta_mass",
        "source",
        "boundary_flux",
        "residual",
    ])
    .map_err(csv_err)?;
    for e in ledger {
        w.write_record([
            e.step.to_string(),
            fmt_f64(e.t),
            fmt_f64(e.mass),
            fmt_f64(e.delta_mass),
            fmt_f64(e.source),
            fmt_f64(e.boundary_flux),
            fmt_f64(e.residual),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

pub fn write_diagnostics_csv(path: &Path, records: &[DiagnosticRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["name", "step", "value", "threshold", "passed"])
        .map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.name.clone(),
            r.step.map(|s| s.to_string()).unwrap_or_default(),
            fmt_f64(r.value),
            fmt_f64(r.threshold),
            r.passed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// Needs `q = 4` in the sweep's q list.
pub fn write_psweep_csv(path: &Path, sweep: &PSweepResult) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "p",
        "max_grad",
        "grad_norm_q4",
        "linf_u",
        "saturation_fraction",
        "newton_iters_total",
    ])
    .map_err(csv_err)?;
    for r in &sweep.records {
        let q4 = r
            .grad_norm(&sweep.q_list, 4.0)
            .ok_or_else(|| CrowdError::Parameter("sweep was run without q = 4".into()))?;
        w.write_record([
            fmt_f64(r.p),
            fmt_f64(r.max_grad),
            fmt_f64(q4),
            fmt_f64(r.linf_u),
            fmt_f64(r.saturation_fraction),
            r.newton_iters_total.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViRow {
    pub test_id: usize,
    pub family: String,
    pub residual: f64,
    pub passed: bool,
}

pub fn write_vi_csv(path: &Path, rows: &[ViRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["test_id", "family", "residual", "passed"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.test_id.to_string(),
            r.family.clone(),
            fmt_f64(r.residual),
            r.passed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// Plain text file, LF endings.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
