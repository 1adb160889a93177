//! CSV outputs: probe histories, cross-section slices, convergence and fit tables.

use std::path::Path;

use crate::cases::Slice;
use crate::error::{MhdError, Result};
use crate::history::ProbeHistory;
use crate::transient::FitComparison;

/// 17 significant digits, enough to parse back bit-exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(e: csv::Error) -> MhdError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => MhdError::Io(io),
        other => MhdError::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(csv_err)
}

fn parse_num(s: &str, line: usize) -> Result<f64> {
    s.trim().parse().map_err(|_| MhdError::Parse {
        line,
        message: format!("not a number: '{s}'"),
    })
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let got: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if got.iter().map(String::as_str).collect::<Vec<_>>() != header {
        return Err(MhdError::Parse {
            line: 1,
            message: format!("expected header {header:?}, found {got:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        rows.push(rec.iter().map(|s| parse_num(s, i + 2)).collect::<Result<Vec<f64>>>()?);
    }
    Ok(rows)
}

pub fn emit_history_csv(history: &ProbeHistory, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "u_center", "b_center"]).map_err(csv_err)?;
    for i in 0..history.len() {
        w.write_record([
            fmt_f64(history.times[i]),
            fmt_f64(history.u_center[i]),
            fmt_f64(history.b_center[i]),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history_csv(path: &Path) -> Result<ProbeHistory> {
    let mut h = ProbeHistory::new();
    for row in read_rows(path, &["t", "u_center", "b_center"])? {
        h.push(row[0], row[1], row[2])?;
    }
    Ok(h)
}

pub fn emit_slice_csv(slice: &Slice, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["y", "z", "value"]).map_err(csv_err)?;
    for (iz, z) in slice.zs.iter().enumerate() {
        for (iy, y) in slice.ys.iter().enumerate() {
            w.write_record([fmt_f64(*y), fmt_f64(*z), fmt_f64(slice.at(iy, iz))])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a slice written by [`emit_slice_csv`] (rows ordered with y fastest).
pub fn read_slice_csv(path: &Path, field: &str) -> Result<Slice> {
    let rows = read_rows(path, &["y", "z", "value"])?;
    let mut zs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for r in &rows {
        if zs.last() != Some(&r[1]) {
            zs.push(r[1]);
        }
        if zs.len() == 1 {
            ys.push(r[0]);
        }
    }
    if ys.len() * zs.len() != rows.len() {
        return Err(MhdError::Parse {
            line: 0,
            message: format!("{} rows do not form a {}x{} grid", rows.len(), ys.len(), zs.len()),
        });
    }
    Ok(Slice {
        field: field.to_string(),
        x_station: 0.0,
        ys,
        zs,
        values: rows.iter().map(|r| r[2]).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub order: usize,
    pub err_u: f64,
    pub err_b: f64,
    /// `None` when the run succeeded.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Error reduction `err(first) / err(last)` over successful rows.
    pub fn velocity_drop(&self) -> Option<f64> {
        let ok: Vec<&ConvergenceRow> = self.rows.iter().filter(|r| r.failure.is_none()).collect();
        Some(ok.first()?.err_u / ok.last()?.err_u)
    }

    pub fn is_monotone(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[0].failure.is_none() && w[1].failure.is_none() && w[1].err_u < w[0].err_u)
    }
}

pub fn emit_convergence_csv(table: &ConvergenceTable, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["N", "err_u", "err_b", "status"]).map_err(csv_err)?;
    for r in &table.rows {
        let status = r
            .failure
            .as_deref()
            .map(|m| format!("failed: {m}"))
            .unwrap_or_else(|| "ok".into());
        w.write_record([r.order.to_string(), fmt_f64(r.err_u), fmt_f64(r.err_b), status])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `(N, log10 err_u, log10 err_b)` series for a semi-log plot.
pub fn emit_convergence_plot_data(table: &ConvergenceTable, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["N", "log10_err_u", "log10_err_b"]).map_err(csv_err)?;
    for r in table.rows.iter().filter(|r| r.failure.is_none()) {
        w.write_record([r.order.to_string(), fmt_f64(r.err_u.log10()), fmt_f64(r.err_b.log10())])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_convergence_csv(path: &Path) -> Result<ConvergenceTable> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut table = ConvergenceTable::default();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i + 2;
        let order = rec[0].parse().map_err(|_| MhdError::Parse {
            line,
            message: format!("bad order '{}'", &rec[0]),
        })?;
        let status = &rec[3];
        table.rows.push(ConvergenceRow {
            order,
            err_u: parse_num(&rec[1], line)?,
            err_b: parse_num(&rec[2], line)?,
            failure: status.strip_prefix("failed: ").map(str::to_string),
        });
    }
    Ok(table)
}

pub fn emit_fit_table_csv(rows: &[FitComparison], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "Ha",
        "s_analytic",
        "w_analytic",
        "s_fit",
        "w_fit",
        "s0_fit",
        "residual_norm",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record(
            [
                r.ha,
                r.s_analytic,
                r.w_analytic,
                r.s_fit,
                r.w_fit,
                r.s0_fit,
                r.residual_norm,
            ]
            .map(fmt_f64),
        )
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
