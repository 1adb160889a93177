//! Run orchestration behind the CLI: steady runs, convergence studies,
//! transient fits, oracle references and run-versus-reference comparison.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde_json::json;

use crate::cases::{extract_cross_section, make_case, Case, CaseSpec, Slice};
use crate::error::{MhdError, Result};
use crate::history::ProbeHistory;
use crate::io::tables::fmt_f64;
use crate::io::{
    emit_convergence_csv, emit_convergence_plot_data, emit_fit_table_csv, emit_history_csv, emit_slice_csv,
    read_slice_csv, write_field_dump, ConvergenceRow, ConvergenceTable, OffsetPolicy, RunConfig, RunLog,
};
use crate::mesh::BoxMesh;
use crate::oracle::{reference_steady, solve_transient_reduced, OracleBc, OracleGrid2D, OracleReference};
use crate::stepper::{MarchOutcome, MhdState};
use crate::transient::{constrained_fit, fit_history, FitComparison, HistoryFit, ModalModel, OffsetMode, TransientFit};

pub const SLICE_U: &str = "slice_u_x.csv";
pub const SLICE_B: &str = "slice_B_x.csv";
pub const HISTORY: &str = "history.csv";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(
        path,
        serde_json::to_string_pretty(value).expect("json values serialize") + "\n",
    )?;
    Ok(())
}

/// March a case to steady state, logging every step when `log` is given.
pub fn run_steady(spec: &CaseSpec, mut log: Option<&mut RunLog>) -> Result<(Case, MarchOutcome)> {
    let mut case = make_case(spec)?;
    let mut log_err = None;
    let outcome = case.stepper.march_to_steady(&mut case.state, spec.criterion(), |r| {
        if let Some(l) = log.as_deref_mut() {
            if let Err(e) = l.record(r) {
                log_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = log_err {
        return Err(e);
    }
    Ok((case, outcome))
}

/// March a case from rest to `t_end`.
pub fn run_transient(spec: &CaseSpec, t_end: f64, mut log: Option<&mut RunLog>) -> Result<(Case, MarchOutcome)> {
    let mut case = make_case(spec)?;
    let mut log_err = None;
    let outcome = case.stepper.march_to_time(&mut case.state, t_end, |r| {
        if let Some(l) = log.as_deref_mut() {
            if let Err(e) = l.record(r) {
                log_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = log_err {
        return Err(e);
    }
    Ok((case, outcome))
}

fn tag_history(h: &mut ProbeHistory, spec: &CaseSpec) {
    h.set_meta("case", spec.kind.name());
    h.set_meta("Ha", spec.ha);
    h.set_meta("Re", spec.re);
    h.set_meta("Rm", spec.rm);
    h.set_meta("dt", spec.dt);
    h.set_meta("N", spec.order);
}

/// Relative L-infinity errors `(u, b)` of the SEM cross-section at `x_station`
/// against a reference grid, sampled at reference fluid nodes with at most
/// `max_samples` per direction.
pub fn relative_linf_error(
    mesh: &BoxMesh,
    state: &MhdState,
    reference: &OracleGrid2D,
    x_station: f64,
    max_samples: usize,
) -> Result<(f64, f64)> {
    let m = reference.nodes();
    let (lo, hi) = reference.fluid;
    let stride = ((hi - lo) / max_samples.max(1)).max(1);
    let mut idx: Vec<usize> = (lo..=hi).step_by(stride).collect();
    if *idx.last().unwrap() != hi {
        idx.push(hi);
    }
    let x = x_station.rem_euclid(mesh.length);
    let (mut eu, mut eb, mut nu, mut nb) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for &j in &idx {
        for &i in &idx {
            let (y, z) = (reference.coords[i], reference.coords[j]);
            let p = [x, y.clamp(-1.0, 1.0), z.clamp(-1.0, 1.0)];
            let su = mesh
                .evaluate(&state.u.x, p)
                .ok_or_else(|| MhdError::InvalidExtent(format!("probe ({y}, {z}) outside mesh")))?;
            let sb = mesh.evaluate(&state.b.x, p).unwrap_or(0.0);
            let (ru, rb) = (reference.u[j * m + i], reference.b[j * m + i]);
            eu = eu.max((su - ru).abs());
            eb = eb.max((sb - rb).abs());
            nu = nu.max(ru.abs());
            nb = nb.max(rb.abs());
        }
    }
    Ok((eu / nu, if nb > 0.0 { eb / nb } else { eb }))
}

/// Relative L-infinity errors `(u, b)` at the SEM's own GLL node positions in the
/// fluid cross-section, with the reference interpolated by cubics.
pub fn nodal_linf_error(
    mesh: &BoxMesh,
    state: &MhdState,
    reference: &OracleGrid2D,
    x_station: f64,
) -> Result<(f64, f64)> {
    let x = x_station.rem_euclid(mesh.length);
    let node_lines = |axis: usize| -> Vec<f64> {
        let mut v: Vec<f64> = mesh.breaks[axis]
            .windows(2)
            .filter(|w| w[0] >= -1.0 - 1e-12 && w[1] <= 1.0 + 1e-12)
            .flat_map(|w| {
                let (c, h) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
                mesh.basis.nodes.iter().map(move |r| (c + h * r).clamp(-1.0, 1.0))
            })
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
        v
    };
    let (ys, zs) = (node_lines(1), node_lines(2));
    let (mut eu, mut eb) = (0.0f64, 0.0f64);
    for &z in &zs {
        for &y in &ys {
            let p = [x, y, z];
            let su = mesh
                .evaluate(&state.u.x, p)
                .ok_or_else(|| MhdError::InvalidExtent(format!("node ({y}, {z}) outside mesh")))?;
            let sb = mesh.evaluate(&state.b.x, p).unwrap_or(0.0);
            eu = eu.max((su - reference.interpolate_cubic(false, y, z)).abs());
            eb = eb.max((sb - reference.interpolate_cubic(true, y, z)).abs());
        }
    }
    let (mut nu, mut nb) = (0.0f64, 0.0f64);
    for (_, _, u, b) in reference.fluid_nodes() {
        nu = nu.max(u.abs());
        nb = nb.max(b.abs());
    }
    Ok((eu / nu, if nb > 0.0 { eb / nb } else { eb }))
}

fn write_outputs(dir: &Path, case: &Case, cfg: &RunConfig, history: &ProbeHistory) -> Result<()> {
    let mesh = &case.stepper.ops.mesh;
    emit_history_csv(history, &dir.join(HISTORY))?;
    for (field, file) in [("u_x", SLICE_U), ("B_x", SLICE_B)] {
        let s = extract_cross_section(mesh, &case.state, field, cfg.x_station, cfg.slice_n)?;
        emit_slice_csv(&s, &dir.join(file))?;
    }
    write_field_dump(mesh, &case.state, &dir.join("fields.dump"))
}

/// `mhd run`: march to steady state and write history, slices, dump and log.
pub fn run_simulation(cfg: &RunConfig) -> Result<MarchOutcome> {
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    let mut log = RunLog::create(&dir.join("run.jsonl"))?;
    let (case, mut outcome) = run_steady(&cfg.case, Some(&mut log))?;
    log.finish()?;
    tag_history(&mut outcome.history, &cfg.case);
    write_outputs(dir, &case, cfg, &outcome.history)?;
    let (u, b) = case.stepper.center_probe(&case.state);
    write_json(
        &dir.join("summary.json"),
        &json!({
            "case": cfg.case.kind.name(), "Ha": cfg.case.ha, "N": cfg.case.order,
            "converged": outcome.converged, "steps": outcome.steps, "t": case.state.time,
            "u_center": u, "b_center": b,
        }),
    )?;
    info!(
        "run finished: converged={} steps={} u_center={u:.10e}",
        outcome.converged, outcome.steps
    );
    Ok(outcome)
}

pub fn oracle_reference(cfg: &RunConfig) -> Result<OracleReference> {
    let bc = OracleBc::for_case(&cfg.case);
    match bc {
        OracleBc::Conducting { .. } => {
            let grid = crate::oracle::solve_steady_reduced(cfg.case.ha, bc, cfg.oracle_n)?;
            Ok(OracleReference {
                grid,
                error_bar_u: f64::NAN,
                error_bar_b: f64::NAN,
            })
        }
        _ => reference_steady(cfg.case.ha, bc, cfg.oracle_n),
    }
}

fn run_order(cfg: &RunConfig, order: usize, reference: &OracleReference) -> Result<ConvergenceRow> {
    let spec = CaseSpec {
        order,
        ..cfg.case.clone()
    };
    let dir = run_dir_for(cfg, order);
    ensure_dir(&dir)?;
    let mut log = RunLog::create(&dir.join("run.jsonl"))?;
    let (case, mut outcome) = run_steady(&spec, Some(&mut log))?;
    log.finish()?;
    tag_history(&mut outcome.history, &spec);
    write_outputs(&dir, &case, cfg, &outcome.history)?;
    let (err_u, err_b) = nodal_linf_error(&case.stepper.ops.mesh, &case.state, &reference.grid, cfg.x_station)?;
    info!("N={order}: err_u={err_u:.4e} err_b={err_b:.4e} steps={}", outcome.steps);
    Ok(ConvergenceRow {
        order,
        err_u,
        err_b,
        failure: (!outcome.converged).then(|| "steady state not reached".to_string()),
    })
}

/// `mhd converge`: one steady run per order (concurrently), errors against
/// the oracle reference, CSV table and plot data.
pub fn run_convergence_study(cfg: &RunConfig) -> Result<ConvergenceTable> {
    ensure_dir(&cfg.output_dir)?;
    let reference = oracle_reference(cfg)?;
    let rows: Vec<ConvergenceRow> = std::thread::scope(|s| {
        let handles: Vec<_> = cfg
            .orders
            .iter()
            .map(|&order| {
                let reference = &reference;
                (order, s.spawn(move || run_order(cfg, order, reference)))
            })
            .collect();
        handles
            .into_iter()
            .map(|(order, h)| match h.join() {
                Ok(Ok(row)) => row,
                Ok(Err(e)) => failed_row(order, e.to_string()),
                Err(_) => failed_row(order, "run panicked".into()),
            })
            .collect()
    });
    let table = ConvergenceTable { rows };
    emit_convergence_csv(&table, &cfg.output_dir.join("convergence.csv"))?;
    emit_convergence_plot_data(&table, &cfg.output_dir.join("convergence_plot.csv"))?;
    Ok(table)
}

fn failed_row(order: usize, msg: String) -> ConvergenceRow {
    ConvergenceRow {
        order,
        err_u: f64::NAN,
        err_b: f64::NAN,
        failure: Some(msg),
    }
}

#[derive(Debug, Clone)]
pub struct TransientReport {
    pub model: ModalModel,
    pub fit: HistoryFit,
    pub constrained: Option<TransientFit>,
    pub history: ProbeHistory,
}

/// Free and pinned-(s, w) fits of a center-velocity history.
pub fn fit_transient(history: &ProbeHistory, spec: &CaseSpec, policy: OffsetPolicy) -> Result<TransientReport> {
    let model = ModalModel::new(spec.re, spec.rm, spec.ha)?;
    let fit = fit_history(history, &model)?;
    let constrained = if model.oscillatory {
        let offset = match policy {
            OffsetPolicy::Fitted => OffsetMode::Fitted,
            OffsetPolicy::Probe => {
                OffsetMode::Pinned(*history.u_center.last().expect("fit succeeded on a nonempty history"))
            }
        };
        Some(constrained_fit(history, spec.ha, model.decay_s, model.freq_w, offset)?)
    } else {
        None
    };
    Ok(TransientReport {
        model,
        fit,
        constrained,
        history: history.clone(),
    })
}

/// `mhd transient-fit`: march to `t_end`, fit, write history and fit table.
pub fn run_transient_fit(cfg: &RunConfig) -> Result<TransientReport> {
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    let mut log = RunLog::create(&dir.join("run.jsonl"))?;
    let (_, mut outcome) = run_transient(&cfg.case, cfg.t_end, Some(&mut log))?;
    log.finish()?;
    tag_history(&mut outcome.history, &cfg.case);
    emit_history_csv(&outcome.history, &dir.join(HISTORY))?;
    let report = fit_transient(&outcome.history, &cfg.case, cfg.offset_policy)?;
    write_fit_outputs(dir, &report)?;
    Ok(report)
}

pub fn write_fit_outputs(dir: &Path, report: &TransientReport) -> Result<()> {
    let m = &report.model;
    let fit_json = match &report.fit {
        HistoryFit::Oscillatory(f) => {
            emit_fit_table_csv(&[FitComparison::new(m, f)], &dir.join("fit_table.csv"))?;
            json!({"model": "oscillatory", "u0": f.u0_amp, "s": f.decay_s, "w": f.freq_w,
                   "phi": f.phase, "s0": f.offset_s0, "residual_norm": f.residual_norm, "iterations": f.iterations})
        }
        HistoryFit::TwoExponential(f) => json!({"model": "two_exponential", "c1": f.c1, "l1": f.l1, "c2": f.c2,
                   "l2": f.l2, "s0": f.offset_s0, "residual_norm": f.residual_norm, "iterations": f.iterations}),
    };
    let constrained = report
        .constrained
        .as_ref()
        .map(|f| json!({"u0": f.u0_amp, "phi": f.phase, "s0": f.offset_s0, "residual_norm": f.residual_norm}));
    write_json(
        &dir.join("fit.json"),
        &json!({
            "Ha": m.ha, "Re": m.re, "Rm": m.rm, "oscillatory": m.oscillatory,
            "s_analytic": m.decay_s, "w_analytic": m.freq_w,
            "fit": fit_json, "constrained": constrained,
        }),
    )
}

/// Sample an oracle grid on the uniform plot grid used by SEM slices.
pub fn oracle_slice(grid: &OracleGrid2D, magnetic: bool, half: f64, n: usize) -> Slice {
    let g: Vec<f64> = (0..n).map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64).collect();
    let mut values = Vec::with_capacity(n * n);
    for &z in &g {
        for &y in &g {
            values.push(grid.interpolate(magnetic, y, z));
        }
    }
    Slice {
        field: if magnetic { "B_x" } else { "u_x" }.into(),
        x_station: 0.0,
        ys: g.clone(),
        zs: g,
        values,
    }
}

/// `mhd oracle`: steady reference slices and a center-point transient history.
pub fn run_oracle(cfg: &RunConfig) -> Result<OracleReference> {
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    let reference = oracle_reference(cfg)?;
    let half_b = 1.0 + cfg.case.delta;
    emit_slice_csv(
        &oracle_slice(&reference.grid, false, 1.0, cfg.slice_n),
        &dir.join(SLICE_U),
    )?;
    emit_slice_csv(
        &oracle_slice(&reference.grid, true, half_b, cfg.slice_n),
        &dir.join(SLICE_B),
    )?;
    let bc = OracleBc::for_case(&cfg.case);
    let mut h = solve_transient_reduced(
        cfg.case.ha,
        cfg.case.re,
        cfg.case.rm,
        bc,
        cfg.oracle_n,
        cfg.oracle_dt,
        cfg.t_end,
    )?;
    tag_history(&mut h, &cfg.case);
    emit_history_csv(&h, &dir.join(HISTORY))?;
    let (u, b) = reference.grid.center();
    write_json(
        &dir.join("summary.json"),
        &json!({
            "case": cfg.case.kind.name(), "Ha": cfg.case.ha, "oracle_n": cfg.oracle_n,
            "u_center": u, "b_center": b,
            "error_bar_u": fmt_f64(reference.error_bar_u), "error_bar_b": fmt_f64(reference.error_bar_b),
        }),
    )?;
    Ok(reference)
}

/// Tolerances of `mhd compare`: relative L-infinity errors of the u and B slices.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub err_u: f64,
    pub err_b: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            err_u: 1e-2,
            err_b: 1e-2,
        }
    }
}

impl Tolerances {
    pub fn parse(text: &str) -> Result<Self> {
        let mut t = Tolerances::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body.split_once('=').ok_or_else(|| MhdError::Parse {
                line,
                message: format!("expected 'key = value', found '{body}'"),
            })?;
            let v: f64 = v.trim().parse().map_err(|_| MhdError::Parse {
                line,
                message: format!("not a number: '{}'", v.trim()),
            })?;
            match k.trim() {
                "err_u" => t.err_u = v,
                "err_b" => t.err_b = v,
                other => {
                    return Err(MhdError::Parse {
                        line,
                        message: format!("unknown key '{other}'"),
                    })
                }
            }
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub err_u: f64,
    pub err_b: f64,
    pub tolerances: Tolerances,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        self.err_u <= self.tolerances.err_u && self.err_b <= self.tolerances.err_b
    }
}

fn slice_error(reference: &Slice, run: &Slice) -> f64 {
    let mut err = 0.0f64;
    for (iz, &z) in run.zs.iter().enumerate() {
        for (iy, &y) in run.ys.iter().enumerate() {
            err = err.max((run.at(iy, iz) - reference.interpolate(y, z)).abs());
        }
    }
    let scale = reference.max_abs();
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

/// `mhd compare`: relative L-infinity slice errors of a run against a reference directory.
pub fn compare_dirs(reference: &Path, run: &Path, tolerances: Tolerances) -> Result<CompareReport> {
    let rd = |dir: &Path, file: &str, field: &str| read_slice_csv(&dir.join(file), field);
    let err_u = slice_error(&rd(reference, SLICE_U, "u_x")?, &rd(run, SLICE_U, "u_x")?);
    let err_b = slice_error(&rd(reference, SLICE_B, "B_x")?, &rd(run, SLICE_B, "B_x")?);
    Ok(CompareReport {
        err_u,
        err_b,
        tolerances,
    })
}

pub fn run_dir_for(cfg: &RunConfig, order: usize) -> PathBuf {
    cfg.output_dir.join(format!("N{order}"))
}
