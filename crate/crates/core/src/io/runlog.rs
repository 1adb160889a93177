//! Line-delimited JSON run log, one record per time step.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::json;

use crate::error::Result;
use crate::stepper::StepRecord;

pub struct RunLog {
    out: BufWriter<File>,
}

pub fn step_json(r: &StepRecord) -> serde_json::Value {
    json!({
        "step": r.step,
        "t": r.t,
        "dt": r.dt,
        "order": r.order,
        "u_center": r.u_center,
        "b_center": r.b_center,
        "div_u": r.div_u,
        "div_b": r.div_b,
        "du_dt": r.du_dt,
        "cfl": r.cfl,
        "cg_p": r.iterations_p,
        "cg_q": r.iterations_q,
        "cg_u": r.iterations_u,
        "cg_b": r.iterations_b,
    })
}

impl RunLog {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(RunLog {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn record(&mut self, r: &StepRecord) -> Result<()> {
        writeln!(self.out, "{}", step_json(r))?;
        Ok(())
    }

    pub fn note(&mut self, value: serde_json::Value) -> Result<()> {
        writeln!(self.out, "{value}")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}
