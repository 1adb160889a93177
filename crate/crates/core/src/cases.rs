//! The three duct configurations: Shercliff, Hunt and the conducting-wall
//! transient Hartmann case.

use std::str::FromStr;

use crate::error::{MhdError, Result};
use crate::field::CoefficientField;
use crate::mesh::{boundary_masks, evaluate_in_element, BoxMesh, MeshSpec};
use crate::operators::Operators;
use crate::stepper::{MhdState, PhysicalParams, SteadyCriterion, Stepper, StepperConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseKind {
    Shercliff,
    Hunt,
    ConductingWall,
}

impl FromStr for CaseKind {
    type Err = MhdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "shercliff" => Ok(CaseKind::Shercliff),
            "hunt" => Ok(CaseKind::Hunt),
            "conducting_wall" | "conducting" => Ok(CaseKind::ConductingWall),
            other => Err(MhdError::UnknownCase(other.to_string())),
        }
    }
}

impl CaseKind {
    pub fn name(self) -> &'static str {
        match self {
            CaseKind::Shercliff => "shercliff",
            CaseKind::Hunt => "hunt",
            CaseKind::ConductingWall => "conducting_wall",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseSpec {
    pub kind: CaseKind,
    pub ha: f64,
    pub re: f64,
    pub rm: f64,
    pub r_w_solid: f64,
    pub delta: f64,
    pub wall_layers: usize,
    pub length: f64,
    pub counts: [usize; 3],
    pub order: usize,
    pub dt: f64,
    pub bdf_order: usize,
    pub adaptive_dt: bool,
    pub cfl_target: f64,
    pub t_max: f64,
    pub steady_tol: f64,
    /// Grade y toward the Hartmann walls when Ha > 20.
    pub grade: bool,
    pub dealias: bool,
}

impl Default for CaseSpec {
    fn default() -> Self {
        CaseSpec {
            kind: CaseKind::Shercliff,
            ha: 10.0,
            re: 1.0,
            rm: 1.0,
            r_w_solid: 1e2,
            delta: 0.0,
            wall_layers: 2,
            length: 4.0,
            counts: [4, 10, 10],
            order: 6,
            dt: 1e-3,
            bdf_order: 2,
            adaptive_dt: true,
            cfl_target: 0.25,
            t_max: 10.0,
            steady_tol: 1e-8,
            grade: true,
            dealias: true,
        }
    }
}

impl CaseSpec {
    pub fn new(kind: CaseKind, ha: f64) -> Self {
        let delta = if kind == CaseKind::ConductingWall { 0.2 } else { 0.0 };
        CaseSpec {
            kind,
            ha,
            delta,
            ..Default::default()
        }
    }

    /// Applied field magnitude from `Ha = B0 sqrt(Re Rm)`.
    pub fn b0(&self) -> f64 {
        self.ha / (self.re * self.rm).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(MhdError::Validation {
                    field: name.into(),
                    message: format!("{name} must be positive"),
                })
            }
        };
        if !(self.ha >= 0.0 && self.ha.is_finite()) {
            return Err(MhdError::Validation {
                field: "Ha".into(),
                message: "Ha must be positive".into(),
            });
        }
        positive("Re", self.re)?;
        positive("Rm", self.rm)?;
        positive("L", self.length)?;
        positive("dt", self.dt)?;
        positive("t_max", self.t_max)?;
        positive("steady_tol", self.steady_tol)?;
        positive("cfl_target", self.cfl_target)?;
        if self.kind == CaseKind::ConductingWall {
            positive("r_w", self.r_w_solid)?;
        }
        match (self.kind, self.delta > 0.0) {
            (CaseKind::ConductingWall, false) => Err(MhdError::InvalidCombination(
                "conducting_wall requires delta > 0".into(),
            )),
            (CaseKind::Shercliff | CaseKind::Hunt, true) => Err(MhdError::InvalidCombination(format!(
                "{} requires delta = 0",
                self.kind.name()
            ))),
            _ => Ok(()),
        }
    }

    pub fn mesh_spec(&self) -> MeshSpec {
        MeshSpec {
            counts: self.counts,
            length: self.length,
            wall_thickness: self.delta,
            wall_layers: self.wall_layers,
            order: self.order,
            grading_ha: if self.grade { Some(self.ha) } else { None },
        }
    }

    pub fn criterion(&self) -> SteadyCriterion {
        SteadyCriterion::new(self.steady_tol, self.t_max)
    }
}

/// A run-ready bundle: discretization, solver and initial state.
pub struct Case {
    pub spec: CaseSpec,
    pub stepper: Stepper,
    pub state: MhdState,
}

pub fn make_case(spec: &CaseSpec) -> Result<Case> {
    spec.validate()?;
    let mesh = BoxMesh::build(&spec.mesh_spec())?;
    let masks = boundary_masks(&mesh, spec.kind)?;
    let r_w = if spec.kind == CaseKind::ConductingWall {
        CoefficientField::wall_ratio(&mesh, spec.r_w_solid)?
    } else {
        CoefficientField::uniform(mesh.n_elements(), 1.0)
    };
    let params = PhysicalParams {
        re: spec.re,
        rm: spec.rm,
        b0: spec.b0(),
        r_w,
    };
    let config = StepperConfig {
        bdf_order: spec.bdf_order,
        dt_max: spec.dt,
        cfl_target: spec.cfl_target,
        adaptive: spec.adaptive_dt,
        dealias: spec.dealias,
        ..Default::default()
    };
    let ops = Operators::new(mesh)?;
    let stepper = Stepper::new(ops, masks, params, config)?;
    let state = stepper.initial_state();
    Ok(Case {
        spec: spec.clone(),
        stepper,
        state,
    })
}

/// A `(y, z)` slice on a uniform plot grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub field: String,
    pub x_station: f64,
    pub ys: Vec<f64>,
    pub zs: Vec<f64>,
    /// `values[iz * ys.len() + iy]`.
    pub values: Vec<f64>,
}

impl Slice {
    pub fn at(&self, iy: usize, iz: usize) -> f64 {
        self.values[iz * self.ys.len() + iy]
    }

    /// Bilinear interpolation inside the grid (clamped at the edges).
    pub fn interpolate(&self, y: f64, z: f64) -> f64 {
        let locate = |g: &[f64], v: f64| -> (usize, f64) {
            let n = g.len();
            if n == 1 {
                return (0, 0.0);
            }
            let i = g.partition_point(|&x| x <= v).clamp(1, n - 1) - 1;
            let t = ((v - g[i]) / (g[i + 1] - g[i])).clamp(0.0, 1.0);
            (i, t)
        };
        let (iy, ty) = locate(&self.ys, y);
        let (iz, tz) = locate(&self.zs, z);
        let iy1 = (iy + 1).min(self.ys.len() - 1);
        let iz1 = (iz + 1).min(self.zs.len() - 1);
        (1.0 - ty) * (1.0 - tz) * self.at(iy, iz)
            + ty * (1.0 - tz) * self.at(iy1, iz)
            + (1.0 - ty) * tz * self.at(iy, iz1)
            + ty * tz * self.at(iy1, iz1)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

fn field_values<'a>(state: &'a MhdState, name: &str) -> Result<(&'a [f64], bool)> {
    match name {
        "u_x" | "u" => Ok((&state.u.x, false)),
        "u_y" => Ok((&state.u.y, false)),
        "u_z" => Ok((&state.u.z, false)),
        "B_x" | "b_x" | "b" => Ok((&state.b.x, true)),
        "B_y" => Ok((&state.b.y, true)),
        "B_z" => Ok((&state.b.z, true)),
        "p" => Ok((&state.p, false)),
        "q" => Ok((&state.q, true)),
        other => Err(MhdError::UnknownField(other.to_string())),
    }
}

/// Sample a field on an `n x n` uniform grid of the cross-section at `x_station`.
/// Fluid fields cover `[-1, 1]^2`; magnetic fields cover the whole magnetic domain.
pub fn extract_cross_section(mesh: &BoxMesh, state: &MhdState, field: &str, x_station: f64, n: usize) -> Result<Slice> {
    let (values, magnetic) = field_values(state, field)?;
    let half = if magnetic { 1.0 + mesh.wall_thickness } else { 1.0 };
    let grid: Vec<f64> = (0..n)
        .map(|i| {
            if n == 1 {
                0.0
            } else {
                -half + 2.0 * half * i as f64 / (n - 1) as f64
            }
        })
        .collect();
    let ppe = mesh.points_per_element();
    let x = x_station.rem_euclid(mesh.length);
    let mut out = Vec::with_capacity(n * n);
    for &z in &grid {
        for &y in &grid {
            let (e, r) = mesh
                .locate([x, y, z])
                .ok_or_else(|| MhdError::InvalidExtent(format!("slice point ({x}, {y}, {z}) outside mesh")))?;
            out.push(evaluate_in_element(&mesh.basis, &values[e * ppe..(e + 1) * ppe], r));
        }
    }
    Ok(Slice {
        field: field.to_string(),
        x_station,
        ys: grid.clone(),
        zs: grid,
        values: out,
    })
}

/// `(t, u_center, b_center)` of a state.
pub fn center_probe(stepper: &Stepper, state: &MhdState) -> (f64, f64, f64) {
    let (u, b) = stepper.center_probe(state);
    (state.time, u, b)
}
