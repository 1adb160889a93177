//! BDFk/EXTk semi-implicit splitting for the coupled `(u, p, B, q)` system.

use std::collections::VecDeque;

use log::{debug, warn};

use crate::error::{MhdError, Result};
use crate::field::{CoefficientField, VectorField};
use crate::history::ProbeHistory;
use crate::krylov::{pcg_solve, LinearSystemSpec, NullSpace, SolveStats};
use crate::mesh::{BoundaryMask, MaskSet};
use crate::operators::Operators;

/// Backward-difference and extrapolation weights for uniform steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeCoeffs {
    pub order: usize,
    pub dt: f64,
    /// `[beta_0, ..., beta_k]` with `beta_0 u^n + sum_j beta_j u^{n-j} ~ dt du/dt`.
    pub beta: Vec<f64>,
    /// `[alpha_1, ..., alpha_k]`.
    pub alpha: Vec<f64>,
}

impl TimeCoeffs {
    pub fn new(order: usize, dt: f64) -> Result<Self> {
        let (beta, alpha) = match order {
            1 => (vec![1.0, -1.0], vec![1.0]),
            2 => (vec![1.5, -2.0, 0.5], vec![2.0, -1.0]),
            3 => (vec![11.0 / 6.0, -3.0, 1.5, -1.0 / 3.0], vec![3.0, -3.0, 1.0]),
            _ => {
                return Err(MhdError::Validation {
                    field: "bdf_order".into(),
                    message: format!("must be 1, 2 or 3, got {order}"),
                })
            }
        };
        if !(dt > 0.0) {
            return Err(MhdError::Validation {
                field: "dt".into(),
                message: format!("must be positive, got {dt}"),
            });
        }
        Ok(TimeCoeffs { order, dt, beta, alpha })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    pub re: f64,
    pub rm: f64,
    pub b0: f64,
    pub r_w: CoefficientField,
}

impl PhysicalParams {
    pub fn ha(&self) -> f64 {
        self.b0 * (self.re * self.rm).sqrt()
    }

    /// `(nu+, nu-)` with `nu+ + nu- = 1/Re` and `nu+ - nu- = 1/Rm`.
    pub fn elsasser_viscosities(&self) -> (f64, f64) {
        let nu = 1.0 / self.re;
        let eta = 1.0 / self.rm;
        (0.5 * (nu + eta), 0.5 * (nu - eta))
    }
}

/// One lagged solution with the nonlinear right-hand sides evaluated from it.
#[derive(Debug, Clone)]
pub struct Lagged {
    pub u: VectorField,
    pub b: VectorField,
    pub g: VectorField,
    pub h: VectorField,
}

#[derive(Debug, Clone)]
pub struct MhdState {
    pub time: f64,
    pub step_index: usize,
    pub u: VectorField,
    pub b: VectorField,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Most recent first.
    pub history: VecDeque<Lagged>,
    /// Steps taken since the last restart of the order ramp.
    pub ramp: usize,
}

impl MhdState {
    pub fn new(u: VectorField, b: VectorField) -> Self {
        let n = u.len();
        MhdState {
            time: 0.0,
            step_index: 0,
            u,
            b,
            p: vec![0.0; n],
            q: vec![0.0; n],
            history: VecDeque::new(),
            ramp: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepperConfig {
    pub bdf_order: usize,
    /// Upper bound on the step size.
    pub dt_max: f64,
    pub cfl_target: f64,
    pub cfl_limit: f64,
    /// Choose the step from the CFL target (otherwise `dt_max` is used as is).
    pub adaptive: bool,
    pub dealias: bool,
    pub pressure_tol: f64,
    pub helmholtz_tol: f64,
    pub max_iterations: usize,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            bdf_order: 2,
            dt_max: 1e-3,
            cfl_target: 0.25,
            cfl_limit: 1.0,
            adaptive: true,
            dealias: true,
            pressure_tol: 1e-8,
            helmholtz_tol: 1e-10,
            max_iterations: 5000,
        }
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub order: usize,
    pub u_center: f64,
    pub b_center: f64,
    pub div_u: f64,
    pub div_b: f64,
    pub du_dt: f64,
    pub cfl: f64,
    pub iterations_p: usize,
    pub iterations_q: usize,
    pub iterations_u: [usize; 3],
    pub iterations_b: [usize; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyCriterion {
    pub tolerance: f64,
    pub t_max: f64,
    /// The tolerance must hold continuously over this much simulated time, so an
    /// oscillatory approach is not stopped at a turning point.
    pub hold_time: f64,
}

impl SteadyCriterion {
    pub fn new(tolerance: f64, t_max: f64) -> Self {
        SteadyCriterion {
            tolerance,
            t_max,
            hold_time: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MarchOutcome {
    pub history: ProbeHistory,
    pub converged: bool,
    pub steps: usize,
    pub last: Option<StepRecord>,
}

/// Local-layout arrays derived from a [`BoundaryMask`].
#[derive(Debug, Clone)]
struct FieldMask {
    mask: Vec<f64>,
    null_space: NullSpace,
    mask_def: BoundaryMask,
}

impl FieldMask {
    fn new(ops: &Operators, m: &BoundaryMask, null_if_neumann: bool) -> Self {
        let null_space = if null_if_neumann && !m.has_dirichlet() {
            NullSpace::Constants
        } else {
            NullSpace::None
        };
        FieldMask {
            mask: m.local_mask(&ops.mesh),
            null_space,
            mask_def: m.clone(),
        }
    }
}

/// Probe stencil: local indices and weights whose sum is the center value.
#[derive(Debug, Clone)]
struct Probe {
    stencil: Vec<(usize, f64)>,
}

impl Probe {
    fn new(ops: &Operators, y: f64, z: f64) -> Result<Self> {
        let mesh = &ops.mesh;
        let b0 = mesh.bounds(0);
        let xs: Vec<f64> = mesh
            .basis
            .nodes
            .iter()
            .map(|r| b0[0][0] + 0.5 * (r + 1.0) * (b0[0][1] - b0[0][0]))
            .collect();
        let n1 = mesh.n1();
        let ppe = mesh.points_per_element();
        let mut stencil = Vec::new();
        let w = 1.0 / xs.len() as f64;
        for x in xs {
            let (e, r) = mesh
                .locate([x, y, z])
                .ok_or_else(|| MhdError::InvalidExtent(format!("probe point ({x}, {y}, {z}) outside mesh")))?;
            let hx = mesh.basis.lagrange_at(r[0]);
            let hy = mesh.basis.lagrange_at(r[1]);
            let hz = mesh.basis.lagrange_at(r[2]);
            for k in 0..n1 {
                for j in 0..n1 {
                    for i in 0..n1 {
                        let c = hx[i] * hy[j] * hz[k];
                        if c != 0.0 {
                            stencil.push((e * ppe + i + n1 * (j + n1 * k), w * c));
                        }
                    }
                }
            }
        }
        Ok(Probe { stencil })
    }

    fn eval(&self, f: &[f64]) -> f64 {
        self.stencil.iter().map(|(l, w)| f[*l] * w).sum()
    }
}

#[derive(Debug, Clone)]
struct HelmholtzCache {
    c1: f64,
    c0: f64,
    diag: Vec<f64>,
}

pub struct Stepper {
    pub ops: Operators,
    pub masks: MaskSet,
    pub params: PhysicalParams,
    pub config: StepperConfig,
    pub dt: f64,
    velocity: [FieldMask; 3],
    magnetic: [FieldMask; 3],
    pressure: FieldMask,
    magnetic_pressure: FieldMask,
    /// Dirichlet values of each magnetic component (zero at free points).
    b_lift: [Vec<f64>; 3],
    /// 1 at points interior to the fluid / magnetic domains.
    interior_u: Vec<f64>,
    interior_b: Vec<f64>,
    unit_coeff: CoefficientField,
    inv_mult: Vec<f64>,
    poisson_fluid_diag: Vec<f64>,
    poisson_all_diag: Vec<f64>,
    vel_cache: Option<HelmholtzCache>,
    mag_cache: Option<HelmholtzCache>,
    probe: Probe,
    min_spacing: f64,
}

impl Stepper {
    pub fn new(ops: Operators, masks: MaskSet, params: PhysicalParams, config: StepperConfig) -> Result<Self> {
        if !(params.re > 0.0 && params.rm > 0.0 && params.b0 >= 0.0) {
            return Err(MhdError::Validation {
                field: "Re/Rm/B0".into(),
                message: "Re and Rm must be positive and B0 non-negative".into(),
            });
        }
        TimeCoeffs::new(config.bdf_order, config.dt_max)?;
        let velocity = std::array::from_fn(|c| FieldMask::new(&ops, &masks.velocity[c], false));
        let magnetic = std::array::from_fn(|c| FieldMask::new(&ops, &masks.magnetic[c], false));
        let pressure = FieldMask::new(&ops, &masks.pressure, true);
        let magnetic_pressure = FieldMask::new(&ops, &masks.magnetic_pressure, true);
        let b_values = [0.0, params.b0, 0.0];
        let b_lift = std::array::from_fn(|c| {
            magnetic[c]
                .mask
                .iter()
                .map(|m| if *m == 0.0 { b_values[c] } else { 0.0 })
                .collect()
        });
        let interior_u = velocity[0].mask.clone();
        let outer = ops.mesh.outer_faces();
        let on_outer = ops.face_integral(&outer, |_, _| 1.0);
        let mut on_outer_g = on_outer;
        ops.gs(&mut on_outer_g);
        let interior_b = on_outer_g.iter().map(|v| if *v > 0.0 { 0.0 } else { 1.0 }).collect();
        let unit_coeff = CoefficientField::uniform(ops.mesh.n_elements(), 1.0);
        let inv_mult = ops.mesh.multiplicity.iter().map(|m| 1.0 / m).collect();
        let poisson_fluid_diag = ops.jacobi_diagonal(1.0, 0.0, &unit_coeff, &ops.fluid);
        let poisson_all_diag = ops.jacobi_diagonal(1.0, 0.0, &unit_coeff, &ops.all);
        let probe = Probe::new(&ops, 0.0, 0.0)?;
        let min_spacing = ops.mesh.min_fluid_spacing();
        let dt = config.dt_max;
        let mut s = Stepper {
            ops,
            masks,
            params,
            config,
            dt,
            velocity,
            magnetic,
            pressure,
            magnetic_pressure,
            b_lift,
            interior_u,
            interior_b,
            unit_coeff,
            inv_mult,
            poisson_fluid_diag,
            poisson_all_diag,
            vel_cache: None,
            mag_cache: None,
            probe,
            min_spacing,
        };
        s.dt = s.select_dt(0.0);
        Ok(s)
    }

    pub fn min_spacing(&self) -> f64 {
        self.min_spacing
    }

    fn select_dt(&self, umax: f64) -> f64 {
        if !self.config.adaptive {
            return self.config.dt_max;
        }
        let speed = umax + self.params.b0;
        if speed > 0.0 {
            (self.config.cfl_target * self.min_spacing / speed).min(self.config.dt_max)
        } else {
            self.config.dt_max
        }
    }

    pub fn cfl(&self, state: &MhdState, dt: f64) -> f64 {
        (state.u.max_abs() + self.params.b0) * dt / self.min_spacing
    }

    /// Initial state: fluid at rest, total magnetic field equal to the applied field.
    pub fn initial_state(&self) -> MhdState {
        let n = self.ops.n_local();
        let b = VectorField::from_components([vec![0.0; n], vec![self.params.b0; n], vec![0.0; n]]);
        MhdState::new(VectorField::zeros(n), b)
    }

    /// `(u_axial, b_axial)` at the cross-section center.
    pub fn center_probe(&self, state: &MhdState) -> (f64, f64) {
        (self.probe.eval(&state.u.x), self.probe.eval(&state.b.x))
    }

    /// Nonlinear right-hand sides `(g, h)` through the Elsasser form.
    pub fn elsasser_rhs(&self, u: &VectorField, b: &VectorField) -> (VectorField, VectorField) {
        let n = u.len();
        let mut zp = u.clone();
        zp.axpy(1.0, b);
        let mut zm = u.clone();
        zm.axpy(-1.0, b);
        let rhs_p = self.assembled_convection(&zm, &zp);
        let rhs_m = self.assembled_convection(&zp, &zm);
        let mut g = VectorField::zeros(n);
        let mut h = VectorField::zeros(n);
        let forcing = 1.0 / self.params.re;
        for c in 0..3 {
            let (gp, gm) = (rhs_p.comp(c), rhs_m.comp(c));
            let gc = g.comp_mut(c);
            for l in 0..n {
                gc[l] = 0.5 * (gp[l] + gm[l]);
            }
            let hc = h.comp_mut(c);
            for l in 0..n {
                hc[l] = 0.5 * (gp[l] - gm[l]);
            }
        }
        for l in 0..n {
            if self.ops.mass_fluid[l] > 0.0 {
                g.x[l] += forcing;
            } else {
                g.x[l] = 0.0;
                g.y[l] = 0.0;
                g.z[l] = 0.0;
            }
        }
        (g, h)
    }

    /// `-B^-1 gs(C(adv) w)` over all elements.
    fn assembled_convection(&self, adv: &VectorField, w: &VectorField) -> VectorField {
        let mut c = self.ops.advect(adv, w, self.config.dealias, &self.ops.all);
        for k in 0..3 {
            let v = c.comp_mut(k);
            self.ops.gs(v);
            let m = &self.ops.mass_all;
            for (x, mm) in v.iter_mut().zip(m) {
                *x = -*x / mm;
            }
        }
        c
    }

    /// Tentative fields from the lagged solutions and right-hand sides.
    pub fn tentative_fields(&self, state: &MhdState, coeffs: &TimeCoeffs) -> (VectorField, VectorField) {
        let n = self.ops.n_local();
        let mut uh = VectorField::zeros(n);
        let mut bh = VectorField::zeros(n);
        for (j, lag) in state.history.iter().take(coeffs.order).enumerate() {
            uh.axpy(-coeffs.beta[j + 1], &lag.u);
            uh.axpy(coeffs.dt * coeffs.alpha[j], &lag.g);
            bh.axpy(-coeffs.beta[j + 1], &lag.b);
            bh.axpy(coeffs.dt * coeffs.alpha[j], &lag.h);
        }
        (uh, bh)
    }

    fn extrapolated(&self, state: &MhdState, coeffs: &TimeCoeffs, magnetic: bool) -> VectorField {
        let mut out = VectorField::zeros(self.ops.n_local());
        for (j, lag) in state.history.iter().take(coeffs.order).enumerate() {
            out.axpy(coeffs.alpha[j], if magnetic { &lag.b } else { &lag.u });
        }
        out
    }

    fn poisson_solve(
        &self,
        name: &str,
        rhs: &[f64],
        fm: &FieldMask,
        coeff: &CoefficientField,
        active: &[bool],
        diag: &[f64],
        scale: f64,
        guess: &[f64],
    ) -> Result<(Vec<f64>, SolveStats)> {
        let op = |x: &[f64], y: &mut [f64]| {
            let ax = self.ops.stiffness_apply(x, coeff, active);
            y.copy_from_slice(&ax);
            self.ops.gs(y);
            y.iter_mut().zip(&fm.mask).for_each(|(v, m)| *v *= m);
        };
        let spec = LinearSystemSpec {
            name,
            operator: &op,
            preconditioner: diag,
            mask: &fm.mask,
            inv_multiplicity: &self.inv_mult,
            mass: self.ops.mass_for(active),
            rel_tolerance: self.config.pressure_tol,
            abs_tolerance: 1e-10 * scale.max(1e-300),
            max_iterations: self.config.max_iterations,
            null_space: fm.null_space,
        };
        pcg_solve(&spec, rhs, guess)
    }

    /// Pressure from the tentative velocity.
    pub fn pressure_solve(
        &self,
        uh: &VectorField,
        state: &MhdState,
        coeffs: &TimeCoeffs,
    ) -> Result<(Vec<f64>, SolveStats)> {
        let fluid = &self.ops.fluid;
        let mut vol = self.ops.weak_divergence(uh, fluid);
        vol.iter_mut().for_each(|v| *v *= -1.0 / coeffs.dt);
        let faces = &self.pressure.mask_def.neumann_faces;
        let u_ext = self.extrapolated(state, coeffs, false);
        let cc = self.ops.curl_on(&self.ops.curl_on(&u_ext, fluid), fluid);
        let nu = 1.0 / self.params.re;
        let bnd = self
            .ops
            .face_integral(faces, |l, n| -nu * (n[0] * cc.x[l] + n[1] * cc.y[l] + n[2] * cc.z[l]));
        let scale = self.source_scale(uh, coeffs.dt);
        let mut rhs: Vec<f64> = vol.iter().zip(&bnd).map(|(a, b)| a + b).collect();
        self.ops.gs(&mut rhs);
        self.poisson_solve(
            "pressure",
            &rhs,
            &self.pressure,
            &self.unit_coeff,
            fluid,
            &self.poisson_fluid_diag,
            scale,
            &state.p,
        )
    }

    /// Magnetic pseudo-pressure from the tentative magnetic field.
    pub fn magnetic_pressure_solve(
        &self,
        bh: &VectorField,
        state: &MhdState,
        coeffs: &TimeCoeffs,
    ) -> Result<(Vec<f64>, SolveStats)> {
        let all = &self.ops.all;
        let mut vol = self.ops.weak_divergence(bh, all);
        vol.iter_mut().for_each(|v| *v *= -1.0 / coeffs.dt);
        let faces = &self.magnetic_pressure.mask_def.neumann_faces;
        let b_ext = self.extrapolated(state, coeffs, true);
        let cc = self.ops.curl(&self.ops.curl(&b_ext));
        let eta = 1.0 / self.params.rm;
        let beta0 = coeffs.beta[0];
        let b0 = self.params.b0;
        let ppe = self.ops.mesh.points_per_element();
        let r_w = &self.params.r_w.values;
        let bnd = self.ops.face_integral(faces, |l, n| {
            let bb = [0.0, b0, 0.0];
            let nb = n[0] * bb[0] + n[1] * bb[1] + n[2] * bb[2];
            let ncc = n[0] * cc.x[l] + n[1] * cc.y[l] + n[2] * cc.z[l];
            -beta0 / coeffs.dt * nb - eta * r_w[l / ppe] * ncc
        });
        let scale = self.source_scale(bh, coeffs.dt);
        let mut rhs: Vec<f64> = vol.iter().zip(&bnd).map(|(a, b)| a + b).collect();
        self.ops.gs(&mut rhs);
        self.poisson_solve(
            "magnetic pressure",
            &rhs,
            &self.magnetic_pressure,
            &self.unit_coeff,
            all,
            &self.poisson_all_diag,
            scale,
            &state.q,
        )
    }

    /// `||v / dt||_B`, the size of the divergence source before cancellation.
    fn source_scale(&self, v: &VectorField, dt: f64) -> f64 {
        let mut s = 0.0;
        for c in 0..3 {
            for ((x, m), w) in v.comp(c).iter().zip(&self.ops.mass_all).zip(&self.inv_mult) {
                s += x * x * m * w;
            }
        }
        s.sqrt() / dt
    }

    #[allow(clippy::too_many_arguments)]
    fn helmholtz_component(
        &self,
        name: &str,
        rhs: &[f64],
        fm: &FieldMask,
        lift: Option<&[f64]>,
        c1: f64,
        c0: f64,
        coeff: &CoefficientField,
        active: &[bool],
        diag: &[f64],
        previous: &[f64],
    ) -> Result<(Vec<f64>, SolveStats)> {
        let ops = &self.ops;
        let apply = |x: &[f64], y: &mut [f64]| {
            let ax = ops.stiffness_apply(x, coeff, active);
            for (l, v) in y.iter_mut().enumerate() {
                let w = if active[l / ops.mesh.points_per_element()] {
                    ops.geom.mass_weight[l]
                } else {
                    0.0
                };
                *v = c1 * ax[l] + c0 * w * x[l];
            }
            ops.gs(y);
        };
        let op = |x: &[f64], y: &mut [f64]| {
            apply(x, y);
            y.iter_mut().zip(&fm.mask).for_each(|(v, m)| *v *= m);
        };
        let mut b = rhs.to_vec();
        if let Some(lift) = lift {
            if lift.iter().any(|&v| v != 0.0) {
                let mut hl = vec![0.0; lift.len()];
                apply(lift, &mut hl);
                b.iter_mut().zip(&hl).for_each(|(v, h)| *v -= h);
            }
        }
        let spec = LinearSystemSpec {
            name,
            operator: &op,
            preconditioner: diag,
            mask: &fm.mask,
            inv_multiplicity: &self.inv_mult,
            mass: ops.mass_for(active),
            rel_tolerance: self.config.helmholtz_tol,
            abs_tolerance: 1e-14,
            max_iterations: self.config.max_iterations,
            null_space: NullSpace::None,
        };
        let (mut x, stats) = pcg_solve(&spec, &b, previous)?;
        if let Some(lift) = lift {
            for ((xv, lv), m) in x.iter_mut().zip(lift).zip(&fm.mask) {
                if *m == 0.0 {
                    *xv = *lv;
                }
            }
        }
        Ok((x, stats))
    }

    fn helmholtz_diag(
        cache: &mut Option<HelmholtzCache>,
        ops: &Operators,
        c1: f64,
        c0: f64,
        coeff: &CoefficientField,
        active: &[bool],
    ) -> Vec<f64> {
        match cache {
            Some(c) if c.c1 == c1 && c.c0 == c0 => c.diag.clone(),
            _ => {
                let diag = ops.jacobi_diagonal(c1, c0, coeff, active);
                *cache = Some(HelmholtzCache {
                    c1,
                    c0,
                    diag: diag.clone(),
                });
                diag
            }
        }
    }

    /// Velocity update from the tentative field and pressure.
    pub fn helmholtz_solve_velocity(
        &mut self,
        uh: &VectorField,
        p: &[f64],
        coeffs: &TimeCoeffs,
        previous: &VectorField,
    ) -> Result<(VectorField, [usize; 3])> {
        let fluid = self.ops.fluid.clone();
        let c1 = coeffs.dt / self.params.re;
        let c0 = coeffs.beta[0];
        let diag = Self::helmholtz_diag(&mut self.vel_cache, &self.ops, c1, c0, &self.unit_coeff, &fluid);
        let grad = self.ops.weak_gradient(p, &fluid);
        let mut out = VectorField::zeros(uh.len());
        let mut its = [0; 3];
        for c in 0..3 {
            let mut rhs: Vec<f64> = self.local_mass_on(uh.comp(c), &fluid);
            rhs.iter_mut().zip(grad.comp(c)).for_each(|(r, g)| *r -= coeffs.dt * g);
            self.ops.gs(&mut rhs);
            let (x, st) = self.helmholtz_component(
                "velocity",
                &rhs,
                &self.velocity[c],
                None,
                c1,
                c0,
                &self.unit_coeff,
                &fluid,
                &diag,
                previous.comp(c),
            )?;
            its[c] = st.iterations;
            *out.comp_mut(c) = x;
        }
        Ok((out, its))
    }

    /// Magnetic update from the tentative field and magnetic pressure.
    pub fn helmholtz_solve_magnetic(
        &mut self,
        bh: &VectorField,
        q: &[f64],
        coeffs: &TimeCoeffs,
        previous: &VectorField,
    ) -> Result<(VectorField, [usize; 3])> {
        let all = self.ops.all.clone();
        let c1 = coeffs.dt / self.params.rm;
        let c0 = coeffs.beta[0];
        let diag = Self::helmholtz_diag(&mut self.mag_cache, &self.ops, c1, c0, &self.params.r_w, &all);
        let grad = self.ops.weak_gradient(q, &all);
        let mut out = VectorField::zeros(bh.len());
        let mut its = [0; 3];
        for c in 0..3 {
            let mut rhs: Vec<f64> = self.local_mass_on(bh.comp(c), &all);
            rhs.iter_mut().zip(grad.comp(c)).for_each(|(r, g)| *r -= coeffs.dt * g);
            self.ops.gs(&mut rhs);
            let (x, st) = self.helmholtz_component(
                "magnetic",
                &rhs,
                &self.magnetic[c],
                Some(&self.b_lift[c]),
                c1,
                c0,
                &self.params.r_w,
                &all,
                &diag,
                previous.comp(c),
            )?;
            its[c] = st.iterations;
            *out.comp_mut(c) = x;
        }
        Ok((out, its))
    }

    fn local_mass_on(&self, v: &[f64], active: &[bool]) -> Vec<f64> {
        let ppe = self.ops.mesh.points_per_element();
        v.iter()
            .zip(&self.ops.geom.mass_weight)
            .enumerate()
            .map(|(l, (x, m))| if active[l / ppe] { x * m } else { 0.0 })
            .collect()
    }

    /// `||gs(weak_div(v))||_{B^-1}` over the interior points of the field's domain.
    pub fn divergence_residual(&self, v: &VectorField, magnetic: bool) -> f64 {
        let (active, interior, mass) = if magnetic {
            (&self.ops.all, &self.interior_b, &self.ops.mass_all)
        } else {
            (&self.ops.fluid, &self.interior_u, &self.ops.mass_fluid)
        };
        let mut d = self.ops.weak_divergence(v, active);
        self.ops.gs(&mut d);
        d.iter()
            .zip(interior)
            .zip(mass)
            .zip(&self.inv_mult)
            .filter(|(((_, k), m), _)| **k > 0.0 && **m > 0.0)
            .map(|(((x, _), m), w)| x * x * w / m)
            .sum::<f64>()
            .sqrt()
    }

    /// Advance one step.
    pub fn step(&mut self, state: &mut MhdState) -> Result<StepRecord> {
        if self.config.adaptive && state.step_index > 0 && state.step_index % 10 == 0 {
            let cfl = self.cfl(state, self.dt);
            if cfl > 2.0 * self.config.cfl_target {
                let new_dt = self.select_dt(state.u.max_abs());
                warn!(
                    "CFL {cfl:.3} above twice the target; dt {:.3e} -> {new_dt:.3e}, restarting order ramp",
                    self.dt
                );
                self.dt = new_dt;
                state.ramp = 0;
                state.history.clear();
            }
        }
        let dt = self.dt;
        let cfl = self.cfl(state, dt);
        if cfl > self.config.cfl_limit {
            return Err(MhdError::CflViolation {
                cfl,
                limit: self.config.cfl_limit,
                dt,
            });
        }

        let (g, h) = self.elsasser_rhs(&state.u, &state.b);
        let u_prev = std::mem::replace(&mut state.u, VectorField::zeros(0));
        let b_prev = std::mem::replace(&mut state.b, VectorField::zeros(0));
        state.history.push_front(Lagged {
            u: u_prev,
            b: b_prev,
            g,
            h,
        });
        state.history.truncate(3);
        state.ramp += 1;
        let order = self.config.bdf_order.min(state.ramp).min(state.history.len());
        let coeffs = TimeCoeffs::new(order, dt)?;

        let (uh, bh) = self.tentative_fields(state, &coeffs);
        let (p, sp) = self.pressure_solve(&uh, state, &coeffs)?;
        let (q, sq) = self.magnetic_pressure_solve(&bh, state, &coeffs)?;
        let guess_u = self.extrapolated(state, &coeffs, false);
        let guess_b = self.extrapolated(state, &coeffs, true);
        let (u, iu) = self.helmholtz_solve_velocity(&uh, &p, &coeffs, &guess_u)?;
        let (b, ib) = self.helmholtz_solve_magnetic(&bh, &q, &coeffs, &guess_b)?;
        let prev_u = &state.history[0].u;

        let mut du = 0.0f64;
        for c in 0..3 {
            for (a, o) in u.comp(c).iter().zip(prev_u.comp(c)) {
                du = du.max((a - o).abs());
            }
        }
        state.u = u;
        state.b = b;
        state.p = p;
        state.q = q;
        state.time += dt;
        state.step_index += 1;
        let (uc, bc) = self.center_probe(state);
        let rec = StepRecord {
            step: state.step_index,
            t: state.time,
            dt,
            order,
            u_center: uc,
            b_center: bc,
            div_u: self.divergence_residual(&state.u, false),
            div_b: self.divergence_residual(&state.b, true),
            du_dt: du / dt,
            cfl,
            iterations_p: sp.iterations,
            iterations_q: sq.iterations,
            iterations_u: iu,
            iterations_b: ib,
        };
        if !(uc.is_finite() && bc.is_finite()) {
            return Err(MhdError::Unstable(state.time));
        }
        debug!(
            "step {} t={:.6} dt={:.3e} u_c={:.10e} it(p,q,u,b)=({},{},{:?},{:?})",
            rec.step, rec.t, dt, uc, sp.iterations, sq.iterations, iu, ib
        );
        Ok(rec)
    }

    /// Step until `||u^n - u^{n-1}||_inf / dt <= tolerance` (held for `hold_time`) or `t >= t_max`.
    pub fn march_to_steady(
        &mut self,
        state: &mut MhdState,
        criterion: SteadyCriterion,
        mut on_step: impl FnMut(&StepRecord),
    ) -> Result<MarchOutcome> {
        let mut history = ProbeHistory::new();
        let (u0, b0) = self.center_probe(state);
        history.push(state.time, u0, b0)?;
        let mut last = None;
        let mut steps = 0;
        let mut converged = false;
        let mut held_since: Option<f64> = None;
        while state.time < criterion.t_max - 1e-12 * criterion.t_max {
            let rec = self.step(state)?;
            steps += 1;
            history.push(rec.t, rec.u_center, rec.b_center)?;
            on_step(&rec);
            if rec.du_dt > criterion.tolerance || rec.step <= 2 {
                held_since = None;
            } else if held_since.is_none() {
                held_since = Some(rec.t - rec.dt);
            }
            let done = held_since.is_some_and(|t0| rec.t - t0 >= criterion.hold_time - 1e-12);
            last = Some(rec);
            if done {
                converged = true;
                break;
            }
        }
        if !converged {
            warn!("steady criterion not met by t = {:.4}", state.time);
        }
        Ok(MarchOutcome {
            history,
            converged,
            steps,
            last,
        })
    }

    /// Step until `t >= t_end` (no steady-state test).
    pub fn march_to_time(
        &mut self,
        state: &mut MhdState,
        t_end: f64,
        mut on_step: impl FnMut(&StepRecord),
    ) -> Result<MarchOutcome> {
        let mut history = ProbeHistory::new();
        let (u0, b0) = self.center_probe(state);
        history.push(state.time, u0, b0)?;
        let mut last = None;
        let mut steps = 0;
        while state.time < t_end - 1e-9 * self.dt {
            let rec = self.step(state)?;
            steps += 1;
            history.push(rec.t, rec.u_center, rec.b_center)?;
            on_step(&rec);
            last = Some(rec);
        }
        Ok(MarchOutcome {
            history,
            converged: false,
            steps,
            last,
        })
    }
}
