use std::f64::consts::PI;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};

use crate::error::{MhdError, Result};
use crate::history::ProbeHistory;

/// Eigen-structure of the lowest modal system `q_t + A q = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModalEigen {
    /// Eigenvalues `s +- i w`.
    Oscillatory { s: f64, w: f64 },
    /// Two real eigenvalues, `l1 <= l2`.
    Real { l1: f64, l2: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalModel {
    pub re: f64,
    pub rm: f64,
    pub ha: f64,
    pub matrix_a: [[f64; 2]; 2],
    pub decay_s: f64,
    pub freq_w: f64,
    pub oscillatory: bool,
    pub eigen: ModalEigen,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(MhdError::Validation {
            field: name.to_string(),
            message: format!("{name} must be positive"),
        })
    }
}

impl ModalModel {
    pub fn new(re: f64, rm: f64, ha: f64) -> Result<Self> {
        check_positive("Re", re)?;
        check_positive("Rm", rm)?;
        check_positive("Ha", ha)?;
        let matrix_a = modal_matrix(re, rm, ha);
        let eigen = modal_eigenvalues(re, rm, ha);
        let (decay_s, freq_w, oscillatory) = match eigen {
            ModalEigen::Oscillatory { s, w } => (s, w, true),
            ModalEigen::Real { l1, .. } => (l1, 0.0, false),
        };
        Ok(Self {
            re,
            rm,
            ha,
            matrix_a,
            decay_s,
            freq_w,
            oscillatory,
            eigen,
        })
    }

    /// Oscillation period `2 pi / w`, if any.
    pub fn period(&self) -> Option<f64> {
        self.oscillatory.then(|| 2.0 * PI / self.freq_w)
    }
}

pub fn modal_matrix(re: f64, rm: f64, ha: f64) -> [[f64; 2]; 2] {
    [
        [PI * PI / (2.0 * re), -(PI / 2.0) * ha / re],
        [(PI / 2.0) * ha / rm, PI * PI / (2.0 * rm)],
    ]
}

/// Closed-form eigenvalues of the modal matrix.
pub fn modal_eigenvalues(re: f64, rm: f64, ha: f64) -> ModalEigen {
    let s = (PI * PI / 4.0) * (1.0 / re + 1.0 / rm);
    let radicand = 1.0 - (PI * PI / (4.0 * ha * ha)) * (rm - re).powi(2) / (rm * re);
    let scale = (PI / 2.0) * ha / (re * rm).sqrt();
    if radicand > 0.0 {
        ModalEigen::Oscillatory {
            s,
            w: scale * radicand.sqrt(),
        }
    } else {
        let d = scale * (-radicand).sqrt();
        ModalEigen::Real { l1: s - d, l2: s + d }
    }
}

/// Parameters of `u(t) = u0 e^{-s t} sin(w t + phi) + s0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientFit {
    pub u0_amp: f64,
    pub decay_s: f64,
    pub freq_w: f64,
    pub phase: f64,
    pub offset_s0: f64,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl TransientFit {
    pub fn from_params(u0_amp: f64, decay_s: f64, freq_w: f64, phase: f64, offset_s0: f64) -> Self {
        Self {
            u0_amp,
            decay_s,
            freq_w,
            phase,
            offset_s0,
            residual_norm: 0.0,
            converged: false,
            iterations: 0,
        }
    }

    fn params(&self) -> [f64; 5] {
        [self.u0_amp, self.decay_s, self.freq_w, self.phase, self.offset_s0]
    }

    /// Make `u0 >= 0`, `w >= 0` and `phi` in `[0, 2 pi)` without changing the curve.
    pub fn canonicalize(&mut self) {
        if self.freq_w < 0.0 {
            self.freq_w = -self.freq_w;
            self.phase = PI - self.phase;
        }
        if self.u0_amp < 0.0 {
            self.u0_amp = -self.u0_amp;
            self.phase += PI;
        }
        self.phase = self.phase.rem_euclid(2.0 * PI);
        if self.phase >= 2.0 * PI {
            self.phase = 0.0;
        }
    }
}

pub fn asymptotic_response(t: f64, fit: &TransientFit) -> f64 {
    fit.u0_amp * (-fit.decay_s * t).exp() * (fit.freq_w * t + fit.phase).sin() + fit.offset_s0
}

/// Two-exponential model `c1 e^{-l1 t} + c2 e^{-l2 t} + s0` for the overdamped regime.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoExpFit {
    pub c1: f64,
    pub l1: f64,
    pub c2: f64,
    pub l2: f64,
    pub offset_s0: f64,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

pub fn two_exp_response(t: f64, fit: &TwoExpFit) -> f64 {
    fit.c1 * (-fit.l1 * t).exp() + fit.c2 * (-fit.l2 * t).exp() + fit.offset_s0
}

#[derive(Debug, Clone, PartialEq)]
pub enum HistoryFit {
    Oscillatory(TransientFit),
    TwoExponential(TwoExpFit),
}

/// LM solver settings.
#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub lambda0: f64,
    pub max_iterations: usize,
    pub step_tol: f64,
    pub grad_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            lambda0: 1e-3,
            max_iterations: 500,
            step_tol: 1e-10,
            grad_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub cost_trace: Vec<f64>,
}

/// Levenberg-Marquardt with diagonal scaling.  `eval` fills residuals
/// (model - data) and the Jacobian (rows = samples).
pub fn levenberg_marquardt<F>(p0: &[f64], n_res: usize, opts: LmOptions, mut eval: F) -> Result<LmOutcome>
where
    F: FnMut(&[f64], &mut DVector<f64>, Option<&mut DMatrix<f64>>),
{
    let np = p0.len();
    if n_res < np {
        return Err(MhdError::DegenerateHistory(format!(
            "{n_res} samples for {np} parameters"
        )));
    }
    let mut p = DVector::from_column_slice(p0);
    let mut r = DVector::zeros(n_res);
    let mut jac = DMatrix::zeros(n_res, np);
    eval(p.as_slice(), &mut r, Some(&mut jac));
    let mut cost = r.norm_squared();
    if !cost.is_finite() {
        return Err(MhdError::DegenerateHistory(
            "non-finite residual at initial guess".into(),
        ));
    }
    let mut lambda = opts.lambda0;
    let mut trace = vec![cost];
    let mut r_try = DVector::zeros(n_res);

    for it in 1..=opts.max_iterations {
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        if grad.amax() <= opts.grad_tol {
            return Ok(LmOutcome {
                params: p.as_slice().to_vec(),
                cost,
                iterations: it - 1,
                cost_trace: trace,
            });
        }
        let mut accepted = false;
        while !accepted {
            let mut lhs = jtj.clone();
            for i in 0..np {
                lhs[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(delta) = lhs.lu().solve(&(-&grad)) else {
                lambda *= 10.0;
                if lambda > 1e16 {
                    break;
                }
                continue;
            };
            let p_try = &p + &delta;
            eval(p_try.as_slice(), &mut r_try, None);
            let c_try = r_try.norm_squared();
            if c_try.is_finite() && c_try < cost {
                let small = delta.norm() <= opts.step_tol * (p.norm() + opts.step_tol);
                assert!(c_try <= cost, "LM accepted an increasing step");
                p = p_try;
                cost = c_try;
                trace.push(cost);
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                eval(p.as_slice(), &mut r, Some(&mut jac));
                if small {
                    return Ok(LmOutcome {
                        params: p.as_slice().to_vec(),
                        cost,
                        iterations: it,
                        cost_trace: trace,
                    });
                }
            } else {
                lambda *= 10.0;
                if lambda > 1e16 {
                    break;
                }
            }
        }
        if !accepted {
            return Ok(LmOutcome {
                params: p.as_slice().to_vec(),
                cost,
                iterations: it,
                cost_trace: trace,
            });
        }
    }
    Err(MhdError::NoConvergence {
        solver: "levenberg-marquardt".into(),
        iterations: opts.max_iterations,
        residual: cost.sqrt(),
    })
}

/// Samples of `u_center` with `t >= t0`.
fn fit_window(history: &ProbeHistory, t0: f64, n_params: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (t, u) = history.window(t0);
    if t.len() < n_params {
        return Err(MhdError::DegenerateHistory(format!(
            "{} samples after t = {t0} for {n_params} parameters",
            t.len()
        )));
    }
    Ok((t, u))
}

fn check_span(t: &[f64], ha: f64) {
    let span = t.last().unwrap() - t[0];
    if t.len() < 50 || span < 8.0 / ha {
        warn!(
            "fit window has {} samples over {:.3e}; two periods 4/Ha need {:.3e}",
            t.len(),
            span,
            8.0 / ha
        );
    }
}

/// Linear least squares for `(a, b, s0)` in `e^{-s t}(a sin wt + b cos wt) + s0`.
fn linear_amplitudes(t: &[f64], u: &[f64], s: f64, w: f64, s0: Option<f64>) -> (f64, f64, f64) {
    let ncol = if s0.is_some() { 2 } else { 3 };
    let m = DMatrix::from_fn(t.len(), ncol, |i, j| {
        let e = (-s * t[i]).exp();
        match j {
            0 => e * (w * t[i]).sin(),
            1 => e * (w * t[i]).cos(),
            _ => 1.0,
        }
    });
    let rhs = DVector::from_iterator(t.len(), u.iter().map(|v| v - s0.unwrap_or(0.0)));
    let x = m
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .unwrap_or_else(|_| DVector::zeros(ncol));
    (x[0], x[1], s0.unwrap_or_else(|| x[2]))
}

/// Initial guess from the modal eigenvalues, with amplitude, phase and
/// offset from a linear least-squares projection.
pub fn initial_guess(history: &ProbeHistory, model: &ModalModel) -> Result<TransientFit> {
    let (t, u) = fit_window(history, 1.0 / model.ha, 5)?;
    let (s, w) = (model.decay_s, model.freq_w);
    let (a, b, s0) = linear_amplitudes(&t, &u, s, w, None);
    let mut g = TransientFit::from_params(a.hypot(b), s, w, b.atan2(a), s0);
    g.canonicalize();
    Ok(g)
}

fn eval_oscillatory(t: &[f64], u: &[f64], p: &[f64], r: &mut DVector<f64>, jac: Option<&mut DMatrix<f64>>) {
    let [a, s, w, phi, s0] = [p[0], p[1], p[2], p[3], p[4]];
    let mut jac = jac;
    for (i, (&ti, &ui)) in t.iter().zip(u).enumerate() {
        let e = (-s * ti).exp();
        let (sn, cs) = (w * ti + phi).sin_cos();
        r[i] = a * e * sn + s0 - ui;
        if let Some(j) = jac.as_deref_mut() {
            j[(i, 0)] = e * sn;
            j[(i, 1)] = -ti * a * e * sn;
            j[(i, 2)] = ti * a * e * cs;
            j[(i, 3)] = a * e * cs;
            j[(i, 4)] = 1.0;
        }
    }
}

/// Free 5-parameter fit of the center velocity on `t >= 1/Ha`.
pub fn lm_fit(history: &ProbeHistory, ha: f64, initial: &TransientFit) -> Result<TransientFit> {
    lm_fit_with(history, ha, initial, LmOptions::default())
}

pub fn lm_fit_with(history: &ProbeHistory, ha: f64, initial: &TransientFit, opts: LmOptions) -> Result<TransientFit> {
    check_positive("Ha", ha)?;
    let (t, u) = fit_window(history, 1.0 / ha, 5)?;
    check_span(&t, ha);
    let out = levenberg_marquardt(&initial.params(), t.len(), opts, |p, r, j| {
        eval_oscillatory(&t, &u, p, r, j)
    })?;
    let p = &out.params;
    let mut fit = TransientFit {
        u0_amp: p[0],
        decay_s: p[1],
        freq_w: p[2],
        phase: p[3],
        offset_s0: p[4],
        residual_norm: out.cost.sqrt(),
        converged: true,
        iterations: out.iterations,
    };
    fit.canonicalize();
    debug!("lm_fit: {fit:?}");
    Ok(fit)
}

/// Whether `s0` is fitted or pinned in [`constrained_fit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OffsetMode {
    Fitted,
    Pinned(f64),
}

/// Fit of `(u0, phi, s0)` with `s` and `w` held fixed.
pub fn constrained_fit(
    history: &ProbeHistory,
    ha: f64,
    fixed_s: f64,
    fixed_w: f64,
    offset: OffsetMode,
) -> Result<TransientFit> {
    check_positive("Ha", ha)?;
    let pinned = match offset {
        OffsetMode::Fitted => None,
        OffsetMode::Pinned(v) => Some(v),
    };
    let np = if pinned.is_some() { 2 } else { 3 };
    let (t, u) = fit_window(history, 1.0 / ha, np)?;
    check_span(&t, ha);
    let (a, b, s0) = linear_amplitudes(&t, &u, fixed_s, fixed_w, pinned);
    let mut p0 = vec![a.hypot(b), b.atan2(a)];
    if pinned.is_none() {
        p0.push(s0);
    }
    let out = levenberg_marquardt(&p0, t.len(), LmOptions::default(), |p, r, j| {
        let full = [p[0], fixed_s, fixed_w, p[1], pinned.unwrap_or_else(|| p[2])];
        let mut jf = DMatrix::zeros(t.len(), 5);
        let want = j.is_some();
        eval_oscillatory(&t, &u, &full, r, want.then_some(&mut jf));
        if let Some(j) = j {
            for i in 0..t.len() {
                j[(i, 0)] = jf[(i, 0)];
                j[(i, 1)] = jf[(i, 3)];
                if pinned.is_none() {
                    j[(i, 2)] = jf[(i, 4)];
                }
            }
        }
    })?;
    let p = &out.params;
    let mut fit = TransientFit {
        u0_amp: p[0],
        decay_s: fixed_s,
        freq_w: fixed_w,
        phase: p[1],
        offset_s0: pinned.unwrap_or_else(|| p[2]),
        residual_norm: out.cost.sqrt(),
        converged: true,
        iterations: out.iterations,
    };
    fit.canonicalize();
    Ok(fit)
}

fn eval_two_exp(t: &[f64], u: &[f64], p: &[f64], r: &mut DVector<f64>, jac: Option<&mut DMatrix<f64>>) {
    let [c1, l1, c2, l2, s0] = [p[0], p[1], p[2], p[3], p[4]];
    let mut jac = jac;
    for (i, (&ti, &ui)) in t.iter().zip(u).enumerate() {
        let e1 = (-l1 * ti).exp();
        let e2 = (-l2 * ti).exp();
        r[i] = c1 * e1 + c2 * e2 + s0 - ui;
        if let Some(j) = jac.as_deref_mut() {
            j[(i, 0)] = e1;
            j[(i, 1)] = -ti * c1 * e1;
            j[(i, 2)] = e2;
            j[(i, 3)] = -ti * c2 * e2;
            j[(i, 4)] = 1.0;
        }
    }
}

/// Two-exponential fit seeded with the real modal eigenvalues.
pub fn two_exponential_fit(history: &ProbeHistory, ha: f64, l1: f64, l2: f64) -> Result<TwoExpFit> {
    check_positive("Ha", ha)?;
    let (t, u) = fit_window(history, 1.0 / ha, 5)?;
    let m = DMatrix::from_fn(t.len(), 3, |i, j| match j {
        0 => (-l1 * t[i]).exp(),
        1 => (-l2 * t[i]).exp(),
        _ => 1.0,
    });
    let x = m
        .svd(true, true)
        .solve(&DVector::from_column_slice(&u), 1e-14)
        .unwrap_or_else(|_| DVector::zeros(3));
    let p0 = [x[0], l1, x[1], l2, x[2]];
    let out = levenberg_marquardt(&p0, t.len(), LmOptions::default(), |p, r, j| {
        eval_two_exp(&t, &u, p, r, j)
    })?;
    let p = &out.params;
    let (mut a, mut b) = ((p[0], p[1]), (p[2], p[3]));
    if a.1 > b.1 {
        std::mem::swap(&mut a, &mut b);
    }
    Ok(TwoExpFit {
        c1: a.0,
        l1: a.1,
        c2: b.0,
        l2: b.1,
        offset_s0: p[4],
        residual_norm: out.cost.sqrt(),
        converged: true,
        iterations: out.iterations,
    })
}

/// Fit a history with the model matching the modal regime.
pub fn fit_history(history: &ProbeHistory, model: &ModalModel) -> Result<HistoryFit> {
    match model.eigen {
        ModalEigen::Oscillatory { .. } => {
            let guess = initial_guess(history, model)?;
            lm_fit(history, model.ha, &guess).map(HistoryFit::Oscillatory)
        }
        ModalEigen::Real { l1, l2 } => two_exponential_fit(history, model.ha, l1, l2).map(HistoryFit::TwoExponential),
    }
}

/// Sign changes of `u - s0` for `t >= t0`, ignoring samples with
/// `|u - s0| <= rel * max |u - s0|`.
pub fn zero_crossings(history: &ProbeHistory, t0: f64, s0: f64, rel: f64) -> usize {
    let (_, u) = history.window(t0);
    let peak = u.iter().fold(0.0f64, |m, v| m.max((v - s0).abs()));
    let signs: Vec<bool> = u
        .iter()
        .filter(|v| (*v - s0).abs() > rel * peak)
        .map(|v| *v > s0)
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// One row of the analytic-versus-fitted comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct FitComparison {
    pub ha: f64,
    pub s_analytic: f64,
    pub w_analytic: f64,
    pub s_fit: f64,
    pub w_fit: f64,
    pub s0_fit: f64,
    pub residual_norm: f64,
}

impl FitComparison {
    pub fn new(model: &ModalModel, fit: &TransientFit) -> Self {
        Self {
            ha: model.ha,
            s_analytic: model.decay_s,
            w_analytic: model.freq_w,
            s_fit: fit.decay_s,
            w_fit: fit.freq_w,
            s0_fit: fit.offset_s0,
            residual_norm: fit.residual_norm,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn synthetic(fit: &TransientFit, t_end: f64, n: usize) -> ProbeHistory {
        let mut h = ProbeHistory::new();
        for i in 0..=n {
            let t = t_end * i as f64 / n as f64;
            h.push(t, asymptotic_response(t, fit), 0.0).unwrap();
        }
        h
    }

    /// Eigenvalues by the quadratic formula on the characteristic polynomial.
    fn brute_eigen(a: [[f64; 2]; 2]) -> (f64, f64) {
        let tr = a[0][0] + a[1][1];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let disc = tr * tr / 4.0 - det;
        assert!(disc < 0.0);
        (tr / 2.0, (-disc).sqrt())
    }

    #[test]
    fn paper_parameter_values() {
        let m = ModalModel::new(1.0, 1.0, 10.0).unwrap();
        assert!(m.oscillatory);
        assert_relative_eq!(m.decay_s, PI * PI / 2.0, max_relative = 1e-14);
        assert_relative_eq!(m.freq_w, 5.0 * PI, max_relative = 1e-14);
        let m = ModalModel::new(1.0, 1.0, 100.0).unwrap();
        assert_relative_eq!(m.decay_s, PI * PI / 2.0, max_relative = 1e-14);
        assert_relative_eq!(m.freq_w, 50.0 * PI, max_relative = 1e-14);
        let m = ModalModel::new(1.0, 1.0, 50.0).unwrap();
        // zero crossings of sin are pi/w apart
        assert_relative_eq!(PI / m.freq_w, 0.04, max_relative = 1e-14);
        assert_relative_eq!(m.period().unwrap(), 4.0 / 50.0, max_relative = 1e-14);
    }

    #[test]
    fn equal_reynolds_numbers_give_unit_radicand() {
        for (re, ha) in [(0.3, 2.0), (7.0, 40.0), (1.0, 0.1)] {
            match modal_eigenvalues(re, re, ha) {
                ModalEigen::Oscillatory { w, .. } => assert_relative_eq!(w, PI / 2.0 * ha / re, max_relative = 1e-14),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn non_positive_parameters_are_rejected() {
        assert!(ModalModel::new(1.0, 1.0, -1.0).is_err());
        assert!(ModalModel::new(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn real_pair_when_radicand_negative() {
        let (re, rm, ha) = (1.0, 10.0, 1.0);
        let ModalEigen::Real { l1, l2 } = modal_eigenvalues(re, rm, ha) else {
            panic!()
        };
        let a = modal_matrix(re, rm, ha);
        let tr = a[0][0] + a[1][1];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        assert_relative_eq!(l1 + l2, tr, max_relative = 1e-12);
        assert_relative_eq!(l1 * l2, det, max_relative = 1e-12);
        assert!(l1 > 0.0 && l1 < l2);
    }

    proptest! {
        #[test]
        fn matrix_and_eigenvalues_agree(re in 0.05f64..20.0, rm in 0.05f64..20.0, ha in 0.5f64..200.0) {
            let m = ModalModel::new(re, rm, ha).unwrap();
            let a = m.matrix_a;
            prop_assert_eq!(a[0][0], PI * PI / (2.0 * re));
            prop_assert_eq!(a[0][1], -(PI / 2.0) * ha / re);
            prop_assert_eq!(a[1][0], (PI / 2.0) * ha / rm);
            prop_assert_eq!(a[1][1], PI * PI / (2.0 * rm));
            if m.oscillatory {
                let (s, w) = brute_eigen(a);
                prop_assert!((s - m.decay_s).abs() <= 1e-12 * s.abs().max(1.0));
                prop_assert!((w - m.freq_w).abs() <= 1e-12 * w.abs().max(1.0));
                prop_assert!((a[0][0] + a[1][1] - 2.0 * m.decay_s).abs() <= 1e-12 * m.decay_s);
                let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
                prop_assert!((det - (m.decay_s.powi(2) + m.freq_w.powi(2))).abs() <= 1e-12 * det);
            }
        }

        #[test]
        fn response_sign_symmetry(u0 in -2.0f64..2.0, s in 0.0f64..10.0, w in 0.1f64..100.0,
                                  phi in 0.0f64..6.28, s0 in 0.0f64..1.0, t in 0.0f64..2.0) {
            let a = TransientFit::from_params(u0, s, w, phi, s0);
            let b = TransientFit::from_params(-u0, s, w, phi + PI, s0);
            prop_assert!((asymptotic_response(t, &a) - asymptotic_response(t, &b)).abs() < 1e-12);
            let mut c = b.clone();
            c.canonicalize();
            prop_assert!(c.u0_amp >= 0.0 && (0.0..2.0 * PI).contains(&c.phase));
            prop_assert!((asymptotic_response(t, &a) - asymptotic_response(t, &c)).abs() < 1e-12);
        }
    }

    #[test]
    fn response_limits() {
        let f = TransientFit::from_params(0.0, 3.0, 7.0, 0.4, 0.25);
        assert_eq!(asymptotic_response(1.3, &f), 0.25);
        let f = TransientFit::from_params(0.8, 3.0, 7.0, 0.4, 0.25);
        for t in [1.0, 5.0, 20.0] {
            assert!((asymptotic_response(t, &f) - 0.25).abs() <= 0.8 * (-3.0 * t).exp());
        }
    }

    #[test]
    fn synthetic_round_trip() {
        let truth = TransientFit::from_params(0.05, PI * PI / 2.0 * 1.1, 5.0 * PI * 0.97, 1.2, 0.01);
        let h = synthetic(&truth, 2.0, 400);
        let model = ModalModel::new(1.0, 1.0, 10.0).unwrap();
        let guess = TransientFit::from_params(0.03, model.decay_s, model.freq_w, 0.0, h.u_center[400]);
        let fit = lm_fit(&h, 10.0, &guess).unwrap();
        for (got, want) in fit.params().iter().zip(truth.params()) {
            assert_relative_eq!(*got, want, max_relative = 1e-8);
        }
        assert!(fit.residual_norm < 1e-10);
    }

    #[test]
    fn residual_trace_never_increases() {
        let truth = TransientFit::from_params(0.3, 4.0, 14.0, 2.5, 0.1);
        let mut h = synthetic(&truth, 3.0, 300);
        for (i, u) in h.u_center.iter_mut().enumerate() {
            *u += 1e-3 * ((i * 7919) % 13) as f64 / 13.0;
        }
        let (t, u) = h.window(0.1);
        let p0 = [0.1, 5.0, 15.7, 0.0, 0.0];
        let out = levenberg_marquardt(&p0, t.len(), LmOptions::default(), |p, r, j| {
            eval_oscillatory(&t, &u, p, r, j)
        })
        .unwrap();
        assert!(out.cost_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.cost_trace.len() > 2);
    }

    #[test]
    fn constrained_exact_recovery() {
        let truth = TransientFit::from_params(0.07, PI * PI / 2.0, 5.0 * PI, 4.0, 0.0097);
        let h = synthetic(&truth, 2.0, 300);
        let fit = constrained_fit(&h, 10.0, truth.decay_s, truth.freq_w, OffsetMode::Fitted).unwrap();
        assert_relative_eq!(fit.u0_amp, 0.07, max_relative = 1e-10);
        assert_relative_eq!(fit.phase, 4.0, max_relative = 1e-10);
        assert_relative_eq!(fit.offset_s0, 0.0097, max_relative = 1e-10);
        let pinned = constrained_fit(&h, 10.0, truth.decay_s, truth.freq_w, OffsetMode::Pinned(0.0097)).unwrap();
        assert_relative_eq!(pinned.u0_amp, 0.07, max_relative = 1e-10);
        assert_eq!(pinned.offset_s0, 0.0097);
    }

    #[test]
    fn too_few_samples_is_degenerate() {
        let truth = TransientFit::from_params(0.07, 1.0, 5.0, 0.0, 0.0);
        let h = synthetic(&truth, 1.0, 3);
        assert!(matches!(lm_fit(&h, 10.0, &truth), Err(MhdError::DegenerateHistory(_))));
    }

    #[test]
    fn two_exponential_round_trip() {
        let mut h = ProbeHistory::new();
        for i in 0..=400 {
            let t = 4.0 * i as f64 / 400.0;
            h.push(t, -0.3 * (-1.5 * t).exp() + 0.1 * (-9.0 * t).exp() + 0.2, 0.0)
                .unwrap();
        }
        let fit = two_exponential_fit(&h, 10.0, 1.0, 12.0).unwrap();
        assert_relative_eq!(fit.l1, 1.5, max_relative = 1e-7);
        assert_relative_eq!(fit.l2, 9.0, max_relative = 1e-7);
        assert_relative_eq!(fit.offset_s0, 0.2, max_relative = 1e-7);
    }

    #[test]
    fn zero_crossing_count() {
        let truth = TransientFit::from_params(1.0, 0.0, PI, 0.0, 0.0);
        let h = synthetic(&truth, 4.1, 410);
        assert_eq!(zero_crossings(&h, 0.05, 0.0, 1e-6), 4);
        let mut h = ProbeHistory::new();
        for i in 0..200 {
            let t = i as f64 * 0.01;
            h.push(t, 1.0 - (-t).exp() + 1e-13 * (i as f64).sin(), 0.0).unwrap();
        }
        assert_eq!(zero_crossings(&h, 0.0, 1.0 - (-1.99f64).exp(), 1e-3), 0);
    }
}
