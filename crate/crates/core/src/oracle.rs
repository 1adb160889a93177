//! Finite-difference solver for the reduced, axially invariant duct equations
//!
//! ```text
//! Re u_t - lap u - Ha b_y = 1      (fluid)
//! Rm b_t - div(r_w grad b) - Ha u_y = 0   (magnetic region)
//! ```
//!
//! used as the verification reference for the 3D solver. `b` is the scaled
//! induced field; the 3D axial field is `sqrt(Rm / Re) b`.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::cases::{CaseKind, CaseSpec};
use crate::error::{MhdError, Result};
use crate::history::ProbeHistory;

/// Magnetic boundary treatment of the reduced problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleBc {
    /// `b = 0` on the whole fluid boundary.
    Insulating,
    /// `db/dy = 0` at `y = +-1`, `b = 0` at `z = +-1`.
    Hunt,
    /// A wall of thickness `delta` and conductance ratio `r_w` around the fluid,
    /// `b = 0` on its outer boundary.
    Conducting { r_w: f64, delta: f64 },
}

impl OracleBc {
    pub fn for_case(spec: &CaseSpec) -> Self {
        match spec.kind {
            CaseKind::Shercliff => OracleBc::Insulating,
            CaseKind::Hunt => OracleBc::Hunt,
            CaseKind::ConductingWall => OracleBc::Conducting {
                r_w: spec.r_w_solid,
                delta: spec.delta,
            },
        }
    }
}

/// Grid functions on the (possibly wall-extended) cross-section.
///
/// Values are stored `[j * m + i]` with `i` along y and `j` along z, where `m`
/// is the number of nodes per direction; both directions share `coords`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleGrid2D {
    /// Interior fluid points per direction.
    pub n: usize,
    /// Fluid spacing `2 / (n + 1)`.
    pub h: f64,
    pub coords: Vec<f64>,
    /// Node indices of `y = -1` and `y = 1`.
    pub fluid: (usize, usize),
    pub u: Vec<f64>,
    pub b: Vec<f64>,
    /// Conductance ratio per cell, `(m - 1)^2` values.
    pub r_w: Vec<f64>,
}

impl OracleGrid2D {
    fn new(n: usize, bc: OracleBc) -> Result<Self> {
        if n < 3 {
            return Err(MhdError::UnderResolved(format!("{n} interior points")));
        }
        let h = 2.0 / (n + 1) as f64;
        let mut coords: Vec<f64> = (0..n + 2).map(|i| -1.0 + i as f64 * h).collect();
        coords[n + 1] = 1.0;
        let mut lo = 0;
        let mut r_solid = 1.0;
        if let OracleBc::Conducting { r_w, delta } = bc {
            if !(r_w > 0.0) || !(delta > 0.0) {
                return Err(MhdError::Validation {
                    field: "oracle wall".into(),
                    message: format!("r_w = {r_w}, delta = {delta} must be positive"),
                });
            }
            let k = (delta / h).ceil().max(1.0) as usize;
            let hw = delta / k as f64;
            let left: Vec<f64> = (0..k).map(|l| -1.0 - delta + l as f64 * hw).collect();
            let right: Vec<f64> = (1..=k).map(|l| 1.0 + l as f64 * hw).collect();
            lo = k;
            coords = left.into_iter().chain(coords).chain(right).collect();
            r_solid = r_w;
        }
        let m = coords.len();
        let mut r_w = vec![1.0; (m - 1) * (m - 1)];
        let hi = lo + n + 1;
        for j in 0..m - 1 {
            for i in 0..m - 1 {
                let fluid_cell = i >= lo && i < hi && j >= lo && j < hi;
                if !fluid_cell {
                    r_w[j * (m - 1) + i] = r_solid;
                }
            }
        }
        Ok(OracleGrid2D {
            n,
            h,
            coords,
            fluid: (lo, hi),
            u: vec![0.0; m * m],
            b: vec![0.0; m * m],
            r_w,
        })
    }

    pub fn nodes(&self) -> usize {
        self.coords.len()
    }

    /// Bilinear interpolation of `u` (`magnetic == false`) or `b`.
    pub fn interpolate(&self, magnetic: bool, y: f64, z: f64) -> f64 {
        let f = if magnetic { &self.b } else { &self.u };
        let m = self.nodes();
        let (i, ty) = bracket(&self.coords, y);
        let (j, tz) = bracket(&self.coords, z);
        let v = |a: usize, c: usize| f[c * m + a];
        (1.0 - ty) * (1.0 - tz) * v(i, j)
            + ty * (1.0 - tz) * v(i + 1, j)
            + (1.0 - ty) * tz * v(i, j + 1)
            + ty * tz * v(i + 1, j + 1)
    }

    /// Four-point Lagrange interpolation in each direction, exact for cubics.
    pub fn interpolate_cubic(&self, magnetic: bool, y: f64, z: f64) -> f64 {
        let f = if magnetic { &self.b } else { &self.u };
        let m = self.nodes();
        let (sy, wy) = cubic_stencil(&self.coords, y);
        let (sz, wz) = cubic_stencil(&self.coords, z);
        let mut s = 0.0;
        for (c, wc) in wz.iter().enumerate() {
            for (a, wa) in wy.iter().enumerate() {
                s += wa * wc * f[(sz + c) * m + sy + a];
            }
        }
        s
    }

    /// `(u, b)` at the duct center.
    pub fn center(&self) -> (f64, f64) {
        (self.interpolate(false, 0.0, 0.0), self.interpolate(true, 0.0, 0.0))
    }

    pub fn max_abs_u(&self) -> f64 {
        self.u.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn max_abs_b(&self) -> f64 {
        self.b.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Fluid nodes `(y, z, u, b)` in row order, boundary included.
    pub fn fluid_nodes(&self) -> Vec<(f64, f64, f64, f64)> {
        let m = self.nodes();
        let (lo, hi) = self.fluid;
        let mut out = Vec::with_capacity((hi - lo + 1) * (hi - lo + 1));
        for j in lo..=hi {
            for i in lo..=hi {
                out.push((self.coords[i], self.coords[j], self.u[j * m + i], self.b[j * m + i]));
            }
        }
        out
    }

    fn is_uniform(&self) -> bool {
        self.fluid.0 == 0 && self.nodes() == self.n + 2
    }
}

fn bracket(coords: &[f64], x: f64) -> (usize, f64) {
    let m = coords.len();
    let x = x.clamp(coords[0], coords[m - 1]);
    let i = coords.partition_point(|&c| c <= x).saturating_sub(1).min(m - 2);
    (i, (x - coords[i]) / (coords[i + 1] - coords[i]))
}

fn cubic_stencil(coords: &[f64], x: f64) -> (usize, [f64; 4]) {
    let m = coords.len();
    let (i, _) = bracket(coords, x);
    let start = i.saturating_sub(1).min(m - 4);
    let x = x.clamp(coords[0], coords[m - 1]);
    let mut w = [1.0; 4];
    for (a, wa) in w.iter_mut().enumerate() {
        for c in 0..4 {
            if c != a {
                *wa *= (x - coords[start + c]) / (coords[start + a] - coords[start + c]);
            }
        }
    }
    (start, w)
}

fn check_resolution(ha: f64, n: usize) -> Result<()> {
    if !(ha >= 0.0) {
        return Err(MhdError::Validation {
            field: "Ha".into(),
            message: "Ha must be positive".into(),
        });
    }
    if (n as f64) < 8.0 * ha {
        return Err(MhdError::UnderResolved(format!(
            "{n} points across the duct cannot resolve the Ha = {ha} boundary layer (need >= {})",
            (8.0 * ha).ceil()
        )));
    }
    Ok(())
}

/// Type-I discrete sine transform `X_k = sum_j x_j sin(pi j k / (n + 1))`, `j, k = 1..n`.
pub struct Dst1 {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
}

impl Dst1 {
    pub fn new(n: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(2 * (n + 1));
        Dst1 {
            n,
            fft,
            buf: vec![Complex::default(); 2 * (n + 1)],
        }
    }

    pub fn forward(&mut self, x: &mut [f64]) {
        let n = self.n;
        assert_eq!(x.len(), n);
        self.buf.iter_mut().for_each(|c| *c = Complex::default());
        for j in 0..n {
            self.buf[j + 1].re = x[j];
            self.buf[2 * (n + 1) - 1 - j].re = -x[j];
        }
        self.fft.process(&mut self.buf);
        for k in 0..n {
            x[k] = -0.5 * self.buf[k + 1].im;
        }
    }

    pub fn inverse(&mut self, x: &mut [f64]) {
        self.forward(x);
        let s = 2.0 / (self.n + 1) as f64;
        x.iter_mut().for_each(|v| *v *= s);
    }
}

/// Banded LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    w: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    /// Empty `n x n` matrix with `kl` sub- and `ku` super-diagonals.
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let w = 2 * kl + ku + 1;
        BandLu {
            n,
            kl,
            ku,
            w,
            a: vec![0.0; n * w],
            piv: Vec::new(),
        }
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        r * self.w + c + self.kl - r
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        assert!(
            c + self.kl >= r && c <= r + self.ku,
            "entry ({r}, {c}) outside the band"
        );
        let i = self.idx(r, c);
        self.a[i] = v;
    }

    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        assert!(
            c + self.kl >= r && c <= r + self.ku,
            "entry ({r}, {c}) outside the band"
        );
        let i = self.idx(r, c);
        self.a[i] += v;
    }

    pub fn factor(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        self.piv = vec![0; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            for r in k + 1..=last {
                if self.a[self.idx(r, k)].abs() > self.a[self.idx(p, k)].abs() {
                    p = r;
                }
            }
            self.piv[k] = p;
            let cmax = (k + kl + ku).min(n - 1);
            if p != k {
                for c in k..=cmax {
                    let (i, j) = (self.idx(k, c), self.idx(p, c));
                    self.a.swap(i, j);
                }
            }
            let pivot = self.a[self.idx(k, k)];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(MhdError::NoConvergence {
                    solver: "banded LU".into(),
                    iterations: k,
                    residual: pivot,
                });
            }
            for r in k + 1..=last {
                let ir = self.idx(r, k);
                let l = self.a[ir] / pivot;
                self.a[ir] = l;
                if l != 0.0 {
                    for c in k + 1..=cmax {
                        let (i, j) = (self.idx(r, c), self.idx(k, c));
                        self.a[i] -= l * self.a[j];
                    }
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self, b: &mut [f64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            b.swap(k, self.piv[k]);
            let bk = b[k];
            for r in k + 1..=(k + kl).min(n - 1) {
                b[r] -= self.a[self.idx(r, k)] * bk;
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for c in k + 1..=(k + kl + ku).min(n - 1) {
                s -= self.a[self.idx(k, c)] * b[c];
            }
            b[k] = s / self.a[self.idx(k, k)];
        }
    }
}

/// Per-z-mode coupled systems on the uniform grid, unknowns interleaved
/// `(u_i, b_i)` for `i = 0..n+1`.
struct ModeSystems {
    n: usize,
    lus: Vec<BandLu>,
}

impl ModeSystems {
    fn build(n: usize, ha: f64, hunt: bool, shift_u: f64, shift_b: f64) -> Result<Self> {
        let h = 2.0 / (n + 1) as f64;
        let h2 = h * h;
        let size = 2 * (n + 2);
        let mut lus = Vec::with_capacity(n);
        for mode in 1..=n {
            let mu = (2.0 - 2.0 * (std::f64::consts::PI * mode as f64 / (n + 1) as f64).cos()) / h2;
            let mut a = BandLu::zeros(size, 4, 4);
            let u = |i: usize| 2 * i;
            let b = |i: usize| 2 * i + 1;
            a.set(u(0), u(0), 1.0);
            a.set(u(n + 1), u(n + 1), 1.0);
            if hunt {
                a.set(b(0), b(0), 3.0);
                a.set(b(0), b(1), -4.0);
                a.set(b(0), b(2), 1.0);
                a.set(b(n + 1), b(n + 1), 3.0);
                a.set(b(n + 1), b(n), -4.0);
                a.set(b(n + 1), b(n - 1), 1.0);
            } else {
                a.set(b(0), b(0), 1.0);
                a.set(b(n + 1), b(n + 1), 1.0);
            }
            for i in 1..=n {
                a.set(u(i), u(i), 2.0 / h2 + mu + shift_u);
                a.add(u(i), u(i - 1), -1.0 / h2);
                a.add(u(i), u(i + 1), -1.0 / h2);
                a.add(u(i), b(i + 1), -ha / (2.0 * h));
                a.add(u(i), b(i - 1), ha / (2.0 * h));
                a.set(b(i), b(i), 2.0 / h2 + mu + shift_b);
                a.add(b(i), b(i - 1), -1.0 / h2);
                a.add(b(i), b(i + 1), -1.0 / h2);
                a.add(b(i), u(i + 1), -ha / (2.0 * h));
                a.add(b(i), u(i - 1), ha / (2.0 * h));
            }
            a.factor()?;
            lus.push(a);
        }
        Ok(ModeSystems { n, lus })
    }

    /// Solve with right-hand sides `fu`, `fb` given on the full node grid.
    fn solve(&self, dst: &mut Dst1, fu: &[f64], fb: &[f64], u: &mut [f64], b: &mut [f64]) {
        let n = self.n;
        let m = n + 2;
        // transform along z: hat[mode][i] for each y node i
        let mut hat_u = vec![0.0; n * m];
        let mut hat_b = vec![0.0; n * m];
        let mut line = vec![0.0; n];
        for i in 0..m {
            for (f, hat) in [(fu, &mut hat_u), (fb, &mut hat_b)] {
                for j in 0..n {
                    line[j] = f[(j + 1) * m + i];
                }
                dst.forward(&mut line);
                for k in 0..n {
                    hat[k * m + i] = line[k];
                }
            }
        }
        let mut x = vec![0.0; 2 * m];
        for k in 0..n {
            for i in 0..m {
                let interior = i >= 1 && i <= n;
                x[2 * i] = if interior { hat_u[k * m + i] } else { 0.0 };
                x[2 * i + 1] = if interior { hat_b[k * m + i] } else { 0.0 };
            }
            self.lus[k].solve(&mut x);
            for i in 0..m {
                hat_u[k * m + i] = x[2 * i];
                hat_b[k * m + i] = x[2 * i + 1];
            }
        }
        u.iter_mut().for_each(|v| *v = 0.0);
        b.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            for (hat, out) in [(&hat_u, &mut *u), (&hat_b, &mut *b)] {
                for k in 0..n {
                    line[k] = hat[k * m + i];
                }
                dst.inverse(&mut line);
                for j in 0..n {
                    out[(j + 1) * m + i] = line[j];
                }
            }
        }
    }
}

/// Steady solution of the reduced equations.
pub fn solve_steady_reduced(ha: f64, bc: OracleBc, n: usize) -> Result<OracleGrid2D> {
    check_resolution(ha, n)?;
    let mut grid = OracleGrid2D::new(n, bc)?;
    match bc {
        OracleBc::Insulating | OracleBc::Hunt => {
            let sys = ModeSystems::build(n, ha, bc == OracleBc::Hunt, 0.0, 0.0)?;
            let m = n + 2;
            let fu = interior_ones(m);
            let fb = vec![0.0; m * m];
            let mut dst = Dst1::new(n);
            let (mut u, mut b) = (vec![0.0; m * m], vec![0.0; m * m]);
            sys.solve(&mut dst, &fu, &fb, &mut u, &mut b);
            grid.u = u;
            grid.b = b;
        }
        OracleBc::Conducting { .. } => {
            let sys = SparseSystem::build(&grid, ha, 0.0, 0.0)?;
            let rhs = sys.rhs(&grid, 1.0, None, 0.0, 0.0);
            let x = sys.solve(&rhs, None)?;
            sys.scatter(&x, &mut grid);
        }
    }
    Ok(grid)
}

fn interior_ones(m: usize) -> Vec<f64> {
    let mut f = vec![0.0; m * m];
    for j in 1..m - 1 {
        for i in 1..m - 1 {
            f[j * m + i] = 1.0;
        }
    }
    f
}

/// Center-point history from rest by backward Euler with step `dt`.
pub fn solve_transient_reduced(
    ha: f64,
    re: f64,
    rm: f64,
    bc: OracleBc,
    n: usize,
    dt: f64,
    t_end: f64,
) -> Result<ProbeHistory> {
    check_resolution(ha, n)?;
    for (name, v) in [("Re", re), ("Rm", rm), ("dt", dt)] {
        if !(v > 0.0) {
            return Err(MhdError::Validation {
                field: name.into(),
                message: format!("{name} must be positive"),
            });
        }
    }
    let mut grid = OracleGrid2D::new(n, bc)?;
    let m = grid.nodes();
    let mut hist = ProbeHistory::new();
    hist.set_meta("source", "reduced oracle");
    hist.set_meta("Ha", ha);
    hist.set_meta("dt", dt);
    hist.set_meta("n", n);
    hist.push(0.0, 0.0, 0.0)?;
    let (su, sb) = (re / dt, rm / dt);
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    enum Solver {
        Modes(ModeSystems, Dst1),
        Sparse(SparseSystem),
    }
    let mut solver = match bc {
        OracleBc::Insulating | OracleBc::Hunt => {
            Solver::Modes(ModeSystems::build(n, ha, bc == OracleBc::Hunt, su, sb)?, Dst1::new(n))
        }
        OracleBc::Conducting { .. } => Solver::Sparse(SparseSystem::build(&grid, ha, su, sb)?),
    };
    let ones = interior_ones(m);
    let mut guess: Option<Vec<f64>> = None;
    for s in 1..=steps {
        let t = s as f64 * dt;
        match &mut solver {
            Solver::Modes(sys, dst) => {
                let fu: Vec<f64> = ones.iter().zip(&grid.u).map(|(o, u)| o * (1.0 + su * u)).collect();
                let fb: Vec<f64> = ones.iter().zip(&grid.b).map(|(o, b)| o * sb * b).collect();
                let (mut u, mut b) = (vec![0.0; m * m], vec![0.0; m * m]);
                sys.solve(dst, &fu, &fb, &mut u, &mut b);
                grid.u = u;
                grid.b = b;
            }
            Solver::Sparse(sys) => {
                let rhs = sys.rhs(&grid, 1.0, Some(&grid), su, sb);
                let x = sys.solve(&rhs, guess.as_deref())?;
                sys.scatter(&x, &mut grid);
                guess = Some(x);
            }
        }
        if grid.max_abs_u() > 1e6 || !grid.u.iter().all(|v| v.is_finite()) {
            return Err(MhdError::Unstable(t));
        }
        let (uc, bc_) = grid.center();
        hist.push(t, uc, bc_)?;
    }
    Ok(hist)
}

/// Insulating-wall history for `Re = Rm` through the two decoupled Elsasser
/// equations `Re z_t - lap z -+ Ha z_y = 1`, recombined as `u = (z+ + z-)/2`,
/// `b = (z+ - z-)/2`.
pub fn solve_transient_elsasser(ha: f64, re: f64, n: usize, dt: f64, t_end: f64) -> Result<ProbeHistory> {
    check_resolution(ha, n)?;
    let h = 2.0 / (n + 1) as f64;
    let m = n + 2;
    let sigma = re / dt;
    let build = |sign: f64| -> Result<Vec<BandLu>> {
        (1..=n)
            .map(|mode| {
                let mu = (2.0 - 2.0 * (std::f64::consts::PI * mode as f64 / (n + 1) as f64).cos()) / (h * h);
                let mut a = BandLu::zeros(n, 1, 1);
                for i in 0..n {
                    a.set(i, i, 2.0 / (h * h) + mu + sigma);
                    if i > 0 {
                        a.set(i, i - 1, -1.0 / (h * h) + sign * ha / (2.0 * h));
                    }
                    if i + 1 < n {
                        a.set(i, i + 1, -1.0 / (h * h) - sign * ha / (2.0 * h));
                    }
                }
                a.factor()?;
                Ok(a)
            })
            .collect()
    };
    let plus = build(1.0)?;
    let minus = build(-1.0)?;
    let mut dst = Dst1::new(n);
    let mut zp = vec![0.0; n * n];
    let mut zm = vec![0.0; n * n];
    let mut hist = ProbeHistory::new();
    hist.push(0.0, 0.0, 0.0)?;
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let c = (n - 1) / 2;
    let center = |z: &[f64]| -> f64 {
        if n % 2 == 1 {
            z[c * n + c]
        } else {
            0.25 * (z[c * n + c] + z[c * n + c + 1] + z[(c + 1) * n + c] + z[(c + 1) * n + c + 1])
        }
    };
    let mut line = vec![0.0; n];
    for s in 1..=steps {
        for (z, lus) in [(&mut zp, &plus), (&mut zm, &minus)] {
            // z stored [j * n + i] over interior nodes
            let mut hat = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    line[j] = 1.0 + sigma * z[j * n + i];
                }
                dst.forward(&mut line);
                for k in 0..n {
                    hat[k * n + i] = line[k];
                }
            }
            for k in 0..n {
                lus[k].solve(&mut hat[k * n..(k + 1) * n]);
            }
            for i in 0..n {
                for k in 0..n {
                    line[k] = hat[k * n + i];
                }
                dst.inverse(&mut line);
                for j in 0..n {
                    z[j * n + i] = line[j];
                }
            }
        }
        let (p, q) = (center(&zp), center(&zm));
        hist.push(s as f64 * dt, 0.5 * (p + q), 0.5 * (p - q))?;
    }
    let _ = m;
    Ok(hist)
}

/// `-lap u0 + Ha^2 u0 = 1` with `u0 = 0` on the boundary, and `b0` recovered
/// from `db0/dy = -Ha u0` as the odd-in-y antiderivative.
pub fn solve_u0_reaction_diffusion(ha: f64, n: usize) -> Result<OracleGrid2D> {
    check_resolution(ha, n)?;
    let mut grid = OracleGrid2D::new(n, OracleBc::Insulating)?;
    let h = grid.h;
    let m = n + 2;
    let lam: Vec<f64> = (1..=n)
        .map(|k| (2.0 - 2.0 * (std::f64::consts::PI * k as f64 / (n + 1) as f64).cos()) / (h * h))
        .collect();
    let mut dst = Dst1::new(n);
    let mut f = vec![1.0; n * n];
    let mut line = vec![0.0; n];
    transform_2d(&mut dst, &mut f, n, &mut line, false);
    for l in 0..n {
        for k in 0..n {
            f[l * n + k] /= lam[k] + lam[l] + ha * ha;
        }
    }
    transform_2d(&mut dst, &mut f, n, &mut line, true);
    for j in 0..n {
        for i in 0..n {
            grid.u[(j + 1) * m + i + 1] = f[j * n + i];
        }
    }
    for j in 0..m {
        let mut acc = vec![0.0; m];
        for i in 1..m {
            acc[i] = acc[i - 1] - ha * 0.5 * h * (grid.u[j * m + i - 1] + grid.u[j * m + i]);
        }
        let half = 0.5 * acc[m - 1];
        for i in 0..m {
            grid.b[j * m + i] = acc[i] - half;
        }
    }
    Ok(grid)
}

fn transform_2d(dst: &mut Dst1, f: &mut [f64], n: usize, line: &mut [f64], inverse: bool) {
    let apply = |dst: &mut Dst1, line: &mut [f64]| {
        if inverse {
            dst.inverse(line)
        } else {
            dst.forward(line)
        }
    };
    for j in 0..n {
        apply(dst, &mut f[j * n..(j + 1) * n]);
    }
    for i in 0..n {
        for j in 0..n {
            line[j] = f[j * n + i];
        }
        apply(dst, line);
        for j in 0..n {
            f[j * n + i] = line[j];
        }
    }
}

/// Max-norm residual of the steady equations at the interior rows.
pub fn steady_residual(grid: &OracleGrid2D, ha: f64) -> f64 {
    let m = grid.nodes();
    let x = &grid.coords;
    let (lo, hi) = grid.fluid;
    let mut worst = 0.0f64;
    for j in 1..m - 1 {
        for i in 1..m - 1 {
            let p = j * m + i;
            let (hw, he, hs, hn) = (x[i] - x[i - 1], x[i + 1] - x[i], x[j] - x[j - 1], x[j + 1] - x[j]);
            let dy = |f: &[f64]| (f[p + 1] - f[p - 1]) / (hw + he);
            let fluid = i > lo && i < hi && j > lo && j < hi;
            if fluid {
                let lap = grid_laplacian(&grid.u, m, p, hw, he, hs, hn, [1.0; 4]);
                worst = worst.max((-lap - ha * dy(&grid.b) - 1.0).abs());
            }
            let k = edge_coefficients(grid, i, j);
            let lap = grid_laplacian(&grid.b, m, p, hw, he, hs, hn, k);
            worst = worst.max((-lap - ha * dy(&grid.u)).abs());
        }
    }
    worst
}

#[allow(clippy::too_many_arguments)]
fn grid_laplacian(f: &[f64], m: usize, p: usize, hw: f64, he: f64, hs: f64, hn: f64, k: [f64; 4]) -> f64 {
    let ay = 0.5 * (hw + he);
    let az = 0.5 * (hs + hn);
    (k[1] * (f[p + 1] - f[p]) / he - k[0] * (f[p] - f[p - 1]) / hw) / ay
        + (k[3] * (f[p + m] - f[p]) / hn - k[2] * (f[p] - f[p - m]) / hs) / az
}

/// Coefficients on the west, east, south and north edges around node `(i, j)`,
/// averaged over the two cells sharing each edge.
fn edge_coefficients(grid: &OracleGrid2D, i: usize, j: usize) -> [f64; 4] {
    let m = grid.nodes();
    let x = &grid.coords;
    let cell = |a: usize, c: usize| grid.r_w[c * (m - 1) + a];
    let (hs, hn) = (x[j] - x[j - 1], x[j + 1] - x[j]);
    let (hw, he) = (x[i] - x[i - 1], x[i + 1] - x[i]);
    let vert = |a: usize| (cell(a, j - 1) * hs + cell(a, j) * hn) / (hs + hn);
    let horiz = |c: usize| (cell(i - 1, c) * hw + cell(i, c) * he) / (hw + he);
    [vert(i - 1), vert(i), horiz(j - 1), horiz(j)]
}

/// Coupled system on a general tensor grid in compressed-row form.
struct SparseSystem {
    /// Node index of each unknown and whether it is magnetic.
    unknowns: Vec<(usize, bool)>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    ilu: Vec<f64>,
    diag_pos: Vec<usize>,
}

impl SparseSystem {
    fn build(grid: &OracleGrid2D, ha: f64, shift_u: f64, shift_b: f64) -> Result<Self> {
        let m = grid.nodes();
        let x = &grid.coords;
        let (lo, hi) = grid.fluid;
        let mut u_id = vec![usize::MAX; m * m];
        let mut b_id = vec![usize::MAX; m * m];
        let mut unknowns = Vec::new();
        for j in 1..m - 1 {
            for i in 1..m - 1 {
                let p = j * m + i;
                if i > lo && i < hi && j > lo && j < hi {
                    u_id[p] = unknowns.len();
                    unknowns.push((p, false));
                }
                b_id[p] = unknowns.len();
                unknowns.push((p, true));
            }
        }
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for &(p, magnetic) in &unknowns {
            let (i, j) = (p % m, p / m);
            let (hw, he, hs, hn) = (x[i] - x[i - 1], x[i + 1] - x[i], x[j] - x[j - 1], x[j + 1] - x[j]);
            let (ay, az) = (0.5 * (hw + he), 0.5 * (hs + hn));
            let k = if magnetic {
                edge_coefficients(grid, i, j)
            } else {
                [1.0; 4]
            };
            let (own, other) = if magnetic { (&b_id, &u_id) } else { (&u_id, &b_id) };
            let shift = if magnetic { shift_b } else { shift_u };
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(7);
            let mut push = |id: usize, v: f64| {
                if id != usize::MAX {
                    row.push((id, v));
                }
            };
            push(
                own[p],
                (k[0] / hw + k[1] / he) / ay + (k[2] / hs + k[3] / hn) / az + shift,
            );
            push(own[p - 1], -k[0] / hw / ay);
            push(own[p + 1], -k[1] / he / ay);
            push(own[p - m], -k[2] / hs / az);
            push(own[p + m], -k[3] / hn / az);
            push(other[p + 1], -ha / (hw + he));
            push(other[p - 1], ha / (hw + he));
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        let mut sys = SparseSystem {
            unknowns,
            row_ptr,
            cols,
            vals,
            ilu: Vec::new(),
            diag_pos: Vec::new(),
        };
        sys.factor_ilu0()?;
        Ok(sys)
    }

    fn factor_ilu0(&mut self) -> Result<()> {
        let n = self.unknowns.len();
        let mut a = self.vals.clone();
        let mut diag_pos = vec![0; n];
        for r in 0..n {
            diag_pos[r] = (self.row_ptr[r]..self.row_ptr[r + 1])
                .find(|&q| self.cols[q] == r)
                .expect("diagonal entry");
        }
        let mut pos = vec![usize::MAX; n];
        for r in 0..n {
            for q in self.row_ptr[r]..self.row_ptr[r + 1] {
                pos[self.cols[q]] = q;
            }
            for q in self.row_ptr[r]..diag_pos[r] {
                let c = self.cols[q];
                let l = a[q] / a[diag_pos[c]];
                a[q] = l;
                for t in diag_pos[c] + 1..self.row_ptr[c + 1] {
                    let cc = self.cols[t];
                    if pos[cc] != usize::MAX {
                        a[pos[cc]] -= l * a[t];
                    }
                }
            }
            if a[diag_pos[r]] == 0.0 {
                return Err(MhdError::NoConvergence {
                    solver: "ILU(0)".into(),
                    iterations: r,
                    residual: 0.0,
                });
            }
            for q in self.row_ptr[r]..self.row_ptr[r + 1] {
                pos[self.cols[q]] = usize::MAX;
            }
        }
        self.ilu = a;
        self.diag_pos = diag_pos;
        Ok(())
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.unknowns.len() {
            y[r] = (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(|q| self.vals[q] * x[self.cols[q]])
                .sum();
        }
    }

    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        let n = self.unknowns.len();
        for i in 0..n {
            let mut s = r[i];
            for q in self.row_ptr[i]..self.diag_pos[i] {
                s -= self.ilu[q] * z[self.cols[q]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for q in self.diag_pos[i] + 1..self.row_ptr[i + 1] {
                s -= self.ilu[q] * z[self.cols[q]];
            }
            z[i] = s / self.ilu[self.diag_pos[i]];
        }
    }

    fn rhs(&self, grid: &OracleGrid2D, forcing: f64, previous: Option<&OracleGrid2D>, su: f64, sb: f64) -> Vec<f64> {
        self.unknowns
            .iter()
            .map(|&(p, magnetic)| {
                let lag = previous.map_or(0.0, |g| if magnetic { sb * g.b[p] } else { su * g.u[p] });
                let _ = grid;
                if magnetic {
                    lag
                } else {
                    forcing + lag
                }
            })
            .collect()
    }

    fn scatter(&self, x: &[f64], grid: &mut OracleGrid2D) {
        grid.u.iter_mut().for_each(|v| *v = 0.0);
        grid.b.iter_mut().for_each(|v| *v = 0.0);
        for (&(p, magnetic), v) in self.unknowns.iter().zip(x) {
            if magnetic {
                grid.b[p] = *v;
            } else {
                grid.u[p] = *v;
            }
        }
    }

    /// Right-preconditioned BiCGStab to a relative residual of 1e-12.
    fn solve(&self, b: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>> {
        let n = b.len();
        let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
        let mut x = guess.map_or_else(|| vec![0.0; n], |g| g.to_vec());
        let mut r = vec![0.0; n];
        self.apply(&x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let bnorm = dot(b, b).sqrt().max(1e-300);
        let target = 1e-12 * bnorm;
        let r0 = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut ph = vec![0.0; n];
        let mut sh = vec![0.0; n];
        let mut t = vec![0.0; n];
        let max_it = 20 * n.max(100);
        let mut res = dot(&r, &r).sqrt();
        for it in 0..max_it {
            if res <= target {
                return Ok(x);
            }
            let rho_new = dot(&r0, &r);
            if rho_new == 0.0 {
                return Err(MhdError::NoConvergence {
                    solver: "oracle BiCGStab".into(),
                    iterations: it,
                    residual: res / bnorm,
                });
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            self.precondition(&p, &mut ph);
            self.apply(&ph, &mut v);
            alpha = rho / dot(&r0, &v);
            let mut s = r.clone();
            s.iter_mut().zip(&v).for_each(|(si, vi)| *si -= alpha * vi);
            if dot(&s, &s).sqrt() <= target {
                x.iter_mut().zip(&ph).for_each(|(xi, pi)| *xi += alpha * pi);
                return Ok(x);
            }
            self.precondition(&s, &mut sh);
            self.apply(&sh, &mut t);
            omega = dot(&t, &s) / dot(&t, &t);
            for i in 0..n {
                x[i] += alpha * ph[i] + omega * sh[i];
                r[i] = s[i] - omega * t[i];
            }
            res = dot(&r, &r).sqrt();
        }
        Err(MhdError::NoConvergence {
            solver: "oracle BiCGStab".into(),
            iterations: max_it,
            residual: res / bnorm,
        })
    }
}

/// Richardson extrapolation `(4 f - c) / 3` on the coarse nodes; requires
/// `fine.n + 1 == 2 (coarse.n + 1)` on wall-free grids.
pub fn richardson(coarse: &OracleGrid2D, fine: &OracleGrid2D) -> Result<OracleGrid2D> {
    if !coarse.is_uniform() || !fine.is_uniform() || fine.n + 1 != 2 * (coarse.n + 1) {
        return Err(MhdError::InvalidExtent(format!(
            "Richardson needs nested wall-free grids (n = {} and {})",
            coarse.n, fine.n
        )));
    }
    let mc = coarse.nodes();
    let mf = fine.nodes();
    let mut out = coarse.clone();
    for j in 0..mc {
        for i in 0..mc {
            let pf = 2 * j * mf + 2 * i;
            out.u[j * mc + i] = (4.0 * fine.u[pf] - coarse.u[j * mc + i]) / 3.0;
            out.b[j * mc + i] = (4.0 * fine.b[pf] - coarse.b[j * mc + i]) / 3.0;
        }
    }
    Ok(out)
}

/// Richardson-extrapolated steady reference with its error bar
/// `max |u_{h/2} - u_h| / 3`.
#[derive(Debug, Clone)]
pub struct OracleReference {
    pub grid: OracleGrid2D,
    pub error_bar_u: f64,
    pub error_bar_b: f64,
}

pub fn reference_steady(ha: f64, bc: OracleBc, n_coarse: usize) -> Result<OracleReference> {
    let coarse = solve_steady_reduced(ha, bc, n_coarse)?;
    let fine = solve_steady_reduced(ha, bc, 2 * n_coarse + 1)?;
    let grid = richardson(&coarse, &fine)?;
    let mc = coarse.nodes();
    let mf = fine.nodes();
    let (mut eu, mut eb) = (0.0f64, 0.0f64);
    for j in 0..mc {
        for i in 0..mc {
            let pf = 2 * j * mf + 2 * i;
            eu = eu.max((fine.u[pf] - coarse.u[j * mc + i]).abs() / 3.0);
            eb = eb.max((fine.b[pf] - coarse.b[j * mc + i]).abs() / 3.0);
        }
    }
    Ok(OracleReference {
        grid,
        error_bar_u: eu,
        error_bar_b: eb,
    })
}

/// Observed order from three values at spacings `h`, `h/2`, `h/4`.
pub fn observed_order(f_h: f64, f_h2: f64, f_h4: f64) -> f64 {
    ((f_h - f_h2) / (f_h2 - f_h4)).abs().log2()
}

/// Center value of `-lap u = 1` on `[-1, 1]^2` with `u = 0` on the boundary, by
/// the double sine series truncated at `terms` odd modes per direction.
pub fn duct_poisson_center(terms: usize) -> f64 {
    let pi4 = std::f64::consts::PI.powi(4);
    let mut s = 0.0;
    for a in 0..terms {
        let k = (2 * a + 1) as f64;
        for c in 0..terms {
            let l = (2 * c + 1) as f64;
            let sign = if (a + c) % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * 64.0 / (pi4 * k * l * (k * k + l * l));
        }
    }
    s
}
