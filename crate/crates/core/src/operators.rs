//! Matrix-free SEM operators.
//!
//! Every kernel works element by element and returns an element-local
//! result. Assembly (gather-scatter) and masking are left to the caller.

use crate::error::Result;
use crate::field::{CoefficientField, VectorField};
use crate::gll::DealiasRule;
use crate::mesh::{gather_scatter, gather_scatter_average, geometric_factors, BoxMesh, Face, GeomFactors};
use crate::tensor::{add_flops, contract, transpose};

#[derive(Debug, Clone)]
pub struct Operators {
    pub mesh: BoxMesh,
    pub geom: GeomFactors,
    pub dealias: DealiasRule,
    /// Assembled mass over all elements.
    pub mass_all: Vec<f64>,
    /// Assembled mass over fluid elements only (zero at points outside the fluid).
    pub mass_fluid: Vec<f64>,
    pub fluid: Vec<bool>,
    pub all: Vec<bool>,
    /// `2 / h_a` per element.
    scale: Vec<[f64; 3]>,
    d: Vec<f64>,
    dt: Vec<f64>,
    fine_weights: Vec<f64>,
    /// Interpolated derivative `J D` onto the fine grid.
    jd: Vec<f64>,
}

impl Operators {
    pub fn new(mesh: BoxMesh) -> Result<Self> {
        let geom = geometric_factors(&mesh)?;
        let dealias = DealiasRule::new(&mesh.basis)?;
        let n1 = mesh.n1();
        let d = mesh.basis.diff_matrix.clone();
        let dt = transpose(&d, n1, n1);
        let m = dealias.count();
        let mut fine_weights = Vec::with_capacity(m * m * m);
        for k in 0..m {
            for j in 0..m {
                for i in 0..m {
                    fine_weights.push(dealias.weights[i] * dealias.weights[j] * dealias.weights[k]);
                }
            }
        }
        let scale = (0..mesh.n_elements())
            .map(|e| mesh.bounds(e).map(|b| 2.0 / (b[1] - b[0])))
            .collect();
        let jm = &dealias.interp.matrix;
        let mut jd = vec![0.0; m * n1];
        for r in 0..m {
            for c in 0..n1 {
                jd[r * n1 + c] = (0..n1).map(|l| jm[r * n1 + l] * d[l * n1 + c]).sum();
            }
        }
        let fluid = mesh.fluid_flags();
        let all = vec![true; mesh.n_elements()];
        let mut ops = Operators {
            mesh,
            geom,
            dealias,
            mass_all: Vec::new(),
            mass_fluid: Vec::new(),
            fluid,
            all,
            scale,
            d,
            dt,
            fine_weights,
            jd,
        };
        ops.mass_all = ops.assembled_mass(&ops.all.clone());
        ops.mass_fluid = ops.assembled_mass(&ops.fluid.clone());
        Ok(ops)
    }

    pub fn n_local(&self) -> usize {
        self.mesh.n_local()
    }

    fn ppe(&self) -> usize {
        self.mesh.points_per_element()
    }

    pub fn gs(&self, v: &mut [f64]) {
        gather_scatter(&self.mesh, v);
    }

    pub fn gs_average(&self, v: &mut [f64]) {
        gather_scatter_average(&self.mesh, v);
    }

    /// Diagonal mass assembled over the elements flagged in `active`.
    pub fn assembled_mass(&self, active: &[bool]) -> Vec<f64> {
        let ppe = self.ppe();
        let mut m = self.geom.mass_weight.clone();
        for (e, a) in active.iter().enumerate() {
            if !a {
                m[e * ppe..(e + 1) * ppe].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        self.gs(&mut m);
        m
    }

    pub fn mass_for(&self, active: &[bool]) -> &[f64] {
        if active.iter().all(|&a| a) {
            &self.mass_all
        } else {
            &self.mass_fluid
        }
    }

    /// Local stiffness action `A(coeff) u` on the active elements.
    pub fn stiffness_apply(&self, u: &[f64], coeff: &CoefficientField, active: &[bool]) -> Vec<f64> {
        let n1 = self.mesh.n1();
        let ppe = self.ppe();
        let dims = [n1; 3];
        let mut out = vec![0.0; u.len()];
        let mut ur = vec![0.0; ppe];
        let mut us = vec![0.0; ppe];
        let mut ut = vec![0.0; ppe];
        let mut tmp = vec![0.0; ppe];
        for e in 0..self.mesh.n_elements() {
            if !active[e] {
                continue;
            }
            let ue = &u[e * ppe..(e + 1) * ppe];
            let c = coeff.values[e];
            contract(&self.d, n1, ue, dims, 0, &mut ur);
            contract(&self.d, n1, ue, dims, 1, &mut us);
            contract(&self.d, n1, ue, dims, 2, &mut ut);
            let g = &self.geom.metric[e * ppe..(e + 1) * ppe];
            for p in 0..ppe {
                ur[p] *= c * g[p][0];
                us[p] *= c * g[p][1];
                ut[p] *= c * g[p][2];
            }
            add_flops(3 * 2 * ppe as u64);
            let oe = &mut out[e * ppe..(e + 1) * ppe];
            contract(&self.dt, n1, &ur, dims, 0, oe);
            contract(&self.dt, n1, &us, dims, 1, &mut tmp);
            oe.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
            contract(&self.dt, n1, &ut, dims, 2, &mut tmp);
            oe.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
            add_flops(2 * ppe as u64);
        }
        out
    }

    /// Local `B u` (unassembled diagonal mass weights).
    pub fn mass_apply(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.geom.mass_weight).map(|(a, b)| a * b).collect()
    }

    /// Divide an assembled field by the assembled mass over all elements.
    pub fn mass_solve(&self, u: &[f64]) -> Vec<f64> {
        self.mass_solve_on(u, &self.all)
    }

    pub fn mass_solve_on(&self, u: &[f64], active: &[bool]) -> Vec<f64> {
        let m = self.mass_for(active);
        u.iter()
            .zip(m)
            .map(|(a, b)| if *b > 0.0 { a / b } else { 0.0 })
            .collect()
    }

    /// Collocated reference derivatives scaled to physical ones for element `e`.
    fn element_gradient(&self, e: usize, ue: &[f64], g: &mut [Vec<f64>; 3]) {
        let n1 = self.mesh.n1();
        let s = self.scale[e];
        for a in 0..3 {
            contract(&self.d, n1, ue, [n1; 3], a, &mut g[a]);
            g[a].iter_mut().for_each(|v| *v *= s[a]);
        }
    }

    /// Collocated gradient, element-local (discontinuous across faces).
    pub fn gradient_local(&self, p: &[f64]) -> VectorField {
        let ppe = self.ppe();
        let mut out = VectorField::zeros(p.len());
        let mut g = [vec![0.0; ppe], vec![0.0; ppe], vec![0.0; ppe]];
        for e in 0..self.mesh.n_elements() {
            self.element_gradient(e, &p[e * ppe..(e + 1) * ppe], &mut g);
            for (a, ga) in g.iter().enumerate() {
                out.comp_mut(a)[e * ppe..(e + 1) * ppe].copy_from_slice(ga);
            }
        }
        out
    }

    /// Local weak gradient `B (grad p)` on the active elements.
    pub fn weak_gradient(&self, p: &[f64], active: &[bool]) -> VectorField {
        let ppe = self.ppe();
        let mut out = self.gradient_local(p);
        for a in 0..3 {
            let c = out.comp_mut(a);
            for e in 0..self.mesh.n_elements() {
                for l in e * ppe..(e + 1) * ppe {
                    c[l] = if active[e] {
                        c[l] * self.geom.mass_weight[l]
                    } else {
                        0.0
                    };
                }
            }
        }
        out
    }

    /// Local weak divergence `-sum_a D_a^T B u_a`, the exact negative transpose of
    /// [`Operators::weak_gradient`].
    pub fn weak_divergence(&self, u: &VectorField, active: &[bool]) -> Vec<f64> {
        let n1 = self.mesh.n1();
        let ppe = self.ppe();
        let mut out = vec![0.0; u.len()];
        let mut w = vec![0.0; ppe];
        let mut tmp = vec![0.0; ppe];
        for e in 0..self.mesh.n_elements() {
            if !active[e] {
                continue;
            }
            let s = self.scale[e];
            let bm = &self.geom.mass_weight[e * ppe..(e + 1) * ppe];
            let oe = &mut out[e * ppe..(e + 1) * ppe];
            for a in 0..3 {
                let ua = &u.comp(a)[e * ppe..(e + 1) * ppe];
                for p in 0..ppe {
                    w[p] = -s[a] * bm[p] * ua[p];
                }
                contract(&self.dt, n1, &w, [n1; 3], a, &mut tmp);
                oe.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
            }
        }
        out
    }

    /// Collocated curl, averaged across element interfaces so the result is continuous.
    pub fn curl(&self, u: &VectorField) -> VectorField {
        self.curl_on(u, &self.all)
    }

    /// Collocated curl on the active elements, averaged over the active copies of
    /// each point; zero at points touched by no active element.
    pub fn curl_on(&self, u: &VectorField, active: &[bool]) -> VectorField {
        let ppe = self.ppe();
        let n = u.len();
        let mut out = VectorField::zeros(n);
        let mut dv: [[Vec<f64>; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| vec![0.0; ppe]));
        let mut count = vec![0.0; n];
        for e in 0..self.mesh.n_elements() {
            if !active[e] {
                continue;
            }
            for (c, dc) in dv.iter_mut().enumerate() {
                self.element_gradient(e, &u.comp(c)[e * ppe..(e + 1) * ppe], dc);
            }
            for p in 0..ppe {
                let l = e * ppe + p;
                out.x[l] = dv[2][1][p] - dv[1][2][p];
                out.y[l] = dv[0][2][p] - dv[2][0][p];
                out.z[l] = dv[1][0][p] - dv[0][1][p];
                count[l] = 1.0;
            }
        }
        self.gs(&mut count);
        for c in 0..3 {
            let v = out.comp_mut(c);
            self.gs(v);
            for (x, m) in v.iter_mut().zip(&count) {
                if *m > 0.0 {
                    *x /= m;
                }
            }
        }
        out
    }

    /// Local convective form `C(z) w` for each component of `w` on the active elements.
    /// With `dealias` the trilinear integrand is evaluated on the 3/2-rule Gauss grid.
    pub fn advect(&self, z: &VectorField, w: &VectorField, dealias: bool, active: &[bool]) -> VectorField {
        let n1 = self.mesh.n1();
        let ppe = self.ppe();
        let m = self.dealias.count();
        let jm = &self.dealias.interp.matrix;
        let jt = &self.dealias.interp_t;
        let mut out = VectorField::zeros(w.len());
        let mut g = [vec![0.0; ppe], vec![0.0; ppe], vec![0.0; ppe]];
        let m3 = m * m * m;
        let mut zf = [vec![0.0; m3], vec![0.0; m3], vec![0.0; m3]];
        let mut gf = [vec![0.0; m3], vec![0.0; m3], vec![0.0; m3]];
        let mut conv = vec![0.0; m3];
        let mut a0 = vec![0.0; m * n1 * n1];
        let mut ad = vec![0.0; m * n1 * n1];
        let mut t1 = vec![0.0; m * m * n1.max(m)];
        let mut t2 = vec![0.0; m3.max(n1 * m * m)];
        for e in 0..self.mesh.n_elements() {
            if !active[e] {
                continue;
            }
            let range = e * ppe..(e + 1) * ppe;
            let jac = self.geom.jacobian[e * ppe];
            if dealias {
                let s = self.scale[e];
                for a in 0..3 {
                    fine_interp(jm, m, n1, &z.comp(a)[range.clone()], &mut t1, &mut t2, &mut zf[a]);
                }
                for c in 0..3 {
                    let we = &w.comp(c)[range.clone()];
                    contract(jm, m, we, [n1; 3], 0, &mut a0);
                    contract(&self.jd, m, we, [n1; 3], 0, &mut ad);
                    contract(jm, m, &ad, [m, n1, n1], 1, &mut t1[..m * m * n1]);
                    contract(jm, m, &t1[..m * m * n1], [m, m, n1], 2, &mut gf[0]);
                    contract(&self.jd, m, &a0, [m, n1, n1], 1, &mut t1[..m * m * n1]);
                    contract(jm, m, &t1[..m * m * n1], [m, m, n1], 2, &mut gf[1]);
                    contract(jm, m, &a0, [m, n1, n1], 1, &mut t1[..m * m * n1]);
                    contract(&self.jd, m, &t1[..m * m * n1], [m, m, n1], 2, &mut gf[2]);
                    for q in 0..m * m * m {
                        conv[q] =
                            (s[0] * zf[0][q] * gf[0][q] + s[1] * zf[1][q] * gf[1][q] + s[2] * zf[2][q] * gf[2][q])
                                * self.fine_weights[q]
                                * jac;
                    }
                    add_flops(10 * (m * m * m) as u64);
                    contract(jt, n1, &conv, [m, m, m], 0, &mut t2[..n1 * m * m]);
                    contract(jt, n1, &t2[..n1 * m * m], [n1, m, m], 1, &mut t1[..n1 * n1 * m]);
                    contract(
                        jt,
                        n1,
                        &t1[..n1 * n1 * m],
                        [n1, n1, m],
                        2,
                        &mut out.comp_mut(c)[range.clone()],
                    );
                }
            } else {
                let bm = &self.geom.mass_weight[range.clone()];
                for c in 0..3 {
                    self.element_gradient(e, &w.comp(c)[range.clone()], &mut g);
                    let oc = &mut out.comp_mut(c)[range.clone()];
                    for p in 0..ppe {
                        let l = e * ppe + p;
                        oc[p] = bm[p] * (z.x[l] * g[0][p] + z.y[l] * g[1][p] + z.z[l] * g[2][p]);
                    }
                }
            }
        }
        out
    }

    /// Assembled diagonal of `c1 A(coeff) + c0 B` over the active elements.
    pub fn jacobi_diagonal(&self, c1: f64, c0: f64, coeff: &CoefficientField, active: &[bool]) -> Vec<f64> {
        let n1 = self.mesh.n1();
        let ppe = self.ppe();
        let mut diag = vec![0.0; self.n_local()];
        for e in 0..self.mesh.n_elements() {
            if !active[e] {
                continue;
            }
            let g = &self.geom.metric[e * ppe..(e + 1) * ppe];
            let bm = &self.geom.mass_weight[e * ppe..(e + 1) * ppe];
            let c = coeff.values[e] * c1;
            let idx = |i: usize, j: usize, k: usize| i + n1 * (j + n1 * k);
            for k in 0..n1 {
                for j in 0..n1 {
                    for i in 0..n1 {
                        let mut s = 0.0;
                        for l in 0..n1 {
                            let dl_i = self.d[l * n1 + i];
                            let dl_j = self.d[l * n1 + j];
                            let dl_k = self.d[l * n1 + k];
                            s += g[idx(l, j, k)][0] * dl_i * dl_i
                                + g[idx(i, l, k)][1] * dl_j * dl_j
                                + g[idx(i, j, l)][2] * dl_k * dl_k;
                        }
                        let p = idx(i, j, k);
                        diag[e * ppe + p] = c * s + c0 * bm[p];
                    }
                }
            }
        }
        self.gs(&mut diag);
        diag
    }

    /// Local boundary integral `int_face phi_i f(l, n) dS` over the given faces.
    pub fn face_integral(&self, faces: &[(usize, Face)], f: impl Fn(usize, [f64; 3]) -> f64) -> Vec<f64> {
        let rho = &self.mesh.basis.weights;
        let mut out = vec![0.0; self.n_local()];
        for &(e, face) in faces {
            let a = face.axis();
            let b = self.mesh.bounds(e);
            let mut normal = [0.0; 3];
            normal[a] = face.sign();
            let (t1, t2) = match a {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let area = 0.25 * (b[t1][1] - b[t1][0]) * (b[t2][1] - b[t2][0]);
            for (i, j, k) in self.mesh.face_points(face) {
                let ijk = [i, j, k];
                let l = self.mesh.local_index(e, i, j, k);
                out[l] += rho[ijk[t1]] * rho[ijk[t2]] * area * f(l, normal);
            }
        }
        out
    }
}

/// Euclidean sum over global points of a pair of continuous local fields.
/// `J` applied along all three axes of an `n^3` array into `out` (`m^3`).
fn fine_interp(jm: &[f64], m: usize, n: usize, input: &[f64], t1: &mut [f64], t2: &mut [f64], out: &mut [f64]) {
    contract(jm, m, input, [n; 3], 0, &mut t1[..m * n * n]);
    contract(jm, m, &t1[..m * n * n], [m, n, n], 1, &mut t2[..m * m * n]);
    contract(jm, m, &t2[..m * m * n], [m, m, n], 2, out);
}

pub fn global_dot(mesh: &BoxMesh, a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(&mesh.multiplicity)
        .map(|((x, y), m)| x * y / m)
        .sum()
}
