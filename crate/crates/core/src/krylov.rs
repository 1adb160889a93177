//! Jacobi-preconditioned conjugate gradients on element-local storage.
//!
//! Vectors are kept in element-local layout with coincident points carrying
//! equal values. Inner products weight each local point by its inverse
//! multiplicity so they equal the sums over distinct global points.

use crate::error::{MhdError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NullSpace {
    None,
    Constants,
}

/// Description of one symmetric positive (semi)definite solve.
pub struct LinearSystemSpec<'a> {
    pub name: &'a str,
    /// `y = A x`, already gathered and masked.
    pub operator: &'a dyn Fn(&[f64], &mut [f64]),
    /// Assembled diagonal of `A`; entries at masked points are ignored.
    pub preconditioner: &'a [f64],
    /// 1 on free points, 0 on fixed points.
    pub mask: &'a [f64],
    /// Inverse multiplicity of each local point.
    pub inv_multiplicity: &'a [f64],
    /// Assembled mass of the field's domain, used for the B^-1 norm and mean projection.
    pub mass: &'a [f64],
    pub rel_tolerance: f64,
    pub abs_tolerance: f64,
    pub max_iterations: usize,
    pub null_space: NullSpace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub final_residual: f64,
    pub rhs_norm: f64,
}

impl LinearSystemSpec<'_> {
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(self.inv_multiplicity)
            .map(|((x, y), w)| x * y * w)
            .sum()
    }

    /// `sqrt(r^T B^-1 r)` over the free points.
    pub fn residual_norm(&self, r: &[f64]) -> f64 {
        r.iter()
            .zip(self.mass)
            .zip(self.inv_multiplicity)
            .zip(self.mask)
            .filter(|(((_, m), _), k)| **m > 0.0 && **k > 0.0)
            .map(|(((v, m), w), _)| v * v * w / m)
            .sum::<f64>()
            .sqrt()
    }

    /// Remove the constant component of an assembled (dual) vector.
    fn project_dual(&self, r: &mut [f64]) {
        let sum_r = self.dot(r, self.mask);
        let sum_b = self.dot(self.mass, self.mask);
        if sum_b > 0.0 {
            let c = sum_r / sum_b;
            for ((v, m), k) in r.iter_mut().zip(self.mass).zip(self.mask) {
                *v -= c * m * k;
            }
        }
    }
}

/// Subtract the mass-weighted mean over points where `mass > 0`.
pub fn project_mean_zero(field: &mut [f64], mass: &[f64], inv_multiplicity: &[f64]) {
    let (mut num, mut den) = (0.0, 0.0);
    for ((v, m), w) in field.iter().zip(mass).zip(inv_multiplicity) {
        num += v * m * w;
        den += m * w;
    }
    if den > 0.0 {
        let mean = num / den;
        for (v, m) in field.iter_mut().zip(mass) {
            if *m > 0.0 {
                *v -= mean;
            }
        }
    }
}

/// Solve `A x = rhs` starting from `initial_guess`.
pub fn pcg_solve(spec: &LinearSystemSpec, rhs: &[f64], initial_guess: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
    pcg_solve_monitored(spec, rhs, initial_guess, &mut |_, _| {})
}

/// As [`pcg_solve`], calling `monitor(k, x_k)` after every iterate update.
pub fn pcg_solve_monitored(
    spec: &LinearSystemSpec,
    rhs: &[f64],
    initial_guess: &[f64],
    monitor: &mut dyn FnMut(usize, &[f64]),
) -> Result<(Vec<f64>, SolveStats)> {
    let n = rhs.len();
    let mut b: Vec<f64> = rhs.iter().zip(spec.mask).map(|(v, m)| v * m).collect();
    if spec.null_space == NullSpace::Constants {
        spec.project_dual(&mut b);
    }
    let rhs_norm = spec.residual_norm(&b);
    let target = (spec.rel_tolerance * rhs_norm).max(spec.abs_tolerance);

    let mut x: Vec<f64> = initial_guess.iter().zip(spec.mask).map(|(v, m)| v * m).collect();
    let mut w = vec![0.0; n];
    let mut r = b.clone();
    if x.iter().any(|&v| v != 0.0) {
        (spec.operator)(&x, &mut w);
        for ((ri, bi), wi) in r.iter_mut().zip(&b).zip(&w) {
            *ri = bi - wi;
        }
        if spec.null_space == NullSpace::Constants {
            spec.project_dual(&mut r);
        }
    }
    let inv_diag: Vec<f64> = spec
        .preconditioner
        .iter()
        .zip(spec.mask)
        .map(|(d, m)| if *m > 0.0 && *d > 0.0 { 1.0 / d } else { 0.0 })
        .collect();

    let mut res = spec.residual_norm(&r);
    let mut iterations = 0;
    if res > target {
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
        let mut p = z.clone();
        let mut rz = spec.dot(&r, &z);
        loop {
            if iterations >= spec.max_iterations {
                return Err(MhdError::NoConvergence {
                    solver: spec.name.to_string(),
                    iterations,
                    residual: res,
                });
            }
            (spec.operator)(&p, &mut w);
            let pap = spec.dot(&p, &w);
            if !(pap > 0.0) {
                return Err(MhdError::IndefiniteOperator(spec.name.to_string(), pap));
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * w[i];
            }
            iterations += 1;
            monitor(iterations, &x);
            if spec.null_space == NullSpace::Constants && iterations % 50 == 0 {
                spec.project_dual(&mut r);
            }
            res = spec.residual_norm(&r);
            if res <= target {
                break;
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = spec.dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
    if spec.null_space == NullSpace::Constants {
        let masked_mass: Vec<f64> = spec.mass.iter().zip(spec.mask).map(|(m, k)| m * k).collect();
        project_mean_zero(&mut x, &masked_mass, spec.inv_multiplicity);
    }
    Ok((
        x,
        SolveStats {
            iterations,
            final_residual: res,
            rhs_norm,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::CaseKind;
    use crate::field::CoefficientField;
    use crate::mesh::{boundary_masks, build_box_mesh};
    use crate::operators::Operators;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rand_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = StdRng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-0.5..0.5)).collect()
    }

    struct Setup {
        o: Operators,
        mask: Vec<f64>,
        inv_mult: Vec<f64>,
    }

    fn setup(counts: [usize; 3], n: usize, dirichlet: bool) -> Setup {
        let o = Operators::new(build_box_mesh(counts, 4.0, 0.0, n, 1).unwrap()).unwrap();
        let masks = boundary_masks(&o.mesh, CaseKind::Shercliff).unwrap();
        let mask = if dirichlet {
            masks.velocity[0].local_mask(&o.mesh)
        } else {
            masks.pressure.local_mask(&o.mesh)
        };
        let inv_mult = o.mesh.multiplicity.iter().map(|m| 1.0 / m).collect();
        Setup { o, mask, inv_mult }
    }

    fn helmholtz<'a>(s: &'a Setup, c1: f64, c0: f64, coeff: &'a CoefficientField) -> impl Fn(&[f64], &mut [f64]) + 'a {
        move |x: &[f64], y: &mut [f64]| {
            let ax = s.o.stiffness_apply(x, coeff, &s.o.all);
            for (i, v) in y.iter_mut().enumerate() {
                *v = c1 * ax[i] + c0 * s.o.geom.mass_weight[i] * x[i];
            }
            s.o.gs(y);
            y.iter_mut().zip(&s.mask).for_each(|(v, m)| *v *= m);
        }
    }

    fn spec<'a>(
        s: &'a Setup,
        op: &'a dyn Fn(&[f64], &mut [f64]),
        diag: &'a [f64],
        null: NullSpace,
        rel: f64,
    ) -> LinearSystemSpec<'a> {
        LinearSystemSpec {
            name: "test",
            operator: op,
            preconditioner: diag,
            mask: &s.mask,
            inv_multiplicity: &s.inv_mult,
            mass: &s.o.mass_all,
            rel_tolerance: rel,
            abs_tolerance: 1e-14,
            max_iterations: 2000,
            null_space: null,
        }
    }

    #[test]
    fn zero_rhs_zero_iterations() {
        let s = setup([1, 2, 2], 3, true);
        let coeff = CoefficientField::uniform(s.o.mesh.n_elements(), 1.0);
        let op = helmholtz(&s, 1.0, 1.0, &coeff);
        let diag = s.o.jacobi_diagonal(1.0, 1.0, &coeff, &s.o.all);
        let sp = spec(&s, &op, &diag, NullSpace::None, 1e-10);
        let zero = vec![0.0; s.o.n_local()];
        let (x, st) = pcg_solve(&sp, &zero, &zero).unwrap();
        assert_eq!(st.iterations, 0);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mass_operator_one_iteration() {
        let s = setup([1, 2, 2], 4, true);
        let coeff = CoefficientField::uniform(s.o.mesh.n_elements(), 1.0);
        let op = helmholtz(&s, 0.0, 1.0, &coeff);
        let diag = s.o.jacobi_diagonal(0.0, 1.0, &coeff, &s.o.all);
        let sp = spec(&s, &op, &diag, NullSpace::None, 1e-12);
        let mut b = rand_vec(s.o.n_local(), 1);
        s.o.gs_average(&mut b);
        let (_, st) = pcg_solve(&sp, &b, &vec![0.0; b.len()]).unwrap();
        assert_eq!(st.iterations, 1);
    }

    #[test]
    fn helmholtz_converges_to_manufactured_solution_and_is_guess_invariant() {
        let s = setup([2, 3, 3], 4, true);
        let coeff = CoefficientField::uniform(s.o.mesh.n_elements(), 1.0);
        let op = helmholtz(&s, 0.05, 1.5, &coeff);
        let diag = s.o.jacobi_diagonal(0.05, 1.5, &coeff, &s.o.all);
        let sp = spec(&s, &op, &diag, NullSpace::None, 1e-12);
        let mut xs = rand_vec(s.o.n_local(), 4);
        s.o.gs_average(&mut xs);
        xs.iter_mut().zip(&s.mask).for_each(|(v, m)| *v *= m);
        let mut b = vec![0.0; xs.len()];
        op(&xs, &mut b);
        let zero = vec![0.0; b.len()];
        let (x0, _) = pcg_solve(&sp, &b, &zero).unwrap();
        let mut g = rand_vec(s.o.n_local(), 9);
        s.o.gs_average(&mut g);
        let (x1, _) = pcg_solve(&sp, &b, &g).unwrap();
        for i in 0..xs.len() {
            assert!((x0[i] - xs[i]).abs() < 1e-9);
            assert!((x0[i] - x1[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn energy_norm_error_nonincreasing() {
        let s = setup([1, 3, 3], 5, true);
        let coeff = CoefficientField::uniform(s.o.mesh.n_elements(), 1.0);
        let op = helmholtz(&s, 1.0, 0.1, &coeff);
        let diag = s.o.jacobi_diagonal(1.0, 0.1, &coeff, &s.o.all);
        let sp = spec(&s, &op, &diag, NullSpace::None, 1e-12);
        let mut xs = rand_vec(s.o.n_local(), 5);
        s.o.gs_average(&mut xs);
        xs.iter_mut().zip(&s.mask).for_each(|(v, m)| *v *= m);
        let mut b = vec![0.0; xs.len()];
        op(&xs, &mut b);
        let mut errs = Vec::new();
        let mut ae = vec![0.0; xs.len()];
        pcg_solve_monitored(&sp, &b, &vec![0.0; b.len()], &mut |_, x| {
            let e: Vec<f64> = x.iter().zip(&xs).map(|(a, b)| a - b).collect();
            op(&e, &mut ae);
            errs.push(sp.dot(&e, &ae));
        })
        .unwrap();
        assert!(errs.len() > 3);
        for w in errs.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
        }
    }

    #[test]
    fn neumann_poisson_null_space_hygiene() {
        let s = setup([2, 2, 2], 4, false);
        let coeff = CoefficientField::uniform(s.o.mesh.n_elements(), 1.0);
        let op = helmholtz(&s, 1.0, 0.0, &coeff);
        let diag = s.o.jacobi_diagonal(1.0, 0.0, &coeff, &s.o.all);
        let sp = spec(&s, &op, &diag, NullSpace::Constants, 1e-10);
        let mut b = rand_vec(s.o.n_local(), 21);
        s.o.gs_average(&mut b);
        let (x, st) = pcg_solve(&sp, &b, &vec![0.0; b.len()]).unwrap();
        assert!(st.iterations > 0);
        let mean = sp.dot(&x, &s.o.mass_all) / sp.dot(&s.o.mass_all, &vec![1.0; x.len()]);
        assert!(mean.abs() < 1e-12);
        let mut ax = vec![0.0; x.len()];
        op(&x, &mut ax);
        let mut bp = b.clone();
        sp.project_dual(&mut bp);
        let r: Vec<f64> = bp.iter().zip(&ax).map(|(a, c)| a - c).collect();
        let ones = vec![1.0; x.len()];
        assert!(sp.dot(&r, &ones).abs() < 1e-10);
    }

    #[test]
    fn small_dt_helmholtz_iteration_count() {
        let s = setup([4, 10, 10], 6, true);
        let coeff = CoefficientField::uniform(s.o.mesh.n_elements(), 1.0);
        let (c1, c0) = (1e-3, 1.5);
        let op = helmholtz(&s, c1, c0, &coeff);
        let diag = s.o.jacobi_diagonal(c1, c0, &coeff, &s.o.all);
        let sp = spec(&s, &op, &diag, NullSpace::None, 1e-10);
        // right-hand side shaped like the stepper's: assembled B times a random nodal field
        let mut v = rand_vec(s.o.n_local(), 77);
        s.o.gs_average(&mut v);
        let mut b = s.o.mass_apply(&v);
        s.o.gs(&mut b);
        let (_, st) = pcg_solve(&sp, &b, &vec![0.0; b.len()]).unwrap();
        assert!(st.iterations <= 45, "{} iterations", st.iterations);
    }

    #[test]
    fn indefinite_operator_detected() {
        let s = setup([1, 2, 2], 2, true);
        let neg = |x: &[f64], y: &mut [f64]| {
            for (a, b) in y.iter_mut().zip(x) {
                *a = -b;
            }
        };
        let diag = vec![1.0; s.o.n_local()];
        let sp = spec(&s, &neg, &diag, NullSpace::None, 1e-10);
        let b = s.mask.clone();
        assert!(matches!(
            pcg_solve(&sp, &b, &vec![0.0; b.len()]),
            Err(MhdError::IndefiniteOperator(..))
        ));
    }

    #[test]
    fn mean_projection_properties() {
        let s = setup([1, 2, 2], 3, false);
        let mut c = vec![3.7; s.o.n_local()];
        project_mean_zero(&mut c, &s.o.mass_all, &s.inv_mult);
        assert!(c.iter().all(|v| v.abs() < 1e-13));
        let mut r = rand_vec(s.o.n_local(), 2);
        s.o.gs_average(&mut r);
        project_mean_zero(&mut r, &s.o.mass_all, &s.inv_mult);
        let once = r.clone();
        project_mean_zero(&mut r, &s.o.mass_all, &s.inv_mult);
        for (a, b) in once.iter().zip(&r) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
