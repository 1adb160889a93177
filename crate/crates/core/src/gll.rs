//! One-dimensional Gauss-Lobatto-Legendre nodal machinery.
//!
//! Everything the tensor-product kernels need on the reference interval
//! `[-1, 1]`: GLL nodes and weights, the Lagrange differentiation matrix,
//! Gauss-Legendre points for over-integration, and interpolation matrices
//! between the two point sets.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{MhdError, Result};

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// Legendre polynomial values `(P_n(x), P_{n-1}(x))` by the three-term recurrence.
pub fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        p_prev = p;
        p = p_next;
    }
    (p, p_prev)
}

/// `P_n(x)` and `P_n'(x)`; the derivative uses the recurrence that is valid for |x| < 1.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (p, p_prev) = legendre_pair(n, x);
    let dp = n as f64 * (p_prev - x * p) / (1.0 - x * x);
    (p, dp)
}

/// GLL nodes and weights of order `n` (`n + 1` points).
pub fn gll_nodes_weights(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n < 1 {
        return Err(MhdError::InvalidOrder(n));
    }
    let np = n + 1;
    let nf = n as f64;
    let mut nodes = vec![0.0; np];
    nodes[0] = -1.0;
    nodes[n] = 1.0;
    for (j, node) in nodes.iter_mut().enumerate().take(n).skip(1) {
        // Chebyshev-Gauss-Lobatto start, then Newton on (1 - x^2) P_n'(x).
        let mut x = -(std::f64::consts::PI * j as f64 / nf).cos();
        for _ in 0..NEWTON_MAX_ITER {
            let (p, p_prev) = legendre_pair(n, x);
            // f = (1-x^2) P_n' = n (P_{n-1} - x P_n),  f' = -n (n+1) P_n
            let dx = (p_prev - x * p) / ((nf + 1.0) * p);
            x += dx;
            if dx.abs() < NEWTON_TOL {
                break;
            }
        }
        *node = x;
    }
    for j in 0..np / 2 {
        let s = 0.5 * (nodes[n - j] - nodes[j]);
        nodes[j] = -s;
        nodes[n - j] = s;
    }
    if np % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let weights = nodes
        .iter()
        .map(|&x| {
            let (p, _) = legendre_pair(n, x);
            2.0 / (nf * (nf + 1.0) * p * p)
        })
        .collect();
    Ok((nodes, weights))
}

/// Gauss-Legendre nodes and weights with `m` points (exact to degree `2m - 1`).
pub fn gauss_nodes_weights(m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if m < 1 {
        return Err(MhdError::InvalidOrder(m));
    }
    let mf = m as f64;
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        for _ in 0..NEWTON_MAX_ITER {
            let (p, dp) = legendre_with_derivative(m, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < NEWTON_TOL {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(m, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    for j in 0..m / 2 {
        let s = 0.5 * (nodes[m - 1 - j] - nodes[j]);
        nodes[j] = -s;
        nodes[m - 1 - j] = s;
        let w = 0.5 * (weights[j] + weights[m - 1 - j]);
        weights[j] = w;
        weights[m - 1 - j] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    Ok((nodes, weights))
}

/// Barycentric weights `1 / prod_{k != j} (x_j - x_k)`.
pub fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    nodes
        .iter()
        .enumerate()
        .map(|(j, &xj)| {
            let prod: f64 = nodes
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &xk)| xj - xk)
                .product();
            1.0 / prod
        })
        .collect()
}

/// Values of all Lagrange cardinal functions on `nodes` at the point `x`.
pub fn lagrange_row(nodes: &[f64], bary: &[f64], x: f64) -> Vec<f64> {
    if let Some(hit) = nodes.iter().position(|&xj| xj == x) {
        let mut row = vec![0.0; nodes.len()];
        row[hit] = 1.0;
        return row;
    }
    let terms: Vec<f64> = nodes.iter().zip(bary).map(|(&xj, &wj)| wj / (x - xj)).collect();
    let denom: f64 = terms.iter().sum();
    terms.into_iter().map(|t| t / denom).collect()
}

/// Dense `rows x cols` matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpMatrix {
    pub coarse_order: usize,
    pub fine_count: usize,
    /// `fine_count x (coarse_order + 1)`, row-major: `J[m][i] = h_i(fine[m])`.
    pub matrix: Vec<f64>,
}

impl InterpMatrix {
    pub fn at(&self, m: usize, i: usize) -> f64 {
        self.matrix[m * (self.coarse_order + 1) + i]
    }

    /// Transpose as a row-major `(coarse_order + 1) x fine_count` array.
    pub fn transpose(&self) -> Vec<f64> {
        let n1 = self.coarse_order + 1;
        let mut t = vec![0.0; n1 * self.fine_count];
        for m in 0..self.fine_count {
            for i in 0..n1 {
                t[i * self.fine_count + m] = self.matrix[m * n1 + i];
            }
        }
        t
    }
}

/// Nodal GLL basis of a given order with its differentiation matrix.
#[derive(Debug, Clone)]
pub struct GllBasis1D {
    pub order: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Row-major `(N+1) x (N+1)`: `D[i][j] = h_j'(xi_i)`.
    pub diff_matrix: Vec<f64>,
    bary: Vec<f64>,
}

impl GllBasis1D {
    pub fn new(order: usize) -> Result<Self> {
        let (nodes, weights) = gll_nodes_weights(order)?;
        let bary = barycentric_weights(&nodes);
        let mut basis = GllBasis1D {
            order,
            nodes,
            weights,
            diff_matrix: Vec::new(),
            bary,
        };
        basis.diff_matrix = derivative_matrix(&basis);
        Ok(basis)
    }

    /// Shared, immutable basis for `order`, built at most once per process.
    pub fn cached(order: usize) -> Result<Arc<GllBasis1D>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GllBasis1D>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().expect("basis cache poisoned");
        if let Some(b) = map.get(&order) {
            return Ok(Arc::clone(b));
        }
        let b = Arc::new(GllBasis1D::new(order)?);
        map.insert(order, Arc::clone(&b));
        Ok(b)
    }

    pub fn n_points(&self) -> usize {
        self.order + 1
    }

    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.diff_matrix[i * (self.order + 1) + j]
    }

    /// Lagrange cardinal values `h_i(x)` for all `i`.
    pub fn lagrange_at(&self, x: f64) -> Vec<f64> {
        lagrange_row(&self.nodes, &self.bary, x)
    }

    /// Number of Gauss points used by the 3/2-rule over-integration.
    pub fn dealias_count(&self) -> usize {
        (3 * (self.order + 1)).div_ceil(2)
    }
}

/// `D[i][j] = h_j'(xi_i)` with the diagonal fixed by the negative-sum identity.
pub fn derivative_matrix(basis: &GllBasis1D) -> Vec<f64> {
    let np = basis.order + 1;
    let x = &basis.nodes;
    let w = &basis.bary;
    let mut d = vec![0.0; np * np];
    for i in 0..np {
        let mut diag = 0.0;
        for j in 0..np {
            if i != j {
                let v = (w[j] / w[i]) / (x[i] - x[j]);
                d[i * np + j] = v;
                diag -= v;
            }
        }
        d[i * np + i] = diag;
    }
    d
}

/// Interpolation from the GLL nodes of `basis` to arbitrary points in `[-1, 1]`.
pub fn interp_matrix(basis: &GllBasis1D, fine_nodes: &[f64]) -> Result<InterpMatrix> {
    let np = basis.n_points();
    let mut matrix = Vec::with_capacity(fine_nodes.len() * np);
    for &x in fine_nodes {
        if !(-1.0 - 1e-14..=1.0 + 1e-14).contains(&x) || x.is_nan() {
            return Err(MhdError::NodeOutOfRange(x));
        }
        matrix.extend(basis.lagrange_at(x.clamp(-1.0, 1.0)));
    }
    Ok(InterpMatrix {
        coarse_order: basis.order,
        fine_count: fine_nodes.len(),
        matrix,
    })
}

/// Over-integration data for one order: Gauss points, weights and the
/// GLL-to-Gauss interpolation matrix with its transpose.
#[derive(Debug, Clone)]
pub struct DealiasRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub interp: InterpMatrix,
    pub interp_t: Vec<f64>,
}

impl DealiasRule {
    pub fn new(basis: &GllBasis1D) -> Result<Self> {
        let (nodes, weights) = gauss_nodes_weights(basis.dealias_count())?;
        let interp = interp_matrix(basis, &nodes)?;
        let interp_t = interp.transpose();
        Ok(DealiasRule {
            nodes,
            weights,
            interp,
            interp_t,
        })
    }

    pub fn count(&self) -> usize {
        self.nodes.len()
    }
}
