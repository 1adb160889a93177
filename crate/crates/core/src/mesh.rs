//! Two-domain, axially periodic box mesh.
//!
//! The mesh is a tensor product of element breakpoints. The fluid box
//! `[0, L] x [-1, 1]^2` is optionally wrapped by `wall_layers` rings of solid
//! elements of total thickness `delta` on the four side walls. Global point
//! numbering is the lexicographic GLL lattice with the x = 0 and x = L planes
//! identified, so no coordinate matching is ever needed.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::cases::CaseKind;
use crate::error::{MhdError, Result};
use crate::gll::GllBasis1D;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementDomain {
    Fluid,
    Solid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Face {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl Face {
    pub const ALL: [Face; 6] = [Face::XMin, Face::XMax, Face::YMin, Face::YMax, Face::ZMin, Face::ZMax];

    pub fn axis(self) -> usize {
        match self {
            Face::XMin | Face::XMax => 0,
            Face::YMin | Face::YMax => 1,
            Face::ZMin | Face::ZMax => 2,
        }
    }

    /// Sign of the outward normal along `axis()`.
    pub fn sign(self) -> f64 {
        match self {
            Face::XMin | Face::YMin | Face::ZMin => -1.0,
            _ => 1.0,
        }
    }

    fn is_max(self) -> bool {
        self.sign() > 0.0
    }
}

/// Build parameters for [`BoxMesh`].
#[derive(Debug, Clone, PartialEq)]
pub struct MeshSpec {
    /// Fluid element counts `(Ex, Ey, Ez)`.
    pub counts: [usize; 3],
    pub length: f64,
    pub wall_thickness: f64,
    pub wall_layers: usize,
    pub order: usize,
    /// Grade the fluid elements toward the Hartmann walls (y = +-1) for this Ha.
    pub grading_ha: Option<f64>,
}

impl MeshSpec {
    pub fn uniform(counts: [usize; 3], length: f64, delta: f64, order: usize, wall_layers: usize) -> Self {
        MeshSpec {
            counts,
            length,
            wall_thickness: delta,
            wall_layers,
            order,
            grading_ha: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoxMesh {
    pub counts: [usize; 3],
    pub length: f64,
    pub wall_thickness: f64,
    pub wall_layers: usize,
    pub order: usize,
    pub periodic_x: bool,
    /// Element breakpoints per axis over the whole (fluid + solid) box.
    pub breaks: [Vec<f64>; 3],
    /// Total element counts per axis.
    pub dims: [usize; 3],
    pub element_domain: Vec<ElementDomain>,
    /// Global id of every local point `(e, i, j, k)`.
    pub global_ids: Vec<usize>,
    pub num_global: usize,
    /// Number of local copies of each local point's global id.
    pub multiplicity: Vec<f64>,
    pub basis: Arc<GllBasis1D>,
}

/// Wall-normal breakpoints on `[-1, 1]`, geometrically stretched so the element
/// touching each wall is no thicker than `max_wall`.
fn graded_breaks(count: usize, max_wall: Option<f64>) -> Vec<f64> {
    let uniform: Vec<f64> = (0..=count).map(|i| -1.0 + 2.0 * i as f64 / count as f64).collect();
    let Some(target) = max_wall else { return uniform };
    if count < 3 || 2.0 / count as f64 <= target {
        return uniform;
    }
    let sizes = |r: f64| -> Vec<f64> {
        let raw: Vec<f64> = (0..count).map(|i| r.powi(i.min(count - 1 - i) as i32)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|s| 2.0 * s / total).collect()
    };
    let (mut lo, mut hi) = (1.0, 1.0);
    while sizes(hi)[0] > target && hi < 1e6 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sizes(mid)[0] > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut b = vec![-1.0];
    let mut acc = -1.0;
    for s in sizes(hi) {
        acc += s;
        b.push(acc);
    }
    b[count] = 1.0;
    // exact symmetry about 0
    for i in 0..=count / 2 {
        let v = 0.5 * (b[count - i] - b[i]);
        b[i] = -v;
        b[count - i] = v;
    }
    b
}

fn with_walls(fluid: Vec<f64>, delta: f64, layers: usize) -> Vec<f64> {
    if delta <= 0.0 {
        return fluid;
    }
    let mut b: Vec<f64> = (0..layers)
        .map(|l| -1.0 - delta + delta * l as f64 / layers as f64)
        .collect();
    b.extend(fluid);
    b.extend((1..=layers).map(|l| 1.0 + delta * l as f64 / layers as f64));
    b
}

impl BoxMesh {
    pub fn build(spec: &MeshSpec) -> Result<Self> {
        let [ex, ey, ez] = spec.counts;
        if ex < 1 || ey < 1 || ez < 1 {
            return Err(MhdError::InvalidExtent(format!(
                "element counts {:?} must be >= 1",
                spec.counts
            )));
        }
        if !(spec.wall_thickness >= 0.0) {
            return Err(MhdError::InvalidExtent(format!(
                "wall thickness {} < 0",
                spec.wall_thickness
            )));
        }
        if !(spec.length > 0.0) {
            return Err(MhdError::InvalidExtent(format!("duct length {} <= 0", spec.length)));
        }
        let has_wall = spec.wall_thickness > 0.0;
        if has_wall && spec.wall_layers < 1 {
            return Err(MhdError::InvalidExtent(
                "wall_element_layers must be >= 1 when delta > 0".into(),
            ));
        }
        let basis = GllBasis1D::cached(spec.order)?;
        let layers = if has_wall { spec.wall_layers } else { 0 };

        let xb: Vec<f64> = (0..=ex).map(|i| spec.length * i as f64 / ex as f64).collect();
        let max_wall = spec.grading_ha.filter(|&ha| ha > 20.0).map(|ha| 5.0 / ha);
        let yb = with_walls(graded_breaks(ey, max_wall), spec.wall_thickness, layers);
        let zb = with_walls(graded_breaks(ez, None), spec.wall_thickness, layers);
        let dims = [xb.len() - 1, yb.len() - 1, zb.len() - 1];

        let n = spec.order;
        let n1 = n + 1;
        let ne = dims[0] * dims[1] * dims[2];
        let mut element_domain = Vec::with_capacity(ne);
        for kz in 0..dims[2] {
            for ky in 0..dims[1] {
                for _kx in 0..dims[0] {
                    let fluid = (layers..layers + ey).contains(&ky) && (layers..layers + ez).contains(&kz);
                    element_domain.push(if fluid {
                        ElementDomain::Fluid
                    } else {
                        ElementDomain::Solid
                    });
                }
            }
        }

        let nxg = dims[0] * n;
        let nyg = dims[1] * n + 1;
        let nzg = dims[2] * n + 1;
        let num_global = nxg * nyg * nzg;
        let mut global_ids = Vec::with_capacity(ne * n1 * n1 * n1);
        for kz in 0..dims[2] {
            for ky in 0..dims[1] {
                for kx in 0..dims[0] {
                    for k in 0..n1 {
                        for j in 0..n1 {
                            for i in 0..n1 {
                                let ix = (kx * n + i) % nxg;
                                let iy = ky * n + j;
                                let iz = kz * n + k;
                                global_ids.push(ix + nxg * (iy + nyg * iz));
                            }
                        }
                    }
                }
            }
        }
        let mut counts = vec![0.0; num_global];
        for &g in &global_ids {
            counts[g] += 1.0;
        }
        let multiplicity = global_ids.iter().map(|&g| counts[g]).collect();

        Ok(BoxMesh {
            counts: spec.counts,
            length: spec.length,
            wall_thickness: spec.wall_thickness,
            wall_layers: layers,
            order: n,
            periodic_x: true,
            breaks: [xb, yb, zb],
            dims,
            element_domain,
            global_ids,
            num_global,
            multiplicity,
            basis,
        })
    }

    pub fn n_elements(&self) -> usize {
        self.element_domain.len()
    }

    pub fn n1(&self) -> usize {
        self.order + 1
    }

    pub fn points_per_element(&self) -> usize {
        self.n1().pow(3)
    }

    pub fn n_local(&self) -> usize {
        self.n_elements() * self.points_per_element()
    }

    pub fn element_index(&self, ex: usize, ey: usize, ez: usize) -> usize {
        ex + self.dims[0] * (ey + self.dims[1] * ez)
    }

    pub fn element_position(&self, e: usize) -> [usize; 3] {
        let ex = e % self.dims[0];
        let ey = (e / self.dims[0]) % self.dims[1];
        let ez = e / (self.dims[0] * self.dims[1]);
        [ex, ey, ez]
    }

    pub fn local_index(&self, e: usize, i: usize, j: usize, k: usize) -> usize {
        let n1 = self.n1();
        e * n1 * n1 * n1 + i + n1 * (j + n1 * k)
    }

    pub fn is_fluid(&self, e: usize) -> bool {
        self.element_domain[e] == ElementDomain::Fluid
    }

    pub fn fluid_flags(&self) -> Vec<bool> {
        (0..self.n_elements()).map(|e| self.is_fluid(e)).collect()
    }

    pub fn n_solid(&self) -> usize {
        self.element_domain
            .iter()
            .filter(|d| **d == ElementDomain::Solid)
            .count()
    }

    /// `[[x_lo, x_hi], [y_lo, y_hi], [z_lo, z_hi]]` of element `e`.
    pub fn bounds(&self, e: usize) -> [[f64; 2]; 3] {
        let p = self.element_position(e);
        [0, 1, 2].map(|a| [self.breaks[a][p[a]], self.breaks[a][p[a] + 1]])
    }

    /// The 8 corner vertices of element `e`.
    pub fn vertex_coords(&self, e: usize) -> [[f64; 3]; 8] {
        let b = self.bounds(e);
        let mut v = [[0.0; 3]; 8];
        for (c, vert) in v.iter_mut().enumerate() {
            *vert = [b[0][c & 1], b[1][(c >> 1) & 1], b[2][(c >> 2) & 1]];
        }
        v
    }

    /// Physical coordinates of every local point, one array per axis.
    pub fn coordinates(&self) -> [Vec<f64>; 3] {
        let n1 = self.n1();
        let xi = &self.basis.nodes;
        let mut out = [
            Vec::with_capacity(self.n_local()),
            Vec::with_capacity(self.n_local()),
            Vec::with_capacity(self.n_local()),
        ];
        for e in 0..self.n_elements() {
            let b = self.bounds(e);
            let map = |a: usize, r: f64| b[a][0] + 0.5 * (r + 1.0) * (b[a][1] - b[a][0]);
            for k in 0..n1 {
                for j in 0..n1 {
                    for i in 0..n1 {
                        out[0].push(map(0, xi[i]));
                        out[1].push(map(1, xi[j]));
                        out[2].push(map(2, xi[k]));
                    }
                }
            }
        }
        out
    }

    /// Smallest GLL point spacing over the fluid elements.
    pub fn min_fluid_spacing(&self) -> f64 {
        let xi = &self.basis.nodes;
        let dxi = xi.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        (0..self.n_elements())
            .filter(|&e| self.is_fluid(e))
            .flat_map(|e| self.bounds(e).map(|b| 0.5 * (b[1] - b[0]) * dxi))
            .fold(f64::INFINITY, f64::min)
    }

    /// Local point indices `(i, j, k)` on a face of the reference element.
    pub fn face_points(&self, face: Face) -> Vec<(usize, usize, usize)> {
        let n1 = self.n1();
        let fixed = if face.is_max() { self.order } else { 0 };
        let mut pts = Vec::with_capacity(n1 * n1);
        for b in 0..n1 {
            for a in 0..n1 {
                pts.push(match face.axis() {
                    0 => (fixed, a, b),
                    1 => (a, fixed, b),
                    _ => (a, b, fixed),
                });
            }
        }
        pts
    }

    fn neighbor(&self, e: usize, face: Face) -> Option<usize> {
        let mut p = self.element_position(e);
        let a = face.axis();
        if face.is_max() {
            if p[a] + 1 == self.dims[a] {
                if a == 0 && self.periodic_x {
                    p[a] = 0;
                } else {
                    return None;
                }
            } else {
                p[a] += 1;
            }
        } else if p[a] == 0 {
            if a == 0 && self.periodic_x {
                p[a] = self.dims[a] - 1;
            } else {
                return None;
            }
        } else {
            p[a] -= 1;
        }
        Some(self.element_index(p[0], p[1], p[2]))
    }

    /// Faces on the outer boundary of the whole box (boundary of the magnetic domain).
    pub fn outer_faces(&self) -> Vec<(usize, Face)> {
        let mut out = Vec::new();
        for e in 0..self.n_elements() {
            for f in Face::ALL {
                if self.neighbor(e, f).is_none() {
                    out.push((e, f));
                }
            }
        }
        out
    }

    /// Fluid-element faces whose neighbor is solid or missing (boundary of the fluid domain).
    pub fn fluid_boundary_faces(&self) -> Vec<(usize, Face)> {
        let mut out = Vec::new();
        for e in (0..self.n_elements()).filter(|&e| self.is_fluid(e)) {
            for f in Face::ALL {
                match self.neighbor(e, f) {
                    Some(nb) if self.is_fluid(nb) => {}
                    _ => out.push((e, f)),
                }
            }
        }
        out
    }

    /// Global ids touched by at least one element flagged in `active`.
    pub fn active_global_ids(&self, active: &[bool]) -> BTreeSet<usize> {
        let ppe = self.points_per_element();
        (0..self.n_elements())
            .filter(|&e| active[e])
            .flat_map(|e| self.global_ids[e * ppe..(e + 1) * ppe].iter().copied())
            .collect()
    }

    fn face_global_ids(&self, faces: &[(usize, Face)]) -> BTreeSet<usize> {
        let mut s = BTreeSet::new();
        for &(e, f) in faces {
            for (i, j, k) in self.face_points(f) {
                s.insert(self.global_ids[self.local_index(e, i, j, k)]);
            }
        }
        s
    }

    /// Element containing `p` and the reference coordinates of `p` inside it.
    pub fn locate(&self, p: [f64; 3]) -> Option<(usize, [f64; 3])> {
        let mut pos = [0usize; 3];
        let mut r = [0.0; 3];
        for a in 0..3 {
            let b = &self.breaks[a];
            let x = p[a];
            let tol = 1e-12 * (b[b.len() - 1] - b[0]).abs().max(1.0);
            if x < b[0] - tol || x > b[b.len() - 1] + tol {
                return None;
            }
            let idx = b.partition_point(|&v| v <= x).clamp(1, b.len() - 1) - 1;
            pos[a] = idx;
            let (lo, hi) = (b[idx], b[idx + 1]);
            r[a] = (2.0 * (x - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0);
        }
        Some((self.element_index(pos[0], pos[1], pos[2]), r))
    }

    /// Interpolate an element-local field at a physical point.
    pub fn evaluate(&self, values: &[f64], p: [f64; 3]) -> Option<f64> {
        let (e, r) = self.locate(p)?;
        Some(evaluate_in_element(
            &self.basis,
            &values[e * self.points_per_element()..],
            r,
        ))
    }
}

/// Tensor-product Lagrange interpolation of one element's nodal values.
pub fn evaluate_in_element(basis: &GllBasis1D, values: &[f64], r: [f64; 3]) -> f64 {
    let n1 = basis.n_points();
    let hx = basis.lagrange_at(r[0]);
    let hy = basis.lagrange_at(r[1]);
    let hz = basis.lagrange_at(r[2]);
    let mut s = 0.0;
    for k in 0..n1 {
        for j in 0..n1 {
            let w = hy[j] * hz[k];
            if w == 0.0 {
                continue;
            }
            let row = &values[n1 * (j + n1 * k)..n1 * (j + 1 + n1 * k)];
            s += w * row.iter().zip(&hx).map(|(v, h)| v * h).sum::<f64>();
        }
    }
    s
}

pub fn build_box_mesh(
    counts: [usize; 3],
    length: f64,
    delta: f64,
    order: usize,
    wall_layers: usize,
) -> Result<BoxMesh> {
    BoxMesh::build(&MeshSpec::uniform(counts, length, delta, order, wall_layers))
}

/// Per-point geometric factors of the (axis-aligned) elements.
#[derive(Debug, Clone)]
pub struct GeomFactors {
    /// `|J|` at every local point.
    pub jacobian: Vec<f64>,
    /// `[G11, G22, G33, G12, G13, G23]` including `|J|` and the GLL weights.
    pub metric: Vec<[f64; 6]>,
    /// Diagonal mass entries `rho_i rho_j rho_k |J|`.
    pub mass_weight: Vec<f64>,
}

pub fn geometric_factors(mesh: &BoxMesh) -> Result<GeomFactors> {
    let n1 = mesh.n1();
    let rho = &mesh.basis.weights;
    let nl = mesh.n_local();
    let mut jacobian = Vec::with_capacity(nl);
    let mut metric = Vec::with_capacity(nl);
    let mut mass_weight = Vec::with_capacity(nl);
    for e in 0..mesh.n_elements() {
        let b = mesh.bounds(e);
        let h = b.map(|ab| ab[1] - ab[0]);
        let jac = h[0] * h[1] * h[2] / 8.0;
        if !(jac > 0.0) {
            return Err(MhdError::DegenerateElement {
                element: e,
                jacobian: jac,
            });
        }
        let rr = h.map(|hh| (2.0 / hh) * (2.0 / hh));
        for k in 0..n1 {
            for j in 0..n1 {
                for i in 0..n1 {
                    let w = rho[i] * rho[j] * rho[k] * jac;
                    jacobian.push(jac);
                    mass_weight.push(w);
                    metric.push([rr[0] * w, rr[1] * w, rr[2] * w, 0.0, 0.0, 0.0]);
                }
            }
        }
    }
    Ok(GeomFactors {
        jacobian,
        metric,
        mass_weight,
    })
}

/// Direct-stiffness summation: sum values at coincident global ids and
/// redistribute the sums to every copy. Summation order is fixed by the local
/// point order, so the result is bit-reproducible.
pub fn gather_scatter(mesh: &BoxMesh, field: &mut [f64]) {
    let mut acc = vec![0.0; mesh.num_global];
    for (v, &g) in field.iter().zip(&mesh.global_ids) {
        acc[g] += *v;
    }
    for (v, &g) in field.iter_mut().zip(&mesh.global_ids) {
        *v = acc[g];
    }
}

/// Gather-scatter followed by division by multiplicity (averaging).
pub fn gather_scatter_average(mesh: &BoxMesh, field: &mut [f64]) {
    gather_scatter(mesh, field);
    for (v, m) in field.iter_mut().zip(&mesh.multiplicity) {
        *v /= m;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    VelocityComponent,
    MagneticComponent,
    Pressure,
    MagneticPressure,
}

#[derive(Debug, Clone)]
pub struct BoundaryMask {
    pub field_kind: FieldKind,
    pub component: Option<usize>,
    /// Global ids with imposed values.
    pub dirichlet_points: BTreeSet<usize>,
    /// Boundary faces carrying natural (Neumann) conditions.
    pub neumann_faces: Vec<(usize, Face)>,
    /// Global ids outside the field's domain; held at zero.
    pub exterior_points: BTreeSet<usize>,
}

impl BoundaryMask {
    /// Local 0/1 array: 1 on free points, 0 on Dirichlet and exterior points.
    pub fn local_mask(&self, mesh: &BoxMesh) -> Vec<f64> {
        let mut fixed = vec![false; mesh.num_global];
        for &g in self.dirichlet_points.iter().chain(&self.exterior_points) {
            fixed[g] = true;
        }
        mesh.global_ids
            .iter()
            .map(|&g| if fixed[g] { 0.0 } else { 1.0 })
            .collect()
    }

    pub fn has_dirichlet(&self) -> bool {
        !self.dirichlet_points.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct MaskSet {
    pub velocity: [BoundaryMask; 3],
    pub magnetic: [BoundaryMask; 3],
    pub pressure: BoundaryMask,
    pub magnetic_pressure: BoundaryMask,
}

impl MaskSet {
    pub fn all(&self) -> Vec<&BoundaryMask> {
        let mut v: Vec<&BoundaryMask> = self.velocity.iter().collect();
        v.extend(self.magnetic.iter());
        v.push(&self.pressure);
        v.push(&self.magnetic_pressure);
        v
    }
}

/// Per-field masks for one of the configured duct cases.
pub fn boundary_masks(mesh: &BoxMesh, kind: CaseKind) -> Result<MaskSet> {
    let has_solid = mesh.n_solid() > 0;
    match (kind, has_solid) {
        (CaseKind::Shercliff | CaseKind::Hunt, true) => {
            return Err(MhdError::InvalidCombination(format!("{kind:?} requires delta = 0")))
        }
        (CaseKind::ConductingWall, false) => {
            return Err(MhdError::InvalidCombination(
                "conducting-wall case requires delta > 0".into(),
            ))
        }
        _ => {}
    }
    let all = vec![true; mesh.n_elements()];
    let fluid_ids = mesh.active_global_ids(&mesh.fluid_flags());
    let exterior_f: BTreeSet<usize> = (0..mesh.num_global).filter(|g| !fluid_ids.contains(g)).collect();
    let fluid_faces = mesh.fluid_boundary_faces();
    let outer_faces = mesh.outer_faces();
    let _ = all;

    let velocity_dirichlet = mesh.face_global_ids(&fluid_faces);
    let vel = |c: usize| BoundaryMask {
        field_kind: FieldKind::VelocityComponent,
        component: Some(c),
        dirichlet_points: velocity_dirichlet.clone(),
        neumann_faces: Vec::new(),
        exterior_points: exterior_f.clone(),
    };
    let pressure = BoundaryMask {
        field_kind: FieldKind::Pressure,
        component: None,
        dirichlet_points: BTreeSet::new(),
        neumann_faces: fluid_faces.clone(),
        exterior_points: exterior_f.clone(),
    };

    let (y_faces, z_faces): (Vec<_>, Vec<_>) = outer_faces.iter().partition(|(_, f)| f.axis() == 1);
    let magnetic_dirichlet_all = mesh.face_global_ids(&outer_faces);
    let mag = |c: usize| -> BoundaryMask {
        if kind == CaseKind::Hunt && c == 0 {
            BoundaryMask {
                field_kind: FieldKind::MagneticComponent,
                component: Some(c),
                dirichlet_points: mesh.face_global_ids(&z_faces),
                neumann_faces: y_faces.clone(),
                exterior_points: BTreeSet::new(),
            }
        } else {
            BoundaryMask {
                field_kind: FieldKind::MagneticComponent,
                component: Some(c),
                dirichlet_points: magnetic_dirichlet_all.clone(),
                neumann_faces: Vec::new(),
                exterior_points: BTreeSet::new(),
            }
        }
    };
    let magnetic_pressure = if kind == CaseKind::Hunt {
        BoundaryMask {
            field_kind: FieldKind::MagneticPressure,
            component: None,
            dirichlet_points: mesh.face_global_ids(&y_faces),
            neumann_faces: z_faces.clone(),
            exterior_points: BTreeSet::new(),
        }
    } else {
        BoundaryMask {
            field_kind: FieldKind::MagneticPressure,
            component: None,
            dirichlet_points: BTreeSet::new(),
            neumann_faces: outer_faces.clone(),
            exterior_points: BTreeSet::new(),
        }
    };
    Ok(MaskSet {
        velocity: [vel(0), vel(1), vel(2)],
        magnetic: [mag(0), mag(1), mag(2)],
        pressure,
        magnetic_pressure,
    })
}
