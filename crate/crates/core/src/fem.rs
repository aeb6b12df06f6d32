//! Plane-stress triangular finite elements on reference components.
//!
//! Straight-sided linear and quadratic triangles with an affine geometry
//! map, so the Jacobian is constant per element. Degrees of freedom
//! interleave as (node 0 x, node 0 y, node 1 x, ...). Component stiffness is
//! assembled for unpenalized material; density scaling happens per placed
//! component at the system level.

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::BandMatrix;
use crate::mesh::{ElementOrder, ReferenceComponent};
use crate::quadrature::QuadRule;

/// Isotropic material in SI units.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Material {
    pub youngs: f64,
    pub poisson: f64,
}

impl Material {
    pub fn new(youngs: f64, poisson: f64) -> Result<Self> {
        if !(youngs > 0.0) {
            return Err(Error::Material("Young's modulus must be positive".into()));
        }
        if !(-1.0 < poisson && poisson < 0.5) {
            return Err(Error::Material(
                "Poisson ratio must lie in (-1, 0.5)".into(),
            ));
        }
        Ok(Material { youngs, poisson })
    }

    pub fn shear_modulus(&self) -> f64 {
        self.youngs / (2.0 * (1.0 + self.poisson))
    }

    /// Plane-stress effective first Lamé parameter.
    pub fn lambda_eff(&self) -> f64 {
        self.youngs * self.poisson / (1.0 - self.poisson * self.poisson)
    }

    /// Constitutive matrix mapping (e_xx, e_yy, 2 e_xy) to
    /// (s_xx, s_yy, s_xy).
    pub fn d_matrix(&self) -> Matrix3<f64> {
        let mu = self.shear_modulus();
        let la = self.lambda_eff();
        Matrix3::new(
            2.0 * mu + la,
            la,
            0.0,
            la,
            2.0 * mu + la,
            0.0,
            0.0,
            0.0,
            mu,
        )
    }
}

/// Cubic stiffness interpolation with a floor that keeps void regions
/// nonsingular: s(rho) = (rho + (1 - rho) rho_min)^3.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimpLaw {
    pub rho_min: f64,
}

impl Default for SimpLaw {
    fn default() -> Self {
        SimpLaw { rho_min: 1e-3 }
    }
}

impl SimpLaw {
    pub fn stiffness(&self, rho: f64) -> f64 {
        let t = rho + (1.0 - rho) * self.rho_min;
        t * t * t
    }

    pub fn dstiffness(&self, rho: f64) -> f64 {
        let t = rho + (1.0 - rho) * self.rho_min;
        3.0 * t * t * (1.0 - self.rho_min)
    }
}

/// Shape function values at a reference point.
pub fn shape_values(order: ElementOrder, xi: f64, eta: f64) -> Vec<f64> {
    let l1 = 1.0 - xi - eta;
    let l2 = xi;
    let l3 = eta;
    match order {
        ElementOrder::Linear => vec![l1, l2, l3],
        ElementOrder::Quadratic => vec![
            l1 * (2.0 * l1 - 1.0),
            l2 * (2.0 * l2 - 1.0),
            l3 * (2.0 * l3 - 1.0),
            4.0 * l1 * l2,
            4.0 * l2 * l3,
            4.0 * l3 * l1,
        ],
    }
}

/// Reference-space shape gradients (d/dxi, d/deta) at a reference point.
pub fn shape_gradients(order: ElementOrder, xi: f64, eta: f64) -> Vec<[f64; 2]> {
    let l1 = 1.0 - xi - eta;
    let l2 = xi;
    let l3 = eta;
    // dL1 = (-1,-1), dL2 = (1,0), dL3 = (0,1)
    match order {
        ElementOrder::Linear => vec![[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]],
        ElementOrder::Quadratic => vec![
            [-(4.0 * l1 - 1.0), -(4.0 * l1 - 1.0)],
            [4.0 * l2 - 1.0, 0.0],
            [0.0, 4.0 * l3 - 1.0],
            [4.0 * (l1 - l2), -4.0 * l2],
            [4.0 * l3, 4.0 * l2],
            [-4.0 * l3, 4.0 * (l1 - l3)],
        ],
    }
}

/// Strain-displacement matrix (3 x 2n) and Jacobian determinant of a
/// straight-sided triangle at a reference point. `corners` are the three
/// vertex coordinates; for quadratic elements the geometry map stays affine.
pub fn b_matrix_at(
    corners: &[[f64; 2]; 3],
    order: ElementOrder,
    xi: f64,
    eta: f64,
) -> (DMatrix<f64>, f64) {
    let j11 = corners[1][0] - corners[0][0];
    let j12 = corners[2][0] - corners[0][0];
    let j21 = corners[1][1] - corners[0][1];
    let j22 = corners[2][1] - corners[0][1];
    let det = j11 * j22 - j12 * j21;
    let inv = [[j22 / det, -j12 / det], [-j21 / det, j11 / det]];
    let grads = shape_gradients(order, xi, eta);
    let n = grads.len();
    let mut b = DMatrix::zeros(3, 2 * n);
    for (a, g) in grads.iter().enumerate() {
        // physical gradient: J^{-T} grad_ref
        let gx = inv[0][0] * g[0] + inv[1][0] * g[1];
        let gy = inv[0][1] * g[0] + inv[1][1] * g[1];
        b[(0, 2 * a)] = gx;
        b[(1, 2 * a + 1)] = gy;
        b[(2, 2 * a)] = gy;
        b[(2, 2 * a + 1)] = gx;
    }
    (b, det)
}

/// Element stiffness t * sum_q w_q det(J) B^T D B.
pub fn element_stiffness(
    corners: &[[f64; 2]; 3],
    order: ElementOrder,
    d: &Matrix3<f64>,
    thickness: f64,
    quad: &QuadRule,
) -> DMatrix<f64> {
    let n = order.nodes_per_element();
    let mut ke = DMatrix::zeros(2 * n, 2 * n);
    for (p, &w) in quad.points.iter().zip(&quad.weights) {
        let (b, det) = b_matrix_at(corners, order, p[0], p[1]);
        ke += (thickness * w * det) * b.transpose() * d * &b;
    }
    ke
}

pub fn corner_coords(comp: &ReferenceComponent, e: usize) -> [[f64; 2]; 3] {
    let t = comp.tris[e];
    [comp.nodes[t[0]], comp.nodes[t[1]], comp.nodes[t[2]]]
}

/// Assembles the component stiffness restricted to a DOF subset.
///
/// `map[dof]` gives the row of that DOF in the submatrix, `None` drops it.
/// Any subset that preserves the grid ordering keeps the matrix banded.
pub fn assemble_component_stiffness(
    comp: &ReferenceComponent,
    material: &Material,
    map: &[Option<usize>],
    n_sub: usize,
) -> BandMatrix {
    let d = material.d_matrix();
    let quad = crate::quadrature::degree2_four_point();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for e in 0..comp.n_elements() {
        let corners = corner_coords(comp, e);
        let ke = element_stiffness(&corners, comp.order, &d, comp.thickness, &quad);
        let nodes = comp.element_nodes(e);
        for (a, &na) in nodes.iter().enumerate() {
            for ca in 0..2 {
                let Some(i) = map[2 * na + ca] else { continue };
                for (b2, &nb) in nodes.iter().enumerate() {
                    for cb in 0..2 {
                        let Some(j) = map[2 * nb + cb] else { continue };
                        if i >= j {
                            triplets.push((i, j, ke[(2 * a + ca, 2 * b2 + cb)]));
                        }
                    }
                }
            }
        }
    }
    BandMatrix::from_triplets(n_sub, &triplets)
}

/// Identity DOF map of a component.
pub fn full_dof_map(comp: &ReferenceComponent) -> Vec<Option<usize>> {
    (0..comp.n_dofs()).map(Some).collect()
}

/// Consistent nodal loads on a port for a uniform traction with the given
/// total resultant. Element contributions are h*(1/2, 1/2) of the line load
/// for linear edges and h*(1/6, 2/3, 1/6) for quadratic ones.
pub fn port_load_vector(
    comp: &ReferenceComponent,
    port_idx: usize,
    total_force: [f64; 2],
) -> DVector<f64> {
    let port = &comp.ports[port_idx];
    let length = comp.port_length();
    let q = [total_force[0] / length, total_force[1] / length];
    let mut f = DVector::zeros(comp.n_dofs());
    match comp.order {
        ElementOrder::Linear => {
            let h = length / (port.nodes.len() - 1) as f64;
            for seg in port.nodes.windows(2) {
                for &n in seg {
                    for c in 0..2 {
                        f[2 * n + c] += 0.5 * h * q[c];
                    }
                }
            }
        }
        ElementOrder::Quadratic => {
            let n_el = (port.nodes.len() - 1) / 2;
            let h = length / n_el as f64;
            for e in 0..n_el {
                let ids = [
                    port.nodes[2 * e],
                    port.nodes[2 * e + 1],
                    port.nodes[2 * e + 2],
                ];
                let w = [h / 6.0, 2.0 * h / 3.0, h / 6.0];
                for (k, &n) in ids.iter().enumerate() {
                    for c in 0..2 {
                        f[2 * n + c] += w[k] * q[c];
                    }
                }
            }
        }
    }
    f
}
