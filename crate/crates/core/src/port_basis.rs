//! One-dimensional modal basis on a port.
//!
//! All ports share one discretization (same length, same element count,
//! same order), so a single basis serves every port and both displacement
//! components. Modes are eigenfunctions of the 1D Laplacian pencil
//! `K x = theta M x` on the port, M-orthonormal and sorted by increasing
//! eigenvalue; the first mode is replaced by the exact constant, which is
//! the eigenfunction of theta = 0 up to roundoff. Smooth modes come first,
//! which is what both the traction projection (a uniform traction excites
//! only the constant mode) and the training-data smoother rely on.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::generalized_symmetric_eig;
use crate::mesh::ElementOrder;

#[derive(Debug, Clone)]
pub struct PortBasis1d {
    pub order: ElementOrder,
    pub length: f64,
    /// 1D consistent mass matrix of the port discretization.
    pub mass: DMatrix<f64>,
    /// Columns are M-orthonormal modes, one per port node, smoothest first.
    pub modes: DMatrix<f64>,
    /// Laplacian eigenvalues, ascending; `values[0]` is exactly 0.
    pub values: Vec<f64>,
}

/// Assembles 1D stiffness/mass of `b` elements of size `h` for nodes ordered
/// along the port (quadratic meshes interleave midside nodes).
fn laplacian_pencil(order: ElementOrder, b: usize, h: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = order.port_node_count(b);
    let mut k = DMatrix::zeros(n, n);
    let mut m = DMatrix::zeros(n, n);
    match order {
        ElementOrder::Linear => {
            let ke = [[1.0, -1.0], [-1.0, 1.0]];
            let me = [[2.0, 1.0], [1.0, 2.0]];
            for e in 0..b {
                for a in 0..2 {
                    for c in 0..2 {
                        k[(e + a, e + c)] += ke[a][c] / h;
                        m[(e + a, e + c)] += me[a][c] * h / 6.0;
                    }
                }
            }
        }
        ElementOrder::Quadratic => {
            // nodes per element: (left, mid, right)
            let ke = [[7.0, -8.0, 1.0], [-8.0, 16.0, -8.0], [1.0, -8.0, 7.0]];
            let me = [[4.0, 2.0, -1.0], [2.0, 16.0, 2.0], [-1.0, 2.0, 4.0]];
            for e in 0..b {
                let base = 2 * e;
                for a in 0..3 {
                    for c in 0..3 {
                        k[(base + a, base + c)] += ke[a][c] / (3.0 * h);
                        m[(base + a, base + c)] += me[a][c] * h / 30.0;
                    }
                }
            }
        }
    }
    (k, m)
}

pub fn build_port_basis(order: ElementOrder, b: usize, length: f64) -> Result<PortBasis1d> {
    let h = length / b as f64;
    let (k, m) = laplacian_pencil(order, b, h);
    let n = k.nrows();
    let eig = generalized_symmetric_eig(&k, &m)?;
    let mut modes = eig.vectors;
    let mut values = eig.values;
    values[0] = 0.0;

    // Exact constant replaces the numerically computed theta = 0 mode; its
    // M-norm is sqrt(length) since row sums of M integrate the shape
    // functions.
    let c = DVector::from_element(n, 1.0 / length.sqrt());
    modes.set_column(0, &c);
    // Re-orthogonalize the rest against the constant (cleans roundoff only).
    for j in 1..n {
        let col = modes.column(j).into_owned();
        let proj = (c.transpose() * &m * &col)[(0, 0)];
        let mut col = col - proj * &c;
        let norm = (col.transpose() * &m * &col)[(0, 0)].sqrt();
        col /= norm;
        modes.set_column(j, &col);
    }

    Ok(PortBasis1d {
        order,
        length,
        mass: m,
        modes,
        values,
    })
}

impl PortBasis1d {
    pub fn n_nodes(&self) -> usize {
        self.modes.nrows()
    }

    /// Modal coefficients of a nodal trace (M-weighted projection).
    pub fn project(&self, trace: &DVector<f64>) -> DVector<f64> {
        self.modes.transpose() * &self.mass * trace
    }

    /// Nodal values of a modal coefficient vector (may be truncated).
    pub fn expand(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        let k = coeffs.len();
        self.modes.columns(0, k) * coeffs
    }

    /// First `k` modes as a nodes-by-k matrix.
    pub fn leading(&self, k: usize) -> DMatrix<f64> {
        self.modes.columns(0, k).into_owned()
    }
}

/// Spectral decay weights for training data: mode k is scaled by
/// (1 + k)^(-eta / 10), so eta = 0 leaves white noise and larger eta
/// concentrates the data on smooth modes.
pub fn smoothing_weights(eta: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| (1.0 + k as f64).powf(-eta / 10.0)).collect()
}
