//! Condensed interface system: assembly, solve, reconstruction.
//!
//! The system unknowns are modal coefficients per global port, ordered
//! x-modes then y-modes inside each port block. Component contributions are
//! the precomputed unit-density blocks scaled by the density law, so
//! assembly never touches a mesh. Uniform port tractions excite exactly the
//! constant mode of the loaded port (the bases are mass-orthonormal with
//! the constant first), and Dirichlet ports are eliminated by dropping
//! their blocks. The Cholesky factor is kept for adjoint solves at the
//! same density.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::SimpLaw;
use crate::ground::GroundStructure;
use crate::linalg::DenseSpd;
use crate::offline::OfflineSet;

/// Row bookkeeping of the condensed system.
#[derive(Debug, Clone)]
pub struct CondensedDofMap {
    /// Start row of each global port block (pre-elimination numbering).
    pub port_offsets: Vec<usize>,
    pub port_dims: Vec<usize>,
    pub n_total: usize,
    /// Pre-elimination row -> solved row; `None` on Dirichlet blocks.
    pub keep: Vec<Option<usize>>,
    pub n_kept: usize,
}

impl CondensedDofMap {
    pub fn build(gs: &GroundStructure, offline: &OfflineSet) -> Self {
        let mut port_offsets = Vec::with_capacity(gs.n_global_ports());
        let mut port_dims = Vec::with_capacity(gs.n_global_ports());
        let mut n_total = 0;
        for port in &gs.global_ports {
            port_offsets.push(n_total);
            let dim = offline.bases.port_block(port.class);
            port_dims.push(dim);
            n_total += dim;
        }
        let mut keep = vec![None; n_total];
        let mut n_kept = 0;
        for (gp, (&off, &dim)) in port_offsets.iter().zip(&port_dims).enumerate() {
            if gs.dirichlet_ports.binary_search(&gp).is_ok() {
                continue;
            }
            for row in off..off + dim {
                keep[row] = Some(n_kept);
                n_kept += 1;
            }
        }
        CondensedDofMap {
            port_offsets,
            port_dims,
            n_total,
            keep,
            n_kept,
        }
    }

    /// Global port and offset within its block of a solved row.
    pub fn locate_kept(&self, kept_row: usize) -> (usize, usize) {
        let full = self
            .keep
            .iter()
            .position(|&k| k == Some(kept_row))
            .expect("kept row exists");
        let gp = match self.port_offsets.binary_search(&full) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        (gp, full - self.port_offsets[gp])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMode {
    /// Untruncated bases: exact static condensation.
    FullOrder,
    /// Trained (truncated) bases.
    Reduced,
}

pub struct CondensedSystem {
    pub map: CondensedDofMap,
    pub k: DMatrix<f64>,
    pub f: DVector<f64>,
    pub mode: SolverMode,
    /// Design point the matrix was assembled at.
    pub rho: Vec<f64>,
}

/// Scatter of one instance: kept rows of each of its modal columns.
pub fn instance_rows(
    gs: &GroundStructure,
    offline: &OfflineSet,
    map: &CondensedDofMap,
    i: usize,
) -> Vec<Option<usize>> {
    let off = offline.component(gs.instances[i].kind);
    let mut rows = Vec::with_capacity(off.n_modes());
    for (l, &gp) in gs.local_to_global[i].iter().enumerate() {
        let range = off.port_mode_range(l);
        debug_assert_eq!(range.len(), map.port_dims[gp]);
        for (k, _) in range.enumerate() {
            rows.push(map.keep[map.port_offsets[gp] + k]);
        }
    }
    rows
}

pub fn assemble_condensed(
    gs: &GroundStructure,
    offline: &OfflineSet,
    simp: &SimpLaw,
    rho: &[f64],
) -> Result<CondensedSystem> {
    if rho.len() != gs.n_instances() {
        return Err(Error::Layout(format!(
            "density vector length {} != {} instances",
            rho.len(),
            gs.n_instances()
        )));
    }
    if gs.dirichlet_ports.is_empty() {
        return Err(Error::Layout("no Dirichlet supports".into()));
    }
    let map = CondensedDofMap::build(gs, offline);
    let mut k = DMatrix::<f64>::zeros(map.n_kept, map.n_kept);
    for (i, _) in gs.instances.iter().enumerate() {
        let off = offline.component(gs.instances[i].kind);
        let s = simp.stiffness(rho[i]);
        let rows = instance_rows(gs, offline, &map, i);
        for (a, &ra) in rows.iter().enumerate() {
            let Some(ra) = ra else { continue };
            for (b, &rb) in rows.iter().enumerate() {
                let Some(rb) = rb else { continue };
                k[(ra, rb)] += s * off.a0[(a, b)];
            }
        }
    }

    let mut f = DVector::<f64>::zeros(map.n_kept);
    let ell = offline.bases.basis1d.length;
    for &(gp, force) in &gs.loads {
        let class = gs.global_ports[gp].class;
        let dim_x = offline.bases.dim_of(class, 0);
        let base = map.port_offsets[gp];
        // Uniform traction resolves onto the constant mode of each component:
        // all other modes are mass-orthogonal to it.
        for c in 0..2 {
            let row = base + if c == 0 { 0 } else { dim_x };
            let Some(r) = map.keep[row] else {
                return Err(Error::Layout(format!(
                    "load applied to Dirichlet port {gp}"
                )));
            };
            f[r] += force[c] / ell.sqrt();
        }
    }

    let mode = if offline.bases.is_full() {
        SolverMode::FullOrder
    } else {
        SolverMode::Reduced
    };
    Ok(CondensedSystem {
        map,
        k,
        f,
        mode,
        rho: rho.to_vec(),
    })
}

pub struct CondensedSolution {
    pub map: CondensedDofMap,
    pub mode: SolverMode,
    /// Solved modal coefficients (kept rows).
    pub u: DVector<f64>,
    /// Retained factor for adjoint solves against the same matrix.
    pub factor: DenseSpd,
    /// Design point the factorization belongs to.
    pub rho: Vec<f64>,
}

pub fn solve_condensed(sys: CondensedSystem) -> Result<CondensedSolution> {
    let factor = DenseSpd::factor(&sys.k).map_err(|bad_row| {
        let (port, mode) = sys.map.locate_kept(bad_row);
        Error::NotPositiveDefinite { port, mode }
    })?;
    let u = factor.solve_vec(&sys.f);
    Ok(CondensedSolution {
        map: sys.map,
        mode: sys.mode,
        u,
        factor,
        rho: sys.rho,
    })
}

impl CondensedSolution {
    /// Modal coefficients of one instance in its offline column order,
    /// zeros on Dirichlet blocks.
    pub fn instance_coeffs(
        &self,
        gs: &GroundStructure,
        offline: &OfflineSet,
        i: usize,
    ) -> DVector<f64> {
        let off = offline.component(gs.instances[i].kind);
        let mut coeffs = DVector::zeros(off.n_modes());
        let mut at = 0;
        for &gp in &gs.local_to_global[i] {
            let base = self.map.port_offsets[gp];
            for k in 0..self.map.port_dims[gp] {
                if let Some(r) = self.map.keep[base + k] {
                    coeffs[at] = self.u[r];
                }
                at += 1;
            }
        }
        coeffs
    }

    /// Adjoint solve against the retained factor.
    pub fn adjoint(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.factor.solve_vec(rhs)
    }
}

/// Per-instance nodal displacement fields.
pub fn reconstruct(
    gs: &GroundStructure,
    offline: &OfflineSet,
    solution: &CondensedSolution,
) -> Vec<DVector<f64>> {
    gs.instances
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            let off = offline.component(inst.kind);
            let coeffs = solution.instance_coeffs(gs, offline, i);
            &off.phi * coeffs
        })
        .collect()
}
