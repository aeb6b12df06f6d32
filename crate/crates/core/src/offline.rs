//! Per-reference-component offline data: lifted port modes, bubble
//! corrections, condensed stiffness contributions, and stress gradient
//! tables.
//!
//! Everything is computed once at unit density. The component stiffness
//! scales affinely with the density law, and liftings are invariant under
//! that scaling, so one offline pass serves every density vector the
//! optimizer visits. Reduction to a trained basis is a projection of the
//! full-basis data (lifting is linear in the prescribed trace), which keeps
//! reduced and full data exactly consistent.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::{assemble_component_stiffness, b_matrix_at, corner_coords, full_dof_map, Material};
use crate::linalg::{BandCholesky, BandMatrix};
use crate::mesh::{ComponentKind, ComponentSet, ElementOrder, PortClass, ReferenceComponent};
use crate::port_basis::{build_port_basis, PortBasis1d};
use crate::quadrature;

/// Trace bases per (interface class, displacement component).
///
/// Columns are port-node vectors, M-orthonormal with the constant first.
/// The full set uses the untruncated Laplacian eigenbasis for all four
/// slots; trained sets may keep different dimensions per slot.
#[derive(Debug, Clone)]
pub struct PortBasisSet {
    pub basis1d: PortBasis1d,
    /// Indexed `[class][displacement component]`.
    pub modes: [[DMatrix<f64>; 2]; 2],
}

fn class_idx(class: PortClass) -> usize {
    match class {
        PortClass::Horizontal => 0,
        PortClass::Vertical => 1,
    }
}

impl PortBasisSet {
    pub fn full(order: ElementOrder, port_res: usize, port_length: f64) -> Result<Self> {
        let basis1d = build_port_basis(order, port_res, port_length)?;
        let m = basis1d.modes.clone();
        Ok(PortBasisSet {
            basis1d,
            modes: [[m.clone(), m.clone()], [m.clone(), m]],
        })
    }

    pub fn modes_of(&self, class: PortClass, comp: usize) -> &DMatrix<f64> {
        &self.modes[class_idx(class)][comp]
    }

    pub fn dim_of(&self, class: PortClass, comp: usize) -> usize {
        self.modes_of(class, comp).ncols()
    }

    /// Modes of both displacement components on a port: total block size.
    pub fn port_block(&self, class: PortClass) -> usize {
        self.dim_of(class, 0) + self.dim_of(class, 1)
    }

    pub fn is_full(&self) -> bool {
        let n = self.basis1d.n_nodes();
        self.modes.iter().flatten().all(|m| m.ncols() == n)
    }
}

/// Column bookkeeping of per-component modal data: local port, displacement
/// component, mode number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeIndex {
    pub port: usize,
    pub comp: usize,
    pub mode: usize,
}

/// Offline dataset of one reference component for one basis set.
#[derive(Debug, Clone)]
pub struct ComponentOffline {
    pub kind: ComponentKind,
    pub mode_index: Vec<ModeIndex>,
    /// Start column of each local port block in the modal ordering.
    pub port_offsets: Vec<usize>,
    /// Interface functions (lifted modes, bubbles folded in), one column per
    /// modal DOF, `n_dofs` rows.
    pub phi: DMatrix<f64>,
    /// Modal condensed stiffness at unit density: `phi^T K0 phi`.
    pub a0: DMatrix<f64>,
    /// Displacement gradients of every interface function at every
    /// quadrature point: `[du/dx, du/dy, dv/dx, dv/dy]`, rows = qps.
    pub grads: [DMatrix<f64>; 4],
    /// Physical quadrature coefficients (weight x |J| x thickness) per qp.
    pub qp_weights: Vec<f64>,
    /// Owning element of each quadrature point.
    pub qp_element: Vec<usize>,
}

impl ComponentOffline {
    pub fn n_modes(&self) -> usize {
        self.mode_index.len()
    }

    pub fn n_qp(&self) -> usize {
        self.qp_weights.len()
    }

    /// Columns belonging to local port `l`.
    pub fn port_mode_range(&self, l: usize) -> std::ops::Range<usize> {
        let start = self.port_offsets[l];
        let end = self
            .port_offsets
            .get(l + 1)
            .copied()
            .unwrap_or(self.mode_index.len());
        start..end
    }
}

/// Interior factorization of a component at unit density, cached for the
/// many lifting/bubble right-hand sides.
pub struct InteriorOperator {
    /// Full stiffness in band storage (grid DOF order).
    pub k_full: BandMatrix,
    /// Interior-only factor; interior DOFs keep their relative grid order.
    pub chol_ii: BandCholesky,
    /// Maps full DOF -> interior index (None on port DOFs).
    pub interior_index: Vec<Option<usize>>,
    pub n_interior: usize,
}

pub fn build_interior_operator(
    comp: &ReferenceComponent,
    material: &Material,
) -> Result<InteriorOperator> {
    let n = comp.n_dofs();
    let k_full = assemble_component_stiffness(comp, material, &full_dof_map(comp), n);
    let on_port = comp.port_node_set();
    let mut interior_index = vec![None; n];
    let mut n_interior = 0;
    for node in 0..comp.n_nodes() {
        if !on_port[node] {
            for c in 0..2 {
                interior_index[2 * node + c] = Some(n_interior);
                n_interior += 1;
            }
        }
    }
    if n_interior == 0 {
        return Err(Error::Geometry(
            "component has no interior DOFs to condense".into(),
        ));
    }
    let k_ii = assemble_component_stiffness(comp, material, &interior_index, n_interior);
    let chol_ii = k_ii.cholesky()?;
    Ok(InteriorOperator {
        k_full,
        chol_ii,
        interior_index,
        n_interior,
    })
}

impl InteriorOperator {
    /// Energy-harmonic extension: fills the interior of a field with
    /// prescribed boundary (port) values so the interior residual vanishes.
    /// Input columns carry the prescribed values on port DOFs and zeros
    /// inside; output columns are complete fields.
    pub fn lift(&self, prescribed: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = prescribed.clone();
        let kv = self.k_full.mul_mat(prescribed);
        for c in 0..out.ncols() {
            let mut rhs = vec![0.0; self.n_interior];
            for (d, &idx) in self.interior_index.iter().enumerate() {
                if let Some(i) = idx {
                    rhs[i] = -kv[(d, c)];
                }
            }
            self.chol_ii.solve_in_place(&mut rhs);
            for (d, &idx) in self.interior_index.iter().enumerate() {
                if let Some(i) = idx {
                    out[(d, c)] = rhs[i];
                }
            }
        }
        out
    }

    /// Bubble correction of arbitrary trace-prescribed fields: the interior
    /// update that restores equilibrium without touching port values. Zero
    /// when the input is already an energy-harmonic lifting.
    pub fn bubble_correction(&self, fields: &DMatrix<f64>) -> DMatrix<f64> {
        let kv = self.k_full.mul_mat(fields);
        let mut out = DMatrix::zeros(fields.nrows(), fields.ncols());
        for c in 0..fields.ncols() {
            let mut rhs = vec![0.0; self.n_interior];
            for (d, &idx) in self.interior_index.iter().enumerate() {
                if let Some(i) = idx {
                    rhs[i] = -kv[(d, c)];
                }
            }
            self.chol_ii.solve_in_place(&mut rhs);
            for (d, &idx) in self.interior_index.iter().enumerate() {
                if let Some(i) = idx {
                    out[(d, c)] = rhs[i];
                }
            }
        }
        out
    }

    /// Forcing bubble: interior response to a load vector. Zero whenever
    /// loads act on ports only.
    pub fn forcing_bubble(&self, load: &DVector<f64>) -> DVector<f64> {
        let mut rhs = vec![0.0; self.n_interior];
        for (d, &idx) in self.interior_index.iter().enumerate() {
            if let Some(i) = idx {
                rhs[i] = load[d];
            }
        }
        self.chol_ii.solve_in_place(&mut rhs);
        let mut out = DVector::zeros(load.len());
        for (d, &idx) in self.interior_index.iter().enumerate() {
            if let Some(i) = idx {
                out[d] = rhs[i];
            }
        }
        out
    }
}

/// Builds the modal column order and the prescribed-trace matrix of a
/// component for a basis set.
fn prescribed_traces(
    comp: &ReferenceComponent,
    bases: &PortBasisSet,
) -> (Vec<ModeIndex>, Vec<usize>, DMatrix<f64>) {
    let mut mode_index = Vec::new();
    let mut port_offsets = Vec::new();
    for (l, port) in comp.ports.iter().enumerate() {
        port_offsets.push(mode_index.len());
        for c in 0..2 {
            let n_modes = bases.dim_of(port.edge.class(), c);
            for k in 0..n_modes {
                mode_index.push(ModeIndex { port: l, comp: c, mode: k });
            }
        }
    }
    let mut traces = DMatrix::zeros(comp.n_dofs(), mode_index.len());
    for (col, mi) in mode_index.iter().enumerate() {
        let port = &comp.ports[mi.port];
        let modes = bases.modes_of(port.edge.class(), mi.comp);
        for (row, &node) in port.nodes.iter().enumerate() {
            traces[(2 * node + mi.comp, col)] = modes[(row, mi.mode)];
        }
    }
    (mode_index, port_offsets, traces)
}

/// Displacement gradient tables of the interface functions at the stress
/// quadrature points (4 per element, degree-2 rule).
fn gradient_tables(
    comp: &ReferenceComponent,
    phi: &DMatrix<f64>,
) -> ([DMatrix<f64>; 4], Vec<f64>, Vec<usize>) {
    let quad = quadrature::degree2_four_point();
    let n_qp = comp.n_elements() * quad.points.len();
    let n_modes = phi.ncols();
    let mut grads = [
        DMatrix::zeros(n_qp, n_modes),
        DMatrix::zeros(n_qp, n_modes),
        DMatrix::zeros(n_qp, n_modes),
        DMatrix::zeros(n_qp, n_modes),
    ];
    let mut qp_weights = Vec::with_capacity(n_qp);
    let mut qp_element = Vec::with_capacity(n_qp);
    let nen = comp.order.nodes_per_element();
    let mut local = DMatrix::zeros(2 * nen, n_modes);
    for e in 0..comp.n_elements() {
        let corners = corner_coords(comp, e);
        let nodes = comp.element_nodes(e);
        for (a, &n) in nodes.iter().enumerate() {
            for c in 0..2 {
                local.row_mut(2 * a + c).copy_from(&phi.row(2 * n + c));
            }
        }
        for (q, (&w, p)) in quad.weights.iter().zip(&quad.points).enumerate() {
            let (b, det) = b_matrix_at(&corners, comp.order, p[0], p[1]);
            let row = e * quad.points.len() + q;
            qp_weights.push(w * det * comp.thickness);
            qp_element.push(e);
            // b rows: (du/dx, dv/dy, du/dy + dv/dx); rebuild the four plain
            // derivatives from the nodal gradients instead.
            for a in 0..nen {
                let gx = b[(0, 2 * a)];
                let gy = b[(1, 2 * a + 1)];
                for m in 0..n_modes {
                    let ux = local[(2 * a, m)];
                    let uy = local[(2 * a + 1, m)];
                    grads[0][(row, m)] += gx * ux;
                    grads[1][(row, m)] += gy * ux;
                    grads[2][(row, m)] += gx * uy;
                    grads[3][(row, m)] += gy * uy;
                }
            }
            let _ = q;
        }
    }
    (grads, qp_weights, qp_element)
}

/// Full offline pass for one reference component.
pub fn build_component_offline(
    comp: &ReferenceComponent,
    material: &Material,
    bases: &PortBasisSet,
) -> Result<ComponentOffline> {
    let op = build_interior_operator(comp, material)?;
    let (mode_index, port_offsets, traces) = prescribed_traces(comp, bases);
    let phi = op.lift(&traces);
    let a0_raw = phi.transpose() * op.k_full.mul_mat(&phi);
    let a0 = (&a0_raw + a0_raw.transpose()) * 0.5;
    let (grads, qp_weights, qp_element) = gradient_tables(comp, &phi);
    Ok(ComponentOffline {
        kind: comp.kind,
        mode_index,
        port_offsets,
        phi,
        a0,
        grads,
        qp_weights,
        qp_element,
    })
}

/// Expansion coefficients of `reduced` columns in `full` columns under the
/// port mass inner product: `reduced = full * C`.
fn expansion_matrix(full: &DMatrix<f64>, reduced: &DMatrix<f64>, mass: &DMatrix<f64>) -> DMatrix<f64> {
    full.transpose() * mass * reduced
}

impl ComponentOffline {
    /// Projects full-basis offline data onto a (possibly truncated) basis
    /// set. Exact because lifting is linear in the prescribed trace.
    pub fn project(
        &self,
        comp: &ReferenceComponent,
        full: &PortBasisSet,
        reduced: &PortBasisSet,
    ) -> ComponentOffline {
        assert!(full.is_full(), "projection source must be the full basis");
        let mass = &full.basis1d.mass;
        // per (class, comp) expansion blocks
        let mut c_blocks: [[DMatrix<f64>; 2]; 2] = Default::default();
        for cl in 0..2 {
            for dc in 0..2 {
                c_blocks[cl][dc] =
                    expansion_matrix(&full.modes[cl][dc], &reduced.modes[cl][dc], mass);
            }
        }
        // Block-diagonal transfer: column (port, comp, reduced mode) is a
        // combination of full modes of the same port and component.
        let (mode_index, port_offsets, _) = prescribed_traces(comp, reduced);
        let n_red = mode_index.len();
        let mut t = DMatrix::zeros(self.n_modes(), n_red);
        for (col, mi) in mode_index.iter().enumerate() {
            let class = comp.ports[mi.port].edge.class();
            let c_block = &c_blocks[class_idx(class)][mi.comp];
            for (row, fi) in self.mode_index.iter().enumerate() {
                if fi.port == mi.port && fi.comp == mi.comp {
                    t[(row, col)] = c_block[(fi.mode, mi.mode)];
                }
            }
        }
        let phi = &self.phi * &t;
        let a0_raw = t.transpose() * &self.a0 * &t;
        let a0 = (&a0_raw + a0_raw.transpose()) * 0.5;
        let grads = [
            &self.grads[0] * &t,
            &self.grads[1] * &t,
            &self.grads[2] * &t,
            &self.grads[3] * &t,
        ];
        ComponentOffline {
            kind: self.kind,
            mode_index,
            port_offsets,
            phi,
            a0,
            grads,
            qp_weights: self.qp_weights.clone(),
            qp_element: self.qp_element.clone(),
        }
    }
}

/// Offline data for all six reference components under one basis set.
pub struct OfflineSet {
    pub bases: PortBasisSet,
    components: Vec<ComponentOffline>,
}

impl OfflineSet {
    pub fn build(set: &ComponentSet, material: &Material, bases: PortBasisSet) -> Result<Self> {
        let components = crate::mesh::ALL_KINDS
            .iter()
            .map(|&k| build_component_offline(set.component(k), material, &bases))
            .collect::<Result<Vec<_>>>()?;
        Ok(OfflineSet { bases, components })
    }

    /// Reassembles a set from stored records, which must follow the
    /// canonical `ALL_KINDS` order.
    pub fn from_parts(bases: PortBasisSet, components: Vec<ComponentOffline>) -> Result<Self> {
        let ordered = components.len() == crate::mesh::ALL_KINDS.len()
            && components
                .iter()
                .zip(crate::mesh::ALL_KINDS)
                .all(|(c, k)| c.kind == k);
        if !ordered {
            return Err(crate::error::Error::LibraryFormat(
                "component records out of order".into(),
            ));
        }
        Ok(OfflineSet { bases, components })
    }

    pub fn component(&self, kind: ComponentKind) -> &ComponentOffline {
        let idx = crate::mesh::ALL_KINDS.iter().position(|&k| k == kind).unwrap();
        &self.components[idx]
    }

    /// Projects every component onto a truncated basis set.
    pub fn project(&self, set: &ComponentSet, reduced: PortBasisSet) -> OfflineSet {
        let components = crate::mesh::ALL_KINDS
            .iter()
            .map(|&k| {
                self.component(k)
                    .project(set.component(k), &self.bases, &reduced)
            })
            .collect();
        OfflineSet {
            bases: reduced,
            components,
        }
    }
}
