//! Pairwise training of reduced port bases.
//!
//! Two reference components are bonded across one shared port and solved
//! under random prescribed displacements on their exterior ports; the shared
//! port trace of each solve is a snapshot of what that interface class sees
//! in situ. Boundary data are standard normal modal coefficients damped by
//! (1 + k)^(-eta/10), so larger eta feeds the pair smoother data. POD under
//! the port mass inner product then compresses the pooled snapshots per
//! interface class and displacement component, and the constant mode is
//! prepended so uniform tractions and rigid translations stay exactly
//! representable.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fem::{Material, SimpLaw};
use crate::ground::{instantiate, GroundStructure, Layout};
use crate::linalg::generalized_symmetric_eig;
use crate::mesh::{ComponentKind, ComponentSet, EdgeId, PortClass, ALL_KINDS};
use crate::offline::PortBasisSet;
use crate::oracle::{assemble_global, port_global_dofs};
use crate::port_basis::{smoothing_weights, PortBasis1d};

#[derive(Debug, Clone)]
pub struct TrainingConfig {
    pub n_snapshots: usize,
    pub eta: f64,
    pub seed: u64,
    /// POD energy to capture, per displacement component.
    pub energy_fraction: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            n_snapshots: 100,
            eta: 10.0,
            seed: 2024,
            energy_fraction: 0.999,
        }
    }
}

/// Shared-port traces of one trained pair.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub class: PortClass,
    /// Per displacement component; columns are snapshots.
    pub traces: [DMatrix<f64>; 2],
    /// Worst relative equilibrium residual over all snapshot solves.
    pub max_residual: f64,
}

/// All (A, B) orderings that can bond across an interface of this class:
/// vertical interfaces need a right port on A and a left port on B,
/// horizontal ones a top port on A and a bottom port on B.
pub fn trainable_pairs(class: PortClass) -> Vec<(ComponentKind, ComponentKind)> {
    let (ea, eb) = match class {
        PortClass::Vertical => (EdgeId::Right, EdgeId::Left),
        PortClass::Horizontal => (EdgeId::Top, EdgeId::Bottom),
    };
    let mut out = Vec::new();
    for &a in &ALL_KINDS {
        if !a.has_port(ea) {
            continue;
        }
        for &b in &ALL_KINDS {
            if b.has_port(eb) {
                out.push((a, b));
            }
        }
    }
    out
}

fn pair_ground(
    set: &ComponentSet,
    a: ComponentKind,
    b: ComponentKind,
    class: PortClass,
) -> Result<GroundStructure> {
    let mut layout = match class {
        PortClass::Vertical => {
            let mut l = Layout::empty(2, 1);
            l.set(0, 0, a);
            l.set(1, 0, b);
            l
        }
        PortClass::Horizontal => {
            let mut l = Layout::empty(1, 2);
            l.set(0, 0, a);
            l.set(0, 1, b);
            l
        }
    };
    layout.dirichlet.clear();
    let gs = instantiate(&layout, set)?;
    if gs.n_paired_ports() != 1 {
        return Err(Error::Training(format!(
            "{a:?}/{b:?} cannot bond across a {class:?} interface"
        )));
    }
    Ok(gs)
}

/// Solves the two-component pair under `n_snapshots` random exterior
/// boundary data sets and returns the shared-port traces.
pub fn pairwise_train(
    set: &ComponentSet,
    material: &Material,
    a: ComponentKind,
    b: ComponentKind,
    class: PortClass,
    n_snapshots: usize,
    eta: f64,
    seed: u64,
) -> Result<SnapshotSet> {
    if n_snapshots == 0 {
        return Err(Error::Training("need at least one snapshot".into()));
    }
    let gs = pair_ground(set, a, b, class)?;
    let sys = assemble_global(&gs, set, material, &SimpLaw::default(), &[1.0, 1.0])?;
    let basis1d = crate::port_basis::build_port_basis(
        set.order,
        set.port_res,
        set.component(a).port_length(),
    )?;
    let weights = smoothing_weights(eta, basis1d.n_nodes());

    // exterior = every singleton global port, prescribed; shared port free
    let shared = gs
        .global_ports
        .iter()
        .position(|p| p.is_paired())
        .expect("pair has a shared port");
    let mut fixed = vec![false; sys.mesh.n_dofs()];
    let mut exterior: Vec<usize> = Vec::new();
    for (gp, port) in gs.global_ports.iter().enumerate() {
        if gp != shared && !port.is_paired() {
            exterior.push(gp);
        }
    }
    for &gp in &exterior {
        for d in port_global_dofs(&gs, set, &sys.mesh, gp) {
            fixed[d] = true;
        }
    }

    let n = sys.mesh.n_dofs();
    let mut free_index = vec![usize::MAX; n];
    let mut n_free = 0;
    for d in 0..n {
        if !fixed[d] {
            free_index[d] = n_free;
            n_free += 1;
        }
    }
    let mut reduced: Vec<(usize, usize, f64)> = Vec::new();
    for &(i, j, v) in &sys.triplets {
        if free_index[i] != usize::MAX && free_index[j] != usize::MAX {
            reduced.push((free_index[i], free_index[j], v));
        }
    }
    let kff = faer::sparse::SparseColMat::<usize, f64>::try_new_from_triplets(
        n_free, n_free, &reduced,
    )
    .map_err(|e| Error::Training(format!("pair assembly failed: {e:?}")))?;
    let chol = kff
        .sp_cholesky(faer::Side::Lower)
        .map_err(|_| Error::Training("pair stiffness not positive definite".into()))?;

    // Prescribed data per snapshot, drawn in a fixed order so a seed fully
    // determines the set.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_modes = basis1d.n_nodes();
    let mut g_all = DMatrix::<f64>::zeros(n, n_snapshots);
    for s in 0..n_snapshots {
        for &gp in &exterior {
            let dofs = port_global_dofs(&gs, set, &sys.mesh, gp);
            for c in 0..2 {
                let mut coeffs = DVector::zeros(n_modes);
                for k in 0..n_modes {
                    let xi: f64 = rng.sample(StandardNormal);
                    coeffs[k] = xi * weights[k];
                }
                let nodal = &basis1d.modes * coeffs;
                for (row, chunk) in dofs.chunks(2).enumerate() {
                    g_all[(chunk[c], s)] = nodal[row];
                }
            }
        }
    }

    // rhs_s = -K_fE g_s for all snapshots at once
    let mut rhs = faer::Mat::<f64>::zeros(n_free, n_snapshots);
    for &(i, j, v) in &sys.triplets {
        if free_index[i] != usize::MAX && fixed[j] {
            for s in 0..n_snapshots {
                rhs[(free_index[i], s)] -= v * g_all[(j, s)];
            }
        }
    }
    use faer::sparse::linalg::solvers::SpSolver;
    let sol = chol.solve(&rhs);

    // relative equilibrium residual of the batched solves
    let mut resid = rhs.clone();
    for &(i, j, v) in &reduced {
        for s in 0..n_snapshots {
            resid[(i, s)] -= v * sol[(j, s)];
        }
    }
    let mut max_residual: f64 = 0.0;
    for s in 0..n_snapshots {
        let mut rn: f64 = 0.0;
        let mut bn: f64 = 0.0;
        for i in 0..n_free {
            rn = rn.max(resid[(i, s)].abs());
            bn = bn.max(rhs[(i, s)].abs());
        }
        max_residual = max_residual.max(rn / bn.max(f64::MIN_POSITIVE));
    }

    let shared_dofs = port_global_dofs(&gs, set, &sys.mesh, shared);
    let n_port = shared_dofs.len() / 2;
    let mut traces = [
        DMatrix::zeros(n_port, n_snapshots),
        DMatrix::zeros(n_port, n_snapshots),
    ];
    for s in 0..n_snapshots {
        for (row, chunk) in shared_dofs.chunks(2).enumerate() {
            for c in 0..2 {
                let d = chunk[c];
                traces[c][(row, s)] = if fixed[d] {
                    g_all[(d, s)]
                } else {
                    sol[(free_index[d], s)]
                };
            }
        }
    }
    Ok(SnapshotSet {
        class,
        traces: traces.into(),
        max_residual,
    })
}

/// POD of snapshot columns under the port mass inner product.
#[derive(Debug, Clone)]
pub struct PodResult {
    /// M-orthonormal modes, constant first.
    pub modes: DMatrix<f64>,
    /// POD eigenvalues of the kept non-constant modes, descending.
    pub energies: Vec<f64>,
}

pub fn pod_reduce(
    snapshots: &DMatrix<f64>,
    basis1d: &PortBasis1d,
    energy_fraction: f64,
) -> Result<PodResult> {
    if snapshots.ncols() == 0 {
        return Err(Error::Training("empty snapshot set".into()));
    }
    if !(energy_fraction > 0.0 && energy_fraction <= 1.0) {
        return Err(Error::Training("energy fraction must lie in (0, 1]".into()));
    }
    let m = &basis1d.mass;
    let n = snapshots.nrows();
    // Correlation in physical space: eig of (M S M, M) shares the spectrum
    // of the snapshot Gram and yields M-orthonormal modes directly.
    let s = snapshots * snapshots.transpose();
    let a_raw = m * s * m;
    let a = (&a_raw + a_raw.transpose()) * 0.5;
    let eig = generalized_symmetric_eig(&a, m)?;

    let lambda_max = eig.values.last().copied().unwrap_or(0.0).max(0.0);
    let clamp = |v: f64| if v > 1e-12 * lambda_max { v } else { 0.0 };
    let total: f64 = eig.values.iter().map(|&v| clamp(v)).sum();
    // descending order = reversed ascending
    let mut kept = 0;
    let mut acc = 0.0;
    for i in (0..n).rev() {
        let v = clamp(eig.values[i]);
        if v == 0.0 || acc >= energy_fraction * total {
            break;
        }
        acc += v;
        kept += 1;
    }
    if total == 0.0 {
        kept = 0;
    }

    // prepend the constant mode, then mass-Gram-Schmidt the kept modes
    let constant = DVector::from_element(n, 1.0 / basis1d.length.sqrt());
    let mut cols: Vec<DVector<f64>> = vec![constant];
    let mut energies = Vec::new();
    for i in ((n - kept)..n).rev() {
        let mut v = eig.vectors.column(i).into_owned();
        let orig = (v.transpose() * m * &v)[(0, 0)].sqrt();
        for q in &cols {
            let proj = (q.transpose() * m * &v)[(0, 0)];
            v -= proj * q;
        }
        let norm = (v.transpose() * m * &v)[(0, 0)].sqrt();
        if norm > 1e-8 * orig {
            v /= norm;
            cols.push(v);
            energies.push(clamp(eig.values[i]));
        }
    }
    let mut modes = DMatrix::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        modes.set_column(j, c);
    }
    Ok(PodResult { modes, energies })
}

/// Dimensions and provenance of one training run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainingReport {
    pub n_snapshots_per_pair: usize,
    pub eta: f64,
    pub seed: u64,
    pub energy_fraction: f64,
    /// `[class][displacement component]`, class 0 = horizontal.
    pub dims: [[usize; 2]; 2],
    pub snapshot_counts: [usize; 2],
}

/// Trains reduced bases for both interface classes by pooling the snapshots
/// of every bondable reference pair.
pub fn train_port_bases(
    set: &ComponentSet,
    material: &Material,
    config: &TrainingConfig,
) -> Result<(PortBasisSet, TrainingReport)> {
    let length = set.cell_size / 3.0;
    let basis1d = crate::port_basis::build_port_basis(set.order, set.port_res, length)?;
    let mut modes: [[DMatrix<f64>; 2]; 2] = Default::default();
    let mut dims = [[0usize; 2]; 2];
    let mut snapshot_counts = [0usize; 2];
    for (ci, class) in [PortClass::Horizontal, PortClass::Vertical].into_iter().enumerate() {
        let pairs = trainable_pairs(class);
        let mut pooled: [Vec<DMatrix<f64>>; 2] = [Vec::new(), Vec::new()];
        for (pi, &(a, b)) in pairs.iter().enumerate() {
            let snap = pairwise_train(
                set,
                material,
                a,
                b,
                class,
                config.n_snapshots,
                config.eta,
                // distinct deterministic stream per pair
                config.seed ^ ((ci as u64) << 32) ^ (pi as u64),
            )?;
            for c in 0..2 {
                pooled[c].push(snap.traces[c].clone());
            }
        }
        for c in 0..2 {
            let n_rows = basis1d.n_nodes();
            let n_cols: usize = pooled[c].iter().map(|m| m.ncols()).sum();
            let mut all = DMatrix::zeros(n_rows, n_cols);
            let mut at = 0;
            for block in &pooled[c] {
                all.columns_mut(at, block.ncols()).copy_from(block);
                at += block.ncols();
            }
            snapshot_counts[ci] = n_cols;
            let pod = pod_reduce(&all, &basis1d, config.energy_fraction)?;
            dims[ci][c] = pod.modes.ncols();
            modes[ci][c] = pod.modes;
        }
    }
    let report = TrainingReport {
        n_snapshots_per_pair: config.n_snapshots,
        eta: config.eta,
        seed: config.seed,
        energy_fraction: config.energy_fraction,
        dims,
        snapshot_counts,
    };
    Ok((PortBasisSet { basis1d, modes }, report))
}
