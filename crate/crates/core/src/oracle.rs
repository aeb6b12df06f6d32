//! Monolithic full-order reference solver.
//!
//! Assembles every placed component into one global system and solves it
//! directly. Components are bonded exclusively across paired ports: only
//! port nodes of fused interfaces are identified, coincident boundary nodes
//! elsewhere stay separate. That matches the component model exactly, so the
//! condensed solver with untruncated bases must reproduce this solution to
//! solver accuracy — this module is the ground truth the reduced pipeline is
//! tested against, and the validation solve for extracted binary designs.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fem::{element_stiffness, port_load_vector, Material, SimpLaw};
use crate::ground::GroundStructure;
use crate::fem::corner_coords;
use crate::mesh::ComponentSet;
use crate::quadrature;

/// Global node identification for a ground structure.
#[derive(Debug, Clone)]
pub struct GlobalMesh {
    pub n_nodes: usize,
    pub coords: Vec<[f64; 2]>,
    /// `node_of[i][n]` = global node of local node `n` of instance `i`.
    pub node_of: Vec<Vec<usize>>,
}

impl GlobalMesh {
    pub fn n_dofs(&self) -> usize {
        2 * self.n_nodes
    }
}

/// Identifies paired-port nodes across instances; all other nodes remain
/// instance-private.
pub fn merge_ground_mesh(gs: &GroundStructure, set: &ComponentSet) -> GlobalMesh {
    let offsets: Vec<usize> = gs
        .instances
        .iter()
        .scan(0usize, |acc, inst| {
            let o = *acc;
            *acc += set.component(inst.kind).n_nodes();
            Some(o)
        })
        .collect();
    let total: usize = offsets.last().copied().unwrap_or(0)
        + gs.instances
            .last()
            .map_or(0, |inst| set.component(inst.kind).n_nodes());

    let mut parent: Vec<usize> = (0..total).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for gp in gs.global_ports.iter().filter(|p| p.is_paired()) {
        let (ia, la) = gp.members[0];
        let (ib, lb) = gp.members[1];
        let pa = &set.component(gs.instances[ia].kind).ports[la];
        let pb = &set.component(gs.instances[ib].kind).ports[lb];
        for (&na, &nb) in pa.nodes.iter().zip(&pb.nodes) {
            let ra = find(&mut parent, offsets[ia] + na);
            let rb = find(&mut parent, offsets[ib] + nb);
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }

    let mut label = vec![usize::MAX; total];
    let mut n_nodes = 0;
    for raw in 0..total {
        let root = find(&mut parent, raw);
        if label[root] == usize::MAX {
            label[root] = n_nodes;
            n_nodes += 1;
        }
        label[raw] = label[root];
    }

    let mut coords = vec![[0.0f64; 2]; n_nodes];
    let mut node_of = Vec::with_capacity(gs.instances.len());
    for (i, inst) in gs.instances.iter().enumerate() {
        let comp = set.component(inst.kind);
        let mut map = Vec::with_capacity(comp.n_nodes());
        for (n, p) in comp.nodes.iter().enumerate() {
            let g = label[offsets[i] + n];
            coords[g] = [p[0] + inst.translation[0], p[1] + inst.translation[1]];
            map.push(g);
        }
        node_of.push(map);
    }
    GlobalMesh {
        n_nodes,
        coords,
        node_of,
    }
}

/// Assembled global system before Dirichlet elimination.
pub struct GlobalSystem {
    pub mesh: GlobalMesh,
    /// Full symmetric triplets (both triangles).
    pub triplets: Vec<(usize, usize, f64)>,
    /// Per-DOF Dirichlet mask.
    pub fixed: Vec<bool>,
    pub f: Vec<f64>,
}

impl GlobalSystem {
    /// Dense copy for small verification problems.
    pub fn dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.mesh.n_dofs();
        let mut a = nalgebra::DMatrix::zeros(n, n);
        for &(i, j, v) in &self.triplets {
            a[(i, j)] += v;
        }
        a
    }
}

pub fn assemble_global(
    gs: &GroundStructure,
    set: &ComponentSet,
    material: &Material,
    simp: &SimpLaw,
    rho: &[f64],
) -> Result<GlobalSystem> {
    if rho.len() != gs.n_instances() {
        return Err(Error::Layout(format!(
            "density vector length {} != {} instances",
            rho.len(),
            gs.n_instances()
        )));
    }
    let mesh = merge_ground_mesh(gs, set);

    // Element stiffness blocks per reference kind, assembled once.
    let d = material.d_matrix();
    let quad = quadrature::degree2_four_point();
    let mut kind_triplets: std::collections::BTreeMap<
        crate::mesh::ComponentKind,
        Vec<(usize, usize, f64)>,
    > = Default::default();
    for inst in &gs.instances {
        kind_triplets.entry(inst.kind).or_insert_with(|| {
            let comp = set.component(inst.kind);
            let mut trips = Vec::new();
            for e in 0..comp.n_elements() {
                let ke =
                    element_stiffness(&corner_coords(comp, e), comp.order, &d, comp.thickness, &quad);
                let nodes = comp.element_nodes(e);
                for (a, &na) in nodes.iter().enumerate() {
                    for ca in 0..2 {
                        for (b, &nb) in nodes.iter().enumerate() {
                            for cb in 0..2 {
                                trips.push((
                                    2 * na + ca,
                                    2 * nb + cb,
                                    ke[(2 * a + ca, 2 * b + cb)],
                                ));
                            }
                        }
                    }
                }
            }
            trips
        });
    }

    let mut triplets = Vec::new();
    for (i, inst) in gs.instances.iter().enumerate() {
        let s = simp.stiffness(rho[i]);
        let map = &mesh.node_of[i];
        for &(ld_i, ld_j, v) in &kind_triplets[&inst.kind] {
            let gi = 2 * map[ld_i / 2] + ld_i % 2;
            let gj = 2 * map[ld_j / 2] + ld_j % 2;
            triplets.push((gi, gj, s * v));
        }
    }

    let mut fixed = vec![false; mesh.n_dofs()];
    for &gp in &gs.dirichlet_ports {
        for &(i, l) in &gs.global_ports[gp].members {
            let comp = set.component(gs.instances[i].kind);
            for &n in &comp.ports[l].nodes {
                fixed[2 * mesh.node_of[i][n]] = true;
                fixed[2 * mesh.node_of[i][n] + 1] = true;
            }
        }
    }

    let mut f = vec![0.0; mesh.n_dofs()];
    for &(gp, force) in &gs.loads {
        // For fused interfaces both members address the same global nodes, so
        // the traction is applied through the first member only.
        let (i, l) = gs.global_ports[gp].members[0];
        let comp = set.component(gs.instances[i].kind);
        let fl = port_load_vector(comp, l, force);
        for n in 0..comp.n_nodes() {
            let g = mesh.node_of[i][n];
            f[2 * g] += fl[2 * n];
            f[2 * g + 1] += fl[2 * n + 1];
        }
    }

    Ok(GlobalSystem {
        mesh,
        triplets,
        fixed,
        f,
    })
}

/// Full-order solution on the merged mesh. Dirichlet DOFs hold zeros.
pub struct OracleSolution {
    pub mesh: GlobalMesh,
    pub u: Vec<f64>,
    pub n_free: usize,
    /// `|K u - f| / |f|` over free DOFs, for diagnostics.
    pub residual: f64,
}

impl OracleSolution {
    /// Local nodal displacement of one instance.
    pub fn instance_field(&self, set: &ComponentSet, gs: &GroundStructure, i: usize) -> DVector<f64> {
        let comp = set.component(gs.instances[i].kind);
        let mut u = DVector::zeros(comp.n_dofs());
        for n in 0..comp.n_nodes() {
            let g = self.mesh.node_of[i][n];
            u[2 * n] = self.u[2 * g];
            u[2 * n + 1] = self.u[2 * g + 1];
        }
        u
    }
}

fn quiet_parallelism() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| faer::set_global_parallelism(faer::Parallelism::None));
}

pub fn solve_global(sys: &GlobalSystem) -> Result<OracleSolution> {
    quiet_parallelism();
    let n = sys.mesh.n_dofs();
    let mut free_index = vec![usize::MAX; n];
    let mut n_free = 0;
    for d in 0..n {
        if !sys.fixed[d] {
            free_index[d] = n_free;
            n_free += 1;
        }
    }
    if n_free == 0 {
        return Err(Error::Layout("all DOFs constrained".into()));
    }

    let mut reduced: Vec<(usize, usize, f64)> = Vec::with_capacity(sys.triplets.len());
    for &(i, j, v) in &sys.triplets {
        if free_index[i] != usize::MAX && free_index[j] != usize::MAX {
            reduced.push((free_index[i], free_index[j], v));
        }
    }
    let a = faer::sparse::SparseColMat::<usize, f64>::try_new_from_triplets(
        n_free, n_free, &reduced,
    )
    .map_err(|e| Error::Singular(format!("assembly failed: {e:?}")))?;
    let chol = a
        .sp_cholesky(faer::Side::Lower)
        .map_err(|_| Error::Singular("global stiffness not positive definite".into()))?;

    let mut rhs = faer::Col::<f64>::zeros(n_free);
    for d in 0..n {
        if free_index[d] != usize::MAX {
            rhs[free_index[d]] = sys.f[d];
        }
    }
    use faer::sparse::linalg::solvers::SpSolver;
    let x = chol.solve(&rhs);

    let mut u = vec![0.0; n];
    for d in 0..n {
        if free_index[d] != usize::MAX {
            u[d] = x[free_index[d]];
        }
    }

    // residual over free DOFs
    let mut r: Vec<f64> = sys
        .f
        .iter()
        .zip(&sys.fixed)
        .map(|(&fv, &fx)| if fx { 0.0 } else { fv })
        .collect();
    for &(i, j, v) in &sys.triplets {
        if !sys.fixed[i] && !sys.fixed[j] {
            r[i] -= v * u[j];
        }
    }
    let rn: f64 = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    let fn_: f64 = sys.f.iter().map(|x| x * x).sum::<f64>().sqrt();
    let residual = rn / fn_.max(f64::MIN_POSITIVE);

    Ok(OracleSolution {
        mesh: sys.mesh.clone(),
        u,
        n_free,
        residual,
    })
}

pub fn solve_oracle(
    gs: &GroundStructure,
    set: &ComponentSet,
    material: &Material,
    simp: &SimpLaw,
    rho: &[f64],
) -> Result<OracleSolution> {
    let sys = assemble_global(gs, set, material, simp, rho)?;
    solve_global(&sys)
}

/// Global DOF indices (x then y per node, port node order) of a global port,
/// read through its first member.
pub fn port_global_dofs(
    gs: &GroundStructure,
    set: &ComponentSet,
    mesh: &GlobalMesh,
    gp: usize,
) -> Vec<usize> {
    let (i, l) = gs.global_ports[gp].members[0];
    let comp = set.component(gs.instances[i].kind);
    comp.ports[l]
        .nodes
        .iter()
        .flat_map(|&n| {
            let g = mesh.node_of[i][n];
            [2 * g, 2 * g + 1]
        })
        .collect()
}
