//! Black-and-white design extraction and full-order validation.
//!
//! Optimized densities become a manufacturable design in three steps: drop
//! components below a tolerance (the rest snap to full density), verify
//! every load still reaches a support through the remaining components, and
//! swap components with dangling ports for the lightest variants that keep
//! every live connection. The result is re-analyzed with the monolithic
//! full-order model, and ROM-against-full-order error measures quantify the
//! reduction quality.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fem::{b_matrix_at, corner_coords, shape_values, Material, SimpLaw};
use crate::ground::{instantiate, GroundStructure, Layout};
use crate::mesh::{ComponentKind, ComponentSet, ALL_KINDS};
use crate::oracle::{solve_oracle, OracleSolution};
use crate::quadrature::{degree2_four_point, degree5_nine_point};
use crate::stress::von_mises;

/// Drops every component below `rho_drop` and raises the rest to full
/// density. Fails when a loaded component is dropped or a load can no
/// longer reach a support through paired ports of the kept components.
pub fn drop_components(gs: &GroundStructure, rho: &[f64], rho_drop: f64) -> Result<Layout> {
    if !(0.0..1.0).contains(&rho_drop) || rho_drop == 0.0 {
        return Err(Error::Postprocess(format!(
            "dropping tolerance must lie in (0,1), got {rho_drop}"
        )));
    }
    if rho.len() != gs.n_instances() {
        return Err(Error::Postprocess("density length mismatch".into()));
    }
    let keep: Vec<bool> = rho.iter().map(|&r| r >= rho_drop).collect();

    let mut layout = Layout::empty(gs.layout.nx(), gs.layout.ny());
    for (i, inst) in gs.instances.iter().enumerate() {
        if keep[i] {
            layout.set(inst.cell[0], inst.cell[1], inst.kind);
        }
    }
    // supports on dropped cells disappear with them; loads must survive
    for ce in &gs.layout.dirichlet {
        if layout.at(ce.cell[0], ce.cell[1]).is_some() {
            layout.dirichlet.push(*ce);
        }
    }
    if layout.dirichlet.is_empty() {
        return Err(Error::Postprocess("dropping removed every support".into()));
    }
    for &(ce, f) in &gs.layout.loads {
        if layout.at(ce.cell[0], ce.cell[1]).is_none() {
            return Err(Error::Postprocess(format!(
                "loaded component at ({}, {}) was dropped",
                ce.cell[0], ce.cell[1]
            )));
        }
        layout.loads.push((ce, f));
    }
    verify_connected(&layout)?;
    Ok(layout)
}

/// Breadth-first search over paired ports: every loaded component must
/// reach a supported component.
fn verify_connected(layout: &Layout) -> Result<()> {
    // topology of the dropped design comes from a fresh instantiation
    let set_stub = ComponentSet::build(
        crate::mesh::ElementOrder::Linear,
        1,
        1.0,
        1.0,
    )
    .expect("unit component set");
    let dropped = instantiate(layout, &set_stub)?;
    let n = dropped.n_instances();
    let mut adj = vec![Vec::new(); n];
    for gp in &dropped.global_ports {
        if let [(a, _), (b, _)] = gp.members[..] {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut reached = vec![false; n];
    let mut queue: Vec<usize> = (0..n)
        .filter(|&i| {
            dropped.local_to_global[i]
                .iter()
                .any(|gp| dropped.dirichlet_ports.binary_search(gp).is_ok())
        })
        .collect();
    for &i in &queue {
        reached[i] = true;
    }
    while let Some(i) = queue.pop() {
        for &j in &adj[i] {
            if !reached[j] {
                reached[j] = true;
                queue.push(j);
            }
        }
    }
    for &(gp, _) in &dropped.loads {
        let (i, _) = dropped.global_ports[gp].members[0];
        if !reached[i] {
            let cell = dropped.instances[i].cell;
            return Err(Error::Postprocess(format!(
                "load at ({}, {}) is disconnected from every support",
                cell[0], cell[1]
            )));
        }
    }
    Ok(())
}

/// Outcome of the streamlined-substitution pass.
#[derive(Debug, Clone)]
pub struct PostprocessedDesign {
    pub layout: Layout,
    /// (cell, original kind, substituted kind).
    pub substitutions: Vec<([usize; 2], ComponentKind, ComponentKind)>,
    /// Fixed-point passes taken.
    pub passes: usize,
    /// Components whose dangling ports could not be streamlined away, and
    /// components not on any load path.
    pub warnings: Vec<String>,
    /// Mass of the final design (full density everywhere).
    pub mass: f64,
}

/// Replaces every kept component that has a hanging port (neither paired
/// nor supported nor loaded) by the lightest variant that preserves all its
/// live connections, iterating to a fixed point. Substituting can add ports
/// that pair with a neighbor, which may change the neighbor's hanging
/// pattern, hence the iteration.
pub fn substitute_streamlined(
    layout: &Layout,
    set: &ComponentSet,
) -> Result<PostprocessedDesign> {
    let mut current = layout.clone();
    let mut substitutions = Vec::new();
    let mut warnings = Vec::new();
    let n_c = layout.n_occupied();
    let mut passes = 0;
    for _ in 0..n_c.max(1) {
        passes += 1;
        let gs = instantiate(&current, set)?;
        let mut changed = false;
        for (i, inst) in gs.instances.iter().enumerate() {
            let edges = inst.kind.port_edges();
            let mut required = Vec::new();
            let mut hanging = false;
            for (l, &gp) in gs.local_to_global[i].iter().enumerate() {
                let live = gs.global_ports[gp].is_paired()
                    || gs.dirichlet_ports.binary_search(&gp).is_ok()
                    || gs.loads.iter().any(|&(lp, _)| lp == gp);
                if live {
                    required.push(edges[l]);
                } else {
                    hanging = true;
                }
            }
            if !hanging {
                continue;
            }
            if required.is_empty() {
                warnings.push(format!(
                    "component at ({}, {}) is not on any load path",
                    inst.cell[0], inst.cell[1]
                ));
            }
            let area = set.component(inst.kind).area;
            let candidate = ALL_KINDS
                .iter()
                .filter(|k| {
                    required.iter().all(|e| k.port_edges().contains(e))
                })
                .filter(|&&k| set.component(k).area < area * (1.0 - 1e-12))
                .min_by(|a, b| {
                    set.component(**a)
                        .area
                        .partial_cmp(&set.component(**b).area)
                        .unwrap()
                });
            match candidate {
                Some(&k) => {
                    substitutions.push((inst.cell, inst.kind, k));
                    current.set(inst.cell[0], inst.cell[1], k);
                    changed = true;
                }
                None => {
                    if !required.is_empty() {
                        warnings.push(format!(
                            "no lighter variant covers ports of ({}, {})",
                            inst.cell[0], inst.cell[1]
                        ));
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mass = design_mass(&current, set);
    warnings.dedup();
    Ok(PostprocessedDesign {
        layout: current,
        substitutions,
        passes,
        warnings,
        mass,
    })
}

/// Mass of a layout with every placed component at full density.
pub fn design_mass(layout: &Layout, set: &ComponentSet) -> f64 {
    let mut mass = 0.0;
    for iy in 0..layout.ny() {
        for ix in 0..layout.nx() {
            if let Some(kind) = layout.at(ix, iy) {
                mass += set.component(kind).volume();
            }
        }
    }
    mass
}

/// Full-order re-analysis of a binary design.
pub struct FullOrderCheck {
    pub gs: GroundStructure,
    pub solution: OracleSolution,
    /// Largest Von Mises stress over element centroids and the interior
    /// nine-point rule; element boundaries are never sampled.
    pub max_von_mises: f64,
}

pub fn validate_full_order(
    layout: &Layout,
    set: &ComponentSet,
    material: &Material,
) -> Result<FullOrderCheck> {
    let gs = instantiate(layout, set)?;
    let rho = vec![1.0; gs.n_instances()];
    let solution = solve_oracle(&gs, set, material, &SimpLaw::default(), &rho)?;
    let mut sample = degree5_nine_point();
    sample.points.push([1.0 / 3.0, 1.0 / 3.0]);
    let d = material.d_matrix();
    let mut max_vm = 0.0f64;
    for (i, inst) in gs.instances.iter().enumerate() {
        let comp = set.component(inst.kind);
        let u = solution.instance_field(set, &gs, i);
        for e in 0..comp.n_elements() {
            let corners = corner_coords(comp, e);
            let en = comp.element_nodes(e);
            let mut ue = DVector::zeros(2 * en.len());
            for (a, &n) in en.iter().enumerate() {
                ue[2 * a] = u[2 * n];
                ue[2 * a + 1] = u[2 * n + 1];
            }
            for &[xi, eta] in &sample.points {
                let (b, _) = b_matrix_at(&corners, comp.order, xi, eta);
                let s = &d * (&b * &ue);
                max_vm = max_vm.max(von_mises(s[0], s[1], s[2]));
            }
        }
    }
    Ok(FullOrderCheck {
        gs,
        solution,
        max_von_mises: max_vm,
    })
}

/// Relaxed Von Mises stress of a full-order solution at the standard
/// four-point quadrature points, instance-major, matching the aggregation
/// plan's numbering.
pub fn full_order_relaxed_stress(
    gs: &GroundStructure,
    set: &ComponentSet,
    material: &Material,
    rho: &[f64],
    solution: &OracleSolution,
) -> DVector<f64> {
    let d = material.d_matrix();
    let rule = degree2_four_point();
    let mut out = Vec::new();
    for (i, inst) in gs.instances.iter().enumerate() {
        let comp = set.component(inst.kind);
        let u = solution.instance_field(set, gs, i);
        let relax = rho[i].sqrt();
        for e in 0..comp.n_elements() {
            let corners = corner_coords(comp, e);
            let en = comp.element_nodes(e);
            let mut ue = DVector::zeros(2 * en.len());
            for (a, &n) in en.iter().enumerate() {
                ue[2 * a] = u[2 * n];
                ue[2 * a + 1] = u[2 * n + 1];
            }
            for &[xi, eta] in &rule.points {
                let (b, _) = b_matrix_at(&corners, comp.order, xi, eta);
                let s = &d * (&b * &ue);
                out.push(relax * von_mises(s[0], s[1], s[2]));
            }
        }
    }
    DVector::from_vec(out)
}

/// Reduced-against-full-order error measures.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    /// Relative L2 error of the displacement field.
    pub e_u: f64,
    /// Relative L2 error of the relaxed stress.
    pub e_stress: f64,
    /// Signed relative error of the peak relaxed stress.
    pub e_stress_max: f64,
}

/// Compares per-instance nodal fields and per-quadrature-point relaxed
/// stresses on the shared mesh. `qp_weights` are the physical quadrature
/// coefficients in the same numbering as the stress vectors.
pub fn error_metrics(
    gs: &GroundStructure,
    set: &ComponentSet,
    rom_fields: &[DVector<f64>],
    fom_fields: &[DVector<f64>],
    rom_stress: &DVector<f64>,
    fom_stress: &DVector<f64>,
    qp_weights: &[f64],
) -> Result<ErrorReport> {
    let rule = degree2_four_point();
    let mut diff_u = 0.0;
    let mut norm_u = 0.0;
    for (i, inst) in gs.instances.iter().enumerate() {
        let comp = set.component(inst.kind);
        let (rom, fom) = (&rom_fields[i], &fom_fields[i]);
        for e in 0..comp.n_elements() {
            let corners = corner_coords(comp, e);
            let en = comp.element_nodes(e);
            for (&[xi, eta], &w) in rule.points.iter().zip(&rule.weights) {
                // detJ converts the reference weight; thickness scales the
                // measure but cancels in the ratio, kept for dimensionality
                let (_, detj) = b_matrix_at(&corners, comp.order, xi, eta);
                let shape = shape_values(comp.order, xi, eta);
                let wq = w * detj * comp.thickness;
                let mut du = [0.0; 2];
                let mut fu = [0.0; 2];
                for (a, &n) in en.iter().enumerate() {
                    for c in 0..2 {
                        du[c] += shape[a] * (rom[2 * n + c] - fom[2 * n + c]);
                        fu[c] += shape[a] * fom[2 * n + c];
                    }
                }
                diff_u += wq * (du[0] * du[0] + du[1] * du[1]);
                norm_u += wq * (fu[0] * fu[0] + fu[1] * fu[1]);
            }
        }
    }
    if norm_u == 0.0 {
        return Err(Error::Postprocess("full-order field is zero".into()));
    }

    let mut diff_s = 0.0;
    let mut norm_s = 0.0;
    for q in 0..fom_stress.len() {
        let d = rom_stress[q] - fom_stress[q];
        diff_s += qp_weights[q] * d * d;
        norm_s += qp_weights[q] * fom_stress[q] * fom_stress[q];
    }
    let max_fom = fom_stress.max();
    if norm_s == 0.0 || max_fom == 0.0 {
        return Err(Error::Postprocess("full-order stress is zero".into()));
    }
    Ok(ErrorReport {
        e_u: (diff_u / norm_u).sqrt(),
        e_stress: (diff_s / norm_s).sqrt(),
        e_stress_max: (rom_stress.max() - max_fom) / max_fom,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground::CellEdge;
    use crate::mesh::{EdgeId, ElementOrder};
    use crate::offline::{OfflineSet, PortBasisSet};
    use crate::solver::{assemble_condensed, reconstruct, solve_condensed};
    use approx::assert_relative_eq;
    use rand::prelude::*;

    fn mat() -> Material {
        Material::new(113.8e9, 0.34).unwrap()
    }

    fn small_set(order: ElementOrder, b: usize) -> ComponentSet {
        ComponentSet::build(order, b, 0.0625, 0.05).unwrap()
    }

    /// 2x2 solid grid, clamped along the bottom, loaded at the top right.
    fn square_gs(set: &ComponentSet) -> GroundStructure {
        let mut layout = Layout::parse_grid("S S\nS S").unwrap();
        layout.dirichlet.push(CellEdge::new(0, 0, EdgeId::Bottom));
        layout.dirichlet.push(CellEdge::new(1, 0, EdgeId::Bottom));
        layout
            .loads
            .push((CellEdge::new(1, 1, EdgeId::Right), [0.0, -5000.0]));
        instantiate(&layout, set).unwrap()
    }

    #[test]
    fn drop_keeps_connected_designs() {
        let set = small_set(ElementOrder::Linear, 1);
        let gs = square_gs(&set);
        // instance order is bottom row first: (0,0), (1,0), (0,1), (1,1)
        let layout = drop_components(&gs, &[1.0, 1.0, 0.1, 1.0], 0.2).unwrap();
        assert_eq!(layout.n_occupied(), 3);
        assert!(layout.at(0, 1).is_none());
        assert_eq!(layout.dirichlet.len(), 2);
        assert_eq!(layout.loads.len(), 1);
        // identity on an all-solid field
        let full = drop_components(&gs, &[1.0; 4], 0.2).unwrap();
        assert_eq!(full.n_occupied(), 4);
    }

    #[test]
    fn drop_tolerance_boundary_decides_one_component() {
        let set = small_set(ElementOrder::Linear, 1);
        let gs = square_gs(&set);
        let rho = [1.0, 1.0, 0.22, 1.0];
        let tight = drop_components(&gs, &rho, 0.2).unwrap();
        let loose = drop_components(&gs, &rho, 0.25).unwrap();
        assert_eq!(tight.n_occupied(), 4);
        assert_eq!(loose.n_occupied(), 3);
        assert!(tight.at(0, 1).is_some() && loose.at(0, 1).is_none());
    }

    #[test]
    fn drop_rejects_broken_load_paths() {
        let set = small_set(ElementOrder::Linear, 1);
        let mut layout = Layout::parse_grid("S S S").unwrap();
        layout.dirichlet.push(CellEdge::new(0, 0, EdgeId::Left));
        layout
            .loads
            .push((CellEdge::new(2, 0, EdgeId::Right), [0.0, -1000.0]));
        let gs = instantiate(&layout, &set).unwrap();
        // dropping the middle disconnects the load
        assert!(drop_components(&gs, &[1.0, 0.05, 1.0], 0.2).is_err());
        // dropping the loaded component itself is invalid
        assert!(drop_components(&gs, &[1.0, 1.0, 0.05], 0.2).is_err());
        // dropping the only support is invalid
        assert!(drop_components(&gs, &[0.05, 1.0, 1.0], 0.2).is_err());
        // bad tolerances
        assert!(drop_components(&gs, &[1.0, 1.0, 1.0], 0.0).is_err());
        assert!(drop_components(&gs, &[1.0, 1.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn crossed_component_with_two_live_ports_becomes_a_strut() {
        let set = small_set(ElementOrder::Linear, 1);
        let mut layout = Layout::parse_grid("S X S").unwrap();
        layout.dirichlet.push(CellEdge::new(0, 0, EdgeId::Left));
        layout
            .loads
            .push((CellEdge::new(2, 0, EdgeId::Right), [0.0, -1000.0]));
        let out = substitute_streamlined(&layout, &set).unwrap();
        // middle keeps left/right connections; top/bottom ports hang
        assert_eq!(out.layout.at(1, 0), Some(ComponentKind::HStrut));
        // the solid ends streamline too: only their horizontal ports live
        assert_eq!(out.layout.at(0, 0), Some(ComponentKind::HStrut));
        assert!(out.mass < design_mass(&layout, &set));
    }

    #[test]
    fn fully_connected_components_are_untouched() {
        let set = small_set(ElementOrder::Linear, 1);
        let mut layout = Layout::parse_grid("S S\nS S").unwrap();
        for iy in 0..2 {
            layout.dirichlet.push(CellEdge::new(0, iy, EdgeId::Left));
            layout.dirichlet.push(CellEdge::new(1, iy, EdgeId::Right));
        }
        for ix in 0..2 {
            layout.dirichlet.push(CellEdge::new(ix, 0, EdgeId::Bottom));
            layout.dirichlet.push(CellEdge::new(ix, 1, EdgeId::Top));
        }
        let out = substitute_streamlined(&layout, &set).unwrap();
        assert!(out.substitutions.is_empty());
        assert_eq!(out.layout.render_grid(), layout.render_grid());
    }

    #[test]
    fn substitution_preserves_live_connections_and_terminates() {
        let set = small_set(ElementOrder::Linear, 1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for trial in 0..12 {
            let mut layout = Layout::empty(3, 3);
            for iy in 0..3 {
                for ix in 0..3 {
                    if rng.random::<f64>() < 0.75 {
                        let k = ALL_KINDS[rng.random_range(0..ALL_KINDS.len())];
                        layout.set(ix, iy, k);
                    }
                }
            }
            // support whatever sits on the bottom row
            for ix in 0..3 {
                if let Some(k) = layout.at(ix, 0) {
                    if k.port_edges().contains(&EdgeId::Bottom) {
                        layout.dirichlet.push(CellEdge::new(ix, 0, EdgeId::Bottom));
                    }
                }
            }
            if layout.dirichlet.is_empty() || layout.n_occupied() == 0 {
                continue;
            }
            let gs_before = match instantiate(&layout, &set) {
                Ok(v) => v,
                Err(_) => continue,
            };
            let out = substitute_streamlined(&layout, &set).unwrap();
            assert!(
                out.passes <= layout.n_occupied().max(1),
                "trial {trial}: {} passes",
                out.passes
            );
            // idempotence at the fixed point
            let again = substitute_streamlined(&out.layout, &set).unwrap();
            assert!(again.substitutions.is_empty(), "trial {trial} not stable");
            // every previously paired connection still exists
            let gs_after = instantiate(&out.layout, &set).unwrap();
            for gp in &gs_before.global_ports {
                if !gp.is_paired() {
                    continue;
                }
                let (ia, la) = gp.members[0];
                let cell = gs_before.instances[ia].cell;
                let edge = gs_before.instances[ia].kind.port_edges()[la];
                let after = gs_after
                    .global_port_of(CellEdge::new(cell[0], cell[1], edge))
                    .expect("port survived");
                assert!(
                    gs_after.global_ports[after].is_paired(),
                    "trial {trial}: connection at ({}, {}) {edge:?} broken",
                    cell[0],
                    cell[1]
                );
            }
        }
    }

    #[test]
    fn doubling_the_load_doubles_the_max_stress() {
        let set = small_set(ElementOrder::Quadratic, 1);
        let mut layout = Layout::parse_grid("S S").unwrap();
        layout.dirichlet.push(CellEdge::new(0, 0, EdgeId::Left));
        layout
            .loads
            .push((CellEdge::new(1, 0, EdgeId::Right), [1000.0, -3000.0]));
        let one = validate_full_order(&layout, &set, &mat()).unwrap();
        layout.loads[0].1 = [2000.0, -6000.0];
        let two = validate_full_order(&layout, &set, &mat()).unwrap();
        assert_relative_eq!(
            two.max_von_mises,
            2.0 * one.max_von_mises,
            max_relative = 1e-10
        );
    }

    #[test]
    fn dropping_a_feather_component_barely_moves_the_peak_stress() {
        let set = small_set(ElementOrder::Quadratic, 1);
        let gs = square_gs(&set);
        let rho = [1.0, 1.0, 0.01, 1.0];
        // full solve with the feather component penalized but present
        let soft = solve_oracle(&gs, &set, &mat(), &SimpLaw::default(), &rho).unwrap();
        let mut sample = degree5_nine_point();
        sample.points.push([1.0 / 3.0, 1.0 / 3.0]);
        let d = mat().d_matrix();
        let mut max_soft = 0.0f64;
        for (i, inst) in gs.instances.iter().enumerate() {
            if rho[i] < 0.2 {
                continue; // compare over components kept in both designs
            }
            let comp = set.component(inst.kind);
            let u = soft.instance_field(&set, &gs, i);
            for e in 0..comp.n_elements() {
                let corners = corner_coords(comp, e);
                let en = comp.element_nodes(e);
                let mut ue = DVector::zeros(2 * en.len());
                for (a, &n) in en.iter().enumerate() {
                    ue[2 * a] = u[2 * n];
                    ue[2 * a + 1] = u[2 * n + 1];
                }
                for &[xi, eta] in &sample.points {
                    let (b, _) = b_matrix_at(&corners, comp.order, xi, eta);
                    let s = &d * (&b * &ue);
                    max_soft = max_soft.max(von_mises(s[0], s[1], s[2]));
                }
            }
        }
        let dropped = drop_components(&gs, &rho, 0.2).unwrap();
        let hard = validate_full_order(&dropped, &set, &mat()).unwrap();
        let rel = (hard.max_von_mises - max_soft).abs() / max_soft;
        assert!(rel < 1e-3, "peak stress moved by {rel}");
    }

    #[test]
    fn error_metrics_closed_forms_and_full_basis_exactness() {
        let set = small_set(ElementOrder::Quadratic, 1);
        let gs = square_gs(&set);
        let material = mat();
        let bases = PortBasisSet::full(ElementOrder::Quadratic, 1, set.cell_size / 3.0).unwrap();
        let offline = OfflineSet::build(&set, &material, bases).unwrap();
        let simp = SimpLaw::default();
        let rho = vec![1.0, 0.8, 0.7, 0.9];
        let sys = assemble_condensed(&gs, &offline, &simp, &rho).unwrap();
        let sol = solve_condensed(sys).unwrap();
        let rom_fields = reconstruct(&gs, &offline, &sol);
        let osol = solve_oracle(&gs, &set, &material, &simp, &rho).unwrap();
        let fom_fields: Vec<DVector<f64>> = (0..gs.n_instances())
            .map(|i| osol.instance_field(&set, &gs, i))
            .collect();
        let fom_stress = full_order_relaxed_stress(&gs, &set, &material, &rho, &osol);
        let weights: Vec<f64> = gs
            .instances
            .iter()
            .flat_map(|inst| offline.component(inst.kind).qp_weights.clone())
            .collect();

        // identical inputs: all zero
        let zero = error_metrics(
            &gs,
            &set,
            &fom_fields,
            &fom_fields,
            &fom_stress,
            &fom_stress,
            &weights,
        )
        .unwrap();
        assert_eq!(zero.e_u, 0.0);
        assert_eq!(zero.e_stress, 0.0);
        assert_eq!(zero.e_stress_max, 0.0);

        // uniform 10% stress inflation
        let inflated = &fom_stress * 1.1;
        let ten = error_metrics(
            &gs,
            &set,
            &fom_fields,
            &fom_fields,
            &inflated,
            &fom_stress,
            &weights,
        )
        .unwrap();
        assert_relative_eq!(ten.e_stress, 0.1, max_relative = 1e-10);
        assert_relative_eq!(ten.e_stress_max, 0.1, max_relative = 1e-10);

        // full-basis reconstruction against the oracle
        let rom_stress_field = {
            use crate::stress::{assign_regions, build_stress_operators, evaluate_stress};
            let ops = build_stress_operators(&offline, &material);
            let plan = assign_regions(&gs, &offline, 1, 0).unwrap();
            evaluate_stress(&gs, &offline, &ops, &plan, &rho, &sol).relaxed
        };
        let report = error_metrics(
            &gs,
            &set,
            &rom_fields,
            &fom_fields,
            &rom_stress_field,
            &fom_stress,
            &weights,
        )
        .unwrap();
        assert!(report.e_u < 1e-6, "e_u = {}", report.e_u);
        assert!(report.e_stress < 1e-6, "e_stress = {}", report.e_stress);
        assert!(
            report.e_stress_max.abs() < 1e-6,
            "e_stress_max = {}",
            report.e_stress_max
        );

        // zero full-order inputs are rejected
        let zeros: Vec<DVector<f64>> = fom_fields.iter().map(|f| f * 0.0).collect();
        assert!(error_metrics(
            &gs,
            &set,
            &rom_fields,
            &zeros,
            &rom_stress_field,
            &(0.0 * &fom_stress),
            &weights
        )
        .is_err());
    }
}
