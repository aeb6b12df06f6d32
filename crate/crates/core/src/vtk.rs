//! Legacy ASCII VTK export of assembled lattice meshes.
//!
//! Each instance contributes its reference mesh translated to its cell;
//! nodes shared between neighboring ports are written once per instance,
//! which keeps the exporter stateless and still renders conformally since
//! port traces agree. Quadratic triangles map to `VTK_QUADRATIC_TRIANGLE`
//! (corners, then midpoints of edges 01, 12, 20 — the mesh's native order).

use std::io::Write;
use std::path::Path;

use nalgebra::DVector;

use crate::error::Result;
use crate::ground::GroundStructure;
use crate::mesh::{ComponentSet, ElementOrder};

/// Flattened lattice mesh in physical coordinates.
pub struct MeshExport {
    pub points: Vec<[f64; 2]>,
    /// Per-element node lists (3 or 6 ids into `points`).
    pub cells: Vec<Vec<usize>>,
    pub order: ElementOrder,
    /// Owning instance of each cell.
    pub cell_instance: Vec<usize>,
    /// First point id of each instance block.
    pub point_offsets: Vec<usize>,
}

/// Assembles all instance meshes into one point/cell soup.
pub fn export_mesh(gs: &GroundStructure, set: &ComponentSet) -> MeshExport {
    let h = set.cell_size;
    let mut points = Vec::new();
    let mut cells = Vec::new();
    let mut cell_instance = Vec::new();
    let mut point_offsets = Vec::with_capacity(gs.n_instances());
    for (i, inst) in gs.instances.iter().enumerate() {
        let comp = set.component(inst.kind);
        let base = points.len();
        point_offsets.push(base);
        let dx = inst.cell[0] as f64 * h;
        let dy = inst.cell[1] as f64 * h;
        points.extend(comp.nodes.iter().map(|&[x, y]| [x + dx, y + dy]));
        for e in 0..comp.n_elements() {
            cells.push(comp.element_nodes(e).iter().map(|&n| base + n).collect());
            cell_instance.push(i);
        }
    }
    MeshExport {
        points,
        cells,
        order: set.order,
        cell_instance,
        point_offsets,
    }
}

/// Expands one value per instance to one value per cell.
pub fn per_cell(export: &MeshExport, per_instance: &[f64]) -> Vec<f64> {
    export
        .cell_instance
        .iter()
        .map(|&i| per_instance[i])
        .collect()
}

/// Concatenates per-instance nodal fields into one per-point vector array.
pub fn point_vectors(export: &MeshExport, fields: &[DVector<f64>]) -> Vec<[f64; 2]> {
    let mut out = vec![[0.0; 2]; export.points.len()];
    for (i, f) in fields.iter().enumerate() {
        let base = export.point_offsets[i];
        for n in 0..f.len() / 2 {
            out[base + n] = [f[2 * n], f[2 * n + 1]];
        }
    }
    out
}

/// Writes an unstructured-grid legacy VTK file with optional per-cell
/// scalars and per-point vectors.
pub fn write_legacy_vtk(
    path: &Path,
    title: &str,
    export: &MeshExport,
    cell_scalars: &[(&str, &[f64])],
    point_fields: &[(&str, &[[f64; 2]])],
) -> Result<()> {
    let mut out = Vec::with_capacity(1 << 16);
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{title}")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", export.points.len())?;
    for &[x, y] in &export.points {
        writeln!(out, "{x} {y} 0")?;
    }
    let per = match export.order {
        ElementOrder::Linear => 3,
        ElementOrder::Quadratic => 6,
    };
    let n_cells = export.cells.len();
    writeln!(out, "CELLS {} {}", n_cells, n_cells * (per + 1))?;
    for cell in &export.cells {
        write!(out, "{per}")?;
        for &n in cell {
            write!(out, " {n}")?;
        }
        writeln!(out)?;
    }
    writeln!(out, "CELL_TYPES {n_cells}")?;
    let vtk_type = match export.order {
        ElementOrder::Linear => 5,
        ElementOrder::Quadratic => 22,
    };
    for _ in 0..n_cells {
        writeln!(out, "{vtk_type}")?;
    }
    if !cell_scalars.is_empty() {
        writeln!(out, "CELL_DATA {n_cells}")?;
        for (name, values) in cell_scalars {
            writeln!(out, "SCALARS {name} double 1")?;
            writeln!(out, "LOOKUP_TABLE default")?;
            for v in *values {
                writeln!(out, "{v}")?;
            }
        }
    }
    if !point_fields.is_empty() {
        writeln!(out, "POINT_DATA {}", export.points.len())?;
        for (name, values) in point_fields {
            writeln!(out, "VECTORS {name} double")?;
            for &[x, y] in *values {
                writeln!(out, "{x} {y} 0")?;
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground::{instantiate, CellEdge, Layout};
    use crate::mesh::EdgeId;

    fn two_chain(order: ElementOrder) -> (GroundStructure, ComponentSet) {
        let set = ComponentSet::build(order, 1, 0.0625, 0.05).unwrap();
        let mut layout = Layout::parse_grid("S S").unwrap();
        layout.dirichlet.push(CellEdge::new(0, 0, EdgeId::Left));
        layout
            .loads
            .push((CellEdge::new(1, 0, EdgeId::Right), [0.0, -1.0]));
        (instantiate(&layout, &set).unwrap(), set)
    }

    #[test]
    fn export_counts_and_connectivity_are_consistent() {
        for order in [ElementOrder::Linear, ElementOrder::Quadratic] {
            let (gs, set) = two_chain(order);
            let export = export_mesh(&gs, &set);
            let n_nodes: usize = gs
                .instances
                .iter()
                .map(|i| set.component(i.kind).n_nodes())
                .sum();
            let n_el: usize = gs
                .instances
                .iter()
                .map(|i| set.component(i.kind).n_elements())
                .sum();
            assert_eq!(export.points.len(), n_nodes);
            assert_eq!(export.cells.len(), n_el);
            let per = if order == ElementOrder::Linear { 3 } else { 6 };
            for cell in &export.cells {
                assert_eq!(cell.len(), per);
                assert!(cell.iter().all(|&n| n < n_nodes));
            }
        }
    }

    #[test]
    fn neighboring_port_nodes_coincide_in_space() {
        let (gs, set) = two_chain(ElementOrder::Quadratic);
        let export = export_mesh(&gs, &set);
        let comp = set.component(gs.instances[0].kind);
        let right = comp.port_index(EdgeId::Right).unwrap();
        let left = comp.port_index(EdgeId::Left).unwrap();
        let (r_nodes, l_nodes) = (&comp.ports[right].nodes, &comp.ports[left].nodes);
        assert_eq!(r_nodes.len(), l_nodes.len());
        // both ports are stored bottom-to-top, so nodes match index-wise
        for (&a, &b) in r_nodes.iter().zip(l_nodes) {
            let pa = export.points[export.point_offsets[0] + a];
            let pb = export.points[export.point_offsets[1] + b];
            assert!((pa[0] - pb[0]).abs() < 1e-12 && (pa[1] - pb[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn written_file_has_legacy_structure() {
        let (gs, set) = two_chain(ElementOrder::Quadratic);
        let export = export_mesh(&gs, &set);
        let rho = per_cell(&export, &[0.25, 0.75]);
        let disp = vec![[1.0e-4, -2.0e-4]; export.points.len()];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("design.vtk");
        write_legacy_vtk(
            &path,
            "lattice design",
            &export,
            &[("density", &rho)],
            &[("displacement", &disp)],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[2], "ASCII");
        assert_eq!(lines[3], "DATASET UNSTRUCTURED_GRID");
        assert_eq!(lines[4], format!("POINTS {} double", export.points.len()));
        let n_cells = export.cells.len();
        assert!(text.contains(&format!("CELLS {} {}", n_cells, n_cells * 7)));
        assert!(text.contains(&format!("CELL_TYPES {n_cells}")));
        assert_eq!(lines.iter().filter(|l| **l == "22").count(), n_cells);
        assert!(text.contains(&format!("CELL_DATA {n_cells}")));
        assert!(text.contains("SCALARS density double 1"));
        assert!(text.contains(&format!("POINT_DATA {}", export.points.len())));
        assert!(text.contains("VECTORS displacement double"));
        // first point of the second instance is shifted one cell to the right
        let first: Vec<f64> = lines[5]
            .split_whitespace()
            .map(|t| t.parse().unwrap())
            .collect();
        assert_eq!(first.len(), 3);
        // density block carries the instance values verbatim
        assert_eq!(lines.iter().filter(|l| **l == "0.25").count(), n_cells / 2);
        assert_eq!(lines.iter().filter(|l| **l == "0.75").count(), n_cells / 2);
    }

    #[test]
    fn per_cell_and_point_vectors_expand_instance_data() {
        let (gs, set) = two_chain(ElementOrder::Linear);
        let export = export_mesh(&gs, &set);
        let rho = per_cell(&export, &[0.3, 0.9]);
        let n0 = set.component(gs.instances[0].kind).n_elements();
        assert!(rho[..n0].iter().all(|&v| v == 0.3));
        assert!(rho[n0..].iter().all(|&v| v == 0.9));
        let fields: Vec<DVector<f64>> = (0..2)
            .map(|i| {
                let n = set.component(gs.instances[i].kind).n_nodes();
                DVector::from_fn(2 * n, |k, _| (i + 1) as f64 * (k as f64 + 1.0))
            })
            .collect();
        let vecs = point_vectors(&export, &fields);
        assert_eq!(vecs.len(), export.points.len());
        assert_eq!(vecs[0], [1.0, 2.0]);
        let b = export.point_offsets[1];
        assert_eq!(vecs[b], [2.0, 4.0]);
    }
}
