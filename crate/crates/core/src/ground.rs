//! Ground structures: placements of reference components on a cell grid.
//!
//! A layout names which variant (if any) sits in each grid cell and which
//! port segments carry Dirichlet supports or traction loads, addressed as
//! (cell, edge) so the same layout can be re-instantiated after components
//! are dropped or substituted. Instantiation derives the global port list:
//! facing ports of edge-adjacent components are fused pairwise, everything
//! else stays a singleton exposed to boundary conditions.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mesh::{ComponentKind, ComponentSet, EdgeId, PortClass};

/// A port segment addressed by grid cell and cell edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellEdge {
    pub cell: [usize; 2],
    pub edge: EdgeId,
}

impl CellEdge {
    pub fn new(ix: usize, iy: usize, edge: EdgeId) -> Self {
        CellEdge { cell: [ix, iy], edge }
    }
}

/// Grid of component placements plus boundary conditions.
///
/// `cells[iy][ix]` is the variant at column `ix`, row `iy`, with row 0 at the
/// bottom. Loads are total traction resultants in newtons, spread uniformly
/// over the named port segment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layout {
    pub cells: Vec<Vec<Option<ComponentKind>>>,
    pub dirichlet: Vec<CellEdge>,
    pub loads: Vec<(CellEdge, [f64; 2])>,
}

impl Layout {
    pub fn empty(nx: usize, ny: usize) -> Self {
        Layout {
            cells: vec![vec![None; nx]; ny],
            dirichlet: Vec::new(),
            loads: Vec::new(),
        }
    }

    pub fn nx(&self) -> usize {
        self.cells.first().map_or(0, |r| r.len())
    }

    pub fn ny(&self) -> usize {
        self.cells.len()
    }

    pub fn set(&mut self, ix: usize, iy: usize, kind: ComponentKind) {
        self.cells[iy][ix] = Some(kind);
    }

    pub fn at(&self, ix: usize, iy: usize) -> Option<ComponentKind> {
        self.cells.get(iy).and_then(|row| row.get(ix)).copied().flatten()
    }

    /// Parses a picture of the grid, top row first: one line per row, one
    /// character per cell, `.` for empty, `S F X H V D` for variants.
    /// Whitespace inside lines is ignored.
    pub fn parse_grid(text: &str) -> Result<Self> {
        let rows: Vec<Vec<char>> = text
            .lines()
            .map(|l| l.split_whitespace().collect::<String>().chars().collect())
            .filter(|l: &Vec<char>| !l.is_empty())
            .collect();
        if rows.is_empty() {
            return Err(Error::Layout("empty layout".into()));
        }
        let nx = rows[0].len();
        if rows.iter().any(|r| r.len() != nx) {
            return Err(Error::Layout("ragged layout rows".into()));
        }
        let ny = rows.len();
        let mut layout = Layout::empty(nx, ny);
        for (line_no, row) in rows.iter().enumerate() {
            let iy = ny - 1 - line_no; // text is top-down, storage bottom-up
            for (ix, &c) in row.iter().enumerate() {
                if c == '.' {
                    continue;
                }
                let kind = ComponentKind::from_code(c)
                    .ok_or_else(|| Error::Layout(format!("unknown variant code '{c}'")))?;
                layout.cells[iy][ix] = Some(kind);
            }
        }
        Ok(layout)
    }

    /// Renders the grid as in `parse_grid`, top row first.
    pub fn render_grid(&self) -> String {
        let mut out = String::new();
        for iy in (0..self.ny()).rev() {
            for ix in 0..self.nx() {
                out.push(self.at(ix, iy).map_or('.', ComponentKind::code));
            }
            out.push('\n');
        }
        out
    }

    pub fn n_occupied(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_some()).count()
    }
}

/// One placed component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Instance {
    pub kind: ComponentKind,
    pub cell: [usize; 2],
    pub translation: [f64; 2],
}

/// A fused interface (two facing ports) or an exposed singleton port.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalPort {
    /// (instance index, local port index); paired ports list the
    /// lower-indexed instance first.
    pub members: Vec<(usize, usize)>,
    pub class: PortClass,
}

impl GlobalPort {
    pub fn is_paired(&self) -> bool {
        self.members.len() == 2
    }
}

/// Instantiated ground structure: placements plus derived port topology.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundStructure {
    pub layout: Layout,
    pub instances: Vec<Instance>,
    pub global_ports: Vec<GlobalPort>,
    /// `local_to_global[i][l]` = global port index of local port `l` of
    /// instance `i`.
    pub local_to_global: Vec<Vec<usize>>,
    /// Global port indices held at zero displacement.
    pub dirichlet_ports: Vec<usize>,
    /// (global port index, total force resultant).
    pub loads: Vec<(usize, [f64; 2])>,
}

impl GroundStructure {
    pub fn n_instances(&self) -> usize {
        self.instances.len()
    }

    pub fn n_global_ports(&self) -> usize {
        self.global_ports.len()
    }

    pub fn n_paired_ports(&self) -> usize {
        self.global_ports.iter().filter(|p| p.is_paired()).count()
    }

    pub fn instance_at(&self, ix: usize, iy: usize) -> Option<usize> {
        self.instances.iter().position(|inst| inst.cell == [ix, iy])
    }

    pub fn global_port_of(&self, ce: CellEdge) -> Option<usize> {
        let inst = self.instance_at(ce.cell[0], ce.cell[1])?;
        let kind = self.instances[inst].kind;
        let local = kind.port_edges().iter().position(|&e| e == ce.edge)?;
        Some(self.local_to_global[inst][local])
    }
}

/// Derives the instance list and port topology of a layout.
///
/// Facing ports fuse only when both components carry a port on the shared
/// edge; a strut next to a neighbor it has no port toward simply leaves that
/// neighbor's port a singleton. Boundary conditions must address ports that
/// exist, and a port cannot be both loaded and supported.
pub fn instantiate(layout: &Layout, set: &ComponentSet) -> Result<GroundStructure> {
    let l = set.cell_size;
    let mut instances = Vec::new();
    let mut cell_to_inst: BTreeMap<[usize; 2], usize> = BTreeMap::new();
    for iy in 0..layout.ny() {
        for ix in 0..layout.nx() {
            if let Some(kind) = layout.at(ix, iy) {
                cell_to_inst.insert([ix, iy], instances.len());
                instances.push(Instance {
                    kind,
                    cell: [ix, iy],
                    translation: [ix as f64 * l, iy as f64 * l],
                });
            }
        }
    }
    if instances.is_empty() {
        return Err(Error::Layout("layout places no components".into()));
    }

    // Pair ports across shared edges. Processing Right/Top of each instance
    // in index order makes the pairing (and hence the global numbering)
    // deterministic; the facing instance always has the larger index.
    let mut pair_of: Vec<Vec<Option<(usize, usize)>>> = instances
        .iter()
        .map(|inst| vec![None; inst.kind.port_edges().len()])
        .collect();
    for (i, inst) in instances.iter().enumerate() {
        let [ix, iy] = inst.cell;
        for (li, &edge) in inst.kind.port_edges().iter().enumerate() {
            let neighbor_cell = match edge {
                EdgeId::Right => [ix + 1, iy],
                EdgeId::Top => [ix, iy + 1],
                _ => continue,
            };
            let Some(&j) = cell_to_inst.get(&neighbor_cell) else {
                continue;
            };
            let facing = edge.opposite();
            let Some(lj) = instances[j]
                .kind
                .port_edges()
                .iter()
                .position(|&e| e == facing)
            else {
                continue;
            };
            pair_of[i][li] = Some((j, lj));
            pair_of[j][lj] = Some((i, li));
        }
    }

    let mut global_ports: Vec<GlobalPort> = Vec::new();
    let mut local_to_global: Vec<Vec<usize>> =
        instances.iter().map(|inst| vec![usize::MAX; inst.kind.port_edges().len()]).collect();
    for (i, inst) in instances.iter().enumerate() {
        for (li, &edge) in inst.kind.port_edges().iter().enumerate() {
            if local_to_global[i][li] != usize::MAX {
                continue;
            }
            let gp = global_ports.len();
            let members = match pair_of[i][li] {
                Some((j, lj)) => {
                    local_to_global[j][lj] = gp;
                    vec![(i, li), (j, lj)]
                }
                None => vec![(i, li)],
            };
            local_to_global[i][li] = gp;
            global_ports.push(GlobalPort {
                members,
                class: edge.class(),
            });
        }
    }

    // Paired ports must coincide node for node once translated.
    for gp in global_ports.iter().filter(|p| p.is_paired()) {
        let (ia, la) = gp.members[0];
        let (ib, lb) = gp.members[1];
        let ca = set.component(instances[ia].kind);
        let cb = set.component(instances[ib].kind);
        let pa = &ca.ports[la];
        let pb = &cb.ports[lb];
        if pa.nodes.len() != pb.nodes.len() {
            return Err(Error::PortMismatch(format!(
                "ports of {:?} and {:?} differ in node count",
                instances[ia].kind, instances[ib].kind
            )));
        }
        for (&na, &nb) in pa.nodes.iter().zip(&pb.nodes) {
            for d in 0..2 {
                let xa = ca.nodes[na][d] + instances[ia].translation[d];
                let xb = cb.nodes[nb][d] + instances[ib].translation[d];
                if (xa - xb).abs() > 1e-9 * l {
                    return Err(Error::PortMismatch(format!(
                        "paired ports of cells {:?} and {:?} do not coincide",
                        instances[ia].cell, instances[ib].cell
                    )));
                }
            }
        }
    }

    let resolve = |ce: CellEdge, what: &str| -> Result<usize> {
        let inst = cell_to_inst.get(&ce.cell).copied().ok_or_else(|| {
            Error::Layout(format!("{what} on empty cell {:?}", ce.cell))
        })?;
        let kind = instances[inst].kind;
        let local = kind
            .port_edges()
            .iter()
            .position(|&e| e == ce.edge)
            .ok_or_else(|| {
                Error::Layout(format!(
                    "{what} on {:?} edge of cell {:?}, but {:?} has no port there",
                    ce.edge, ce.cell, kind
                ))
            })?;
        Ok(local_to_global[inst][local])
    };

    let mut dirichlet_ports: Vec<usize> = layout
        .dirichlet
        .iter()
        .map(|&ce| resolve(ce, "support"))
        .collect::<Result<_>>()?;
    dirichlet_ports.sort_unstable();
    dirichlet_ports.dedup();

    let mut loads: Vec<(usize, [f64; 2])> = Vec::new();
    for &(ce, f) in &layout.loads {
        let gp = resolve(ce, "load")?;
        if dirichlet_ports.binary_search(&gp).is_ok() {
            return Err(Error::Layout(format!(
                "port at {:?} {:?} is both loaded and supported",
                ce.cell, ce.edge
            )));
        }
        // merge duplicate load entries on the same port
        if let Some(entry) = loads.iter_mut().find(|(g, _)| *g == gp) {
            entry.1[0] += f[0];
            entry.1[1] += f[1];
        } else {
            loads.push((gp, f));
        }
    }

    Ok(GroundStructure {
        layout: layout.clone(),
        instances,
        global_ports,
        local_to_global,
        dirichlet_ports,
        loads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::ElementOrder;

    fn set() -> ComponentSet {
        ComponentSet::build(ElementOrder::Linear, 2, 1.0, 0.05).unwrap()
    }

    fn simple_layout(nx: usize, ny: usize) -> Layout {
        let mut layout = Layout::empty(nx, ny);
        for iy in 0..ny {
            for ix in 0..nx {
                layout.set(ix, iy, ComponentKind::Solid);
            }
        }
        layout.dirichlet.push(CellEdge::new(0, 0, EdgeId::Left));
        layout
            .loads
            .push((CellEdge::new(nx - 1, 0, EdgeId::Right), [0.0, -1.0]));
        layout
    }

    #[test]
    fn two_cell_row_shares_one_port() {
        let gs = instantiate(&simple_layout(2, 1), &set()).unwrap();
        assert_eq!(gs.n_instances(), 2);
        // 4 ports per solid, one facing pair fused: 7 global, 1 paired.
        assert_eq!(gs.n_global_ports(), 7);
        assert_eq!(gs.n_paired_ports(), 1);
        let paired: Vec<_> = gs.global_ports.iter().filter(|p| p.is_paired()).collect();
        assert_eq!(paired[0].class, PortClass::Vertical);
    }

    #[test]
    fn grid_port_count_matches_closed_form() {
        // n x m solid grid: 2nm + n + m edge segments in total.
        for (nx, ny) in [(2usize, 2usize), (3, 2), (4, 1)] {
            let gs = instantiate(&simple_layout(nx, ny), &set()).unwrap();
            let interior = nx * (ny - 1) + ny * (nx - 1);
            assert_eq!(gs.n_paired_ports(), interior);
            assert_eq!(gs.n_global_ports(), 2 * nx * ny + nx + ny);
        }
    }

    #[test]
    fn strut_leaves_facing_port_unpaired() {
        // An h-strut has no top port, so the solid above keeps a singleton.
        let mut layout = Layout::empty(1, 2);
        layout.set(0, 0, ComponentKind::HStrut);
        layout.set(0, 1, ComponentKind::Solid);
        layout.dirichlet.push(CellEdge::new(0, 1, EdgeId::Top));
        layout
            .loads
            .push((CellEdge::new(0, 0, EdgeId::Left), [1.0, 0.0]));
        let gs = instantiate(&layout, &set()).unwrap();
        assert_eq!(gs.n_paired_ports(), 0);
        assert_eq!(gs.n_global_ports(), 2 + 4);
    }

    #[test]
    fn bc_on_missing_port_is_rejected() {
        let mut layout = Layout::empty(1, 1);
        layout.set(0, 0, ComponentKind::HStrut);
        layout.dirichlet.push(CellEdge::new(0, 0, EdgeId::Top));
        layout
            .loads
            .push((CellEdge::new(0, 0, EdgeId::Right), [1.0, 0.0]));
        let err = instantiate(&layout, &set()).unwrap_err();
        assert!(matches!(err, Error::Layout(_)));
    }

    #[test]
    fn loaded_support_is_rejected() {
        let mut layout = simple_layout(1, 1);
        layout
            .loads
            .push((CellEdge::new(0, 0, EdgeId::Left), [1.0, 0.0]));
        assert!(instantiate(&layout, &set()).is_err());
    }

    #[test]
    fn grid_text_round_trips() {
        let text = "S F D\nH X S\nS S V\n";
        let layout = Layout::parse_grid(text).unwrap();
        assert_eq!(layout.nx(), 3);
        assert_eq!(layout.ny(), 3);
        // top text row is the highest grid row
        assert_eq!(layout.at(0, 2), Some(ComponentKind::Solid));
        assert_eq!(layout.at(2, 2), Some(ComponentKind::DStrut));
        assert_eq!(layout.at(0, 1), Some(ComponentKind::HStrut));
        assert_eq!(layout.at(2, 0), Some(ComponentKind::VStrut));
        assert_eq!(layout.render_grid(), "SFD\nHXS\nSSV\n");
    }

    #[test]
    fn ground_structure_serializes_round_trip() {
        let gs = instantiate(&simple_layout(2, 2), &set()).unwrap();
        let json = serde_json::to_string(&gs).unwrap();
        let back: GroundStructure = serde_json::from_str(&json).unwrap();
        assert_eq!(back.n_instances(), gs.n_instances());
        assert_eq!(back.n_global_ports(), gs.n_global_ports());
        assert_eq!(back.dirichlet_ports, gs.dirichlet_ports);
    }
}
