//! Reference unit-cell components.
//!
//! Every component lives on a structured `r x r` grid over a square cell with
//! `r = 3 * b`, where `b` is the number of element edges along a port. Ports
//! are the centered middle thirds of the cell edges (grid nodes `b..=2b`), so
//! ports on adjacent edges never share a corner node and any two facing ports
//! carry identical discretizations. Components bond exclusively across port
//! segments; the rest of the boundary is traction-free, which keeps the
//! assembled model identical to the port-condensed one.
//!
//! Variant geometry is a cell-occupancy predicate on the grid:
//! solid fills everything, frame keeps a ring, x-braced adds both diagonal
//! bands to the frame, the straight struts keep the middle band of rows or
//! columns, and the diagonal strut keeps a band linking the left and top
//! ports. Struts carry only the ports their material reaches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ComponentKind {
    Solid,
    Frame,
    XBraced,
    HStrut,
    VStrut,
    DStrut,
}

pub const ALL_KINDS: [ComponentKind; 6] = [
    ComponentKind::Solid,
    ComponentKind::Frame,
    ComponentKind::XBraced,
    ComponentKind::HStrut,
    ComponentKind::VStrut,
    ComponentKind::DStrut,
];

impl ComponentKind {
    pub fn code(self) -> char {
        match self {
            ComponentKind::Solid => 'S',
            ComponentKind::Frame => 'F',
            ComponentKind::XBraced => 'X',
            ComponentKind::HStrut => 'H',
            ComponentKind::VStrut => 'V',
            ComponentKind::DStrut => 'D',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        match c {
            'S' => Some(ComponentKind::Solid),
            'F' => Some(ComponentKind::Frame),
            'X' => Some(ComponentKind::XBraced),
            'H' => Some(ComponentKind::HStrut),
            'V' => Some(ComponentKind::VStrut),
            'D' => Some(ComponentKind::DStrut),
            _ => None,
        }
    }

    /// Edges on which this variant carries a port.
    pub fn port_edges(self) -> &'static [EdgeId] {
        use EdgeId::*;
        match self {
            ComponentKind::Solid | ComponentKind::Frame | ComponentKind::XBraced => {
                &[Bottom, Right, Top, Left]
            }
            ComponentKind::HStrut => &[Right, Left],
            ComponentKind::VStrut => &[Bottom, Top],
            ComponentKind::DStrut => &[Top, Left],
        }
    }

    pub fn has_port(self, edge: EdgeId) -> bool {
        self.port_edges().contains(&edge)
    }

    /// Cell-occupancy predicate on the `r x r` grid, `w` = frame wall width.
    fn keeps_cell(self, i: usize, j: usize, r: usize, b: usize, w: usize) -> bool {
        let in_frame = i < w || i >= r - w || j < w || j >= r - w;
        match self {
            ComponentKind::Solid => true,
            ComponentKind::Frame => in_frame,
            ComponentKind::XBraced => {
                // Bands of half-width w in the diagonal coordinates; a band
                // one cell wide would only touch corner to corner.
                let main = i.abs_diff(j) <= w;
                let anti = (i + j).abs_diff(r - 1) <= w;
                in_frame || main || anti
            }
            ComponentKind::HStrut => j >= b && j < 2 * b,
            ComponentKind::VStrut => i >= b && i < 2 * b,
            ComponentKind::DStrut => {
                // Band linking the left port to the top port; width b + 1 in
                // the j - i coordinate keeps the band edge-connected even at
                // b = 1, where a width-b band would hinge at corner nodes.
                let d = j as isize - i as isize;
                d >= b as isize - 1 && d <= 2 * b as isize - 1
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElementOrder {
    Linear,
    Quadratic,
}

impl ElementOrder {
    pub fn nodes_per_element(self) -> usize {
        match self {
            ElementOrder::Linear => 3,
            ElementOrder::Quadratic => 6,
        }
    }

    pub fn port_node_count(self, b: usize) -> usize {
        match self {
            ElementOrder::Linear => b + 1,
            ElementOrder::Quadratic => 2 * b + 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeId {
    Bottom,
    Right,
    Top,
    Left,
}

impl EdgeId {
    pub fn opposite(self) -> EdgeId {
        match self {
            EdgeId::Bottom => EdgeId::Top,
            EdgeId::Top => EdgeId::Bottom,
            EdgeId::Left => EdgeId::Right,
            EdgeId::Right => EdgeId::Left,
        }
    }

    /// Ports on bottom/top edges form horizontal interfaces, left/right
    /// vertical ones. Reduced bases are trained per class.
    pub fn class(self) -> PortClass {
        match self {
            EdgeId::Bottom | EdgeId::Top => PortClass::Horizontal,
            EdgeId::Left | EdgeId::Right => PortClass::Vertical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PortClass {
    Horizontal,
    Vertical,
}

/// Boundary node set of one port, ordered by arclength along the edge.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Port {
    pub edge: EdgeId,
    pub nodes: Vec<usize>,
}

/// Mesh of one reference component. Immutable after construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceComponent {
    pub kind: ComponentKind,
    pub order: ElementOrder,
    /// Elements per port edge.
    pub port_res: usize,
    /// Elements per cell edge, always `3 * port_res`.
    pub grid_res: usize,
    pub cell_size: f64,
    pub thickness: f64,
    pub nodes: Vec<[f64; 2]>,
    /// Corner connectivity, counterclockwise.
    pub tris: Vec<[usize; 3]>,
    /// Midside nodes per triangle for quadratic elements, ordered as the
    /// midpoints of edges (0,1), (1,2), (2,0).
    pub mids: Option<Vec<[usize; 3]>>,
    pub ports: Vec<Port>,
    pub area: f64,
}

impl ReferenceComponent {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.tris.len()
    }

    pub fn volume(&self) -> f64 {
        self.area * self.thickness
    }

    pub fn port_index(&self, edge: EdgeId) -> Option<usize> {
        self.ports.iter().position(|p| p.edge == edge)
    }

    /// Port edge length.
    pub fn port_length(&self) -> f64 {
        self.cell_size / 3.0
    }

    /// All element node ids of element `e`: corners then midside nodes.
    pub fn element_nodes(&self, e: usize) -> Vec<usize> {
        let mut out = self.tris[e].to_vec();
        if let Some(mids) = &self.mids {
            out.extend_from_slice(&mids[e]);
        }
        out
    }

    /// Set of node ids lying on any port.
    pub fn port_node_set(&self) -> Vec<bool> {
        let mut on_port = vec![false; self.nodes.len()];
        for p in &self.ports {
            for &n in &p.nodes {
                on_port[n] = true;
            }
        }
        on_port
    }
}

/// Frame wall width in cells for a given port resolution.
fn wall_width(b: usize) -> usize {
    ((b as f64 / 3.0).round() as usize).max(1)
}

/// Builds the mesh of one component variant.
///
/// `port_res` is the number of element edges along each port, so a quadratic
/// port carries `2 * port_res + 1` nodes per displacement component.
pub fn build_reference_component(
    kind: ComponentKind,
    order: ElementOrder,
    port_res: usize,
    cell_size: f64,
    thickness: f64,
) -> Result<ReferenceComponent> {
    if port_res == 0 {
        return Err(Error::Geometry("port resolution must be at least 1".into()));
    }
    if !(cell_size > 0.0) || !(thickness > 0.0) {
        return Err(Error::Geometry(
            "cell size and thickness must be positive".into(),
        ));
    }
    let b = port_res;
    let r = 3 * b;
    let w = wall_width(b);
    let fine = 2 * r;

    let kept: Vec<(usize, usize)> = (0..r)
        .flat_map(|j| (0..r).map(move |i| (i, j)))
        .filter(|&(i, j)| kind.keeps_cell(i, j, r, b, w))
        .collect();
    if kept.is_empty() {
        return Err(Error::Geometry(format!(
            "variant {:?} keeps no cells at resolution {b}",
            kind
        )));
    }

    // Node keys live on the doubled grid so quadratic midside nodes have
    // integer coordinates. Linear meshes only use even/even keys.
    let mut keys: Vec<(usize, usize)> = Vec::new();
    let push_cell_keys = |i: usize, j: usize, keys: &mut Vec<(usize, usize)>| {
        let (fx, fy) = (2 * i, 2 * j);
        keys.push((fx, fy));
        keys.push((fx + 2, fy));
        keys.push((fx + 2, fy + 2));
        keys.push((fx, fy + 2));
        if order == ElementOrder::Quadratic {
            keys.push((fx + 1, fy));
            keys.push((fx + 2, fy + 1));
            keys.push((fx + 1, fy + 2));
            keys.push((fx, fy + 1));
            keys.push((fx + 1, fy + 1));
        }
    };
    for &(i, j) in &kept {
        push_cell_keys(i, j, &mut keys);
    }
    keys.sort_by_key(|&(fx, fy)| (fy, fx));
    keys.dedup();
    let index_of = |fx: usize, fy: usize| -> Option<usize> {
        keys.binary_search_by_key(&(fy, fx), |&(kx, ky)| (ky, kx)).ok()
    };

    let nodes: Vec<[f64; 2]> = keys
        .iter()
        .map(|&(fx, fy)| {
            [
                cell_size * fx as f64 / fine as f64,
                cell_size * fy as f64 / fine as f64,
            ]
        })
        .collect();

    let mut tris = Vec::with_capacity(2 * kept.len());
    let mut mids = if order == ElementOrder::Quadratic {
        Some(Vec::with_capacity(2 * kept.len()))
    } else {
        None
    };
    for &(i, j) in &kept {
        let (fx, fy) = (2 * i, 2 * j);
        let v00 = index_of(fx, fy).unwrap();
        let v10 = index_of(fx + 2, fy).unwrap();
        let v11 = index_of(fx + 2, fy + 2).unwrap();
        let v01 = index_of(fx, fy + 2).unwrap();
        // Split along the cell diagonal v00 -> v11; both triangles CCW.
        tris.push([v00, v10, v11]);
        tris.push([v00, v11, v01]);
        if let Some(mids) = mids.as_mut() {
            let m_b = index_of(fx + 1, fy).unwrap();
            let m_r = index_of(fx + 2, fy + 1).unwrap();
            let m_t = index_of(fx + 1, fy + 2).unwrap();
            let m_l = index_of(fx, fy + 1).unwrap();
            let m_d = index_of(fx + 1, fy + 1).unwrap();
            mids.push([m_b, m_r, m_d]);
            mids.push([m_d, m_t, m_l]);
        }
    }

    let step = match order {
        ElementOrder::Linear => 2,
        ElementOrder::Quadratic => 1,
    };
    let mut ports = Vec::new();
    for &edge in kind.port_edges() {
        let span: Vec<usize> = (2 * b..=4 * b).step_by(step).collect();
        let ids: Option<Vec<usize>> = span
            .iter()
            .map(|&s| match edge {
                EdgeId::Bottom => index_of(s, 0),
                EdgeId::Top => index_of(s, fine),
                EdgeId::Left => index_of(0, s),
                EdgeId::Right => index_of(fine, s),
            })
            .collect();
        let nodes = ids.ok_or_else(|| {
            Error::Geometry(format!("variant {kind:?} does not reach its {edge:?} port"))
        })?;
        ports.push(Port { edge, nodes });
    }

    let mut area = 0.0;
    for t in &tris {
        let a = nodes[t[0]];
        let b2 = nodes[t[1]];
        let c = nodes[t[2]];
        let cross = (b2[0] - a[0]) * (c[1] - a[1]) - (b2[1] - a[1]) * (c[0] - a[0]);
        if cross <= 0.0 {
            return Err(Error::Geometry("degenerate or inverted element".into()));
        }
        area += 0.5 * cross;
    }

    Ok(ReferenceComponent {
        kind,
        order,
        port_res: b,
        grid_res: r,
        cell_size,
        thickness,
        nodes,
        tris,
        mids,
        ports,
        area,
    })
}

/// The six reference components at a shared discretization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentSet {
    pub order: ElementOrder,
    pub port_res: usize,
    pub cell_size: f64,
    pub thickness: f64,
    components: Vec<ReferenceComponent>,
}

impl ComponentSet {
    pub fn build(
        order: ElementOrder,
        port_res: usize,
        cell_size: f64,
        thickness: f64,
    ) -> Result<Self> {
        let components = ALL_KINDS
            .iter()
            .map(|&k| build_reference_component(k, order, port_res, cell_size, thickness))
            .collect::<Result<Vec<_>>>()?;
        Ok(ComponentSet {
            order,
            port_res,
            cell_size,
            thickness,
            components,
        })
    }

    pub fn component(&self, kind: ComponentKind) -> &ReferenceComponent {
        let idx = ALL_KINDS.iter().position(|&k| k == kind).unwrap();
        &self.components[idx]
    }

    pub fn kinds(&self) -> impl Iterator<Item = ComponentKind> + '_ {
        ALL_KINDS.into_iter()
    }

    pub fn port_nodes_per_component(&self) -> usize {
        self.order.port_node_count(self.port_res)
    }
}
