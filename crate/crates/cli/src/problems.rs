//! Benchmark ground structures: an L-bracket clamped along its top edge and
//! a cantilever clamped along its left column, plus user-drawn layouts.

use anyhow::{bail, Context, Result};

use trellis_core::ground::{CellEdge, Layout};
use trellis_core::mesh::{ComponentKind, EdgeId};

use crate::config::{CustomProblem, ProblemKind, RunConfig};

/// Builds the configured layout with its nominal (unscaled) loads attached.
pub fn build_layout(cfg: &RunConfig) -> Result<Layout> {
    let total = cfg.total_load_n();
    match cfg.problem {
        ProblemKind::LBracket => build_l_bracket(cfg.l_bracket_scale, total),
        ProblemKind::Cantilever => {
            build_cantilever(cfg.cantilever_scale_x, cfg.cantilever_scale_y, total)
        }
        ProblemKind::Custom => build_custom(&cfg.custom),
    }
}

/// L-shaped occupancy: a `scale` x `scale` square of solid components minus
/// the upper-right block, leaving legs of width `scale / 2`. The top edge of
/// the vertical leg is fixed; a downward force of `total_n` splits evenly
/// over the two upper-surface ports nearest the horizontal leg's tip.
pub fn build_l_bracket(scale: usize, total_n: f64) -> Result<Layout> {
    if scale < 2 {
        bail!("l_bracket scale must be at least 2 to form an L, got {scale}");
    }
    let w = scale / 2;
    let mut layout = Layout::empty(scale, scale);
    for iy in 0..scale {
        for ix in 0..scale {
            if ix < w || iy < w {
                layout.set(ix, iy, ComponentKind::Solid);
            }
        }
    }
    for ix in 0..w {
        layout.dirichlet.push(CellEdge::new(ix, scale - 1, EdgeId::Top));
    }
    let per_port = [0.0, -total_n / 2.0];
    layout
        .loads
        .push((CellEdge::new(scale - 1, w - 1, EdgeId::Top), per_port));
    layout
        .loads
        .push((CellEdge::new(scale - 2, w - 1, EdgeId::Top), per_port));
    Ok(layout)
}

/// A `scale_x` x `scale_y` strip of solid components clamped along every
/// left-column port, loaded downward on the rightmost two ports of the
/// upper surface.
pub fn build_cantilever(scale_x: usize, scale_y: usize, total_n: f64) -> Result<Layout> {
    if scale_y < 2 || scale_x < scale_y {
        bail!("cantilever needs scale_x >= scale_y >= 2, got {scale_x} x {scale_y}");
    }
    let mut layout = Layout::empty(scale_x, scale_y);
    for iy in 0..scale_y {
        for ix in 0..scale_x {
            layout.set(ix, iy, ComponentKind::Solid);
        }
    }
    for iy in 0..scale_y {
        layout.dirichlet.push(CellEdge::new(0, iy, EdgeId::Left));
    }
    let per_port = [0.0, -total_n / 2.0];
    layout
        .loads
        .push((CellEdge::new(scale_x - 1, scale_y - 1, EdgeId::Top), per_port));
    layout
        .loads
        .push((CellEdge::new(scale_x - 2, scale_y - 1, EdgeId::Top), per_port));
    Ok(layout)
}

fn parse_edge(tok: &str) -> Result<EdgeId> {
    match tok {
        "B" | "b" => Ok(EdgeId::Bottom),
        "R" | "r" => Ok(EdgeId::Right),
        "T" | "t" => Ok(EdgeId::Top),
        "L" | "l" => Ok(EdgeId::Left),
        other => bail!("unknown edge {other:?}, expected one of B R T L"),
    }
}

fn parse_cell_edge(spec: &str) -> Result<CellEdge> {
    let toks: Vec<&str> = spec.split_whitespace().collect();
    if toks.len() != 3 {
        bail!("expected \"ix iy EDGE\", got {spec:?}");
    }
    let ix = toks[0].parse().with_context(|| format!("in {spec:?}"))?;
    let iy = toks[1].parse().with_context(|| format!("in {spec:?}"))?;
    Ok(CellEdge::new(ix, iy, parse_edge(toks[2])?))
}

fn build_custom(spec: &CustomProblem) -> Result<Layout> {
    let mut layout = Layout::parse_grid(&spec.grid)?;
    for d in &spec.dirichlet {
        layout.dirichlet.push(parse_cell_edge(d)?);
    }
    for l in &spec.loads_n {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 5 {
            bail!("expected \"ix iy EDGE fx fy\", got {l:?}");
        }
        let ce = parse_cell_edge(&toks[..3].join(" "))?;
        let fx = toks[3].parse().with_context(|| format!("in {l:?}"))?;
        let fy = toks[4].parse().with_context(|| format!("in {l:?}"))?;
        layout.loads.push((ce, [fx, fy]));
    }
    if layout.dirichlet.is_empty() {
        bail!("custom problem needs at least one dirichlet edge");
    }
    if layout.loads.is_empty() {
        bail!("custom problem needs at least one load");
    }
    Ok(layout)
}
