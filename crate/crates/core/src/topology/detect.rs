use std::collections::{BTreeSet, HashMap};

use super::{BackgroundGrid, NodeRef, TopologyEvent};
use crate::geometry::{Binding, Curve, CurveNetwork, End, EndRef, Wall};

/// Nodes searched on each side of a collision for the closest pair.
pub const NEIGHBOURHOOD: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectOptions {
    pub neighbourhood: usize,
    /// Nodes within this graph distance of the same junction never collide.
    pub junction_exemption: usize,
    /// Nodes within this graph distance of a bound curve end never hit a wall.
    pub end_exemption: usize,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            neighbourhood: NEIGHBOURHOOD,
            junction_exemption: 4,
            end_exemption: NEIGHBOURHOOD,
        }
    }
}

pub fn detect(network: &CurveNetwork, grid: &BackgroundGrid, step: usize) -> Vec<TopologyEvent> {
    detect_counted(network, grid, step, &DetectOptions::default()).0
}

/// Detection plus the number of node visits made (two per node).
pub fn detect_counted(
    network: &CurveNetwork,
    grid: &BackgroundGrid,
    step: usize,
    options: &DetectOptions,
) -> (Vec<TopologyEvent>, usize) {
    let mut visits = 0;
    let mut cells: HashMap<usize, Option<NodeRef>> = HashMap::with_capacity(network.node_count());

    for c in &network.curves {
        for p in &c.nodes {
            visits += 1;
            cells.insert(grid.index(grid.cell_of(*p)), None);
        }
    }

    let mut events = Vec::new();
    let mut seen = BTreeSet::new();
    let mut wall_best: Vec<Option<(f64, NodeRef, Wall)>> = vec![None; network.curves.len()];
    for (i, c) in network.curves.iter().enumerate() {
        for (j, p) in c.nodes.iter().enumerate() {
            visits += 1;
            let cell = grid.cell_of(*p);
            if grid.is_blocked(cell, step) {
                continue;
            }
            let here = NodeRef::new(i, j);
            if grid.is_outer(cell) && !near_bound_end(c, j, options.end_exemption) {
                let (w, h) = (network.domain.width, network.domain.height);
                let wall = Wall::nearest(*p, w, h);
                let d = wall.distance(*p, w, h);
                if wall_best[i].is_none_or(|(bd, _, _)| d < bd) {
                    wall_best[i] = Some((d, here, wall));
                }
            }
            let slot = cells
                .get_mut(&grid.index(cell))
                .expect("primed in the first pass");
            if let Some(other) = slot.replace(here) {
                if let Some(ev) = collide(network, other, here, options) {
                    if seen.insert(key(&ev)) {
                        events.push(ev);
                    }
                }
            }
        }
    }
    events.extend(
        wall_best
            .into_iter()
            .flatten()
            .map(|(_, at, wall)| TopologyEvent::BoundaryHit { at, wall }),
    );
    events.extend(wall_joins(network, grid, step));
    (events, visits)
}

fn key(ev: &TopologyEvent) -> (usize, usize, usize, usize) {
    match *ev {
        TopologyEvent::Split { a, b }
        | TopologyEvent::Merge { a, b }
        | TopologyEvent::TripleCreate { a, b } => {
            let (x, y) = if a <= b { (a, b) } else { (b, a) };
            (x.curve, x.node, y.curve, y.node)
        }
        _ => (usize::MAX, 0, 0, 0),
    }
}

fn is_endpoint(c: &Curve, j: usize) -> bool {
    !c.closed && (j == 0 || j + 1 == c.len())
}

fn near_bound_end(c: &Curve, j: usize, within: usize) -> bool {
    !c.closed && (j <= within || c.len() - 1 - j <= within)
}

/// Graph distance from node `j` to each end bound to a junction.
fn junction_distances(c: &Curve, j: usize) -> Vec<(u32, usize)> {
    let mut out = Vec::new();
    if c.closed {
        return out;
    }
    if let Some(Binding::Junction(id)) = c.binding(End::Start) {
        out.push((id, j));
    }
    if let Some(Binding::Junction(id)) = c.binding(End::End) {
        out.push((id, c.len() - 1 - j));
    }
    out
}

fn exempt(network: &CurveNetwork, a: NodeRef, b: NodeRef, options: &DetectOptions) -> bool {
    let ca = &network.curves[a.curve];
    let cb = &network.curves[b.curve];
    if a.curve == b.curve && ca.graph_distance(a.node, b.node) <= 2 {
        return true;
    }
    let da = junction_distances(ca, a.node);
    let db = junction_distances(cb, b.node);
    da.iter().any(|&(ja, x)| {
        db.iter()
            .any(|&(jb, y)| ja == jb && x + y <= options.junction_exemption)
    })
}

fn neighbourhood(c: &Curve, j: usize, n: usize) -> Vec<usize> {
    let len = c.len() as isize;
    let mut out = Vec::new();
    for d in -(n as isize)..=(n as isize) {
        let k = j as isize + d;
        let k = if c.closed {
            k.rem_euclid(len)
        } else if k < 0 || k >= len {
            continue;
        } else {
            k
        } as usize;
        if !is_endpoint(c, k) && !out.contains(&k) {
            out.push(k);
        }
    }
    out
}

/// Closest admissible pair around a collision, classified.
fn collide(
    network: &CurveNetwork,
    a: NodeRef,
    b: NodeRef,
    options: &DetectOptions,
) -> Option<TopologyEvent> {
    if exempt(network, a, b, options) {
        return None;
    }
    let ca = &network.curves[a.curve];
    let cb = &network.curves[b.curve];
    let mut best: Option<(f64, NodeRef, NodeRef)> = None;
    for ja in neighbourhood(ca, a.node, options.neighbourhood) {
        for jb in neighbourhood(cb, b.node, options.neighbourhood) {
            let (pa, pb) = (NodeRef::new(a.curve, ja), NodeRef::new(b.curve, jb));
            if a.curve == b.curve && ca.graph_distance(ja, jb) < 3 {
                continue;
            }
            if exempt(network, pa, pb, options) {
                continue;
            }
            let d = ca.nodes[ja].distance(cb.nodes[jb]);
            if best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, pa, pb));
            }
        }
    }
    let (_, pa, pb) = best?;
    if a.curve == b.curve {
        return Some(TopologyEvent::Split { a: pa, b: pb });
    }
    if ca.kplus == cb.kplus && ca.kminus == cb.kminus {
        Some(TopologyEvent::Merge { a: pa, b: pb })
    } else if ca.kplus == cb.kminus && ca.kminus == cb.kplus {
        // A region pinched to nothing between two oppositely oriented copies
        // of the same interface; excluded by a consistent orientation.
        log::debug!(
            "ignoring anti-parallel contact of curves {} and {}",
            a.curve,
            b.curve
        );
        None
    } else {
        Some(TopologyEvent::TripleCreate { a: pa, b: pb })
    }
}

/// Pairs of wall ends sharing an unblocked cell on the same wall.
fn wall_joins(network: &CurveNetwork, grid: &BackgroundGrid, step: usize) -> Vec<TopologyEvent> {
    let ends = network.boundary_points();
    let mut out = Vec::new();
    for (x, p) in ends.iter().enumerate() {
        for q in &ends[x + 1..] {
            if p.wall != q.wall {
                continue;
            }
            let (pp, pq) = (network.end_node(p.at), network.end_node(q.at));
            let cell = grid.cell_of(pp);
            if cell != grid.cell_of(pq) || grid.is_blocked(cell, step) {
                continue;
            }
            if compatible(network, p.at, q.at) {
                out.push(TopologyEvent::WallJoin { a: p.at, b: q.at });
            }
        }
    }
    out
}

/// Whether two curve ends can be joined into one consistently oriented curve.
pub(super) fn compatible(network: &CurveNetwork, a: EndRef, b: EndRef) -> bool {
    if a.curve == b.curve {
        return a.end != b.end;
    }
    let ca = &network.curves[a.curve];
    let cb = &network.curves[b.curve];
    // Joining an end to a start keeps both orientations; two ends of the same
    // kind need one curve reversed, which swaps its regions.
    if a.end != b.end {
        ca.kplus == cb.kplus && ca.kminus == cb.kminus
    } else {
        ca.kplus == cb.kminus && ca.kminus == cb.kplus
    }
}
