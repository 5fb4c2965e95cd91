use super::{detect::compatible, NodeRef, TopologyError};
use crate::geometry::{Binding, Curve, CurveNetwork, End, EndRef, RegionId, Wall};
use crate::vec2::Vec2;

fn open_curve(
    nodes: Vec<Vec2>,
    kplus: RegionId,
    kminus: RegionId,
    start: Option<Binding>,
    end: Option<Binding>,
) -> Curve {
    Curve {
        nodes,
        closed: false,
        kplus,
        kminus,
        start,
        end,
    }
}

/// The nodes of a closed curve read from `start` once around.
fn rotated(nodes: &[Vec2], start: usize) -> Vec<Vec2> {
    let mut v = nodes[start..].to_vec();
    v.extend_from_slice(&nodes[..start]);
    v
}

/// Replace curves `remove` (any order) by `add`, keeping the other indices'
/// relative order. New curves go to the end.
fn replace_curves(network: &mut CurveNetwork, remove: &[usize], add: Vec<Curve>) {
    let mut r = remove.to_vec();
    r.sort_unstable();
    r.dedup();
    for i in r.into_iter().rev() {
        network.curves.remove(i);
    }
    network.curves.extend(add);
}

fn check(curves: &[Curve]) -> Result<(), TopologyError> {
    for c in curves {
        if c.len() < c.min_nodes() {
            return Err(TopologyError::DegenerateSplit);
        }
        for k in 0..c.edge_count() {
            let (a, b) = c.edge(k);
            if a == b {
                return Err(TopologyError::InvalidEvent(
                    "operation would create a zero-length edge".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Reconnect `j -> j1 + 1` and `j1 -> j + 1` on one curve.
///
/// A closed curve becomes two closed curves; an open curve becomes an open
/// curve and a closed loop. Orientation and regions are inherited.
pub fn apply_split(
    network: &mut CurveNetwork,
    curve: usize,
    j: usize,
    j1: usize,
) -> Result<(), TopologyError> {
    let c = network
        .curves
        .get(curve)
        .ok_or_else(|| TopologyError::InvalidEvent(format!("no curve {curve}")))?;
    let (j, j1) = (j.min(j1), j.max(j1));
    if j1 >= c.len() || j == j1 {
        return Err(TopologyError::DegenerateSplit);
    }
    let x = &c.nodes;
    let pieces = if c.closed {
        let a = x[j + 1..=j1].to_vec();
        let mut b = x[j1 + 1..].to_vec();
        b.extend_from_slice(&x[..=j]);
        vec![
            Curve::closed(a, c.kplus, c.kminus),
            Curve::closed(b, c.kplus, c.kminus),
        ]
    } else {
        if j == 0 || j1 + 1 == c.len() {
            return Err(TopologyError::DegenerateSplit);
        }
        let mut a = x[..=j].to_vec();
        a.extend_from_slice(&x[j1 + 1..]);
        let loop_ = x[j + 1..=j1].to_vec();
        vec![
            open_curve(a, c.kplus, c.kminus, c.start, c.end),
            Curve::closed(loop_, c.kplus, c.kminus),
        ]
    };
    check(&pieces)?;
    let mut pieces = pieces.into_iter();
    network.curves[curve] = pieces.next().expect("two pieces");
    network.curves.extend(pieces);
    Ok(())
}

/// Normal direction at a node, unnormalized; only its sign matters here.
fn node_normal(c: &Curve, j: usize) -> Vec2 {
    let n = c.len();
    let (prev, next) = if c.closed {
        ((j + n - 1) % n, (j + 1) % n)
    } else {
        (j.saturating_sub(1), (j + 1).min(n - 1))
    };
    (c.nodes[next] - c.nodes[prev]).perp()
}

/// Reconnect two curves bounding the same region pair into one (or, for two
/// open curves, two) curves with the same reconnection rule as a split.
pub fn apply_merge(
    network: &mut CurveNetwork,
    a: NodeRef,
    b: NodeRef,
) -> Result<(), TopologyError> {
    if a.curve == b.curve {
        return Err(TopologyError::InvalidEvent("merge needs two curves".into()));
    }
    let ca = &network.curves[a.curve];
    let cb = &network.curves[b.curve];
    if ca.kplus != cb.kplus || ca.kminus != cb.kminus {
        return Err(TopologyError::OrientationMismatch(a.curve, b.curve));
    }
    // Two fronts of the same interface meet head on, so their normals face
    // each other; aligned normals mean the regions would overlap.
    if node_normal(ca, a.node).dot(node_normal(cb, b.node)) > 0.0 {
        return Err(TopologyError::OrientationMismatch(a.curve, b.curve));
    }
    let interior = |c: &Curve, j: usize| c.closed || (j > 0 && j + 1 < c.len());
    if !interior(ca, a.node) || !interior(cb, b.node) {
        return Err(TopologyError::InvalidEvent("merge at a curve end".into()));
    }
    let (kp, km) = (ca.kplus, ca.kminus);
    let (j, j1) = (a.node, b.node);
    let pieces = match (ca.closed, cb.closed) {
        (true, true) => {
            let mut v = rotated(&ca.nodes, (j + 1) % ca.len());
            v.extend(rotated(&cb.nodes, (j1 + 1) % cb.len()));
            vec![Curve::closed(v, kp, km)]
        }
        (false, true) | (true, false) => {
            let (open, oj, closed, cj) = if ca.closed {
                (cb, j1, ca, j)
            } else {
                (ca, j, cb, j1)
            };
            let mut v = open.nodes[..=oj].to_vec();
            v.extend(rotated(&closed.nodes, (cj + 1) % closed.len()));
            v.extend_from_slice(&open.nodes[oj + 1..]);
            vec![open_curve(v, kp, km, open.start, open.end)]
        }
        (false, false) => {
            let mut v1 = ca.nodes[..=j].to_vec();
            v1.extend_from_slice(&cb.nodes[j1 + 1..]);
            let mut v2 = cb.nodes[..=j1].to_vec();
            v2.extend_from_slice(&ca.nodes[j + 1..]);
            vec![
                open_curve(v1, kp, km, ca.start, cb.end),
                open_curve(v2, kp, km, cb.start, ca.end),
            ]
        }
    };
    check(&pieces)?;
    let keep = a.curve.min(b.curve);
    let drop = a.curve.max(b.curve);
    let mut pieces = pieces.into_iter();
    network.curves[keep] = pieces.next().expect("at least one piece");
    network.curves.remove(drop);
    network.curves.extend(pieces);
    Ok(())
}

/// Cut `c` at edge `(k, k+1)`: node `k` becomes `lo`, node `k+1` becomes `hi`,
/// and the new ends get the given bindings.
fn cut_at_edge(
    c: &Curve,
    k: usize,
    lo: (Vec2, Binding),
    hi: (Vec2, Binding),
) -> Result<Vec<Curve>, TopologyError> {
    let n = c.len();
    if c.closed {
        let mut v = rotated(&c.nodes, (k + 1) % n);
        v[0] = hi.0;
        v[n - 1] = lo.0;
        Ok(vec![open_curve(
            v,
            c.kplus,
            c.kminus,
            Some(hi.1),
            Some(lo.1),
        )])
    } else {
        if k == 0 || k + 2 >= n {
            return Err(TopologyError::InvalidEvent(
                "cut too close to a curve end".into(),
            ));
        }
        let mut first = c.nodes[..=k].to_vec();
        first[k] = lo.0;
        let mut second = c.nodes[k + 1..].to_vec();
        second[0] = hi.0;
        Ok(vec![
            open_curve(first, c.kplus, c.kminus, c.start, Some(lo.1)),
            open_curve(second, c.kplus, c.kminus, Some(hi.1), c.end),
        ])
    }
}

fn next(c: &Curve, j: usize) -> Option<usize> {
    if j + 1 < c.len() {
        Some(j + 1)
    } else if c.closed {
        Some(0)
    } else {
        None
    }
}

fn prev(c: &Curve, j: usize) -> Option<usize> {
    if j > 0 {
        Some(j - 1)
    } else if c.closed {
        Some(c.len() - 1)
    } else {
        None
    }
}

/// Resolve a contact of two curves bounding different regions: both curves
/// are cut at the contact, and a two-node curve between two new junctions
/// separates the two regions that now touch. Returns the new junction positions.
pub fn create_triple_junctions(
    network: &mut CurveNetwork,
    a: NodeRef,
    b: NodeRef,
) -> Result<[Vec2; 2], TopologyError> {
    if a.curve == b.curve {
        return Err(TopologyError::InvalidEvent(
            "triple junction needs two curves".into(),
        ));
    }
    let ca = &network.curves[a.curve];
    let cb = &network.curves[b.curve];
    let sa = [ca.kplus, ca.kminus];
    let sb = [cb.kplus, cb.kminus];
    let common: Vec<RegionId> = sa.iter().copied().filter(|r| sb.contains(r)).collect();
    if common.len() != 1 {
        return Err(TopologyError::AmbiguousRegions(a.curve, b.curve));
    }
    let ra = if ca.kplus == common[0] {
        ca.kminus
    } else {
        ca.kplus
    };
    let rb = if cb.kplus == common[0] {
        cb.kminus
    } else {
        cb.kplus
    };

    let (j, j1) = (a.node, b.node);
    let missing = || TopologyError::InvalidEvent("contact node has no neighbours".into());
    let (ja_next, ja_prev) = (
        next(ca, j).ok_or_else(missing)?,
        prev(ca, j).ok_or_else(missing)?,
    );
    let (jb_next, jb_prev) = (
        next(cb, j1).ok_or_else(missing)?,
        prev(cb, j1).ok_or_else(missing)?,
    );
    let ta = ca.nodes[ja_next] - ca.nodes[ja_prev];
    let tb = cb.nodes[jb_next] - cb.nodes[jb_prev];
    let anti = ta.dot(tb) < 0.0;

    let p1 = ca.nodes[j].midpoint(cb.nodes[j1]);
    let partner = if anti { jb_prev } else { jb_next };
    let p2 = ca.nodes[ja_next].midpoint(cb.nodes[partner]);
    if p1.distance(p2) == 0.0 {
        return Err(TopologyError::InvalidEvent(
            "coincident junction positions".into(),
        ));
    }
    let id1 = network.next_junction_id();
    let id2 = id1 + 1;
    let (b1, b2) = (Binding::Junction(id1), Binding::Junction(id2));

    let mut pieces = cut_at_edge(ca, j, (p1, b1), (p2, b2))?;
    pieces.extend(if anti {
        cut_at_edge(cb, jb_prev, (p2, b2), (p1, b1))?
    } else {
        cut_at_edge(cb, j1, (p1, b1), (p2, b2))?
    });

    let towards_a = if ra == ca.kplus {
        node_normal(ca, j)
    } else {
        -node_normal(ca, j)
    };
    let nu = (p2 - p1).perp();
    let (kp, km) = if nu.dot(towards_a) > 0.0 {
        (ra, rb)
    } else {
        (rb, ra)
    };
    pieces.push(open_curve(vec![p1, p2], kp, km, Some(b1), Some(b2)));
    check(&pieces)?;
    replace_curves(network, &[a.curve, b.curve], pieces);
    Ok([p1, p2])
}

/// Project a node onto the wall and cut the curve there: a closed curve opens
/// up with both ends on the wall, an open curve falls apart into two.
pub fn handle_boundary_hit(
    network: &mut CurveNetwork,
    at: NodeRef,
    wall: Wall,
) -> Result<(), TopologyError> {
    let (w, h) = (network.domain.width, network.domain.height);
    let c = network
        .curves
        .get(at.curve)
        .ok_or_else(|| TopologyError::InvalidEvent(format!("no curve {}", at.curve)))?;
    let j = at.node;
    let q = wall.project(c.nodes[j], w, h);
    let bind = Some(Binding::Wall(wall));
    let pieces = if c.closed {
        let mut v = rotated(&c.nodes, j);
        v[0] = q;
        v.push(q);
        vec![open_curve(v, c.kplus, c.kminus, bind, bind)]
    } else {
        if j == 0 || j + 1 >= c.len() {
            return Err(TopologyError::InvalidEvent(
                "boundary hit at a curve end".into(),
            ));
        }
        let mut first = c.nodes[..j].to_vec();
        first.push(q);
        let mut second = vec![q];
        second.extend_from_slice(&c.nodes[j + 1..]);
        vec![
            open_curve(first, c.kplus, c.kminus, c.start, bind),
            open_curve(second, c.kplus, c.kminus, bind, c.end),
        ]
    };
    check(&pieces)?;
    replace_curves(network, &[at.curve], pieces);
    Ok(())
}

/// Join two wall ends that came together. Both wall nodes are dropped: one
/// curve closes into a loop, two curves are concatenated.
pub fn join_wall_ends(
    network: &mut CurveNetwork,
    a: EndRef,
    b: EndRef,
) -> Result<(), TopologyError> {
    let is_wall = |r: EndRef| {
        matches!(
            network.curves[r.curve].binding(r.end),
            Some(Binding::Wall(_))
        )
    };
    if !is_wall(a) || !is_wall(b) || !compatible(network, a, b) {
        return Err(TopologyError::OrientationMismatch(a.curve, b.curve));
    }
    let joined = if a.curve == b.curve {
        let c = &network.curves[a.curve];
        let v = c.nodes[1..c.len() - 1].to_vec();
        Curve::closed(v, c.kplus, c.kminus)
    } else {
        // orient so that `first` ends at the join and `second` starts there
        let first = if a.end == End::End {
            network.curves[a.curve].clone()
        } else {
            network.curves[a.curve].reversed()
        };
        let second = if b.end == End::Start {
            network.curves[b.curve].clone()
        } else {
            network.curves[b.curve].reversed()
        };
        let mut v = first.nodes[..first.len() - 1].to_vec();
        v.extend_from_slice(&second.nodes[1..]);
        open_curve(v, first.kplus, first.kminus, first.start, second.end)
    };
    let pieces = vec![joined];
    check(&pieces)?;
    replace_curves(network, &[a.curve, b.curve], pieces);
    Ok(())
}
