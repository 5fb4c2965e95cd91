use super::{BackgroundGrid, DeleteCase, TopologyError, TopologyEvent};
use crate::geometry::{Binding, Curve, CurveNetwork, End, EndRef, RegionId};
use crate::vec2::Vec2;

/// A junction curve lying entirely in blocked cells was just created and is left alone.
pub fn is_protected(curve: &Curve, grid: &BackgroundGrid, step: usize) -> bool {
    let junction_end = [curve.start, curve.end]
        .iter()
        .any(|b| matches!(b, Some(Binding::Junction(_))));
    junction_end && curve.nodes.iter().all(|p| grid.is_blocked_point(*p, step))
}

/// Remove every curve shorter than `l_del`, one at a time. A deletion that
/// has no well-defined continuation is logged and the curve kept.
pub fn delete_short_curves(
    network: &mut CurveNetwork,
    l_del: f64,
    grid: &mut BackgroundGrid,
    step: usize,
) -> Result<Vec<TopologyEvent>, TopologyError> {
    let mut events = Vec::new();
    let mut skip: Vec<usize> = Vec::new();
    loop {
        let candidate =
            network.curves.iter().enumerate().find(|(i, c)| {
                !skip.contains(i) && c.length() < l_del && !is_protected(c, grid, step)
            });
        let Some((i, _)) = candidate else { break };
        let centre = centroid(&network.curves[i]);
        match delete_curve(network, i, grid.cell) {
            Ok(case) => {
                events.push(TopologyEvent::CurveDelete { curve: i, case });
                grid.block_point(centre, step);
                // indices above i shifted down
                skip = skip
                    .into_iter()
                    .map(|s| if s > i { s - 1 } else { s })
                    .collect();
            }
            Err(e @ TopologyError::AmbiguousContinuation(_)) => {
                log::warn!("step {step}: keeping short curve {i}: {e}");
                skip.push(i);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(events)
}

fn centroid(c: &Curve) -> Vec2 {
    c.nodes.iter().fold(Vec2::ZERO, |s, p| s + *p) / c.len() as f64
}

fn delete_curve(
    network: &mut CurveNetwork,
    i: usize,
    cell: f64,
) -> Result<DeleteCase, TopologyError> {
    let c = network.curves[i].clone();
    if c.closed {
        network.curves.remove(i);
        return Ok(DeleteCase::Closed);
    }
    match (c.start, c.end) {
        (Some(Binding::Wall(_)), Some(Binding::Wall(_))) => {
            network.curves.remove(i);
            Ok(DeleteCase::WallWall)
        }
        (Some(Binding::Junction(j1)), Some(Binding::Junction(j2))) => {
            if j1 == j2 {
                return Err(TopologyError::AmbiguousContinuation(i));
            }
            between_junctions(network, i, j1, j2, cell)
        }
        (Some(Binding::Junction(j)), Some(Binding::Wall(w)))
        | (Some(Binding::Wall(w)), Some(Binding::Junction(j))) => {
            let others = other_arms(network, j, i)?;
            let at = w.project(
                network.end_node(others[0]),
                network.domain.width,
                network.domain.height,
            );
            for e in others {
                network.set_end_node(e, at);
                network.curves[e.curve].set_binding(e.end, Some(Binding::Wall(w)));
            }
            network.curves.remove(i);
            Ok(DeleteCase::JunctionWall)
        }
        _ => Err(TopologyError::InvalidEvent(format!(
            "curve {i} has an unbound end"
        ))),
    }
}

/// The two ends at junction `id` that do not belong to curve `skip`.
fn other_arms(network: &CurveNetwork, id: u32, skip: usize) -> Result<[EndRef; 2], TopologyError> {
    let j = network
        .junction(id)
        .ok_or_else(|| TopologyError::InvalidEvent(format!("junction {id} is incomplete")))?;
    let others: Vec<EndRef> = j.ends.iter().copied().filter(|e| e.curve != skip).collect();
    match others[..] {
        [a, b] => Ok([a, b]),
        _ => Err(TopologyError::AmbiguousContinuation(skip)),
    }
}

fn regions(c: &Curve) -> [RegionId; 2] {
    [c.kplus, c.kminus]
}

/// Split the two arms at a junction into the one bordering `plus` and the one
/// bordering `minus`, and return the region between them.
fn sort_arms(
    network: &CurveNetwork,
    arms: [EndRef; 2],
    plus: RegionId,
    minus: RegionId,
    i: usize,
) -> Result<(EndRef, EndRef, RegionId), TopologyError> {
    let r0 = regions(&network.curves[arms[0].curve]);
    let r1 = regions(&network.curves[arms[1].curve]);
    let (p, m, rp, rm) = if r0.contains(&plus) && r1.contains(&minus) {
        (arms[0], arms[1], r0, r1)
    } else if r1.contains(&plus) && r0.contains(&minus) {
        (arms[1], arms[0], r1, r0)
    } else {
        return Err(TopologyError::AmbiguousContinuation(i));
    };
    let outer_p = if rp[0] == plus { rp[1] } else { rp[0] };
    let outer_m = if rm[0] == minus { rm[1] } else { rm[0] };
    if outer_p != outer_m || outer_p == plus || outer_p == minus {
        return Err(TopologyError::AmbiguousContinuation(i));
    }
    Ok((p, m, outer_p))
}

fn between_junctions(
    network: &mut CurveNetwork,
    i: usize,
    j1: u32,
    j2: u32,
    cell: f64,
) -> Result<DeleteCase, TopologyError> {
    let c = network.curves[i].clone();
    let (plus, minus) = (c.kplus, c.kminus);
    let (p_plus, p_minus, r1) = sort_arms(network, other_arms(network, j1, i)?, plus, minus, i)?;
    let (q_plus, q_minus, r2) = sort_arms(network, other_arms(network, j2, i)?, plus, minus, i)?;
    let start = c.nodes[0];
    let end = c.nodes[c.len() - 1];
    let chord = end - start;
    if chord.norm() == 0.0 {
        return Err(TopologyError::AmbiguousContinuation(i));
    }
    let q = centroid(&c);
    let nu = chord.perp().normalized();

    if r1 == r2 {
        // The outer regions join through the gap; the plus arms and the
        // minus arms each become one curve passing on either side of it.
        let arms = [p_plus.curve, q_plus.curve, p_minus.curve, q_minus.curve];
        if [p_plus.curve, q_plus.curve]
            .iter()
            .any(|x| [p_minus.curve, q_minus.curve].contains(x))
        {
            return Err(TopologyError::AmbiguousContinuation(i));
        }
        let eps = 0.25 * cell;
        let top = join_arms(network, p_plus, q_plus, q + nu * eps, i)?;
        let bottom = join_arms(network, p_minus, q_minus, q - nu * eps, i)?;
        let mut remove = arms.to_vec();
        remove.push(i);
        remove.sort_unstable();
        remove.dedup();
        for r in remove.into_iter().rev() {
            network.curves.remove(r);
        }
        network.curves.push(top);
        network.curves.push(bottom);
        Ok(DeleteCase::Reconnect)
    } else {
        // Four distinct regions: the two outer ones now meet along a short
        // curve perpendicular to the deleted one.
        let d = 0.5 * cell;
        let ja = q + nu * d;
        let jb = q - nu * d;
        let id_a = network.next_junction_id();
        let id_b = id_a + 1;
        for (e, p, id) in [
            (p_plus, ja, id_a),
            (q_plus, ja, id_a),
            (p_minus, jb, id_b),
            (q_minus, jb, id_b),
        ] {
            network.set_end_node(e, p);
            network.curves[e.curve].set_binding(e.end, Some(Binding::Junction(id)));
        }
        // travelling from jb to ja the normal points back toward the first junction's side
        let flip = Curve::open(
            vec![jb, ja],
            r1,
            r2,
            Binding::Junction(id_b),
            Binding::Junction(id_a),
        );
        network.curves.remove(i);
        network.curves.push(flip);
        Ok(DeleteCase::Flip)
    }
}

/// Join the curve ending at `x` with the curve ending at `y` through `mid`,
/// dropping both junction nodes. If both are the same curve it closes up.
fn join_arms(
    network: &CurveNetwork,
    x: EndRef,
    y: EndRef,
    mid: Vec2,
    i: usize,
) -> Result<Curve, TopologyError> {
    let out = if x.curve == y.curve {
        let c = &network.curves[x.curve];
        let mut v = c.nodes[1..c.len() - 1].to_vec();
        v.push(mid);
        Curve::closed(v, c.kplus, c.kminus)
    } else {
        let first = if x.end == End::End {
            network.curves[x.curve].clone()
        } else {
            network.curves[x.curve].reversed()
        };
        let second = if y.end == End::Start {
            network.curves[y.curve].clone()
        } else {
            network.curves[y.curve].reversed()
        };
        if first.kplus != second.kplus || first.kminus != second.kminus {
            return Err(TopologyError::AmbiguousContinuation(i));
        }
        let mut v = first.nodes[..first.len() - 1].to_vec();
        v.push(mid);
        v.extend_from_slice(&second.nodes[1..]);
        Curve {
            nodes: v,
            closed: false,
            kplus: first.kplus,
            kminus: first.kminus,
            start: first.start,
            end: second.end,
        }
    };
    if out.len() < out.min_nodes() {
        return Err(TopologyError::AmbiguousContinuation(i));
    }
    Ok(out)
}
