use std::collections::BTreeSet;

use proptest::prelude::*;

use super::*;
use crate::geometry::{Binding, Curve, Domain, End};
use crate::regions::initialize_labels;

fn v(x: f64, y: f64) -> Vec2 {
    Vec2::new(x, y)
}

/// 30-node closed curve pinched so that nodes 5 and 23 nearly touch.
fn pinched() -> CurveNetwork {
    let mut nodes = Vec::new();
    for j in 0..15 {
        nodes.push(v(5.0 + j as f64, 2.0));
    }
    for j in 15..30 {
        nodes.push(v(33.0 - j as f64, 8.0));
    }
    nodes[4].y = 3.6;
    nodes[5].y = 4.8;
    nodes[6].y = 3.6;
    nodes[22].y = 6.4;
    nodes[23].y = 5.2;
    nodes[24].y = 6.4;
    CurveNetwork::with_curves(Domain::new(24.0, 12.0), vec![Curve::closed(nodes, 2, 1)])
}

/// Cycles of the successor map of a labelled cycle after reconnection.
fn reconnect_cycles(n: usize, j: usize, j1: usize) -> Vec<BTreeSet<usize>> {
    let succ = |k: usize| {
        if k == j {
            (j1 + 1) % n
        } else if k == j1 {
            (j + 1) % n
        } else {
            (k + 1) % n
        }
    };
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut cyc = BTreeSet::new();
        let mut k = s;
        while !seen[k] {
            seen[k] = true;
            cyc.insert(k);
            k = succ(k);
        }
        out.push(cyc);
    }
    out
}

fn node_set(curve: &Curve, original: &[Vec2]) -> BTreeSet<usize> {
    curve
        .nodes
        .iter()
        .map(|p| {
            original
                .iter()
                .position(|q| q == p)
                .expect("node from the original")
        })
        .collect()
}

#[test]
fn pinch_is_detected_as_split_at_the_closest_pair() {
    let net = pinched();
    let grid = BackgroundGrid::new(net.domain, 2.0);
    let (events, visits) = detect_counted(&net, &grid, 0, &DetectOptions::default());
    assert_eq!(visits, 60);
    assert_eq!(
        events,
        vec![TopologyEvent::Split {
            a: NodeRef::new(0, 5),
            b: NodeRef::new(0, 23)
        }]
    );
}

#[test]
fn neighbours_sharing_a_cell_are_not_a_collision() {
    let c = Curve::circle(v(20.0, 20.0), 8.0, 64, 2, 1);
    let net = CurveNetwork::with_curves(Domain::new(40.0, 40.0), vec![c]);
    let grid = BackgroundGrid::new(net.domain, 2.0 * net.average_edge_length());
    assert!(detect(&net, &grid, 0).is_empty());
}

#[test]
fn split_matches_enumerated_reconnection() {
    let mut net = pinched();
    let original = net.curves[0].nodes.clone();
    apply_split(&mut net, 0, 5, 23).unwrap();
    assert_eq!(net.curves.len(), 2);
    let got: BTreeSet<BTreeSet<usize>> =
        net.curves.iter().map(|c| node_set(c, &original)).collect();
    let want: BTreeSet<BTreeSet<usize>> = reconnect_cycles(30, 5, 23).into_iter().collect();
    assert_eq!(got, want);
    let mut sizes: Vec<usize> = net.curves.iter().map(Curve::len).collect();
    sizes.sort_unstable();
    assert_eq!(sizes, vec![12, 18]);
    // both pieces keep counterclockwise orientation
    assert!(net
        .curves
        .iter()
        .all(|c| c.signed_area() > 0.0 && c.kplus == 2 && c.kminus == 1));
    initialize_labels(&net, 24, 12, 1).unwrap();
}

#[test]
fn split_of_circle_at_antipodes_halves_it() {
    let mut net = CurveNetwork::with_curves(
        Domain::new(40.0, 40.0),
        vec![Curve::circle(v(20.0, 20.0), 5.0, 20, 2, 1)],
    );
    apply_split(&mut net, 0, 0, 10).unwrap();
    assert_eq!(net.curves[0].len(), 10);
    assert_eq!(net.curves[1].len(), 10);
}

#[test]
fn adjacent_split_is_degenerate() {
    let mut net = pinched();
    assert!(matches!(
        apply_split(&mut net, 0, 5, 6),
        Err(TopologyError::DegenerateSplit)
    ));
    assert!(matches!(
        apply_split(&mut net, 0, 5, 7),
        Err(TopologyError::DegenerateSplit)
    ));
}

#[test]
fn open_curve_split_leaves_open_curve_and_loop() {
    let mut nodes: Vec<Vec2> = (0..10).map(|k| v(2.0 * k as f64, 5.0)).collect();
    nodes.push(v(18.0, 10.0));
    let c = Curve::open(
        nodes,
        2,
        1,
        Binding::Wall(crate::geometry::Wall::Left),
        Binding::Wall(crate::geometry::Wall::Right),
    );
    let mut net = CurveNetwork::with_curves(Domain::new(18.0, 20.0), vec![c]);
    apply_split(&mut net, 0, 2, 6).unwrap();
    assert!(!net.curves[0].closed && net.curves[1].closed);
    assert_eq!(net.curves[0].len() + net.curves[1].len(), 11);
    assert_eq!(net.curves[1].len(), 4);
}

fn two_circles(kb: RegionIdPair, gap: f64) -> CurveNetwork {
    let a = Curve::circle(v(10.0, 10.0), 3.0, 24, 2, 1);
    // rotate the second circle so a node faces the first one
    let mut b = Curve::circle(v(16.0 + gap, 10.0), 3.0, 24, kb.0, kb.1);
    b.nodes.rotate_left(12);
    CurveNetwork::with_curves(Domain::new(30.0, 20.0), vec![a, b])
}

type RegionIdPair = (u32, u32);

#[test]
fn touching_circles_with_same_regions_merge() {
    let net = two_circles((2, 1), 0.3);
    let grid = BackgroundGrid::new(net.domain, net.average_edge_length());
    let events = detect(&net, &grid, 0);
    let Some(TopologyEvent::Merge { a, b }) = events.first().copied() else {
        panic!("{events:?}")
    };
    let mut merged = net.clone();
    apply_merge(&mut merged, a, b).unwrap();
    assert_eq!(merged.curves.len(), 1);
    assert_eq!(merged.node_count(), 48);
    assert!(merged.curves[0].signed_area() > 0.0);
    initialize_labels(&merged, 30, 20, 1).unwrap();
}

#[test]
fn merge_length_is_sum_minus_bridged_edges() {
    let net = two_circles((2, 1), 0.3);
    let (ca, cb) = (&net.curves[0], &net.curves[1]);
    let (j, j1) = (0, 0);
    let expect = ca.length() + cb.length()
        - ca.nodes[0].distance(ca.nodes[1])
        - cb.nodes[0].distance(cb.nodes[1])
        + ca.nodes[j].distance(cb.nodes[j1 + 1])
        + cb.nodes[j1].distance(ca.nodes[j + 1]);
    let mut m = net.clone();
    apply_merge(&mut m, NodeRef::new(0, j), NodeRef::new(1, j1)).unwrap();
    assert!((m.curves[0].length() - expect).abs() < 1e-12);
}

#[test]
fn merge_then_split_restores_connectivity() {
    let net = two_circles((2, 1), 0.3);
    let mut m = net.clone();
    apply_merge(&mut m, NodeRef::new(0, 0), NodeRef::new(1, 0)).unwrap();
    // in the merged curve, a's contact node sits at 23 and b's at 47
    apply_split(&mut m, 0, 23, 47).unwrap();
    let canon = |c: &Curve| {
        let mut s: Vec<(i64, i64)> = c
            .nodes
            .iter()
            .map(|p| ((p.x * 1e9) as i64, (p.y * 1e9) as i64))
            .collect();
        s.sort_unstable();
        s
    };
    let got: BTreeSet<_> = m.curves.iter().map(canon).collect();
    let want: BTreeSet<_> = net.curves.iter().map(canon).collect();
    assert_eq!(got, want);
}

#[test]
fn merge_guards_orientation() {
    let mut net = two_circles((3, 1), 0.3);
    assert!(matches!(
        apply_merge(&mut net, NodeRef::new(0, 0), NodeRef::new(1, 0)),
        Err(TopologyError::OrientationMismatch(..))
    ));
    // aligned normals: second circle reversed so its normal faces outward
    let mut net = two_circles((2, 1), 0.3);
    net.curves[1] = net.curves[1].reversed();
    net.curves[1].kplus = 2;
    net.curves[1].kminus = 1;
    assert!(matches!(
        apply_merge(&mut net, NodeRef::new(0, 0), NodeRef::new(1, 0)),
        Err(TopologyError::OrientationMismatch(..))
    ));
}

#[test]
fn touching_circles_with_different_regions_make_two_junctions() {
    let net = two_circles((3, 1), 0.3);
    let grid = BackgroundGrid::new(net.domain, net.average_edge_length());
    let events = detect(&net, &grid, 0);
    let Some(TopologyEvent::TripleCreate { a, b }) = events.first().copied() else {
        panic!("{events:?}")
    };
    let xa = net.curves[a.curve].nodes[a.node];
    let xb = net.curves[b.curve].nodes[b.node];
    let mut t = net.clone();
    let [p1, _p2] = create_triple_junctions(&mut t, a, b).unwrap();
    assert_eq!(p1, xa.midpoint(xb));
    assert_eq!(t.curves.len(), 3);
    assert_eq!(t.junctions().len(), 2);
    let new = t.curves.last().unwrap();
    assert_eq!(new.len(), 2);
    assert_eq!(
        [new.kplus, new.kminus]
            .iter()
            .copied()
            .collect::<BTreeSet<_>>(),
        BTreeSet::from([2, 3])
    );
    t.validate().unwrap();
    let before = initialize_labels(&net, 30, 20, 1).unwrap().counts();
    let after = initialize_labels(&t, 30, 20, 1).unwrap().counts();
    for k in [2, 3] {
        assert!(
            before[&k].abs_diff(after[&k]) <= 3,
            "region {k}: {} vs {}",
            before[&k],
            after[&k]
        );
    }
}

#[test]
fn triple_junction_needs_one_shared_region() {
    let mut net = two_circles((3, 4), 0.3);
    assert!(matches!(
        create_triple_junctions(&mut net, NodeRef::new(0, 0), NodeRef::new(1, 0)),
        Err(TopologyError::AmbiguousRegions(..))
    ));
}

#[test]
fn closed_curve_hitting_a_wall_opens_up() {
    let c = Curve::circle(v(3.2, 10.0), 3.0, 24, 2, 1);
    let net = CurveNetwork::with_curves(Domain::new(20.0, 20.0), vec![c]);
    let grid = BackgroundGrid::new(net.domain, 0.9);
    let events = detect(&net, &grid, 0);
    let Some(TopologyEvent::BoundaryHit { at, wall }) = events.first().copied() else {
        panic!("{events:?}")
    };
    assert_eq!(wall, crate::geometry::Wall::Left);
    assert_eq!(at.node, 12);
    let mut g2 = grid.clone();
    let mut net2 = net.clone();
    apply_event(&mut net2, &mut g2, 0, &events[0]).unwrap();
    assert_eq!(net2.curves.len(), 1);
    assert!(!net2.curves[0].closed);
    assert_eq!(net2.curves[0].len(), 25);
    let bp = net2.boundary_points();
    assert_eq!(bp.len(), 2);
    assert!(bp.iter().all(|b| net2.end_node(b.at).x == 0.0));
    net2.validate().unwrap();
    // the fresh ends share a cell but it is blocked
    assert!(detect(&net2, &g2, 1)
        .iter()
        .all(|e| !matches!(e, TopologyEvent::WallJoin { .. })));
    initialize_labels(&net2, 20, 20, 1).unwrap();
}

#[test]
fn wall_ends_in_one_cell_close_the_curve() {
    use crate::geometry::Wall;
    let nodes = vec![
        v(0.0, 10.8),
        v(3.0, 12.0),
        v(6.0, 10.0),
        v(3.0, 8.0),
        v(0.0, 10.2),
    ];
    let c = Curve::open(
        nodes,
        1,
        2,
        Binding::Wall(Wall::Left),
        Binding::Wall(Wall::Left),
    );
    let net = CurveNetwork::with_curves(Domain::new(20.0, 20.0), vec![c]);
    let grid = BackgroundGrid::new(net.domain, 1.0);
    let events = detect(&net, &grid, 0);
    let join = events
        .iter()
        .find(|e| matches!(e, TopologyEvent::WallJoin { .. }))
        .expect("wall join");
    let mut n2 = net.clone();
    let mut g2 = grid.clone();
    apply_event(&mut n2, &mut g2, 0, join).unwrap();
    assert!(n2.curves[0].closed);
    assert_eq!(n2.curves[0].len(), 3);
    assert!(n2.boundary_points().is_empty());
}

#[test]
fn blocked_cells_suppress_and_expiry_restores() {
    let net = pinched();
    let mut grid = BackgroundGrid::new(net.domain, 2.0);
    let cell = grid.cell_of(net.curves[0].nodes[5]);
    grid.block_cell(cell, 0, 10);
    assert!(detect(&net, &grid, 3).is_empty());
    assert_eq!(detect(&net, &grid, 10).len(), 1);
    let mut g = BackgroundGrid::new(net.domain, 2.0);
    g.block_cell((11, 0), 0, 10);
    assert_eq!(detect(&net, &g, 0).len(), 1);
}

fn arm(from: Vec2, to: Vec2, kp: u32, km: u32, start: Binding, end: Binding) -> Curve {
    let pts = (0..=10)
        .map(|k| from + (to - from) * (k as f64 / 10.0))
        .collect();
    Curve::open(pts, kp, km, start, end)
}

/// Short horizontal curve between two junctions, arms to the side walls.
fn h_network(right: u32) -> CurveNetwork {
    use crate::geometry::Wall;
    let (j1, j2) = (v(19.4, 20.0), v(20.6, 20.0));
    let jb = |id| Binding::Junction(id);
    CurveNetwork::with_curves(
        Domain::new(40.0, 40.0),
        vec![
            Curve::open(vec![j1, v(20.0, 20.0), j2], 2, 3, jb(0), jb(1)),
            arm(j1, v(0.0, 30.0), 1, 2, jb(0), Binding::Wall(Wall::Left)),
            arm(j1, v(0.0, 10.0), 3, 1, jb(0), Binding::Wall(Wall::Left)),
            arm(
                j2,
                v(40.0, 30.0),
                2,
                right,
                jb(1),
                Binding::Wall(Wall::Right),
            ),
            arm(
                j2,
                v(40.0, 10.0),
                right,
                3,
                jb(1),
                Binding::Wall(Wall::Right),
            ),
        ],
    )
}

#[test]
fn short_curve_between_junctions_with_equal_outer_regions_reconnects() {
    let mut net = h_network(1);
    net.validate().unwrap();
    initialize_labels(&net, 40, 40, 9).unwrap();
    let mut grid = BackgroundGrid::new(net.domain, 1.0);
    let ev = delete_short_curves(&mut net, 2.0, &mut grid, 0).unwrap();
    assert_eq!(
        ev,
        vec![TopologyEvent::CurveDelete {
            curve: 0,
            case: DeleteCase::Reconnect
        }]
    );
    assert_eq!(net.curves.len(), 2);
    assert!(net.junctions().is_empty());
    net.validate().unwrap();
    let l = initialize_labels(&net, 40, 40, 9).unwrap();
    assert_eq!(l.get(20, 35), 2);
    assert_eq!(l.get(20, 5), 3);
    // the outer regions now connect through a thin strip around the old curve
    assert_eq!(l.get(5, 20), 1);
    assert_eq!(l.get(35, 20), 1);
    let top = net.curves.iter().find(|c| c.kplus == 2).unwrap();
    let bottom = net.curves.iter().find(|c| c.kminus == 3).unwrap();
    assert!(top.nodes.iter().all(|p| p.y >= 20.0) && bottom.nodes.iter().all(|p| p.y <= 20.0));
}

#[test]
fn short_curve_between_four_regions_flips() {
    let mut net = h_network(4);
    initialize_labels(&net, 40, 40, 9).unwrap();
    let mut grid = BackgroundGrid::new(net.domain, 1.0);
    let ev = delete_short_curves(&mut net, 2.0, &mut grid, 0).unwrap();
    assert_eq!(
        ev,
        vec![TopologyEvent::CurveDelete {
            curve: 0,
            case: DeleteCase::Flip
        }]
    );
    assert_eq!(net.junctions().len(), 2);
    let flip = net.curves.last().unwrap();
    assert_eq!((flip.kplus, flip.kminus), (1, 4));
    assert!((flip.nodes[1].x - flip.nodes[0].x).abs() < 1e-12);
    net.validate().unwrap();
    let l = initialize_labels(&net, 40, 40, 9).unwrap();
    assert_eq!(l.get(19, 20), 1);
    assert_eq!(l.get(20, 20), 4);
    // the new curve is protected while its cells are blocked
    assert!(delete_short_curves(&mut net, 2.0, &mut grid, 1)
        .unwrap()
        .is_empty());
}

#[test]
fn short_curve_from_junction_to_wall_is_removed() {
    use crate::geometry::Wall;
    let j = v(20.0, 1.5);
    let jb = Binding::Junction(0);
    let mut net = CurveNetwork::with_curves(
        Domain::new(40.0, 40.0),
        vec![
            Curve::open(
                vec![j, v(20.0, 0.75), v(20.0, 0.0)],
                3,
                2,
                jb,
                Binding::Wall(Wall::Bottom),
            ),
            arm(j, v(0.0, 20.0), 2, 1, jb, Binding::Wall(Wall::Left)),
            arm(j, v(40.0, 20.0), 1, 3, jb, Binding::Wall(Wall::Right)),
        ],
    );
    net.validate().unwrap();
    initialize_labels(&net, 40, 40, 9).unwrap();
    let mut grid = BackgroundGrid::new(net.domain, 1.0);
    let ev = delete_short_curves(&mut net, 2.0, &mut grid, 0).unwrap();
    assert_eq!(
        ev,
        vec![TopologyEvent::CurveDelete {
            curve: 0,
            case: DeleteCase::JunctionWall
        }]
    );
    assert_eq!(net.curves.len(), 2);
    assert_eq!(net.boundary_points().len(), 4);
    assert!(net.junctions().is_empty());
    net.validate().unwrap();
    let _ = End::Start;
}

#[test]
fn small_closed_curve_is_deleted() {
    let mut net = CurveNetwork::with_curves(
        Domain::new(40.0, 40.0),
        vec![
            Curve::circle(v(20.0, 20.0), 10.0, 40, 2, 1),
            Curve::circle(v(8.0, 8.0), 0.2, 6, 3, 1),
        ],
    );
    let mut grid = BackgroundGrid::new(net.domain, 1.5);
    let ev = delete_short_curves(&mut net, 3.0, &mut grid, 0).unwrap();
    assert_eq!(
        ev,
        vec![TopologyEvent::CurveDelete {
            curve: 1,
            case: DeleteCase::Closed
        }]
    );
    assert_eq!(net.curves.len(), 1);
}

#[test]
fn event_log_lines_are_readable() {
    let r = EventRecord {
        step: 7,
        event: TopologyEvent::Split {
            a: NodeRef::new(0, 5),
            b: NodeRef::new(0, 23),
        },
        positions: vec![v(1.0, 2.0)],
    };
    assert_eq!(r.to_string(), "step=7 split 0:5 0:23 (1.0000,2.0000)");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn merge_then_split_is_identity_on_node_sets(angle in 0.0f64..std::f64::consts::TAU, n in 8usize..30) {
        let dir = Vec2::new(angle.cos(), angle.sin());
        let ca = Curve::circle(v(20.0, 20.0), 4.0, n, 2, 1);
        let centre_b = v(20.0, 20.0) + dir * 8.3;
        let cb = Curve::circle(centre_b, 4.0, n, 2, 1);
        // contact nodes: the ones facing each other
        let ja = (0..n).min_by(|&x, &y| ca.nodes[x].distance(centre_b).total_cmp(&ca.nodes[y].distance(centre_b))).unwrap();
        let jb = (0..n).min_by(|&x, &y| cb.nodes[x].distance(ca.nodes[ja]).total_cmp(&cb.nodes[y].distance(ca.nodes[ja]))).unwrap();
        let net = CurveNetwork::with_curves(Domain::new(40.0, 40.0), vec![ca, cb]);
        let mut m = net.clone();
        apply_merge(&mut m, NodeRef::new(0, ja), NodeRef::new(1, jb)).unwrap();
        prop_assert_eq!(m.node_count(), 2 * n);
        apply_split(&mut m, 0, n - 1, 2 * n - 1).unwrap();
        let canon = |c: &Curve| -> BTreeSet<(i64, i64)> {
            c.nodes.iter().map(|p| ((p.x * 1e9) as i64, (p.y * 1e9) as i64)).collect()
        };
        let got: BTreeSet<_> = m.curves.iter().map(canon).collect();
        let want: BTreeSet<_> = net.curves.iter().map(canon).collect();
        prop_assert_eq!(got, want);
    }
}
