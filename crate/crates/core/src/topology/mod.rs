//! Topology changes of the curve network.
//!
//! Collisions are found with a uniform background grid: a first pass primes
//! every cell holding a node, a second pass marks cells with the node that
//! reaches them and reports a collision when a cell is reached twice by nodes
//! that are not graph neighbours. The closest node pair around a collision
//! decides what happens: a curve touching itself splits, two curves with the
//! same region pair merge, and two curves bounding different regions meet in
//! a short new curve between two triple junctions. Nodes reaching the outer
//! ring of cells are cut onto the wall. Short curves are removed afterwards.

mod delete;
mod detect;
mod grid;
mod ops;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CurveNetwork, EndRef, GeometryError, Wall};
use crate::vec2::Vec2;

pub use delete::{delete_short_curves, is_protected};
pub use detect::{detect, detect_counted, DetectOptions, NEIGHBOURHOOD};
pub use grid::{BackgroundGrid, Block, DEFAULT_BLOCK_STEPS};
pub use ops::{
    apply_merge, apply_split, create_triple_junctions, handle_boundary_hit, join_wall_ends,
};

/// A node of the network: curve index and node index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeRef {
    pub curve: usize,
    pub node: usize,
}

impl NodeRef {
    pub fn new(curve: usize, node: usize) -> Self {
        NodeRef { curve, node }
    }
}

/// How a short curve was removed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeleteCase {
    /// A closed curve vanished with its enclosed region.
    Closed,
    /// A curve between two wall points.
    WallWall,
    /// A curve between two junctions whose outer regions agree: the four
    /// remaining arms are joined pairwise into two curves.
    Reconnect,
    /// A curve between two junctions with four distinct regions around it:
    /// replaced by a short perpendicular curve.
    Flip,
    /// A curve between a junction and a wall: the other two arms now end on the wall.
    JunctionWall,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologyEvent {
    Split {
        a: NodeRef,
        b: NodeRef,
    },
    Merge {
        a: NodeRef,
        b: NodeRef,
    },
    TripleCreate {
        a: NodeRef,
        b: NodeRef,
    },
    BoundaryHit {
        at: NodeRef,
        wall: Wall,
    },
    /// Two wall ends met: one curve closes up, or two curves join.
    WallJoin {
        a: EndRef,
        b: EndRef,
    },
    CurveDelete {
        curve: usize,
        case: DeleteCase,
    },
}

impl TopologyEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            TopologyEvent::Split { .. } => "split",
            TopologyEvent::Merge { .. } => "merge",
            TopologyEvent::TripleCreate { .. } => "triple_create",
            TopologyEvent::BoundaryHit { .. } => "boundary_hit",
            TopologyEvent::WallJoin { .. } => "wall_join",
            TopologyEvent::CurveDelete { .. } => "curve_delete",
        }
    }

    /// Positions involved, read from the network before the event is applied.
    pub fn positions(&self, network: &CurveNetwork) -> Vec<Vec2> {
        let node = |r: NodeRef| {
            network
                .curves
                .get(r.curve)
                .and_then(|c| c.nodes.get(r.node))
                .copied()
        };
        match *self {
            TopologyEvent::Split { a, b }
            | TopologyEvent::Merge { a, b }
            | TopologyEvent::TripleCreate { a, b } => {
                [node(a), node(b)].into_iter().flatten().collect()
            }
            TopologyEvent::BoundaryHit { at, .. } => node(at).into_iter().collect(),
            TopologyEvent::WallJoin { a, b } => vec![network.end_node(a), network.end_node(b)],
            TopologyEvent::CurveDelete { curve, .. } => network
                .curves
                .get(curve)
                .map(|c| {
                    let n = c.nodes.len() as f64;
                    vec![c.nodes.iter().fold(Vec2::ZERO, |s, p| s + *p) / n]
                })
                .unwrap_or_default(),
        }
    }
}

impl fmt::Display for TopologyEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyEvent::Split { a, b }
            | TopologyEvent::Merge { a, b }
            | TopologyEvent::TripleCreate { a, b } => {
                write!(
                    f,
                    "{} {}:{} {}:{}",
                    self.kind(),
                    a.curve,
                    a.node,
                    b.curve,
                    b.node
                )
            }
            TopologyEvent::BoundaryHit { at, wall } => write!(
                f,
                "{} {}:{} {}",
                self.kind(),
                at.curve,
                at.node,
                wall.name()
            ),
            TopologyEvent::WallJoin { a, b } => {
                write!(
                    f,
                    "{} {}:{:?} {}:{:?}",
                    self.kind(),
                    a.curve,
                    a.end,
                    b.curve,
                    b.end
                )
            }
            TopologyEvent::CurveDelete { curve, case } => {
                write!(f, "{} {} {:?}", self.kind(), curve, case)
            }
        }
    }
}

/// One line of the event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub step: usize,
    pub event: TopologyEvent,
    pub positions: Vec<Vec2>,
}

impl fmt::Display for EventRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step={} {}", self.step, self.event)?;
        for p in &self.positions {
            write!(f, " ({:.4},{:.4})", p.x, p.y)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("split would leave a curve with too few nodes")]
    DegenerateSplit,
    #[error("curves {0} and {1} cannot be merged: orientations disagree")]
    OrientationMismatch(usize, usize),
    #[error("regions around the collision of curves {0} and {1} do not determine the new curve")]
    AmbiguousRegions(usize, usize),
    #[error("deleting curve {0} has no unique continuation")]
    AmbiguousContinuation(usize),
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Apply one event and block the grid cells around it.
pub fn apply_event(
    network: &mut CurveNetwork,
    grid: &mut BackgroundGrid,
    step: usize,
    event: &TopologyEvent,
) -> Result<(), TopologyError> {
    let at = event.positions(network);
    match *event {
        TopologyEvent::Split { a, b } => apply_split(network, a.curve, a.node, b.node)?,
        TopologyEvent::Merge { a, b } => apply_merge(network, a, b)?,
        TopologyEvent::TripleCreate { a, b } => {
            let [p1, p2] = create_triple_junctions(network, a, b)?;
            grid.block_segment(p1, p2, step);
        }
        TopologyEvent::BoundaryHit { at, wall } => handle_boundary_hit(network, at, wall)?,
        TopologyEvent::WallJoin { a, b } => join_wall_ends(network, a, b)?,
        TopologyEvent::CurveDelete { .. } => {
            return Err(TopologyError::InvalidEvent(
                "deletions are applied by delete_short_curves".into(),
            ))
        }
    }
    for p in at {
        grid.block_point(p, step);
    }
    Ok(())
}

#[cfg(test)]
mod tests;
