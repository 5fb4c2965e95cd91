use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Binding, Curve, End, GeometryError, RegionId, Wall};
use crate::vec2::Vec2;

/// The rectangular image domain `[0, width] x [0, height]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub width: f64,
    pub height: f64,
}

impl Domain {
    pub fn new(width: f64, height: f64) -> Self {
        Domain { width, height }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width && p.y <= self.height
    }
}

/// Reference to one end of a curve in a network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EndRef {
    pub curve: usize,
    pub end: End,
}

impl EndRef {
    pub fn new(curve: usize, end: End) -> Self {
        EndRef { curve, end }
    }
}

/// Three curve ends meeting at one point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Junction {
    pub id: u32,
    pub ends: [EndRef; 3],
}

/// An open-curve endpoint attached to a wall.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub at: EndRef,
    pub wall: Wall,
}

/// A set of oriented curves partitioning the image domain into regions.
///
/// Junction membership lives in the curve-end bindings; [`CurveNetwork::junctions`]
/// gathers it. Each junction position is stored on all three curve ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveNetwork {
    pub domain: Domain,
    pub curves: Vec<Curve>,
}

/// Tolerance used when checking that stored junction copies coincide.
pub const ATTACH_TOL: f64 = 1e-8;

impl CurveNetwork {
    pub fn new(domain: Domain) -> Self {
        CurveNetwork {
            domain,
            curves: Vec::new(),
        }
    }

    pub fn with_curves(domain: Domain, curves: Vec<Curve>) -> Self {
        CurveNetwork { domain, curves }
    }

    pub fn node_count(&self) -> usize {
        self.curves.iter().map(Curve::len).sum()
    }

    /// Offset of each curve's first node in the global node vector, plus the total.
    pub fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.curves.len() + 1);
        let mut acc = 0;
        out.push(0);
        for c in &self.curves {
            acc += c.len();
            out.push(acc);
        }
        out
    }

    pub fn length(&self) -> f64 {
        self.curves.iter().map(Curve::length).sum()
    }

    pub fn average_edge_length(&self) -> f64 {
        let edges: usize = self.curves.iter().map(Curve::edge_count).sum();
        if edges == 0 {
            0.0
        } else {
            self.length() / edges as f64
        }
    }

    pub fn min_edge_length(&self) -> f64 {
        let mut m = f64::INFINITY;
        for c in &self.curves {
            for k in 0..c.edge_count() {
                let (a, b) = c.edge(k);
                m = m.min(a.distance(b));
            }
        }
        m
    }

    pub fn end_node(&self, r: EndRef) -> Vec2 {
        self.curves[r.curve].end_node(r.end)
    }

    pub fn set_end_node(&mut self, r: EndRef, p: Vec2) {
        let c = &mut self.curves[r.curve];
        let idx = c.end_index(r.end);
        c.nodes[idx] = p;
    }

    /// All junction groups keyed by id, in id order. Groups that do not have
    /// exactly three members are returned as-is; [`CurveNetwork::validate`]
    /// reports them.
    pub fn junction_groups(&self) -> BTreeMap<u32, Vec<EndRef>> {
        let mut map: BTreeMap<u32, Vec<EndRef>> = BTreeMap::new();
        for (i, c) in self.curves.iter().enumerate() {
            for end in [End::Start, End::End] {
                if let Some(Binding::Junction(id)) = c.binding(end) {
                    map.entry(id).or_default().push(EndRef::new(i, end));
                }
            }
        }
        map
    }

    pub fn junctions(&self) -> Vec<Junction> {
        self.junction_groups()
            .into_iter()
            .filter(|(_, v)| v.len() == 3)
            .map(|(id, v)| Junction {
                id,
                ends: [v[0], v[1], v[2]],
            })
            .collect()
    }

    pub fn junction(&self, id: u32) -> Option<Junction> {
        self.junctions().into_iter().find(|j| j.id == id)
    }

    pub fn boundary_points(&self) -> Vec<BoundaryPoint> {
        let mut out = Vec::new();
        for (i, c) in self.curves.iter().enumerate() {
            for end in [End::Start, End::End] {
                if let Some(Binding::Wall(wall)) = c.binding(end) {
                    out.push(BoundaryPoint {
                        at: EndRef::new(i, end),
                        wall,
                    });
                }
            }
        }
        out
    }

    pub fn next_junction_id(&self) -> u32 {
        self.junction_groups()
            .keys()
            .next_back()
            .map_or(0, |k| k + 1)
    }

    /// Region ids referenced by any curve, sorted.
    pub fn live_regions(&self) -> Vec<RegionId> {
        let mut v: Vec<RegionId> = self
            .curves
            .iter()
            .flat_map(|c| [c.kplus, c.kminus])
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Check every curve and network-level invariant.
    pub fn validate(&self) -> Result<(), GeometryError> {
        for (i, c) in self.curves.iter().enumerate() {
            c.validate().map_err(|e| GeometryError::InCurve {
                curve: i,
                source: Box::new(e),
            })?;
        }
        for (id, ends) in self.junction_groups() {
            if ends.len() != 3 {
                return Err(GeometryError::InvalidNetwork(format!(
                    "junction {id} has {} ends",
                    ends.len()
                )));
            }
            let p0 = self.end_node(ends[0]);
            for e in &ends[1..] {
                if self.end_node(*e).distance(p0) > ATTACH_TOL {
                    return Err(GeometryError::InvalidNetwork(format!(
                        "junction {id} ends do not coincide"
                    )));
                }
            }
        }
        for bp in self.boundary_points() {
            let p = self.end_node(bp.at);
            let d = bp.wall.distance(p, self.domain.width, self.domain.height);
            if d.abs() > ATTACH_TOL {
                return Err(GeometryError::InvalidNetwork(format!(
                    "curve {} {:?} is {d} off the {} wall",
                    bp.at.curve,
                    bp.at.end,
                    bp.wall.name()
                )));
            }
        }
        Ok(())
    }
}
