use serde::{Deserialize, Serialize};

use super::{GeometryError, RegionId};
use crate::vec2::Vec2;

/// One of the four sides of the rectangular image domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wall {
    Left,
    Right,
    Bottom,
    Top,
}

impl Wall {
    pub const ALL: [Wall; 4] = [Wall::Left, Wall::Right, Wall::Bottom, Wall::Top];

    /// Outward unit normal of the wall.
    pub fn outward_normal(self) -> Vec2 {
        match self {
            Wall::Left => Vec2::new(-1.0, 0.0),
            Wall::Right => Vec2::new(1.0, 0.0),
            Wall::Bottom => Vec2::new(0.0, -1.0),
            Wall::Top => Vec2::new(0.0, 1.0),
        }
    }

    /// Orthogonal projection of `p` onto the wall line of a `width x height` domain.
    pub fn project(self, p: Vec2, width: f64, height: f64) -> Vec2 {
        match self {
            Wall::Left => Vec2::new(0.0, p.y.clamp(0.0, height)),
            Wall::Right => Vec2::new(width, p.y.clamp(0.0, height)),
            Wall::Bottom => Vec2::new(p.x.clamp(0.0, width), 0.0),
            Wall::Top => Vec2::new(p.x.clamp(0.0, width), height),
        }
    }

    /// Signed distance from the wall line, positive inside the domain.
    pub fn distance(self, p: Vec2, width: f64, height: f64) -> f64 {
        match self {
            Wall::Left => p.x,
            Wall::Right => width - p.x,
            Wall::Bottom => p.y,
            Wall::Top => height - p.y,
        }
    }

    /// The wall nearest to `p`.
    pub fn nearest(p: Vec2, width: f64, height: f64) -> Wall {
        let mut best = Wall::Left;
        let mut best_d = f64::INFINITY;
        for w in Wall::ALL {
            let d = w.distance(p, width, height);
            if d < best_d {
                best_d = d;
                best = w;
            }
        }
        best
    }

    pub fn name(self) -> &'static str {
        match self {
            Wall::Left => "left",
            Wall::Right => "right",
            Wall::Bottom => "bottom",
            Wall::Top => "top",
        }
    }
}

impl std::str::FromStr for Wall {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(Wall::Left),
            "right" => Ok(Wall::Right),
            "bottom" => Ok(Wall::Bottom),
            "top" => Ok(Wall::Top),
            other => Err(format!("unknown wall '{other}'")),
        }
    }
}

/// Which end of an open curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum End {
    Start,
    End,
}

impl End {
    pub fn opposite(self) -> End {
        match self {
            End::Start => End::End,
            End::End => End::Start,
        }
    }
}

/// What an open-curve endpoint is attached to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Binding {
    /// Shared with two other curve ends at a triple junction.
    Junction(u32),
    /// Attached to a side of the image domain.
    Wall(Wall),
}

/// An oriented polygonal curve. The discrete normal points from region
/// `kminus` into region `kplus`.
///
/// Closed curves store no duplicate of the first node; the wrap edge runs
/// from the last node back to the first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub nodes: Vec<Vec2>,
    pub closed: bool,
    pub kplus: RegionId,
    pub kminus: RegionId,
    pub start: Option<Binding>,
    pub end: Option<Binding>,
}

impl Curve {
    pub fn closed(nodes: Vec<Vec2>, kplus: RegionId, kminus: RegionId) -> Self {
        Curve {
            nodes,
            closed: true,
            kplus,
            kminus,
            start: None,
            end: None,
        }
    }

    pub fn open(
        nodes: Vec<Vec2>,
        kplus: RegionId,
        kminus: RegionId,
        start: Binding,
        end: Binding,
    ) -> Self {
        Curve {
            nodes,
            closed: false,
            kplus,
            kminus,
            start: Some(start),
            end: Some(end),
        }
    }

    /// Counterclockwise circle; its normal points inward, so the disk is `kplus`.
    pub fn circle(
        center: Vec2,
        radius: f64,
        nodes: usize,
        kplus: RegionId,
        kminus: RegionId,
    ) -> Self {
        let pts = (0..nodes)
            .map(|j| {
                let t = std::f64::consts::TAU * j as f64 / nodes as f64;
                center + Vec2::new(radius * t.cos(), radius * t.sin())
            })
            .collect();
        Curve::closed(pts, kplus, kminus)
    }

    /// Counterclockwise axis-aligned rectangle with roughly `nodes` nodes
    /// spread evenly along its perimeter.
    pub fn rectangle(lo: Vec2, hi: Vec2, nodes: usize, kplus: RegionId, kminus: RegionId) -> Self {
        let corners = [lo, Vec2::new(hi.x, lo.y), hi, Vec2::new(lo.x, hi.y)];
        let perimeter = 2.0 * ((hi.x - lo.x) + (hi.y - lo.y));
        let spacing = perimeter / nodes.max(4) as f64;
        let mut pts = Vec::new();
        for k in 0..4 {
            let a = corners[k];
            let b = corners[(k + 1) % 4];
            let n = ((b - a).norm() / spacing).round().max(1.0) as usize;
            for s in 0..n {
                pts.push(a + (b - a) * (s as f64 / n as f64));
            }
        }
        Curve::closed(pts, kplus, kminus)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn min_nodes(&self) -> usize {
        if self.closed {
            3
        } else {
            2
        }
    }

    pub fn edge_count(&self) -> usize {
        let n = self.nodes.len();
        if self.closed {
            n
        } else {
            n.saturating_sub(1)
        }
    }

    /// Endpoints of edge `k`, which joins node `k` to node `k + 1` (cyclically
    /// for closed curves).
    #[inline]
    pub fn edge(&self, k: usize) -> (Vec2, Vec2) {
        let n = self.nodes.len();
        (self.nodes[k], self.nodes[(k + 1) % n])
    }

    pub fn binding(&self, end: End) -> Option<Binding> {
        match end {
            End::Start => self.start,
            End::End => self.end,
        }
    }

    pub fn set_binding(&mut self, end: End, b: Option<Binding>) {
        match end {
            End::Start => self.start = b,
            End::End => self.end = b,
        }
    }

    pub fn end_index(&self, end: End) -> usize {
        match end {
            End::Start => 0,
            End::End => self.nodes.len() - 1,
        }
    }

    pub fn end_node(&self, end: End) -> Vec2 {
        self.nodes[self.end_index(end)]
    }

    /// Number of edges between nodes `a` and `b` along the curve.
    pub fn graph_distance(&self, a: usize, b: usize) -> usize {
        let d = a.abs_diff(b);
        if self.closed {
            d.min(self.nodes.len() - d)
        } else {
            d
        }
    }

    /// Reverse the traversal direction. Swaps `kplus`/`kminus` and the
    /// endpoint bindings so the region geometry is unchanged.
    pub fn reversed(&self) -> Curve {
        let mut nodes = self.nodes.clone();
        if self.closed {
            nodes[1..].reverse();
        } else {
            nodes.reverse();
        }
        Curve {
            nodes,
            closed: self.closed,
            kplus: self.kminus,
            kminus: self.kplus,
            start: self.end,
            end: self.start,
        }
    }

    pub fn length(&self) -> f64 {
        (0..self.edge_count())
            .map(|k| {
                let (a, b) = self.edge(k);
                a.distance(b)
            })
            .sum()
    }

    /// Signed enclosed area (positive for counterclockwise closed curves).
    pub fn signed_area(&self) -> f64 {
        let n = self.nodes.len();
        let mut acc = 0.0;
        for j in 0..n {
            acc += self.nodes[j].cross(self.nodes[(j + 1) % n]);
        }
        0.5 * acc
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.nodes.len() < self.min_nodes() {
            return Err(GeometryError::TooFewNodes {
                nodes: self.nodes.len(),
                min: self.min_nodes(),
            });
        }
        if self.kplus == self.kminus {
            return Err(GeometryError::InvalidCurve(format!(
                "kplus and kminus are both {}",
                self.kplus
            )));
        }
        if self.closed && (self.start.is_some() || self.end.is_some()) {
            return Err(GeometryError::InvalidCurve(
                "closed curve carries endpoint bindings".into(),
            ));
        }
        if !self.closed && (self.start.is_none() || self.end.is_none()) {
            return Err(GeometryError::InvalidCurve(
                "open curve with an unbound endpoint".into(),
            ));
        }
        for k in 0..self.edge_count() {
            let (a, b) = self.edge(k);
            if a == b {
                return Err(GeometryError::ZeroLengthEdge { edge: k });
            }
        }
        Ok(())
    }

    /// Insert the midpoint of every edge. The trace and the endpoints are unchanged.
    pub fn refine_global(&self) -> Curve {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len());
        let ec = self.edge_count();
        for k in 0..ec {
            let (a, b) = self.edge(k);
            nodes.push(a);
            nodes.push(a.midpoint(b));
        }
        if !self.closed {
            nodes.push(*self.nodes.last().expect("non-empty curve"));
        }
        Curve {
            nodes,
            ..self.clone()
        }
    }

    /// Remove every second interior node; endpoints of open curves are kept.
    pub fn coarsen_global(&self) -> Result<Curve, GeometryError> {
        let n = self.nodes.len();
        let nodes: Vec<Vec2> = if self.closed {
            self.nodes.iter().step_by(2).copied().collect()
        } else {
            let mut v: Vec<Vec2> = self.nodes[..n - 1].iter().step_by(2).copied().collect();
            v.push(self.nodes[n - 1]);
            v
        };
        if nodes.len() < self.min_nodes() || nodes.len() == n {
            return Err(GeometryError::TooFewNodes {
                nodes: nodes.len(),
                min: self.min_nodes(),
            });
        }
        Ok(Curve {
            nodes,
            ..self.clone()
        })
    }

    /// Drop nodes closer than `eps` to their predecessor, never going below
    /// the minimum node count. Endpoints of open curves stay. Returns the count removed.
    pub fn drop_coincident(&mut self, eps: f64) -> usize {
        let before = self.nodes.len();
        let mut k = 1;
        while k < self.nodes.len() && self.nodes.len() > self.min_nodes() {
            let last = k == self.nodes.len() - 1;
            if self.nodes[k].distance(self.nodes[k - 1]) < eps {
                // an open curve keeps its last node and loses the one before it
                let drop = if last && !self.closed { k - 1 } else { k };
                if drop == 0 {
                    break;
                }
                self.nodes.remove(drop);
            } else {
                k += 1;
            }
        }
        if self.closed
            && self.nodes.len() > self.min_nodes()
            && self.nodes[0].distance(self.nodes[self.nodes.len() - 1]) < eps
        {
            self.nodes.pop();
        }
        before - self.nodes.len()
    }
}
