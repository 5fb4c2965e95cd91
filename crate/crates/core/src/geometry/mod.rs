//! Oriented polygonal curve networks and their discrete differential
//! quantities: edge lengths, edge normals, weighted vertex normals and the
//! non-uniform second difference.
//!
//! Conventions shared by every module:
//! - `perp(x, y) = (-y, x)`;
//! - coordinates are pixel units with the origin at the lower-left image corner;
//! - the normal of a curve points from `kminus` into `kplus`.

mod curve;
mod discrete;
mod network;

use thiserror::Error;

pub use curve::{Binding, Curve, End, Wall};
pub use discrete::{
    discrete_laplacian, edge_lengths, edge_normals, weighted_normals, CurveGeometry,
    DiscreteGeometry,
};
pub use network::{BoundaryPoint, CurveNetwork, Domain, EndRef, Junction, ATTACH_TOL};

/// Region (phase) label. Labels start at 1.
pub type RegionId = u32;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("edge {edge} has zero length")]
    ZeroLengthEdge { edge: usize },
    #[error("curve would have {nodes} nodes, needs at least {min}")]
    TooFewNodes { nodes: usize, min: usize },
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("curve {curve}: {source}")]
    InCurve {
        curve: usize,
        #[source]
        source: Box<GeometryError>,
    },
}

impl GeometryError {
    /// Strip curve context.
    pub fn root(&self) -> &GeometryError {
        match self {
            GeometryError::InCurve { source, .. } => source.root(),
            other => other,
        }
    }
}

/// Apply global refinement or coarsening to each curve whose mean spacing
/// `|curve| / nodes` leaves `[l_min, l_max]`. Returns the number of curves changed.
pub fn remesh_globally(network: &mut CurveNetwork, l_min: f64, l_max: f64) -> usize {
    let mut changed = 0;
    for c in &mut network.curves {
        let spacing = c.length() / c.len() as f64;
        if spacing > l_max {
            *c = c.refine_global();
            changed += 1;
        } else if spacing < l_min {
            if let Ok(coarse) = c.coarsen_global() {
                *c = coarse;
                changed += 1;
            }
        }
    }
    changed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vec2::Vec2;
    use proptest::prelude::*;

    #[test]
    fn regular_polygon_second_difference_approaches_curvature() {
        // ||Delta_2 X|| on a regular n-gon of radius r; the error against 1/r
        // should fall like 1/n^2.
        let r = 3.0;
        let mut errs = Vec::new();
        for n in [16usize, 32, 64, 128] {
            let c = Curve::circle(Vec2::new(0.0, 0.0), r, n, 2, 1);
            let l = discrete_laplacian(&c, &c.nodes).unwrap();
            let mags: Vec<f64> = l.iter().map(|v| v.unwrap().norm()).collect();
            let err = mags.iter().map(|m| (m - 1.0 / r).abs()).fold(0.0, f64::max);
            errs.push(err.max(1e-300));
            // |omega| -> 1 as well
            let w = weighted_normals(&c).unwrap();
            let wn = w[0].norm();
            assert!((wn - (std::f64::consts::PI / n as f64).cos()).abs() < 1e-12);
        }
        for e in &errs {
            assert!(
                *e < 1e-12,
                "regular polygon gives |Delta_2 X| = 1/r up to rounding, err {e}"
            );
        }
    }

    #[test]
    fn remesh_refines_long_and_coarsens_short() {
        let mut n = CurveNetwork::with_curves(
            Domain::new(100.0, 100.0),
            vec![
                Curve::circle(Vec2::new(50.0, 50.0), 20.0, 16, 2, 1),
                Curve::circle(Vec2::new(10.0, 10.0), 2.0, 32, 3, 1),
            ],
        );
        assert_eq!(remesh_globally(&mut n, 1.0, 4.0), 2);
        assert_eq!(n.curves[0].len(), 32);
        assert_eq!(n.curves[1].len(), 16);
    }

    fn arb_closed_curve() -> impl Strategy<Value = Curve> {
        prop::collection::vec((0.0f64..1.0, 0.5f64..2.0), 3..40).prop_map(|v| {
            // star-shaped polygon with strictly increasing angles
            let n = v.len();
            let pts = v
                .iter()
                .enumerate()
                .map(|(j, &(jit, r))| {
                    let t = std::f64::consts::TAU * (j as f64 + 0.8 * jit) / n as f64;
                    Vec2::new(r * t.cos(), r * t.sin())
                })
                .collect();
            Curve::closed(pts, 2, 1)
        })
    }

    proptest! {
        #[test]
        fn omega_identity_holds(c in arb_closed_curve()) {
            let h = edge_lengths(&c).unwrap();
            let w = weighted_normals(&c).unwrap();
            let n = c.len();
            for j in 0..n {
                let prev = (j + n - 1) % n;
                let lhs = w[j] * (h[prev] + h[j]);
                let rhs = (c.nodes[(j + 1) % n] - c.nodes[prev]).perp();
                prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
                // omega is orthogonal to the chord X_{j+1} - X_{j-1}
                prop_assert!(w[j].dot(c.nodes[(j + 1) % n] - c.nodes[prev]).abs() < 1e-12);
            }
            for nu in edge_normals(&c).unwrap() {
                prop_assert!((nu.norm() - 1.0).abs() < 1e-14);
            }
        }

        #[test]
        fn refinement_preserves_length(c in arb_closed_curve()) {
            let r = c.refine_global();
            prop_assert!((r.length() - c.length()).abs() <= 1e-13 * c.length());
            prop_assert_eq!(r.len(), 2 * c.len());
        }
    }
}
