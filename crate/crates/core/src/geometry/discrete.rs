use super::{Curve, CurveNetwork, GeometryError};
use crate::vec2::Vec2;

/// Edge lengths of a curve; edge `k` joins node `k` to node `k + 1`
/// (the wrap edge is included for closed curves).
pub fn edge_lengths(curve: &Curve) -> Result<Vec<f64>, GeometryError> {
    (0..curve.edge_count())
        .map(|k| {
            let (a, b) = curve.edge(k);
            let h = a.distance(b);
            if h > 0.0 {
                Ok(h)
            } else {
                Err(GeometryError::ZeroLengthEdge { edge: k })
            }
        })
        .collect()
}

/// Unit edge normals `(X_{k+1} - X_k)^perp / h_k`.
pub fn edge_normals(curve: &Curve) -> Result<Vec<Vec2>, GeometryError> {
    let h = edge_lengths(curve)?;
    Ok(h.iter()
        .enumerate()
        .map(|(k, &hk)| {
            let (a, b) = curve.edge(k);
            (b - a).perp() / hk
        })
        .collect())
}

/// Length-weighted vertex normals. Interior vertices use
/// `(X_{j+1} - X_{j-1})^perp / (h_{j-1/2} + h_{j+1/2})`; the two endpoints of
/// an open curve take the normal of their single edge.
pub fn weighted_normals(curve: &Curve) -> Result<Vec<Vec2>, GeometryError> {
    let h = edge_lengths(curve)?;
    let nu = edge_normals(curve)?;
    Ok(weighted_normals_from(curve, &h, &nu))
}

fn weighted_normals_from(curve: &Curve, h: &[f64], nu: &[Vec2]) -> Vec<Vec2> {
    let n = curve.nodes.len();
    let x = &curve.nodes;
    (0..n)
        .map(|j| {
            if curve.closed {
                let prev = (j + n - 1) % n;
                let next = (j + 1) % n;
                (x[next] - x[prev]).perp() / (h[prev] + h[j])
            } else if j == 0 {
                nu[0]
            } else if j == n - 1 {
                nu[n - 2]
            } else {
                (x[j + 1] - x[j - 1]).perp() / (h[j - 1] + h[j])
            }
        })
        .collect()
}

/// Non-uniform second difference of `positions` with respect to arc length,
/// using the edge lengths of `curve` (the geometry at the old time level).
/// Open-curve endpoints have no value and are returned as `None`.
pub fn discrete_laplacian(
    curve: &Curve,
    positions: &[Vec2],
) -> Result<Vec<Option<Vec2>>, GeometryError> {
    let h = edge_lengths(curve)?;
    let n = curve.nodes.len();
    assert_eq!(
        positions.len(),
        n,
        "positions must be indexed like the curve nodes"
    );
    Ok((0..n)
        .map(|j| {
            let (prev, next, hm, hp) = if curve.closed {
                let prev = (j + n - 1) % n;
                (prev, (j + 1) % n, h[prev], h[j])
            } else if j == 0 || j == n - 1 {
                return None;
            } else {
                (j - 1, j + 1, h[j - 1], h[j])
            };
            let fwd = (positions[next] - positions[j]) / hp;
            let bwd = (positions[j] - positions[prev]) / hm;
            Some((fwd - bwd) * (2.0 / (hm + hp)))
        })
        .collect())
}

/// Cached per-curve discrete quantities for one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveGeometry {
    pub h: Vec<f64>,
    pub nu: Vec<Vec2>,
    pub omega: Vec<Vec2>,
}

impl CurveGeometry {
    pub fn compute(curve: &Curve) -> Result<Self, GeometryError> {
        let h = edge_lengths(curve)?;
        let nu: Vec<Vec2> = h
            .iter()
            .enumerate()
            .map(|(k, &hk)| {
                let (a, b) = curve.edge(k);
                (b - a).perp() / hk
            })
            .collect();
        let omega = weighted_normals_from(curve, &h, &nu);
        Ok(CurveGeometry { h, nu, omega })
    }

    /// Half the summed length of the edges adjacent to node `j`.
    pub fn dual_length(&self, closed: bool, j: usize) -> f64 {
        let n = self.omega.len();
        if closed {
            0.5 * (self.h[(j + n - 1) % n] + self.h[j])
        } else if j == 0 {
            0.5 * self.h[0]
        } else if j == n - 1 {
            0.5 * self.h[n - 2]
        } else {
            0.5 * (self.h[j - 1] + self.h[j])
        }
    }
}

/// Discrete geometry of every curve of a network.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteGeometry {
    pub curves: Vec<CurveGeometry>,
}

impl DiscreteGeometry {
    pub fn compute(network: &CurveNetwork) -> Result<Self, GeometryError> {
        let curves = network
            .curves
            .iter()
            .enumerate()
            .map(|(i, c)| {
                CurveGeometry::compute(c).map_err(|e| GeometryError::InCurve {
                    curve: i,
                    source: Box::new(e),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(DiscreteGeometry { curves })
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Binding, Wall};
    use super::*;

    fn open(pts: &[(f64, f64)]) -> Curve {
        Curve::open(
            pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect(),
            2,
            1,
            Binding::Wall(Wall::Left),
            Binding::Wall(Wall::Right),
        )
    }

    #[test]
    fn edge_length_examples() {
        let sq = Curve::rectangle(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0), 4, 2, 1);
        assert_eq!(edge_lengths(&sq).unwrap(), vec![1.0, 1.0, 1.0, 1.0]);
        assert_eq!(
            edge_lengths(&open(&[(0.0, 0.0), (2.0, 0.0), (2.0, 1.0)])).unwrap(),
            vec![2.0, 1.0]
        );
        let degenerate = open(&[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
        assert!(matches!(
            edge_lengths(&degenerate),
            Err(GeometryError::ZeroLengthEdge { edge: 0 })
        ));
        assert!(matches!(
            edge_normals(&degenerate),
            Err(GeometryError::ZeroLengthEdge { .. })
        ));
    }

    #[test]
    fn edge_normal_examples() {
        let nu = edge_normals(&open(&[(0.0, 0.0), (1.0, 0.0)])).unwrap();
        assert_eq!(nu[0], Vec2::new(0.0, 1.0));
        let nu = edge_normals(&open(&[(0.0, 0.0), (0.0, 1.0)])).unwrap();
        assert_eq!(nu[0], Vec2::new(-1.0, 0.0));
        let nu = edge_normals(&open(&[(0.0, 0.0), (1.0, 1.0)])).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((nu[0] - Vec2::new(-s, s)).norm() < 1e-15);
    }

    #[test]
    fn weighted_normal_examples() {
        let w = weighted_normals(&open(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)])).unwrap();
        assert_eq!(w[1], Vec2::new(0.0, 1.0));
        let c = open(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]);
        let w = weighted_normals(&c).unwrap();
        assert_eq!(w[1], Vec2::new(-0.5, 0.5));
        let nu = edge_normals(&c).unwrap();
        assert_eq!(w[0], nu[0]);
        assert_eq!(w[2], nu[1]);
    }

    #[test]
    fn laplacian_examples() {
        let c = open(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        let l = discrete_laplacian(&c, &c.nodes).unwrap();
        assert_eq!(l[0], None);
        assert_eq!(l[1], Some(Vec2::ZERO));
        let c = open(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]);
        let l = discrete_laplacian(&c, &c.nodes).unwrap();
        assert_eq!(l[1], Some(Vec2::new(-1.0, 1.0)));
    }

    #[test]
    fn laplacian_reduces_to_three_point_stencil_for_equal_spacing() {
        let c = Curve::circle(Vec2::new(3.0, -1.0), 2.0, 12, 2, 1);
        let l = discrete_laplacian(&c, &c.nodes).unwrap();
        let h = edge_lengths(&c).unwrap()[0];
        let n = c.len();
        for j in 0..n {
            let x = &c.nodes;
            let expect = (x[(j + n - 1) % n] - x[j] * 2.0 + x[(j + 1) % n]) / (h * h);
            assert!((l[j].unwrap() - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn ccw_convex_curve_normals_point_inward() {
        // With perp = ccw rotation, a ccw curve's normal points into the
        // enclosed polygon, i.e. into kplus.
        let c = Curve::circle(Vec2::new(0.0, 0.0), 5.0, 16, 2, 1);
        let nu = edge_normals(&c).unwrap();
        for (k, n) in nu.iter().enumerate() {
            let (a, b) = c.edge(k);
            assert!(n.dot(a.midpoint(b)) < 0.0);
        }
    }
}
