//! One semi-implicit time step of the curve network.
//!
//! Unknowns are the displacement `dX` (two components per node) and the
//! curvature `kappa` (one per node). Eliminating `kappa` leaves the Schur
//! system
//!
//! ```text
//! (P A P + 1/(sigma tau) P N M^-1 N^T P) dX = 1/sigma P N M^-1 b - P A X
//! ```
//!
//! on the constraint space where junction ends move together and wall ends
//! slide along their wall. `M` is diagonal, `N` is `M` times the weighted
//! normals, so `N M^-1 N^T` is block diagonal with blocks `m omega omega^T`
//! and the whole operator is applied without ever forming a matrix.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{Binding, CurveNetwork, DiscreteGeometry, End, GeometryError, ATTACH_TOL};
use crate::linalg::{self, CgError};
use crate::vec2::Vec2;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("linear solve failed after {iterations} iterations (relative residual {residual:e})")]
    SolveFailure { iterations: usize, residual: f64 },
    #[error("step operator is singular on the constraint space")]
    SingularSystem,
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}

/// Orthogonal projection onto the constraint space.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Projector {
    /// Global node indices of the three ends of each junction.
    pub junctions: Vec<[usize; 3]>,
    /// Global node index and outward wall normal of each wall end.
    pub walls: Vec<(usize, Vec2)>,
}

impl Projector {
    pub fn from_network(network: &CurveNetwork) -> Self {
        let offsets = network.offsets();
        let global = |curve: usize, end: End| offsets[curve] + network.curves[curve].end_index(end);
        let junctions = network
            .junctions()
            .into_iter()
            .map(|j| j.ends.map(|e| global(e.curve, e.end)))
            .collect();
        let walls = network
            .boundary_points()
            .into_iter()
            .map(|bp| (global(bp.at.curve, bp.at.end), bp.wall.outward_normal()))
            .collect();
        Projector { junctions, walls }
    }

    pub fn apply(&self, v: &mut [Vec2]) {
        for j in &self.junctions {
            let mean = (v[j[0]] + v[j[1]] + v[j[2]]) / 3.0;
            for &g in j {
                v[g] = mean;
            }
        }
        for &(g, n) in &self.walls {
            v[g] -= n * v[g].dot(n);
        }
    }

    pub fn project(&self, v: &[Vec2]) -> Vec<Vec2> {
        let mut out = v.to_vec();
        self.apply(&mut out);
        out
    }

    /// Orthonormal basis of the constraint space as columns of a `2N x d` matrix.
    pub fn basis(&self, nodes: usize) -> DMatrix<f64> {
        let mut constrained = vec![false; nodes];
        let mut cols: Vec<Vec<(usize, f64)>> = Vec::new();
        let s = 1.0 / 3f64.sqrt();
        for j in &self.junctions {
            for &g in j {
                constrained[g] = true;
            }
            cols.push(j.iter().map(|&g| (2 * g, s)).collect());
            cols.push(j.iter().map(|&g| (2 * g + 1, s)).collect());
        }
        for &(g, n) in &self.walls {
            constrained[g] = true;
            let t = n.perp();
            cols.push(vec![(2 * g, t.x), (2 * g + 1, t.y)]);
        }
        for (g, c) in constrained.iter().enumerate() {
            if !c {
                cols.push(vec![(2 * g, 1.0)]);
                cols.push(vec![(2 * g + 1, 1.0)]);
            }
        }
        let mut q = DMatrix::zeros(2 * nodes, cols.len());
        for (k, col) in cols.iter().enumerate() {
            for &(r, v) in col {
                q[(r, k)] = v;
            }
        }
        q
    }
}

/// Apply the constraint projection of `network` to a per-node vector.
pub fn project(network: &CurveNetwork, v: &[Vec2]) -> Vec<Vec2> {
    Projector::from_network(network).project(v)
}

/// Everything one step needs, frozen at time level m.
#[derive(Clone, Debug)]
pub struct StepSystem {
    /// Diagonal of `M` (dual edge lengths).
    pub m: Vec<f64>,
    /// Weighted vertex normals; `N` has blocks `m_j omega_j`.
    pub omega: Vec<Vec2>,
    /// Forcing sampled at the nodes.
    pub forcing: Vec<f64>,
    /// `b = M F`.
    pub b: Vec<f64>,
    /// Edges as `(node, node, 1/h)` in global numbering; `A` is their graph Laplacian.
    pub edges: Vec<(usize, usize, f64)>,
    /// Node positions at level m.
    pub x: Vec<Vec2>,
    pub projector: Projector,
    pub tau: f64,
    pub sigma: f64,
}

pub fn assemble(
    network: &CurveNetwork,
    geometry: &DiscreteGeometry,
    forcing: &[f64],
    sigma: f64,
    tau: f64,
) -> Result<StepSystem, AssemblyError> {
    let total = network.node_count();
    assert_eq!(forcing.len(), total, "one forcing value per node");
    assert!(sigma > 0.0 && tau > 0.0, "sigma and tau must be positive");
    let offsets = network.offsets();
    let mut m = Vec::with_capacity(total);
    let mut omega = Vec::with_capacity(total);
    let mut edges = Vec::new();
    for (i, (curve, geo)) in network.curves.iter().zip(&geometry.curves).enumerate() {
        if geo.omega.len() != curve.len() {
            return Err(
                GeometryError::InvalidNetwork(format!("stale geometry for curve {i}")).into(),
            );
        }
        for j in 0..curve.len() {
            m.push(geo.dual_length(curve.closed, j));
            omega.push(geo.omega[j]);
        }
        let n = curve.len();
        for (k, &h) in geo.h.iter().enumerate() {
            edges.push((offsets[i] + k, offsets[i] + (k + 1) % n, 1.0 / h));
        }
    }
    let b = m.iter().zip(forcing).map(|(mj, f)| mj * f).collect();
    let x = network
        .curves
        .iter()
        .flat_map(|c| c.nodes.iter().copied())
        .collect();
    Ok(StepSystem {
        m,
        omega,
        forcing: forcing.to_vec(),
        b,
        edges,
        x,
        projector: Projector::from_network(network),
        tau,
        sigma,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    ConjugateGradient,
    /// Dense Cholesky on an explicit basis of the constraint space; meant for
    /// small problems and cross-checking.
    Dense,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    /// CG iteration cap as a multiple of the node count.
    pub max_iter_factor: usize,
    pub backend: Backend,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iter_factor: 20,
            backend: Backend::ConjugateGradient,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub delta_x: Vec<Vec2>,
    pub kappa: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

impl StepSystem {
    pub fn nodes(&self) -> usize {
        self.m.len()
    }

    fn coupling(&self) -> f64 {
        1.0 / (self.sigma * self.tau)
    }

    pub fn apply_a(&self, v: &[Vec2]) -> Vec<Vec2> {
        let mut out = vec![Vec2::ZERO; v.len()];
        for &(a, b, w) in &self.edges {
            let d = (v[a] - v[b]) * w;
            out[a] += d;
            out[b] -= d;
        }
        out
    }

    /// `(P A P + 1/(sigma tau) P N M^-1 N^T P) v`.
    pub fn apply_schur(&self, v: &[Vec2]) -> Vec<Vec2> {
        let pv = self.projector.project(v);
        let mut out = self.apply_a(&pv);
        let c = self.coupling();
        for g in 0..pv.len() {
            let w = self.omega[g];
            out[g] += w * (c * self.m[g] * w.dot(pv[g]));
        }
        self.projector.apply(&mut out);
        out
    }

    /// `1/sigma P N M^-1 b - P A X`.
    pub fn rhs(&self) -> Vec<Vec2> {
        let ax = self.apply_a(&self.x);
        let mut out: Vec<Vec2> = (0..self.nodes())
            .map(|g| self.omega[g] * (self.m[g] * self.forcing[g] / self.sigma) - ax[g])
            .collect();
        self.projector.apply(&mut out);
        out
    }

    /// `A` as a dense `2N x 2N` matrix.
    pub fn dense_a(&self) -> DMatrix<f64> {
        let n = self.nodes();
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        for &(p, q, w) in &self.edges {
            for d in 0..2 {
                a[(2 * p + d, 2 * p + d)] += w;
                a[(2 * q + d, 2 * q + d)] += w;
                a[(2 * p + d, 2 * q + d)] -= w;
                a[(2 * q + d, 2 * p + d)] -= w;
            }
        }
        a
    }

    /// `A + 1/(sigma tau) N M^-1 N^T` as a dense matrix (no projection).
    pub fn dense_operator(&self) -> DMatrix<f64> {
        let mut s = self.dense_a();
        let c = self.coupling();
        for g in 0..self.nodes() {
            let w = [self.omega[g].x, self.omega[g].y];
            for r in 0..2 {
                for k in 0..2 {
                    s[(2 * g + r, 2 * g + k)] += c * self.m[g] * (w[r] * w[k]);
                }
            }
        }
        s
    }

    /// The step operator written in an orthonormal basis of the constraint space.
    pub fn schur_on_subspace(&self) -> DMatrix<f64> {
        let q = self.projector.basis(self.nodes());
        q.transpose() * self.dense_operator() * &q
    }

    fn block_jacobi(&self) -> Vec<[f64; 3]> {
        // Inverse of each node's 2x2 diagonal block, stored as (xx, xy, yy).
        let mut deg = vec![0.0; self.nodes()];
        for &(a, b, w) in &self.edges {
            deg[a] += w;
            deg[b] += w;
        }
        let c = self.coupling();
        (0..self.nodes())
            .map(|g| {
                let w = self.omega[g];
                let s = c * self.m[g];
                let (xx, xy, yy) = (
                    deg[g] + s * w.x * w.x,
                    s * w.x * w.y,
                    deg[g] + s * w.y * w.y,
                );
                let det = xx * yy - xy * xy;
                if det > 0.0 {
                    [yy / det, -xy / det, xx / det]
                } else {
                    [1.0, 0.0, 1.0]
                }
            })
            .collect()
    }

    fn kappa_from(&self, dx: &[Vec2]) -> Vec<f64> {
        let c = self.coupling();
        (0..self.nodes())
            .map(|g| c * (self.omega[g].dot(dx[g]) - self.tau * self.forcing[g]))
            .collect()
    }
}

fn flatten(v: &[Vec2]) -> Vec<f64> {
    v.iter().flat_map(|p| [p.x, p.y]).collect()
}

fn unflatten(v: &[f64]) -> Vec<Vec2> {
    v.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect()
}

/// Solve for the displacement and recover the curvature.
pub fn solve_step(
    system: &StepSystem,
    options: &SolveOptions,
) -> Result<StepResult, AssemblyError> {
    let rhs = system.rhs();
    let n = system.nodes();
    let (dx, iterations) = match options.backend {
        Backend::ConjugateGradient => {
            let inv = system.block_jacobi();
            let b = flatten(&rhs);
            let mut x = vec![0.0; 2 * n];
            let outcome = linalg::pcg(
                |v, out| out.copy_from_slice(&flatten(&system.apply_schur(&unflatten(v)))),
                |r, out| {
                    let mut z = system.projector.project(&unflatten(r));
                    for (g, zg) in z.iter_mut().enumerate() {
                        let [a, b, d] = inv[g];
                        *zg = Vec2::new(a * zg.x + b * zg.y, b * zg.x + d * zg.y);
                    }
                    system.projector.apply(&mut z);
                    out.copy_from_slice(&flatten(&z));
                },
                &b,
                &mut x,
                options.tol,
                options.max_iter_factor * n.max(1),
            )
            .map_err(|e| match e {
                CgError::NotConverged {
                    iterations,
                    residual,
                } => AssemblyError::SolveFailure {
                    iterations,
                    residual,
                },
                CgError::Indefinite { .. } => AssemblyError::SingularSystem,
            })?;
            (unflatten(&x), outcome.iterations)
        }
        Backend::Dense => {
            let q = system.projector.basis(n);
            let s = q.transpose() * system.dense_operator() * &q;
            let r = q.transpose() * DVector::from_vec(flatten(&rhs));
            let chol = s.cholesky().ok_or(AssemblyError::SingularSystem)?;
            let y = chol.solve(&r);
            let x = &q * y;
            (unflatten(x.as_slice()), 0)
        }
    };
    let dx = system.projector.project(&dx);
    let ax = system.apply_schur(&dx);
    let res: f64 = ax
        .iter()
        .zip(&rhs)
        .map(|(a, b)| (*a - *b).norm_sq())
        .sum::<f64>()
        .sqrt();
    let bn: f64 = rhs.iter().map(|v| v.norm_sq()).sum::<f64>().sqrt();
    let residual_norm = if bn > 0.0 { res / bn } else { res };
    if options.backend == Backend::Dense
        && (residual_norm.is_nan() || residual_norm > options.tol.max(1e-8))
    {
        return Err(AssemblyError::SolveFailure {
            iterations: 0,
            residual: residual_norm,
        });
    }
    let kappa = system.kappa_from(&dx);
    Ok(StepResult {
        delta_x: dx,
        kappa,
        residual_norm,
        iterations,
    })
}

/// Move the nodes by `result.delta_x`, then snap junction copies together and
/// wall ends onto their walls.
pub fn apply_step(network: &mut CurveNetwork, result: &StepResult) -> Result<(), AssemblyError> {
    assert_eq!(
        result.delta_x.len(),
        network.node_count(),
        "step does not match the network"
    );
    let mut g = 0;
    for c in &mut network.curves {
        for p in &mut c.nodes {
            *p += result.delta_x[g];
            g += 1;
        }
    }
    for j in network.junctions() {
        let pts = j.ends.map(|e| network.end_node(e));
        let mean = (pts[0] + pts[1] + pts[2]) / 3.0;
        if pts.iter().any(|p| p.distance(mean) > ATTACH_TOL) {
            return Err(AssemblyError::InvariantViolation(format!(
                "junction {} ends drifted apart",
                j.id
            )));
        }
        for e in j.ends {
            network.set_end_node(e, mean);
        }
    }
    let (w, h) = (network.domain.width, network.domain.height);
    for c in &mut network.curves {
        for end in [End::Start, End::End] {
            if let Some(Binding::Wall(wall)) = c.binding(end) {
                let idx = c.end_index(end);
                c.nodes[idx] = wall.project(c.nodes[idx], w, h);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Curve, Domain, Wall};
    use proptest::prelude::*;

    fn tripod() -> CurveNetwork {
        let c = Vec2::new(20.0, 20.0);
        let arm = |dir: Vec2, wall: Wall, kp, km| {
            let pts = (0..=4).map(|k| c + dir * (5.0 * k as f64)).collect();
            Curve::open(pts, kp, km, Binding::Junction(0), Binding::Wall(wall))
        };
        CurveNetwork::with_curves(
            Domain::new(40.0, 40.0),
            vec![
                arm(Vec2::new(-1.0, 0.0), Wall::Left, 1, 2),
                arm(Vec2::new(1.0, 0.0), Wall::Right, 3, 1),
                arm(Vec2::new(0.0, -1.0), Wall::Bottom, 2, 3),
            ],
        )
    }

    fn system(net: &CurveNetwork, f: f64, sigma: f64, tau: f64) -> StepSystem {
        let geo = DiscreteGeometry::compute(net).unwrap();
        assemble(net, &geo, &vec![f; net.node_count()], sigma, tau).unwrap()
    }

    #[test]
    fn mass_and_forcing_on_uniform_closed_curve() {
        let sq = Curve::rectangle(Vec2::new(0.0, 0.0), Vec2::new(2.0, 2.0), 8, 2, 1);
        let net = CurveNetwork::with_curves(Domain::new(10.0, 10.0), vec![sq]);
        let s = system(&net, 0.5, 1.0, 1.0);
        assert!(s.m.iter().all(|&m| (m - 1.0).abs() < 1e-15));
        assert!(s.b.iter().all(|&b| (b - 0.5).abs() < 1e-15));
    }

    #[test]
    fn open_endpoint_rows() {
        let c = Curve::open(
            vec![
                Vec2::new(0.0, 1.0),
                Vec2::new(2.0, 1.0),
                Vec2::new(3.0, 1.0),
            ],
            2,
            1,
            Binding::Wall(Wall::Left),
            Binding::Wall(Wall::Right),
        );
        let net = CurveNetwork::with_curves(Domain::new(3.0, 2.0), vec![c]);
        let s = system(&net, 1.0, 1.0, 1.0);
        let a = s.dense_a();
        assert_eq!(a[(0, 0)], 0.5);
        assert_eq!(a[(0, 2)], -0.5);
        assert_eq!(a[(1, 1)], 0.5);
        assert_eq!(a[(4, 4)], 1.0);
        assert_eq!(a[(2, 2)], 1.5);
        assert_eq!(s.m, vec![1.0, 1.5, 0.5]);
        assert_eq!(s.b, vec![1.0, 1.5, 0.5]);
    }

    #[test]
    fn projection_examples() {
        let p = Projector {
            junctions: vec![[0, 1, 2]],
            walls: vec![(3, Wall::Left.outward_normal())],
        };
        let v = vec![
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(-1.0, -1.0),
            Vec2::new(3.0, 4.0),
        ];
        let pv = p.project(&v);
        assert_eq!(&pv[..3], &[Vec2::ZERO; 3]);
        assert_eq!(pv[3], Vec2::new(0.0, 4.0));
        assert_eq!(p.project(&pv), pv);
    }

    #[test]
    fn basis_spans_the_projection() {
        let net = tripod();
        let p = Projector::from_network(&net);
        let q = p.basis(net.node_count());
        let n = q.nrows();
        assert!((q.transpose() * &q - DMatrix::identity(q.ncols(), q.ncols())).amax() < 1e-14);
        // columns of Q Q^T equal P applied to unit vectors
        let qq = &q * q.transpose();
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            let pe = flatten(&p.project(&unflatten(&e)));
            for r in 0..n {
                assert!((qq[(r, k)] - pe[r]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn circle_curvature_is_recovered() {
        let c = Curve::circle(Vec2::new(0.0, 0.0), 1.0, 128, 2, 1);
        let net = CurveNetwork::with_curves(Domain::new(4.0, 4.0), vec![c]);
        let s = system(&net, 0.0, 1.0, 1e-4);
        let r = solve_step(&s, &SolveOptions::default()).unwrap();
        assert!(r.residual_norm <= 1e-10);
        for k in &r.kappa {
            assert!((0.999..=1.001).contains(k), "kappa {k}");
        }
    }

    #[test]
    fn pinned_segment_is_steady() {
        let pts = (0..=10).map(|k| Vec2::new(k as f64, 3.0)).collect();
        let c = Curve::open(
            pts,
            2,
            1,
            Binding::Wall(Wall::Left),
            Binding::Wall(Wall::Right),
        );
        let net = CurveNetwork::with_curves(Domain::new(10.0, 6.0), vec![c]);
        let s = system(&net, 0.0, 1.0, 0.1);
        let r = solve_step(&s, &SolveOptions::default()).unwrap();
        assert!(r.delta_x.iter().all(|d| d.norm() == 0.0));
    }

    #[test]
    fn single_curve_operator_is_exactly_symmetric() {
        let c = Curve::circle(Vec2::new(5.0, 5.0), 3.0, 20, 2, 1);
        let net = CurveNetwork::with_curves(Domain::new(10.0, 10.0), vec![c]);
        let s = system(&net, 0.3, 0.7, 0.05).schur_on_subspace();
        assert_eq!((&s - s.transpose()).amax(), 0.0);
    }

    #[test]
    fn tripod_operator_is_positive_definite_and_backends_agree() {
        let net = tripod();
        let s = system(&net, 0.2, 1.0, 0.5);
        let mat = s.schur_on_subspace();
        assert!((&mat - mat.transpose()).amax() < 1e-12);
        let eig = mat.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l > 0.0));
        let cg = solve_step(&s, &SolveOptions::default()).unwrap();
        let dense = solve_step(
            &s,
            &SolveOptions {
                backend: Backend::Dense,
                ..Default::default()
            },
        )
        .unwrap();
        for (a, b) in cg.delta_x.iter().zip(&dense.delta_x) {
            assert!((*a - *b).norm() < 1e-8);
        }
        assert_eq!(dense.iterations, 0);
    }

    #[test]
    fn apply_step_keeps_junction_and_walls() {
        let mut net = tripod();
        let s = system(&net, 0.5, 1.0, 0.5);
        let r = solve_step(&s, &SolveOptions::default()).unwrap();
        apply_step(&mut net, &r).unwrap();
        net.validate().unwrap();
        let zero = StepResult {
            delta_x: vec![Vec2::ZERO; net.node_count()],
            kappa: vec![],
            residual_norm: 0.0,
            iterations: 0,
        };
        let before = net.clone();
        apply_step(&mut net, &zero).unwrap();
        assert_eq!(before, net);
    }

    #[test]
    fn apply_step_translates_closed_curves() {
        let mut net = CurveNetwork::with_curves(
            Domain::new(20.0, 20.0),
            vec![Curve::circle(Vec2::new(10.0, 10.0), 3.0, 12, 2, 1)],
        );
        let before = net.clone();
        let shift = Vec2::new(0.25, -0.5);
        let r = StepResult {
            delta_x: vec![shift; 12],
            kappa: vec![],
            residual_norm: 0.0,
            iterations: 0,
        };
        apply_step(&mut net, &r).unwrap();
        for (a, b) in net.curves[0].nodes.iter().zip(&before.curves[0].nodes) {
            assert!((*a - *b - shift).norm() < 1e-14);
        }
    }

    #[test]
    fn drifting_junction_is_an_invariant_violation() {
        let mut net = tripod();
        let mut dx = vec![Vec2::ZERO; net.node_count()];
        dx[0] = Vec2::new(1.0, 0.0);
        let r = StepResult {
            delta_x: dx,
            kappa: vec![],
            residual_norm: 0.0,
            iterations: 0,
        };
        assert!(matches!(
            apply_step(&mut net, &r),
            Err(AssemblyError::InvariantViolation(_))
        ));
    }

    proptest! {
        #[test]
        fn projector_is_idempotent_and_self_adjoint(
            a in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 15),
            b in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 15),
        ) {
            let p = Projector::from_network(&tripod());
            let a: Vec<Vec2> = a.into_iter().map(|(x, y)| Vec2::new(x, y)).collect();
            let b: Vec<Vec2> = b.into_iter().map(|(x, y)| Vec2::new(x, y)).collect();
            let pa = p.project(&a);
            let pb = p.project(&b);
            let lhs: f64 = pa.iter().zip(&b).map(|(u, v)| u.dot(*v)).sum();
            let rhs: f64 = a.iter().zip(&pb).map(|(u, v)| u.dot(*v)).sum();
            prop_assert!((lhs - rhs).abs() < 1e-12);
            let ppa = p.project(&pa);
            for (u, v) in ppa.iter().zip(&pa) {
                prop_assert!((*u - *v).norm() < 1e-14);
            }
        }

        #[test]
        fn a_is_symmetric_positive_semidefinite(
            v in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 15),
            w in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 15),
        ) {
            let s = system(&tripod(), 0.1, 1.0, 1.0);
            let v: Vec<Vec2> = v.into_iter().map(|(x, y)| Vec2::new(x, y)).collect();
            let w: Vec<Vec2> = w.into_iter().map(|(x, y)| Vec2::new(x, y)).collect();
            let av = s.apply_a(&v);
            let aw = s.apply_a(&w);
            let vaw: f64 = v.iter().zip(&aw).map(|(a, b)| a.dot(*b)).sum();
            let wav: f64 = w.iter().zip(&av).map(|(a, b)| a.dot(*b)).sum();
            prop_assert!((vaw - wav).abs() < 1e-10);
            prop_assert!(v.iter().zip(&av).map(|(a, b)| a.dot(*b)).sum::<f64>() >= -1e-12);
        }
    }
}
