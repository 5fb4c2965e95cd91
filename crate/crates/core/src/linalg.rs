//! Preconditioned conjugate gradients on flat `f64` vectors, shared by the
//! curve step and the denoiser.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CgError {
    #[error("conjugate gradients did not reach the tolerance in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("operator is not positive definite on the search space (p^T A p = {curvature:e})")]
    Indefinite { curvature: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// Relative residual `||b - A x|| / ||b||` recomputed from the returned `x`.
    pub residual: f64,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve `A x = b` for symmetric positive definite `A`, starting from `x`.
///
/// `apply(v, out)` writes `A v` into `out`; `precond(r, out)` writes `M^{-1} r`.
/// Both may act on a subspace (e.g. with a projection folded in) as long as
/// `b` and the starting `x` lie in it.
pub fn pcg<A, P>(
    apply: A,
    precond: P,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome, CgError>
where
    A: Fn(&[f64], &mut [f64]),
    P: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome {
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    while norm(&r) > tol * bnorm {
        if iterations >= max_iter {
            return Err(CgError::NotConverged {
                iterations,
                residual: norm(&r) / bnorm,
            });
        }
        apply(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if curvature <= 0.0 || !curvature.is_finite() {
            return Err(CgError::Indefinite { curvature });
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iterations += 1;
    }
    // The recursive residual drifts; report the true one.
    apply(x, &mut ap);
    let true_res = b
        .iter()
        .zip(&ap)
        .map(|(bi, ai)| (bi - ai) * (bi - ai))
        .sum::<f64>()
        .sqrt()
        / bnorm;
    Ok(CgOutcome {
        iterations,
        residual: true_res,
    })
}
