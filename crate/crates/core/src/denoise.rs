//! Edge-preserving smoothing of an image on a fixed segmentation.
//!
//! Each region is smoothed on its own by minimizing a discrete
//! `|grad u|^2 + lambda (u - u0)^2` energy whose unknowns live on pixel corners.
//! Coupling weights are areas of the region inside the half-shifted cells, so
//! nothing leaks across region boundaries and the boundary rows come out as
//! natural Neumann conditions. Pixel values are recovered by averaging the four
//! corners of the owning region's solution.

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::Backend;
use crate::geometry::RegionId;
use crate::image::Image;
use crate::linalg::{pcg, CgError};
use crate::regions::LabelMap;

#[derive(Debug, Error)]
pub enum DenoiseError {
    #[error("region {region}: {source}")]
    SolveFailure { region: RegionId, source: CgError },
    #[error("region {region}: dense factorization failed")]
    SingularSystem { region: RegionId },
    #[error("smoothing weight for region {region} must be positive, got {lambda}")]
    NonPositiveLambda { region: RegionId, lambda: f64 },
    #[error("image is {image:?} but labels are {labels:?}")]
    ShapeMismatch {
        image: (usize, usize),
        labels: (usize, usize),
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DenoiseOptions {
    pub tol: f64,
    pub backend: Backend,
}

impl Default for DenoiseOptions {
    fn default() -> Self {
        DenoiseOptions {
            tol: 1e-10,
            backend: Backend::ConjugateGradient,
        }
    }
}

/// Region areas around the corner lattice, in pixel units.
///
/// Corner `(i, j)` sits at `(i, j)` for `i in 0..=width`, `j in 0..=height`.
/// `ax[c]` belongs to the horizontal edge ending at corner `c` from the left,
/// `ay[c]` to the vertical edge ending at `c` from below. All values are
/// multiples of 1/4.
#[derive(Clone, Debug, PartialEq)]
pub struct AreaWeights {
    pub cols: usize,
    pub rows: usize,
    pub ax: Vec<f64>,
    pub ay: Vec<f64>,
    pub a: Vec<f64>,
}

impl AreaWeights {
    pub fn corner(&self, i: usize, j: usize) -> usize {
        j * self.cols + i
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn in_region(labels: &LabelMap, k: RegionId, x: isize, y: isize) -> f64 {
    if x < 0 || y < 0 || x as usize >= labels.width || y as usize >= labels.height {
        return 0.0;
    }
    f64::from(u8::from(labels.get(x as usize, y as usize) == k))
}

pub fn compute_area_weights(labels: &LabelMap, k: RegionId) -> AreaWeights {
    let (cols, rows) = (labels.width + 1, labels.height + 1);
    let mut w = AreaWeights {
        cols,
        rows,
        ax: vec![0.0; cols * rows],
        ay: vec![0.0; cols * rows],
        a: vec![0.0; cols * rows],
    };
    for j in 0..rows {
        for i in 0..cols {
            let (x, y) = (i as isize, j as isize);
            let chi = |dx: isize, dy: isize| in_region(labels, k, x + dx, y + dy);
            let c = w.corner(i, j);
            w.a[c] = 0.25 * (chi(-1, -1) + chi(0, -1) + chi(-1, 0) + chi(0, 0));
            if i > 0 {
                w.ax[c] = 0.5 * (chi(-1, -1) + chi(-1, 0));
            }
            if j > 0 {
                w.ay[c] = 0.5 * (chi(-1, -1) + chi(0, -1));
            }
        }
    }
    w
}

/// Data value at each corner: mean of the adjacent pixels in region `k`, 0 where there are none.
pub fn corner_samples(values: &[f64], labels: &LabelMap, k: RegionId) -> Vec<f64> {
    assert_eq!(values.len(), labels.width * labels.height);
    let (cols, rows) = (labels.width + 1, labels.height + 1);
    let mut out = vec![0.0; cols * rows];
    for j in 0..rows {
        for i in 0..cols {
            let mut sum = 0.0;
            let mut n = 0u32;
            for (dx, dy) in [(-1, -1), (0, -1), (-1, 0), (0, 0)] {
                let (x, y) = (i as isize + dx, j as isize + dy);
                if in_region(labels, k, x, y) > 0.0 {
                    sum += values[y as usize * labels.width + x as usize];
                    n += 1;
                }
            }
            if n > 0 {
                out[j * cols + i] = sum / f64::from(n);
            }
        }
    }
    out
}

/// Sparse symmetric system over the corners of one region.
#[derive(Clone, Debug)]
pub struct DenoiseSystem {
    /// Lattice index of the corner behind each row.
    pub corners: Vec<usize>,
    pub diag: Vec<f64>,
    /// Off-diagonal entries per row as `(column row, value)`.
    pub off: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
    /// Corner area `A` of each row, for integral checks.
    pub area: Vec<f64>,
    lookup: Vec<usize>,
}

impl DenoiseSystem {
    pub fn len(&self) -> usize {
        self.corners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corners.is_empty()
    }

    pub fn row_of(&self, corner: usize) -> Option<usize> {
        self.lookup
            .get(corner)
            .copied()
            .filter(|&r| r != usize::MAX)
    }

    /// Matrix entry between two corners; zero if either has no row.
    pub fn coefficient(&self, a: usize, b: usize) -> f64 {
        let (Some(ra), Some(rb)) = (self.row_of(a), self.row_of(b)) else {
            return 0.0;
        };
        if ra == rb {
            return self.diag[ra];
        }
        self.off[ra]
            .iter()
            .filter(|(c, _)| *c == rb)
            .map(|(_, v)| v)
            .sum()
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            *out = self.diag[r] * x[r] + self.off[r].iter().map(|&(c, v)| v * x[c]).sum::<f64>();
        }
    }

    pub fn is_strictly_diagonally_dominant(&self) -> bool {
        (0..self.len())
            .all(|r| self.diag[r] > self.off[r].iter().map(|(_, v)| v.abs()).sum::<f64>())
    }

    fn dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for r in 0..n {
            m[(r, r)] = self.diag[r];
            for &(c, v) in &self.off[r] {
                m[(r, c)] += v;
            }
        }
        m
    }
}

/// One row per corner with positive area, obtained by differentiating the
/// discrete energy with respect to that corner's value.
pub fn assemble_denoise_system(weights: &AreaWeights, lambda: f64, u0: &[f64]) -> DenoiseSystem {
    assert!(lambda > 0.0, "smoothing weight must be positive");
    assert_eq!(u0.len(), weights.len());
    let mut lookup = vec![usize::MAX; weights.len()];
    let mut corners = Vec::new();
    for (c, &a) in weights.a.iter().enumerate() {
        if a > 0.0 {
            lookup[c] = corners.len();
            corners.push(c);
        }
    }
    let cols = weights.cols;
    let n = corners.len();
    let mut sys = DenoiseSystem {
        corners,
        diag: vec![0.0; n],
        off: vec![Vec::new(); n],
        rhs: vec![0.0; n],
        area: vec![0.0; n],
        lookup,
    };
    for r in 0..n {
        let c = sys.corners[r];
        let (i, j) = (c % cols, c / cols);
        // edges to the west, east, south and north neighbours
        let mut edges = Vec::with_capacity(4);
        if i > 0 {
            edges.push((c - 1, weights.ax[c]));
        }
        if i + 1 < cols {
            edges.push((c + 1, weights.ax[c + 1]));
        }
        if j > 0 {
            edges.push((c - cols, weights.ay[c]));
        }
        if j + 1 < weights.rows {
            edges.push((c + cols, weights.ay[c + cols]));
        }
        let a = weights.a[c];
        let mut diag = lambda * a;
        for (nb, w) in edges {
            if w > 0.0 {
                diag += w;
                let col = sys.lookup[nb];
                debug_assert!(
                    col != usize::MAX,
                    "an edge with positive weight ends at a corner with positive area"
                );
                sys.off[r].push((col, -w));
            }
        }
        sys.diag[r] = diag;
        sys.rhs[r] = lambda * a * u0[c];
        sys.area[r] = a;
    }
    sys
}

/// Corner values, one per system row.
pub fn solve_denoise(
    system: &DenoiseSystem,
    options: &DenoiseOptions,
) -> Result<Vec<f64>, CgError> {
    assert!(
        system.is_strictly_diagonally_dominant(),
        "smoothing system must be diagonally dominant"
    );
    let n = system.len();
    match options.backend {
        Backend::ConjugateGradient => {
            let mut x = vec![0.0; n];
            pcg(
                |v, out| system.apply(v, out),
                |v, out| {
                    for r in 0..n {
                        out[r] = v[r] / system.diag[r];
                    }
                },
                &system.rhs,
                &mut x,
                options.tol,
                20 * n.max(10),
            )?;
            Ok(x)
        }
        Backend::Dense => {
            let chol = system
                .dense()
                .cholesky()
                .ok_or(CgError::Indefinite { curvature: 0.0 })?;
            Ok(chol
                .solve(&nalgebra::DVector::from_column_slice(&system.rhs))
                .as_slice()
                .to_vec())
        }
    }
}

/// Smooth every channel of `image` inside each labelled region separately.
pub fn denoise_image(
    image: &Image,
    labels: &LabelMap,
    lambda: impl Fn(RegionId) -> f64 + Sync,
    options: &DenoiseOptions,
) -> Result<Image, DenoiseError> {
    if (image.width, image.height) != (labels.width, labels.height) {
        return Err(DenoiseError::ShapeMismatch {
            image: (image.width, image.height),
            labels: (labels.width, labels.height),
        });
    }
    let regions: Vec<RegionId> = labels.counts().into_keys().collect();
    for &k in &regions {
        let l = lambda(k);
        if !(l > 0.0 && l.is_finite()) {
            return Err(DenoiseError::NonPositiveLambda {
                region: k,
                lambda: l,
            });
        }
    }
    let channels: Vec<Vec<f64>> = (0..image.channels).map(|c| image.channel(c)).collect();
    let solved: Vec<(RegionId, AreaWeights, Vec<Vec<f64>>)> = regions
        .par_iter()
        .map(|&k| {
            let w = compute_area_weights(labels, k);
            let mut per_channel = Vec::with_capacity(image.channels);
            for values in &channels {
                let u0 = corner_samples(values, labels, k);
                let sys = assemble_denoise_system(&w, lambda(k), &u0);
                let x = solve_denoise(&sys, options).map_err(|source| match source {
                    CgError::Indefinite { .. } if options.backend == Backend::Dense => {
                        DenoiseError::SingularSystem { region: k }
                    }
                    source => DenoiseError::SolveFailure { region: k, source },
                })?;
                let mut full = vec![0.0; w.len()];
                for (r, &c) in sys.corners.iter().enumerate() {
                    full[c] = x[r];
                }
                per_channel.push(full);
            }
            Ok((k, w, per_channel))
        })
        .collect::<Result<_, DenoiseError>>()?;

    let mut out = Image::new(image.width, image.height, image.channels);
    for (k, w, per_channel) in &solved {
        for y in 0..image.height {
            for x in 0..image.width {
                if labels.get(x, y) != *k {
                    continue;
                }
                let corners = [
                    w.corner(x, y),
                    w.corner(x + 1, y),
                    w.corner(x, y + 1),
                    w.corner(x + 1, y + 1),
                ];
                let px = out.pixel_mut(x, y);
                for (c, u) in per_channel.iter().enumerate() {
                    px[c] = 0.25 * corners.iter().map(|&i| u[i]).sum::<f64>();
                }
            }
        }
    }
    Ok(out)
}
