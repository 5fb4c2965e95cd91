//! Pixel-to-region labels and per-region statistics.
//!
//! Pixels are classified by their center `(x + 0.5, y + 0.5)`. Near a curve
//! the nearest segment decides: the pixel goes to `kplus` if it lies on the
//! side its normal points to. Away from all curves the label is inherited by
//! flood fill at initialization and left alone afterwards.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::f64::consts::TAU;

use thiserror::Error;

use crate::forcing::{Coefficients, FeatureImage, ImageModel, FIXED_SCALE};
use crate::geometry::{
    edge_normals, Binding, Curve, CurveGeometry, CurveNetwork, GeometryError, Junction, RegionId,
};
use crate::vec2::{chebyshev_to_segment, closest_on_segment, Vec2};

#[derive(Debug, Error)]
pub enum RegionError {
    #[error("curve orientations disagree: a connected area borders regions {0} and {1}")]
    InconsistentOrientation(RegionId, RegionId),
    #[error("region {0} lost its last pixel")]
    EmptyRegion(RegionId),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<RegionId>,
}

impl LabelMap {
    pub fn filled(width: usize, height: usize, region: RegionId) -> Self {
        LabelMap {
            width,
            height,
            labels: vec![region; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> RegionId {
        self.labels[y * self.width + x]
    }

    pub fn counts(&self) -> BTreeMap<RegionId, u64> {
        let mut out = BTreeMap::new();
        for &l in &self.labels {
            *out.entry(l).or_insert(0) += 1;
        }
        out
    }
}

fn pixel_center(width: usize, i: usize) -> Vec2 {
    Vec2::new((i % width) as f64 + 0.5, (i / width) as f64 + 0.5)
}

/// Pixel count and fixed-point feature sum of one region.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RegionAccumulator {
    pub count: u64,
    pub sum: Vec<i64>,
}

#[derive(Clone, Debug)]
pub struct RegionStats {
    pub dim: usize,
    pub regions: BTreeMap<RegionId, RegionAccumulator>,
}

/// Empty regions compare equal to absent ones.
impl PartialEq for RegionStats {
    fn eq(&self, other: &Self) -> bool {
        let live = |s: &Self| {
            s.regions
                .iter()
                .filter(|(_, a)| a.count > 0)
                .map(|(k, a)| (*k, a.clone()))
                .collect::<Vec<_>>()
        };
        self.dim == other.dim && live(self) == live(other)
    }
}

impl Eq for RegionStats {}

impl RegionStats {
    /// Sweep all pixels in row-major order.
    pub fn recount(labels: &LabelMap, features: &FeatureImage) -> Self {
        let mut stats = RegionStats {
            dim: features.dim,
            regions: BTreeMap::new(),
        };
        for (i, &l) in labels.labels.iter().enumerate() {
            stats.add(l, features.fixed_at(i));
        }
        stats
    }

    fn entry(&mut self, k: RegionId) -> &mut RegionAccumulator {
        let dim = self.dim;
        self.regions.entry(k).or_insert_with(|| RegionAccumulator {
            count: 0,
            sum: vec![0; dim],
        })
    }

    fn add(&mut self, k: RegionId, f: &[i64]) {
        let acc = self.entry(k);
        acc.count += 1;
        for (s, v) in acc.sum.iter_mut().zip(f) {
            *s += v;
        }
    }

    fn remove(&mut self, k: RegionId, f: &[i64]) {
        let acc = self.entry(k);
        acc.count -= 1;
        for (s, v) in acc.sum.iter_mut().zip(f) {
            *s -= v;
        }
    }

    /// Move one pixel from region `from` to region `to`.
    pub fn transfer(&mut self, from: RegionId, to: RegionId, f: &[i64]) {
        self.remove(from, f);
        self.add(to, f);
    }

    pub fn count(&self, k: RegionId) -> u64 {
        self.regions.get(&k).map_or(0, |a| a.count)
    }

    pub fn total_count(&self) -> u64 {
        self.regions.values().map(|a| a.count).sum()
    }

    /// Feature sum of region `k` in real units.
    pub fn sum(&self, k: RegionId) -> Vec<f64> {
        self.regions.get(&k).map_or(vec![0.0; self.dim], |a| {
            a.sum.iter().map(|&s| s as f64 / FIXED_SCALE).collect()
        })
    }

    /// Coefficients for every non-empty region. Regions that are empty or
    /// whose unit-vector mean is undefined keep their entry from `previous`.
    pub fn coefficients(
        &self,
        model: &ImageModel,
        previous: Option<&Coefficients>,
    ) -> Coefficients {
        let mut out = BTreeMap::new();
        for (&k, acc) in &self.regions {
            let c = if acc.count > 0 {
                model.coefficient(&self.sum(k), acc.count).ok()
            } else {
                None
            };
            match c.or_else(|| previous.and_then(|p| p.0.get(&k).cloned())) {
                Some(c) => {
                    out.insert(k, c);
                }
                None => log::warn!("region {k} has no usable coefficient"),
            }
        }
        if let Some(prev) = previous {
            for (k, c) in &prev.0 {
                out.entry(*k).or_insert_with(|| c.clone());
            }
        }
        Coefficients(out)
    }
}

/// Which side of `curve` the point lies on, judged at the nearest segment.
/// Points exactly on the curve count as `kplus`.
pub fn side_of_curve(point: Vec2, curve: &Curve, geometry: &CurveGeometry) -> RegionId {
    let mut best = (f64::INFINITY, 0, 0.0, Vec2::ZERO);
    for k in 0..curve.edge_count() {
        let (a, b) = curve.edge(k);
        let (foot, t) = closest_on_segment(point, a, b);
        let d = point.distance(foot);
        if d < best.0 {
            best = (d, k, t, foot);
        }
    }
    let (_, k, t, foot) = best;
    let n = vertex_or_edge_normal(curve, &geometry.nu, k, t);
    if (point - foot).dot(n) >= 0.0 {
        curve.kplus
    } else {
        curve.kminus
    }
}

/// Edge normal for interior feet; angle-weighted pseudo-normal at vertices so
/// that points beyond a convex or concave corner are still judged correctly.
fn vertex_or_edge_normal(curve: &Curve, nu: &[Vec2], k: usize, t: f64) -> Vec2 {
    if t > 0.0 && t < 1.0 {
        return nu[k];
    }
    let edges = nu.len();
    let (prev, next) = if t <= 0.0 {
        if !curve.closed && k == 0 {
            return nu[0];
        }
        ((k + edges - 1) % edges, k)
    } else {
        if !curve.closed && k + 1 == edges {
            return nu[k];
        }
        (k, (k + 1) % edges)
    };
    let s = nu[prev] + nu[next];
    if s.norm_sq() > 1e-24 {
        s
    } else {
        nu[k]
    }
}

/// Nearest-segment classifier for a whole network, aware of junction sectors.
pub struct Classifier<'a> {
    network: &'a CurveNetwork,
    normals: Vec<Vec<Vec2>>,
    junctions: HashMap<u32, Junction>,
}

/// Nearest segment found for a query point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Foot {
    pub curve: usize,
    pub edge: usize,
    pub t: f64,
    pub dist_sq: f64,
}

impl<'a> Classifier<'a> {
    pub fn new(network: &'a CurveNetwork) -> Result<Self, GeometryError> {
        let normals = network
            .curves
            .iter()
            .enumerate()
            .map(|(i, c)| {
                edge_normals(c).map_err(|e| GeometryError::InCurve {
                    curve: i,
                    source: Box::new(e),
                })
            })
            .collect::<Result<_, _>>()?;
        let junctions = network.junctions().into_iter().map(|j| (j.id, j)).collect();
        Ok(Classifier {
            network,
            normals,
            junctions,
        })
    }

    /// Brute-force nearest segment over the whole network.
    pub fn nearest(&self, p: Vec2) -> Option<Foot> {
        let mut best: Option<Foot> = None;
        for (i, c) in self.network.curves.iter().enumerate() {
            for k in 0..c.edge_count() {
                let (a, b) = c.edge(k);
                let (foot, t) = closest_on_segment(p, a, b);
                let d = (p - foot).norm_sq();
                if best.is_none_or(|f| d < f.dist_sq) {
                    best = Some(Foot {
                        curve: i,
                        edge: k,
                        t,
                        dist_sq: d,
                    });
                }
            }
        }
        best
    }

    pub fn classify(&self, p: Vec2, f: Foot) -> RegionId {
        let c = &self.network.curves[f.curve];
        let (a, b) = c.edge(f.edge);
        let at_vertex = if f.t <= 0.0 {
            Some(f.edge)
        } else if f.t >= 1.0 {
            Some((f.edge + 1) % c.len())
        } else {
            None
        };
        if let Some(v) = at_vertex {
            if !c.closed {
                let end = if v == 0 {
                    Some(crate::geometry::End::Start)
                } else if v + 1 == c.len() {
                    Some(crate::geometry::End::End)
                } else {
                    None
                };
                if let Some(Binding::Junction(id)) = end.and_then(|e| c.binding(e)) {
                    if let Some(r) = self.junction_sector(id, p) {
                        return r;
                    }
                }
            }
        }
        let foot = a + (b - a) * f.t;
        let n = vertex_or_edge_normal(c, &self.normals[f.curve], f.edge, f.t);
        if (p - foot).dot(n) >= 0.0 {
            c.kplus
        } else {
            c.kminus
        }
    }

    /// Region of the sector around a junction that contains `p`.
    fn junction_sector(&self, id: u32, p: Vec2) -> Option<RegionId> {
        let j = self.junctions.get(&id)?;
        let centre = self.network.end_node(j.ends[0]);
        let d = p - centre;
        let ad = d.y.atan2(d.x);
        let mut best: Option<(f64, RegionId)> = None;
        for e in j.ends {
            let c = &self.network.curves[e.curve];
            let nb = match e.end {
                crate::geometry::End::Start => c.nodes[1],
                crate::geometry::End::End => c.nodes[c.len() - 2],
            };
            let arm = nb - centre;
            // counterclockwise angle from the arm to d
            let ccw = (ad - arm.y.atan2(arm.x)).rem_euclid(TAU);
            let region = match e.end {
                crate::geometry::End::Start => c.kplus,
                crate::geometry::End::End => c.kminus,
            };
            if best.is_none_or(|(a, _)| ccw < a) {
                best = Some((ccw, region));
            }
        }
        best.map(|(_, r)| r)
    }

    pub fn classify_point(&self, p: Vec2) -> Option<RegionId> {
        self.nearest(p).map(|f| self.classify(p, f))
    }

    /// Classify every pixel within Chebyshev distance `band` of a curve.
    /// Returns `(pixel, region)` pairs in increasing pixel order.
    pub fn band(&self, width: usize, height: usize, band: f64) -> Vec<(usize, RegionId)> {
        let reach = (std::f64::consts::SQRT_2 * band).ceil() + 1.0;
        let mut feet: HashMap<usize, (Foot, f64)> = HashMap::new();
        for (i, c) in self.network.curves.iter().enumerate() {
            for k in 0..c.edge_count() {
                let (a, b) = c.edge(k);
                let x0 = ((a.x.min(b.x) - reach).floor().max(0.0)) as usize;
                let y0 = ((a.y.min(b.y) - reach).floor().max(0.0)) as usize;
                let x1 = ((a.x.max(b.x) + reach).ceil().max(0.0) as usize).min(width);
                let y1 = ((a.y.max(b.y) + reach).ceil().max(0.0) as usize).min(height);
                for y in y0..y1 {
                    for x in x0..x1 {
                        let p = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
                        let (foot, t) = closest_on_segment(p, a, b);
                        let d = (p - foot).norm_sq();
                        let cheb = chebyshev_to_segment(p, a, b);
                        let f = Foot {
                            curve: i,
                            edge: k,
                            t,
                            dist_sq: d,
                        };
                        feet.entry(y * width + x)
                            .and_modify(|(best, cmin)| {
                                if d < best.dist_sq {
                                    *best = f;
                                }
                                *cmin = cmin.min(cheb);
                            })
                            .or_insert((f, cheb));
                    }
                }
            }
        }
        let mut out: Vec<(usize, RegionId)> = feet
            .into_iter()
            .filter(|(_, (_, cheb))| *cheb <= band)
            .map(|(pix, (f, _))| (pix, self.classify(pixel_center(width, pix), f)))
            .collect();
        out.sort_unstable_by_key(|&(p, _)| p);
        out
    }
}

/// Band used to seed the flood fill at initialization.
const INIT_BAND: f64 = 2.0;

/// Label every pixel: pixels near a curve by the side test, the rest by
/// flood fill from those. Without curves everything is `default_region`.
pub fn initialize_labels(
    network: &CurveNetwork,
    width: usize,
    height: usize,
    default_region: RegionId,
) -> Result<LabelMap, RegionError> {
    let mut labels = vec![0 as RegionId; width * height];
    let classifier = Classifier::new(network)?;
    for (pix, r) in classifier.band(width, height, INIT_BAND) {
        labels[pix] = r;
    }
    let mut seen = vec![false; width * height];
    let mut queue = VecDeque::new();
    for start in 0..labels.len() {
        if labels[start] != 0 || seen[start] {
            continue;
        }
        let mut component = Vec::new();
        let mut border: Option<RegionId> = None;
        seen[start] = true;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            component.push(p);
            let (x, y) = (p % width, p / width);
            let mut nbs = [None; 4];
            if x > 0 {
                nbs[0] = Some(p - 1);
            }
            if x + 1 < width {
                nbs[1] = Some(p + 1);
            }
            if y > 0 {
                nbs[2] = Some(p - width);
            }
            if y + 1 < height {
                nbs[3] = Some(p + width);
            }
            for q in nbs.into_iter().flatten() {
                if labels[q] != 0 {
                    match border {
                        None => border = Some(labels[q]),
                        Some(b) if b != labels[q] => {
                            return Err(RegionError::InconsistentOrientation(b, labels[q]))
                        }
                        _ => {}
                    }
                } else if !seen[q] {
                    seen[q] = true;
                    queue.push_back(q);
                }
            }
        }
        let r = border.unwrap_or(default_region);
        for p in component {
            labels[p] = r;
        }
    }
    Ok(LabelMap {
        width,
        height,
        labels,
    })
}

/// Re-classify pixels within `band_width` of the curves and move changed
/// pixels between region accumulators. The update is applied in full even
/// when it empties a region; that is then reported as `EmptyRegion`.
pub fn update_labels_near_curves(
    network: &CurveNetwork,
    labels: &mut LabelMap,
    stats: &mut RegionStats,
    features: &FeatureImage,
    band_width: f64,
) -> Result<usize, RegionError> {
    let classifier = Classifier::new(network)?;
    let mut changed = 0;
    let mut losers = Vec::new();
    for (pix, r) in classifier.band(labels.width, labels.height, band_width) {
        let old = labels.labels[pix];
        if old != r {
            stats.transfer(old, r, features.fixed_at(pix));
            labels.labels[pix] = r;
            changed += 1;
            losers.push(old);
        }
    }
    losers.sort_unstable();
    losers.dedup();
    for k in losers {
        if stats.count(k) == 0 {
            return Err(RegionError::EmptyRegion(k));
        }
    }
    Ok(changed)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Energy {
    pub total: f64,
    pub length: f64,
    pub external: f64,
}

/// External energy: row-major sum of each pixel's weighted squared distance
/// to its region coefficient.
pub fn external_energy(labels: &LabelMap, features: &FeatureImage, coeffs: &Coefficients) -> f64 {
    let model = features.model;
    let mut e = 0.0;
    for (i, &l) in labels.labels.iter().enumerate() {
        if let Ok(c) = coeffs.get(l) {
            e += model.pixel_energy(features.at(i), c);
        }
    }
    e
}

pub fn energy(
    network: &CurveNetwork,
    labels: &LabelMap,
    stats: &RegionStats,
    features: &FeatureImage,
    sigma: f64,
) -> Energy {
    let coeffs = stats.coefficients(&features.model, None);
    let length = sigma * network.length();
    let external = external_energy(labels, features, &coeffs);
    Energy {
        total: length + external,
        length,
        external,
    }
}
