//! External forcing for the four image models.
//!
//! Every model is handled as a short feature vector per pixel, split into
//! groups. A group is either an ordinary mean (intensity, RGB channel,
//! brightness, saturation, value) or a unit vector whose region mean is
//! renormalized (chromaticity on S^2, hue on S^1). The forcing on a curve is
//! the weighted difference of squared distances to the two adjacent region
//! coefficients, and the external energy is the weighted squared distance of
//! each pixel to its own region coefficient.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Curve, RegionId};
use crate::image::Image;
use crate::vec2::Vec2;

/// Below this norm a summed unit-vector accumulator has no direction.
pub const EPS_MEAN: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForcingError {
    #[error("no coefficients for region {0}")]
    MissingRegion(RegionId),
    #[error("unit-vector mean is undefined (accumulator norm {0:e})")]
    DegenerateMean(f64),
    #[error("model weight {0} must be positive")]
    NonPositiveWeight(f64),
    #[error("{model} model needs a {expected}-channel image, got {got}")]
    ChannelMismatch {
        model: &'static str,
        expected: usize,
        got: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ImageModel {
    Scalar {
        lambda: f64,
    },
    Rgb {
        lambda: [f64; 3],
    },
    Cb {
        lambda_c: f64,
        lambda_b: f64,
    },
    Hsv {
        lambda_h: f64,
        lambda_s: f64,
        lambda_v: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupKind {
    Mean,
    Unit,
}

/// A contiguous slice of the feature vector with its weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Group {
    pub start: usize,
    pub len: usize,
    pub weight: f64,
    pub kind: GroupKind,
}

impl ImageModel {
    pub fn name(&self) -> &'static str {
        match self {
            ImageModel::Scalar { .. } => "scalar",
            ImageModel::Rgb { .. } => "rgb",
            ImageModel::Cb { .. } => "cb",
            ImageModel::Hsv { .. } => "hsv",
        }
    }

    pub fn input_channels(&self) -> usize {
        match self {
            ImageModel::Scalar { .. } => 1,
            _ => 3,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            ImageModel::Scalar { .. } => 1,
            ImageModel::Rgb { .. } => 3,
            ImageModel::Cb { .. } | ImageModel::Hsv { .. } => 4,
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        match *self {
            ImageModel::Scalar { lambda } => vec![lambda],
            ImageModel::Rgb { lambda } => lambda.to_vec(),
            ImageModel::Cb { lambda_c, lambda_b } => vec![lambda_c, lambda_b],
            ImageModel::Hsv {
                lambda_h,
                lambda_s,
                lambda_v,
            } => vec![lambda_h, lambda_s, lambda_v],
        }
    }

    pub fn validate(&self) -> Result<(), ForcingError> {
        for w in self.weights() {
            if w.is_nan() || w <= 0.0 || !w.is_finite() {
                return Err(ForcingError::NonPositiveWeight(w));
            }
        }
        Ok(())
    }

    pub fn groups(&self) -> Vec<Group> {
        let g = |start, len, weight, kind| Group {
            start,
            len,
            weight,
            kind,
        };
        match *self {
            ImageModel::Scalar { lambda } => vec![g(0, 1, lambda, GroupKind::Mean)],
            ImageModel::Rgb { lambda } => (0..3)
                .map(|c| g(c, 1, lambda[c], GroupKind::Mean))
                .collect(),
            ImageModel::Cb { lambda_c, lambda_b } => {
                vec![
                    g(0, 3, lambda_c, GroupKind::Unit),
                    g(3, 1, lambda_b, GroupKind::Mean),
                ]
            }
            ImageModel::Hsv {
                lambda_h,
                lambda_s,
                lambda_v,
            } => vec![
                g(0, 2, lambda_h, GroupKind::Unit),
                g(2, 1, lambda_s, GroupKind::Mean),
                g(3, 1, lambda_v, GroupKind::Mean),
            ],
        }
    }

    /// Feature vector of one raw pixel.
    pub fn features(&self, pixel: &[f64]) -> Vec<f64> {
        match self {
            ImageModel::Scalar { .. } => vec![pixel[0]],
            ImageModel::Rgb { .. } => pixel[..3].to_vec(),
            ImageModel::Cb { .. } => {
                let (v, b) = rgb_to_cb([pixel[0], pixel[1], pixel[2]]);
                vec![v[0], v[1], v[2], b]
            }
            ImageModel::Hsv { .. } => {
                let (h, s, v) = rgb_to_hsv([pixel[0], pixel[1], pixel[2]]);
                vec![h.x, h.y, s, v]
            }
        }
    }

    /// Image-space pixel for a feature vector, used to render region coefficients.
    pub fn to_pixel(&self, f: &[f64]) -> Vec<f64> {
        match self {
            ImageModel::Scalar { .. } => vec![f[0]],
            ImageModel::Rgb { .. } => f[..3].to_vec(),
            ImageModel::Cb { .. } => f[..3].iter().map(|c| c * f[3]).collect(),
            ImageModel::Hsv { .. } => hsv_to_rgb(Vec2::new(f[0], f[1]), f[2], f[3]).to_vec(),
        }
    }

    /// `sum_g w_g (|f_g - c+_g|^2 - |f_g - c-_g|^2)`.
    pub fn forcing_value(&self, f: &[f64], c_plus: &[f64], c_minus: &[f64]) -> f64 {
        self.groups()
            .iter()
            .map(|g| {
                let r = g.start..g.start + g.len;
                g.weight
                    * (dist_sq(&f[r.clone()], &c_plus[r.clone()])
                        - dist_sq(&f[r.clone()], &c_minus[r]))
            })
            .sum()
    }

    /// Weighted squared distance of a feature vector to a region coefficient.
    pub fn pixel_energy(&self, f: &[f64], c: &[f64]) -> f64 {
        self.groups()
            .iter()
            .map(|g| {
                let r = g.start..g.start + g.len;
                g.weight * dist_sq(&f[r.clone()], &c[r])
            })
            .sum()
    }

    /// Region coefficient from a feature sum and pixel count.
    pub fn coefficient(&self, sum: &[f64], count: u64) -> Result<Vec<f64>, ForcingError> {
        let mut c = vec![0.0; sum.len()];
        for g in self.groups() {
            let r = g.start..g.start + g.len;
            match g.kind {
                GroupKind::Mean => {
                    for k in r {
                        c[k] = sum[k] / count as f64;
                    }
                }
                GroupKind::Unit => {
                    let unit = constrained_mean(&sum[r.clone()])?;
                    c[r].copy_from_slice(&unit);
                }
            }
        }
        Ok(c)
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Chromaticity and brightness: `v = u / |u|`, `b = |u|`. Black maps to the
/// gray direction `(1,1,1)/sqrt(3)`.
pub fn rgb_to_cb(u: [f64; 3]) -> ([f64; 3], f64) {
    let b = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    if b == 0.0 {
        let s = 1.0 / 3f64.sqrt();
        ([s, s, s], 0.0)
    } else {
        ([u[0] / b, u[1] / b, u[2] / b], b)
    }
}

/// Hexcone HSV with the hue carried as a unit vector `(cos, sin)`.
/// Gray pixels (including black) get hue `(1, 0)` and zero saturation.
pub fn rgb_to_hsv(u: [f64; 3]) -> (Vec2, f64, f64) {
    let [r, g, b] = u;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    if d == 0.0 {
        return (Vec2::new(1.0, 0.0), 0.0, max);
    }
    let sector = if max == r {
        ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        (b - r) / d + 2.0
    } else {
        (r - g) / d + 4.0
    };
    let theta = sector * PI / 3.0;
    (Vec2::new(theta.cos(), theta.sin()), d / max, max)
}

/// Inverse of [`rgb_to_hsv`]; `h` need not be normalized.
pub fn hsv_to_rgb(h: Vec2, s: f64, v: f64) -> [f64; 3] {
    let theta = h.y.atan2(h.x).rem_euclid(TAU);
    let sector = theta * 3.0 / PI;
    let c = v * s;
    let x = c * (1.0 - (sector.rem_euclid(2.0) - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match sector as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r + m, g + m, b + m]
}

/// Normalize a sum of unit vectors.
pub fn constrained_mean(sum: &[f64]) -> Result<Vec<f64>, ForcingError> {
    let n = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n < EPS_MEAN {
        return Err(ForcingError::DegenerateMean(n));
    }
    Ok(sum.iter().map(|v| v / n).collect())
}

/// Region coefficients keyed by region id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Coefficients(pub BTreeMap<RegionId, Vec<f64>>);

impl Coefficients {
    pub fn get(&self, k: RegionId) -> Result<&[f64], ForcingError> {
        self.0
            .get(&k)
            .map(Vec::as_slice)
            .ok_or(ForcingError::MissingRegion(k))
    }
}

/// Forcing at one node from a raw image sample.
pub fn forcing_at(
    sample: &[f64],
    curve: &Curve,
    coeffs: &Coefficients,
    model: &ImageModel,
) -> Result<f64, ForcingError> {
    let f = model.features(sample);
    Ok(model.forcing_value(&f, coeffs.get(curve.kplus)?, coeffs.get(curve.kminus)?))
}

/// Fixed-point scale for accumulated features. Sums of quantized values are
/// exact, so incremental updates reproduce a full recount bit for bit.
pub const FIXED_SCALE: f64 = 4294967296.0;

pub fn quantize(v: f64) -> i64 {
    (v * FIXED_SCALE).round() as i64
}

/// Feature vectors of every pixel, computed once per image.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureImage {
    pub width: usize,
    pub height: usize,
    pub dim: usize,
    pub model: ImageModel,
    pub values: Vec<f64>,
    pub fixed: Vec<i64>,
}

impl FeatureImage {
    pub fn new(image: &Image, model: ImageModel) -> Result<Self, ForcingError> {
        model.validate()?;
        if image.channels != model.input_channels() {
            return Err(ForcingError::ChannelMismatch {
                model: model.name(),
                expected: model.input_channels(),
                got: image.channels,
            });
        }
        let dim = model.feature_dim();
        let mut values = Vec::with_capacity(image.pixel_count() * dim);
        for i in 0..image.pixel_count() {
            values
                .extend(model.features(&image.data[i * image.channels..(i + 1) * image.channels]));
        }
        // Pixels are accumulated and energies evaluated from the quantized
        // values so every statistic sees the same numbers.
        let fixed: Vec<i64> = values.iter().map(|&v| quantize(v)).collect();
        let values = fixed.iter().map(|&q| q as f64 / FIXED_SCALE).collect();
        Ok(FeatureImage {
            width: image.width,
            height: image.height,
            dim,
            model,
            values,
            fixed,
        })
    }

    pub fn at(&self, pixel: usize) -> &[f64] {
        &self.values[pixel * self.dim..(pixel + 1) * self.dim]
    }

    pub fn fixed_at(&self, pixel: usize) -> &[i64] {
        &self.fixed[pixel * self.dim..(pixel + 1) * self.dim]
    }

    pub fn at_xy(&self, x: usize, y: usize) -> &[f64] {
        self.at(y * self.width + x)
    }

    fn pixel_of(&self, p: Vec2) -> usize {
        let clamp = |v: f64, n: usize| {
            if v.is_nan() || v < 0.0 {
                0
            } else {
                (v.floor() as usize).min(n - 1)
            }
        };
        clamp(p.y, self.height) * self.width + clamp(p.x, self.width)
    }

    /// Features at a node: the pixel containing it, or a bilinear blend of
    /// the surrounding pixel centers.
    pub fn sample(&self, p: Vec2, bilinear: bool) -> Vec<f64> {
        if !bilinear {
            return self.at(self.pixel_of(p)).to_vec();
        }
        let fx = (p.x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (p.y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
        (0..self.dim)
            .map(|c| {
                let v = |x, y| self.at_xy(x, y)[c];
                (1.0 - ty) * ((1.0 - tx) * v(x0, y0) + tx * v(x1, y0))
                    + ty * ((1.0 - tx) * v(x0, y1) + tx * v(x1, y1))
            })
            .collect()
    }
}
