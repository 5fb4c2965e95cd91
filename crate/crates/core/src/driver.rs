//! The segmentation loop and its configuration.
//!
//! Each step updates region coefficients, moves the curves by one
//! semi-implicit step, and checks for topology changes. When a change is
//! detected the step is redone in `n_sub` smaller substeps before the change
//! is applied. Afterwards short curves are deleted and curves whose mean
//! spacing has drifted are globally refined or coarsened. Once the loop ends,
//! the denoiser runs on the final segmentation.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::assembly::{apply_step, assemble, solve_step, AssemblyError, Backend, SolveOptions};
use crate::denoise::{denoise_image, DenoiseError, DenoiseOptions};
use crate::forcing::{Coefficients, FeatureImage, ForcingError, ImageModel};
use crate::geometry::{
    remesh_globally, Binding, Curve, CurveNetwork, DiscreteGeometry, Domain, RegionId, Wall,
};
use crate::image::Image;
use crate::io::{self, IoError, TraceRow};
use crate::regions::{
    energy, initialize_labels, update_labels_near_curves, Energy, LabelMap, RegionError,
    RegionStats,
};
use crate::topology::{
    apply_event, delete_short_curves, detect, BackgroundGrid, EventRecord, TopologyError,
    TopologyEvent,
};
use crate::vec2::Vec2;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {msg}")]
    Line {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("missing required key '{0}'")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("step {step}: {source}")]
    Assembly { step: usize, source: AssemblyError },
    #[error("step {step}: {source}")]
    Regions { step: usize, source: RegionError },
    #[error("step {step}: {source}")]
    Topology { step: usize, source: TopologyError },
    #[error("step {step}: curve network has zero length")]
    ZeroLength { step: usize },
    #[error(transparent)]
    Denoise(#[from] DenoiseError),
}

impl DriverError {
    /// 1 for configuration and input problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            DriverError::Config(_) | DriverError::Io(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SigmaMode {
    Fixed(f64),
    /// `sigma = max(factor * E_ext / |Gamma|, floor)` every `period` steps,
    /// with the floor active only before step `floor_until`.
    Adaptive {
        factor: f64,
        period: usize,
        floor: f64,
        floor_until: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum CurveSpec {
    Circle {
        centre: Vec2,
        radius: f64,
        nodes: usize,
        kplus: RegionId,
        kminus: RegionId,
    },
    Rect {
        lo: Vec2,
        hi: Vec2,
        nodes: usize,
        kplus: RegionId,
        kminus: RegionId,
    },
    Polyline {
        closed: bool,
        kplus: RegionId,
        kminus: RegionId,
        points: Vec<Vec2>,
        start: Option<Binding>,
        end: Option<Binding>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub image: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub model: ImageModel,
    pub sigma: SigmaMode,
    pub tau: f64,
    pub steps: usize,
    pub n_sub: usize,
    pub band: f64,
    /// Grid cell size as a multiple of the average edge length.
    pub cell_factor: f64,
    pub l_min: Option<f64>,
    pub l_max: Option<f64>,
    pub l_del: Option<f64>,
    pub block_steps: usize,
    pub default_region: RegionId,
    pub bilinear: bool,
    pub tol: f64,
    pub snapshot_every: usize,
    pub denoise: bool,
    pub denoise_lambda: f64,
    pub curves: Vec<CurveSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            image: None,
            output: None,
            model: ImageModel::Scalar { lambda: 1.0 },
            sigma: SigmaMode::Adaptive {
                factor: 0.2,
                period: 10,
                floor: 0.0,
                floor_until: usize::MAX,
            },
            tau: 0.1,
            steps: 500,
            n_sub: 4,
            band: 3.0,
            cell_factor: 1.0,
            l_min: None,
            l_max: None,
            l_del: None,
            block_steps: crate::topology::DEFAULT_BLOCK_STEPS,
            default_region: 1,
            bilinear: false,
            tol: 1e-10,
            snapshot_every: 0,
            denoise: true,
            denoise_lambda: 1.0,
            curves: Vec::new(),
        }
    }
}

fn parse_binding(s: &str) -> Result<Binding, String> {
    match s.split_once(':') {
        Some(("junction", id)) => id
            .parse()
            .map(Binding::Junction)
            .map_err(|_| format!("bad junction id '{id}'")),
        Some(("wall", w)) => w.parse::<Wall>().map(Binding::Wall),
        _ => Err(format!(
            "binding must be junction:ID or wall:NAME, got '{s}'"
        )),
    }
}

fn parse_curve(value: &str) -> Result<CurveSpec, String> {
    let mut it = value.split_whitespace();
    let kind = it.next().ok_or("empty curve")?;
    let mut nums: Vec<&str> = Vec::new();
    let mut start = None;
    let mut end = None;
    let mut closed = None;
    for tok in it {
        if let Some(b) = tok.strip_prefix("start=") {
            start = Some(parse_binding(b)?);
        } else if let Some(b) = tok.strip_prefix("end=") {
            end = Some(parse_binding(b)?);
        } else if tok == "closed" || tok == "open" {
            closed = Some(tok == "closed");
        } else {
            nums.push(tok);
        }
    }
    let f = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| format!("expected a number, got '{s}'"))
    };
    let u = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| format!("expected a count, got '{s}'"))
    };
    let k = |s: &str| {
        s.parse::<RegionId>()
            .map_err(|_| format!("expected a region id, got '{s}'"))
    };
    match kind {
        "circle" => {
            let [cx, cy, r, n, kp, km] = nums[..] else {
                return Err("circle needs: cx cy r nodes kplus kminus".into());
            };
            Ok(CurveSpec::Circle {
                centre: Vec2::new(f(cx)?, f(cy)?),
                radius: f(r)?,
                nodes: u(n)?,
                kplus: k(kp)?,
                kminus: k(km)?,
            })
        }
        "rect" => {
            let [x0, y0, x1, y1, n, kp, km] = nums[..] else {
                return Err("rect needs: x0 y0 x1 y1 nodes kplus kminus".into());
            };
            Ok(CurveSpec::Rect {
                lo: Vec2::new(f(x0)?, f(y0)?),
                hi: Vec2::new(f(x1)?, f(y1)?),
                nodes: u(n)?,
                kplus: k(kp)?,
                kminus: k(km)?,
            })
        }
        "polyline" => {
            let closed = closed.ok_or("polyline needs 'closed' or 'open'")?;
            if nums.len() < 2 || !nums.len().is_multiple_of(2) {
                return Err("polyline needs: closed|open kplus kminus x y x y ...".into());
            }
            let points = nums[2..]
                .chunks(2)
                .map(|p| Ok(Vec2::new(f(p[0])?, f(p[1])?)))
                .collect::<Result<_, String>>()?;
            Ok(CurveSpec::Polyline {
                closed,
                kplus: k(nums[0])?,
                kminus: k(nums[1])?,
                points,
                start,
                end,
            })
        }
        other => Err(format!("unknown curve kind '{other}'")),
    }
}

fn parse_lambda(model: &str, values: &[f64]) -> Result<ImageModel, String> {
    let pick = |n: usize| -> Result<Vec<f64>, String> {
        match values.len() {
            1 => Ok(vec![values[0]; n]),
            l if l == n => Ok(values.to_vec()),
            l => Err(format!(
                "model '{model}' takes 1 or {n} lambda values, got {l}"
            )),
        }
    };
    Ok(match model {
        "scalar" => ImageModel::Scalar {
            lambda: pick(1)?[0],
        },
        "rgb" => {
            let l = pick(3)?;
            ImageModel::Rgb {
                lambda: [l[0], l[1], l[2]],
            }
        }
        "cb" => {
            let l = pick(2)?;
            ImageModel::Cb {
                lambda_c: l[0],
                lambda_b: l[1],
            }
        }
        "hsv" => {
            let l = pick(3)?;
            ImageModel::Hsv {
                lambda_h: l[0],
                lambda_s: l[1],
                lambda_v: l[2],
            }
        }
        other => return Err(format!("unknown model '{other}'")),
    })
}

impl RunConfig {
    /// Parse the flat `key = value` format; `#` starts a comment and
    /// `curve` may repeat. Paths are taken relative to `base`.
    pub fn parse(text: &str, origin: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut c = RunConfig::default();
        let mut model = "scalar".to_string();
        let mut lambda = vec![1.0];
        let mut sigma_fixed = None;
        let (mut factor, mut period, mut floor, mut floor_until) = (0.2, 10, 0.0, usize::MAX);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ConfigError::Line {
                path: origin.to_string(),
                line: n + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected key = value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let num = || {
                value
                    .parse::<f64>()
                    .map_err(|_| err(format!("'{key}' expects a number, got '{value}'")))
            };
            let count = || {
                value
                    .parse::<usize>()
                    .map_err(|_| err(format!("'{key}' expects a whole number, got '{value}'")))
            };
            let flag = || {
                value
                    .parse::<bool>()
                    .map_err(|_| err(format!("'{key}' expects true or false, got '{value}'")))
            };
            match key {
                "image" => c.image = Some(base.join(value)),
                "output" => c.output = Some(base.join(value)),
                "model" => model = value.to_string(),
                "lambda" => {
                    lambda = value
                        .split(|ch: char| ch == ',' || ch.is_whitespace())
                        .filter(|s| !s.is_empty())
                        .map(|s| {
                            s.parse::<f64>()
                                .map_err(|_| err(format!("bad lambda value '{s}'")))
                        })
                        .collect::<Result<_, _>>()?
                }
                "sigma" => sigma_fixed = Some(num()?),
                "sigma_factor" => factor = num()?,
                "sigma_period" => period = count()?,
                "sigma_min" => floor = num()?,
                "sigma_min_until" => floor_until = count()?,
                "tau" => c.tau = num()?,
                "steps" => c.steps = count()?,
                "n_sub" => c.n_sub = count()?,
                "band" => c.band = num()?,
                "cell_factor" => c.cell_factor = num()?,
                "l_min" => c.l_min = Some(num()?),
                "l_max" => c.l_max = Some(num()?),
                "l_del" => c.l_del = Some(num()?),
                "block_steps" => c.block_steps = count()?,
                "default_region" => c.default_region = count()? as RegionId,
                "bilinear" => c.bilinear = flag()?,
                "tol" => c.tol = num()?,
                "snapshot_every" => c.snapshot_every = count()?,
                "denoise" => c.denoise = flag()?,
                "denoise_lambda" => c.denoise_lambda = num()?,
                "curve" => c.curves.push(parse_curve(value).map_err(err)?),
                other => return Err(err(format!("unknown key '{other}'"))),
            }
        }
        c.model = parse_lambda(&model, &lambda).map_err(ConfigError::Invalid)?;
        c.sigma = match sigma_fixed {
            Some(s) => SigmaMode::Fixed(s),
            None => SigmaMode::Adaptive {
                factor,
                period,
                floor,
                floor_until,
            },
        };
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::parse(&text, &path.display().to_string(), base)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.model
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("model: {e}")))?;
        let positive = [
            ("tau", self.tau),
            ("band", self.band),
            ("cell_factor", self.cell_factor),
            ("tol", self.tol),
            ("denoise_lambda", self.denoise_lambda),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("l_min", self.l_min),
            ("l_max", self.l_max),
            ("l_del", self.l_del),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if let (Some(a), Some(b)) = (self.l_min, self.l_max) {
            if a * 2.0 > b {
                return bad(format!("l_max ({b}) must be at least twice l_min ({a})"));
            }
        }
        if self.n_sub == 0 {
            return bad("n_sub must be at least 1".into());
        }
        match self.sigma {
            SigmaMode::Fixed(s) if !(s > 0.0 && s.is_finite()) => {
                return bad(format!("sigma must be positive, got {s}"))
            }
            SigmaMode::Adaptive {
                factor,
                period,
                floor,
                ..
            } => {
                if !(factor > 0.0 && factor.is_finite()) || period == 0 || floor < 0.0 {
                    return bad(
                        "adaptive sigma needs sigma_factor > 0, sigma_period >= 1, sigma_min >= 0"
                            .into(),
                    );
                }
            }
            SigmaMode::Fixed(_) => {}
        }
        Ok(())
    }

    /// Build the initial network on an image of the given size.
    pub fn initial_network(&self, domain: Domain) -> Result<CurveNetwork, ConfigError> {
        let mut curves = Vec::new();
        for (i, spec) in self.curves.iter().enumerate() {
            let c = match spec {
                CurveSpec::Circle {
                    centre,
                    radius,
                    nodes,
                    kplus,
                    kminus,
                } => {
                    if *nodes < 3 || *radius <= 0.0 {
                        return Err(ConfigError::Invalid(format!(
                            "curve {i}: circle needs radius > 0 and at least 3 nodes"
                        )));
                    }
                    Curve::circle(*centre, *radius, *nodes, *kplus, *kminus)
                }
                CurveSpec::Rect {
                    lo,
                    hi,
                    nodes,
                    kplus,
                    kminus,
                } => {
                    if *nodes < 4 || hi.x <= lo.x || hi.y <= lo.y {
                        return Err(ConfigError::Invalid(format!(
                            "curve {i}: rect needs lo < hi and at least 4 nodes"
                        )));
                    }
                    Curve::rectangle(*lo, *hi, *nodes, *kplus, *kminus)
                }
                CurveSpec::Polyline {
                    closed: true,
                    kplus,
                    kminus,
                    points,
                    ..
                } => Curve::closed(points.clone(), *kplus, *kminus),
                CurveSpec::Polyline {
                    closed: false,
                    kplus,
                    kminus,
                    points,
                    start,
                    end,
                } => {
                    let mut points = points.clone();
                    let (w, h) = (domain.width, domain.height);
                    let bind = |points: &mut Vec<Vec2>,
                                given: Option<Binding>,
                                idx: usize|
                     -> Result<Binding, ConfigError> {
                        if let Some(b) = given {
                            if let Binding::Wall(wall) = b {
                                points[idx] = wall.project(points[idx], w, h);
                            }
                            return Ok(b);
                        }
                        let p = points[idx];
                        let wall = Wall::nearest(p, w, h);
                        if wall.distance(p, w, h).abs() > 1e-6 {
                            return Err(ConfigError::Invalid(format!(
                                "curve {i}: open end ({}, {}) is not on the image border and names no junction",
                                p.x, p.y
                            )));
                        }
                        points[idx] = wall.project(p, w, h);
                        Ok(Binding::Wall(wall))
                    };
                    let last = points.len() - 1;
                    let s = bind(&mut points, *start, 0)?;
                    let e = bind(&mut points, *end, last)?;
                    Curve::open(points, *kplus, *kminus, s, e)
                }
            };
            curves.push(c);
        }
        let network = CurveNetwork::with_curves(domain, curves);
        network
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("initial curves: {e}")))?;
        Ok(network)
    }
}

/// Largest network for which a stalled CG solve is retried densely.
pub const DENSE_FALLBACK_NODES: usize = 1000;

/// Keeps adaptive sigma positive once the external energy reaches zero.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// New sigma for `step`; unchanged between update ticks.
pub fn adapt_sigma(
    mode: &SigmaMode,
    step: usize,
    external: f64,
    length: f64,
    current: f64,
) -> Result<f64, DriverError> {
    match *mode {
        SigmaMode::Fixed(s) => Ok(s),
        SigmaMode::Adaptive {
            factor,
            period,
            floor,
            floor_until,
        } => {
            if !step.is_multiple_of(period) {
                return Ok(current);
            }
            if length <= 0.0 {
                return Err(DriverError::ZeroLength { step });
            }
            let s = (factor * external / length).max(SIGMA_FLOOR);
            Ok(if step < floor_until { s.max(floor) } else { s })
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub events: Vec<TopologyEvent>,
    /// Step size actually used, after any halving.
    pub tau: f64,
    pub substepped: bool,
    pub max_displacement: f64,
    pub energy: Energy,
    pub sigma: f64,
}

/// Evolving segmentation state.
#[derive(Clone, Debug)]
pub struct Segmenter {
    pub config: RunConfig,
    pub network: CurveNetwork,
    pub features: FeatureImage,
    pub labels: LabelMap,
    pub stats: RegionStats,
    pub coeffs: Coefficients,
    pub grid: BackgroundGrid,
    pub sigma: f64,
    pub step: usize,
    /// Mean edge length of the initial network; sets the remeshing thresholds.
    pub h_target: f64,
    pub trace: Vec<TraceRow>,
    pub events: Vec<EventRecord>,
    pub energy_violations: usize,
    /// Curvature from the most recent solve, in network node order.
    pub last_kappa: Vec<f64>,
    last_total: Option<f64>,
}

fn max_abs(d: &[Vec2]) -> f64 {
    d.iter().map(|v| v.max_abs()).fold(0.0, f64::max)
}

impl Segmenter {
    pub fn new(
        image: &Image,
        network: CurveNetwork,
        config: RunConfig,
    ) -> Result<Self, DriverError> {
        config.validate()?;
        let features = FeatureImage::new(image, config.model)
            .map_err(|e: ForcingError| ConfigError::Invalid(e.to_string()))?;
        if network.curves.is_empty() {
            return Err(ConfigError::Invalid("no initial curves".into()).into());
        }
        let labels = initialize_labels(&network, image.width, image.height, config.default_region)
            .map_err(|source| DriverError::Regions { step: 0, source })?;
        let stats = RegionStats::recount(&labels, &features);
        let coeffs = stats.coefficients(&config.model, None);
        let h_target = network.average_edge_length();
        let mut grid = BackgroundGrid::new(network.domain, config.cell_factor * h_target);
        grid.block_steps = config.block_steps;
        let e = energy(&network, &labels, &stats, &features, 1.0);
        let sigma = adapt_sigma(&config.sigma, 0, e.external, network.length(), 0.0)?;
        let mut s = Segmenter {
            config,
            network,
            features,
            labels,
            stats,
            coeffs,
            grid,
            sigma,
            step: 0,
            h_target,
            trace: Vec::new(),
            events: Vec::new(),
            energy_violations: 0,
            last_kappa: Vec::new(),
            last_total: None,
        };
        let e = s.energy();
        s.record(e, &[]);
        Ok(s)
    }

    pub fn energy(&self) -> Energy {
        energy(
            &self.network,
            &self.labels,
            &self.stats,
            &self.features,
            self.sigma,
        )
    }

    pub fn l_min(&self) -> f64 {
        self.config.l_min.unwrap_or(0.5 * self.h_target)
    }

    pub fn l_max(&self) -> f64 {
        self.config.l_max.unwrap_or(2.0 * self.h_target)
    }

    pub fn l_del(&self) -> f64 {
        self.config.l_del.unwrap_or(2.0 * self.grid.cell)
    }

    fn record(&mut self, e: Energy, events: &[TopologyEvent]) {
        self.trace.push(TraceRow {
            step: self.step,
            total: e.total,
            length: e.length,
            external: e.external,
            sigma: self.sigma,
            nodes: self.network.node_count(),
            events: events
                .iter()
                .map(|e| e.kind())
                .collect::<Vec<_>>()
                .join(";"),
        });
    }

    /// External forcing at every node, in network order.
    pub fn node_forcing(&self) -> Vec<f64> {
        let model = &self.config.model;
        let dom = self.network.domain;
        let mut out = Vec::with_capacity(self.network.node_count());
        for c in &self.network.curves {
            let sides = (self.coeffs.get(c.kplus), self.coeffs.get(c.kminus));
            for p in &c.nodes {
                // no image data beyond the walls
                let outside = p.x < 0.0 || p.y < 0.0 || p.x > dom.width || p.y > dom.height;
                let f = match sides {
                    _ if outside => 0.0,
                    (Ok(cp), Ok(cm)) => {
                        model.forcing_value(&self.features.sample(*p, self.config.bilinear), cp, cm)
                    }
                    _ => 0.0,
                };
                out.push(f);
            }
        }
        out
    }

    /// Coefficient update plus one curve move of size `tau` (halved while the
    /// move would outrun the label band). Returns the step size used and the
    /// largest displacement.
    fn evolve(&mut self, tau: f64) -> Result<(f64, f64), DriverError> {
        let step = self.step;
        let asm = |source| DriverError::Assembly { step, source };
        self.coeffs = self
            .stats
            .coefficients(&self.config.model, Some(&self.coeffs));
        let geometry = DiscreteGeometry::compute(&self.network)
            .map_err(|e| asm(AssemblyError::Geometry(e)))?;
        let forcing = self.node_forcing();
        let options = SolveOptions {
            tol: self.config.tol,
            ..SolveOptions::default()
        };
        let mut tau = tau;
        let mut halvings = 0;
        let result = loop {
            let system =
                assemble(&self.network, &geometry, &forcing, self.sigma, tau).map_err(asm)?;
            let r = match solve_step(&system, &options) {
                Err(AssemblyError::SolveFailure {
                    iterations,
                    residual,
                }) if self.network.node_count() <= DENSE_FALLBACK_NODES => {
                    log::warn!("step {step}: CG stalled at {residual:.2e} after {iterations} iterations, using the dense solver");
                    solve_step(
                        &system,
                        &SolveOptions {
                            backend: Backend::Dense,
                            ..options
                        },
                    )
                    .map_err(asm)?
                }
                other => other.map_err(asm)?,
            };
            let m = max_abs(&r.delta_x);
            if m < self.config.band || halvings >= 30 {
                break r;
            }
            log::info!(
                "step {step}: displacement {m:.3} reaches the band width, halving tau to {}",
                tau / 2.0
            );
            tau /= 2.0;
            halvings += 1;
        };
        apply_step(&mut self.network, &result).map_err(asm)?;
        let moved = max_abs(&result.delta_x);
        self.last_kappa = result.kappa;
        match update_labels_near_curves(
            &self.network,
            &mut self.labels,
            &mut self.stats,
            &self.features,
            self.config.band,
        ) {
            Ok(_) => {}
            Err(RegionError::EmptyRegion(k)) => {
                log::warn!("step {step}: region {k} has no pixels left")
            }
            Err(source) => return Err(DriverError::Regions { step, source }),
        }
        Ok((tau, moved))
    }

    /// Relabel from scratch; used after connectivity changes.
    fn relabel(&mut self) -> Result<(), RegionError> {
        self.labels = initialize_labels(
            &self.network,
            self.labels.width,
            self.labels.height,
            self.config.default_region,
        )?;
        self.stats = RegionStats::recount(&self.labels, &self.features);
        self.coeffs = self
            .stats
            .coefficients(&self.config.model, Some(&self.coeffs));
        Ok(())
    }

    /// Apply detected events one at a time, re-detecting in between so that
    /// indices always refer to the current network. Events that fail or
    /// leave the labels inconsistent are rolled back and their area blocked.
    fn handle_events(&mut self) -> Vec<TopologyEvent> {
        let m = self.step;
        let mut applied = Vec::new();
        let mut budget = 4 * self.network.curves.len() + 16;
        while budget > 0 {
            budget -= 1;
            let Some(event) = detect(&self.network, &self.grid, m).into_iter().next() else {
                break;
            };
            let positions = event.positions(&self.network);
            let before = (
                self.network.clone(),
                self.labels.clone(),
                self.stats.clone(),
                self.coeffs.clone(),
            );
            let outcome = apply_event(&mut self.network, &mut self.grid, m, &event)
                .map_err(|e| e.to_string())
                .and_then(|_| self.relabel().map_err(|e| e.to_string()));
            match outcome {
                Ok(()) => {
                    log::info!("step {m}: {}", event.kind());
                    self.events.push(EventRecord {
                        step: m,
                        event,
                        positions,
                    });
                    applied.push(event);
                }
                Err(e) => {
                    log::warn!("step {m}: skipping {} event: {e}", event.kind());
                    (self.network, self.labels, self.stats, self.coeffs) = before;
                    for p in positions {
                        self.grid.block_point(p, m);
                    }
                }
            }
        }
        applied
    }

    /// One full time step.
    pub fn step(&mut self) -> Result<StepReport, DriverError> {
        self.step += 1;
        let m = self.step;
        self.grid.prune(m);
        let snapshot = (
            self.network.clone(),
            self.labels.clone(),
            self.stats.clone(),
            self.coeffs.clone(),
        );
        let (mut tau, mut moved) = self.evolve(self.config.tau)?;
        let mut substepped = false;
        if self.config.n_sub > 1 && !detect(&self.network, &self.grid, m).is_empty() {
            (self.network, self.labels, self.stats, self.coeffs) = snapshot;
            substepped = true;
            tau = 0.0;
            moved = 0.0;
            for _ in 0..self.config.n_sub {
                let (t, d) = self.evolve(self.config.tau / self.config.n_sub as f64)?;
                tau += t;
                moved = moved.max(d);
            }
        }
        let mut events = self.handle_events();

        let l_del = self.l_del();
        let deleted = delete_short_curves(&mut self.network, l_del, &mut self.grid, m)
            .map_err(|source| DriverError::Topology { step: m, source })?;
        if !deleted.is_empty() {
            for ev in &deleted {
                log::info!("step {m}: {ev}");
                self.events.push(EventRecord {
                    step: m,
                    event: *ev,
                    positions: Vec::new(),
                });
            }
            self.relabel()
                .map_err(|source| DriverError::Regions { step: m, source })?;
            events.extend(deleted);
        }
        if self.network.curves.is_empty() {
            return Err(DriverError::ZeroLength { step: m });
        }

        let (l_min, l_max) = (self.l_min(), self.l_max());
        let dropped: usize = self
            .network
            .curves
            .iter_mut()
            .map(|c| c.drop_coincident(1e-3 * l_min))
            .sum();
        if dropped > 0 {
            log::warn!("step {m}: dropped {dropped} coincident nodes");
        }
        if remesh_globally(&mut self.network, l_min, l_max) > 0 {
            log::debug!("step {m}: remeshed to {} nodes", self.network.node_count());
        }
        self.grid
            .resize(self.config.cell_factor * self.network.average_edge_length());

        self.coeffs = self
            .stats
            .coefficients(&self.config.model, Some(&self.coeffs));
        let e = self.energy();
        if events.is_empty() {
            if let Some(prev) = self.last_total {
                if e.total > prev * (1.0 + 1e-8) {
                    self.energy_violations += 1;
                    log::warn!("step {m}: energy rose from {prev} to {}", e.total);
                }
            }
        }
        self.record(e, &events);
        let sigma = self.sigma;
        let new_sigma = adapt_sigma(
            &self.config.sigma,
            m,
            e.external,
            self.network.length(),
            self.sigma,
        )?;
        // energies are only comparable at a fixed sigma
        self.last_total = if new_sigma == self.sigma {
            Some(e.total)
        } else {
            self.sigma = new_sigma;
            Some(self.energy().total)
        };
        Ok(StepReport {
            step: m,
            events,
            tau,
            substepped,
            max_displacement: moved,
            energy: e,
            sigma,
        })
    }

    pub fn reconstruction(&self) -> Image {
        io::reconstruction(&self.labels, &self.coeffs, &self.config.model)
    }

    pub fn denoise(&self, image: &Image) -> Result<Image, DenoiseError> {
        let lambda = self.config.denoise_lambda;
        denoise_image(
            image,
            &self.labels,
            |_| lambda,
            &DenoiseOptions {
                tol: self.config.tol,
                ..Default::default()
            },
        )
    }
}

/// Everything a finished run produced.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub segmenter: Segmenter,
    pub reconstruction: Image,
    pub denoised: Option<Image>,
}

fn ext(image: &Image) -> &'static str {
    if image.channels == 1 {
        "pgm"
    } else {
        "ppm"
    }
}

fn write_snapshot(dir: &Path, s: &Segmenter, image: &Image, tag: &str) -> Result<(), IoError> {
    io::write_contours(&dir.join(format!("contours_{tag}.json")), &s.network)?;
    io::write_image(
        &dir.join(format!("overlay_{tag}.ppm")),
        &io::overlay(image, &s.network, [1.0, 0.0, 0.0]),
    )
}

/// Run a segmentation on an in-memory image, writing outputs if the config names a directory.
pub fn run_on(image: &Image, config: RunConfig) -> Result<RunResult, DriverError> {
    let network = config.initial_network(Domain::new(image.width as f64, image.height as f64))?;
    let out = config.output.clone();
    if let Some(dir) = &out {
        fs::create_dir_all(dir).map_err(|source| IoError::Io {
            path: dir.clone(),
            source,
        })?;
    }
    let mut s = Segmenter::new(image, network, config)?;
    if let (Some(dir), true) = (&out, s.config.snapshot_every > 0) {
        write_snapshot(dir, &s, image, "000000")?;
    }
    for _ in 0..s.config.steps {
        let r = s.step()?;
        if let Some(dir) = &out {
            let every = s.config.snapshot_every;
            if every > 0 && (r.step % every == 0 || !r.events.is_empty()) {
                write_snapshot(dir, &s, image, &format!("{:06}", r.step))?;
            }
        }
    }
    let reconstruction = s.reconstruction();
    let denoised = if s.config.denoise {
        Some(s.denoise(image)?)
    } else {
        None
    };
    if let Some(dir) = &out {
        io::write_contours(&dir.join("contours.json"), &s.network)?;
        io::write_image(
            &dir.join(format!("reconstruction.{}", ext(image))),
            &reconstruction,
        )?;
        io::write_image(
            &dir.join("overlay.ppm"),
            &io::overlay(&reconstruction, &s.network, [1.0, 0.0, 0.0]),
        )?;
        io::write_labels(&dir.join("labels.pgm"), &s.labels)?;
        io::write_trace(&dir.join("trace.csv"), &s.trace)?;
        io::write_events(&dir.join("events.log"), &s.events)?;
        if let Some(d) = &denoised {
            io::write_image(&dir.join(format!("denoised.{}", ext(image))), d)?;
        }
    }
    Ok(RunResult {
        segmenter: s,
        reconstruction,
        denoised,
    })
}

/// Read the configured image and run.
pub fn run(config: RunConfig) -> Result<RunResult, DriverError> {
    let path = config.image.clone().ok_or(ConfigError::Missing("image"))?;
    let image = io::read_image(&path)?;
    let need = config.model.input_channels();
    let image = match (image.channels, need) {
        (a, b) if a == b => image,
        (1, 3) => image.map_pixels(3, |p| vec![p[0]; 3]),
        (a, b) => {
            return Err(ConfigError::Invalid(format!(
                "model '{}' needs {b} channels but {} has {a}",
                config.model.name(),
                path.display()
            ))
            .into())
        }
    };
    run_on(&image, config)
}
