//! File formats: binary PGM/PPM images, contour JSON, energy trace CSV,
//! label maps and the curve overlay.
//!
//! Images are stored bottom row first in memory, so rows are flipped on the
//! way in and out.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forcing::{Coefficients, ImageModel};
use crate::geometry::{Binding, Curve, CurveNetwork, Domain, End, RegionId, Wall};
use crate::image::Image;
use crate::regions::LabelMap;
use crate::topology::EventRecord;
use crate::vec2::Vec2;

#[derive(Debug, Error)]
pub enum PnmError {
    #[error("not a binary PGM or PPM file")]
    BadMagic,
    #[error("malformed header: {0}")]
    Header(String),
    #[error("maxval {0} is not supported, only 8-bit files are")]
    UnsupportedMaxval(u32),
    #[error("pixel data is {got} bytes, expected {expected}")]
    Truncated { expected: usize, got: usize },
    #[error("images with {0} channels cannot be written as PGM/PPM")]
    Channels(usize),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Pnm { path: PathBuf, source: PnmError },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: region id {id} does not fit an 8-bit label image")]
    LabelRange { path: PathBuf, id: RegionId },
    #[error("{path}: label images must have one channel")]
    LabelChannels { path: PathBuf },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Header fields and the offset of the first data byte.
fn parse_header(bytes: &[u8]) -> Result<(usize, usize, usize, u32, usize), PnmError> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(PnmError::BadMagic),
    };
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for f in &mut fields {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *f = text
            .parse()
            .map_err(|_| PnmError::Header(format!("expected a number at byte {start}")))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(PnmError::Header("missing whitespace after maxval".into()));
    }
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 {
        return Err(PnmError::Header("zero image size".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(PnmError::UnsupportedMaxval(maxval));
    }
    Ok((w as usize, h as usize, channels, maxval, pos + 1))
}

/// Raw 8-bit samples, bottom row first, plus the maxval.
pub fn decode_pnm_raw(bytes: &[u8]) -> Result<(usize, usize, usize, u32, Vec<u8>), PnmError> {
    let (w, h, c, maxval, start) = parse_header(bytes)?;
    let expected = w * h * c;
    let data = &bytes[start..];
    if data.len() < expected {
        return Err(PnmError::Truncated {
            expected,
            got: data.len(),
        });
    }
    let row = w * c;
    let mut out = Vec::with_capacity(expected);
    for y in (0..h).rev() {
        out.extend_from_slice(&data[y * row..(y + 1) * row]);
    }
    Ok((w, h, c, maxval, out))
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Image, PnmError> {
    let (w, h, c, maxval, raw) = decode_pnm_raw(bytes)?;
    let scale = 1.0 / f64::from(maxval);
    Ok(Image {
        width: w,
        height: h,
        channels: c,
        data: raw.iter().map(|&b| f64::from(b) * scale).collect(),
    })
}

fn encode_raw(
    width: usize,
    height: usize,
    channels: usize,
    samples: &[u8],
) -> Result<Vec<u8>, PnmError> {
    let magic = match channels {
        1 => "P5",
        3 => "P6",
        c => return Err(PnmError::Channels(c)),
    };
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    let row = width * channels;
    for y in (0..height).rev() {
        out.extend_from_slice(&samples[y * row..(y + 1) * row]);
    }
    Ok(out)
}

pub fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_pnm(image: &Image) -> Result<Vec<u8>, PnmError> {
    let samples: Vec<u8> = image.data.iter().map(|&v| to_byte(v)).collect();
    encode_raw(image.width, image.height, image.channels, &samples)
}

pub fn read_image(path: &Path) -> Result<Image, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_pnm(&bytes).map_err(|source| IoError::Pnm {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_image(path: &Path, image: &Image) -> Result<(), IoError> {
    let bytes = encode_pnm(image).map_err(|source| IoError::Pnm {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, bytes).map_err(io_err(path))
}

/// Label map as a PGM whose gray values are the region ids.
pub fn write_labels(path: &Path, labels: &LabelMap) -> Result<(), IoError> {
    let mut samples = Vec::with_capacity(labels.labels.len());
    for &id in &labels.labels {
        samples.push(u8::try_from(id).map_err(|_| IoError::LabelRange {
            path: path.to_path_buf(),
            id,
        })?);
    }
    let bytes = encode_raw(labels.width, labels.height, 1, &samples).expect("one channel");
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_labels(path: &Path) -> Result<LabelMap, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let (w, h, c, _, raw) = decode_pnm_raw(&bytes).map_err(|source| IoError::Pnm {
        path: path.to_path_buf(),
        source,
    })?;
    if c != 1 {
        return Err(IoError::LabelChannels {
            path: path.to_path_buf(),
        });
    }
    Ok(LabelMap {
        width: w,
        height: h,
        labels: raw.into_iter().map(RegionId::from).collect(),
    })
}

/// Piecewise-constant image: every pixel shows its region's coefficient.
pub fn reconstruction(labels: &LabelMap, coeffs: &Coefficients, model: &ImageModel) -> Image {
    let channels = model.input_channels();
    let colours: std::collections::BTreeMap<RegionId, Vec<f64>> = coeffs
        .0
        .iter()
        .map(|(&k, c)| (k, model.to_pixel(c)))
        .collect();
    let mut out = Image::new(labels.width, labels.height, channels);
    for (i, &k) in labels.labels.iter().enumerate() {
        if let Some(c) = colours.get(&k) {
            out.data[i * channels..(i + 1) * channels].copy_from_slice(c);
        }
    }
    out
}

/// Colour copy of `base` with every curve drawn one pixel wide.
pub fn overlay(base: &Image, network: &CurveNetwork, colour: [f64; 3]) -> Image {
    let mut out = if base.channels == 3 {
        base.clone()
    } else {
        base.map_pixels(3, |p| vec![p[0]; 3])
    };
    for c in &network.curves {
        for k in 0..c.edge_count() {
            let (a, b) = c.edge(k);
            let steps = (a.distance(b) * 4.0).ceil().max(1.0) as usize;
            for s in 0..=steps {
                let p = a + (b - a) * (s as f64 / steps as f64);
                let (x, y) = out.pixel_at(p);
                out.pixel_mut(x, y).copy_from_slice(&colour);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub closed: bool,
    pub kplus: RegionId,
    pub kminus: RegionId,
    pub nodes: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JunctionRecord {
    pub id: u32,
    pub position: [f64; 2],
    /// `(curve, "start" | "end")` for the three meeting ends.
    pub ends: Vec<(usize, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRecord {
    pub curve: usize,
    pub end: String,
    pub wall: String,
    pub position: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourFile {
    pub width: f64,
    pub height: f64,
    pub curves: Vec<CurveRecord>,
    pub junctions: Vec<JunctionRecord>,
    pub boundary_points: Vec<BoundaryRecord>,
}

fn end_name(e: End) -> String {
    match e {
        End::Start => "start".into(),
        End::End => "end".into(),
    }
}

fn binding_name(b: Option<Binding>) -> Option<String> {
    b.map(|b| match b {
        Binding::Junction(id) => format!("junction:{id}"),
        Binding::Wall(w) => format!("wall:{}", w.name()),
    })
}

fn parse_binding(s: &Option<String>) -> Option<Binding> {
    let s = s.as_deref()?;
    let (kind, rest) = s.split_once(':')?;
    match kind {
        "junction" => rest.parse().ok().map(Binding::Junction),
        "wall" => rest.parse::<Wall>().ok().map(Binding::Wall),
        _ => None,
    }
}

fn xy(p: Vec2) -> [f64; 2] {
    [p.x, p.y]
}

impl ContourFile {
    pub fn from_network(network: &CurveNetwork) -> Self {
        let curves = network
            .curves
            .iter()
            .map(|c| CurveRecord {
                closed: c.closed,
                kplus: c.kplus,
                kminus: c.kminus,
                nodes: c.nodes.iter().map(|&p| xy(p)).collect(),
                start: binding_name(c.start),
                end: binding_name(c.end),
            })
            .collect();
        let junctions = network
            .junctions()
            .into_iter()
            .map(|j| JunctionRecord {
                id: j.id,
                position: xy(network.end_node(j.ends[0])),
                ends: j.ends.iter().map(|e| (e.curve, end_name(e.end))).collect(),
            })
            .collect();
        let boundary_points = network
            .boundary_points()
            .into_iter()
            .map(|b| BoundaryRecord {
                curve: b.at.curve,
                end: end_name(b.at.end),
                wall: b.wall.name().into(),
                position: xy(network.end_node(b.at)),
            })
            .collect();
        ContourFile {
            width: network.domain.width,
            height: network.domain.height,
            curves,
            junctions,
            boundary_points,
        }
    }

    pub fn to_network(&self) -> CurveNetwork {
        let curves = self
            .curves
            .iter()
            .map(|r| {
                let nodes = r.nodes.iter().map(|p| Vec2::new(p[0], p[1])).collect();
                let mut c = Curve::closed(nodes, r.kplus, r.kminus);
                c.closed = r.closed;
                c.start = parse_binding(&r.start);
                c.end = parse_binding(&r.end);
                c
            })
            .collect();
        CurveNetwork::with_curves(Domain::new(self.width, self.height), curves)
    }
}

pub fn write_contours(path: &Path, network: &CurveNetwork) -> Result<(), IoError> {
    let json =
        serde_json::to_string_pretty(&ContourFile::from_network(network)).map_err(|source| {
            IoError::Json {
                path: path.to_path_buf(),
                source,
            }
        })?;
    fs::write(path, json).map_err(io_err(path))
}

pub fn read_contours(path: &Path) -> Result<ContourFile, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// One line of the energy trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub total: f64,
    pub length: f64,
    pub external: f64,
    pub sigma: f64,
    pub nodes: usize,
    /// Event kinds fired in this step, `;`-separated.
    pub events: String,
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<(), IoError> {
    let csv_err = |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>, IoError> {
    let csv_err = |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err)
}

pub fn write_events(path: &Path, events: &[EventRecord]) -> Result<(), IoError> {
    let text: String = events.iter().map(|e| format!("{e}\n")).collect();
    fs::write(path, text).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn scaling_and_row_order() {
        let bytes = b"P5\n# made by hand\n2 2\n255\n\x00\xff\x80\x40".to_vec();
        let img = decode_pnm(&bytes).unwrap();
        // first file row is the top of the image
        assert_eq!(img.pixel(0, 1)[0], 0.0);
        assert_eq!(img.pixel(1, 1)[0], 1.0);
        assert_eq!(img.pixel(0, 0)[0], 128.0 / 255.0);
        let enc = encode_pnm(&img).unwrap();
        assert_eq!(enc[enc.len() - 4..], bytes[bytes.len() - 4..]);
    }

    #[test]
    fn random_ppm_roundtrips_bit_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (w, h) = (13, 7);
        let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
        bytes.extend((0..w * h * 3).map(|_| rng.random::<u8>()));
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!(img.channels, 3);
        assert_eq!(encode_pnm(&img).unwrap(), bytes);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(
            decode_pnm(b"P3\n1 1\n255\n0"),
            Err(PnmError::BadMagic)
        ));
        assert!(matches!(
            decode_pnm(b"P5\n1 1\n65535\n\0\0"),
            Err(PnmError::UnsupportedMaxval(65535))
        ));
        assert!(matches!(
            decode_pnm(b"P5\n2 2\n255\n\0"),
            Err(PnmError::Truncated { .. })
        ));
        assert!(matches!(
            decode_pnm(b"P5\nx 2\n255\n"),
            Err(PnmError::Header(_))
        ));
    }

    #[test]
    fn lower_maxval_scales_to_unit_range() {
        let img = decode_pnm(b"P5 1 1 15 \x0f").unwrap();
        assert_eq!(img.data, vec![1.0]);
    }

    #[test]
    fn contours_and_labels_roundtrip_through_files() {
        let dir = std::env::temp_dir().join(format!("curvenet-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let j = Vec2::new(5.0, 5.0);
        let jb = Binding::Junction(0);
        let net = CurveNetwork::with_curves(
            Domain::new(10.0, 10.0),
            vec![
                Curve::open(
                    vec![j, Vec2::new(5.0, 0.0)],
                    3,
                    2,
                    jb,
                    Binding::Wall(Wall::Bottom),
                ),
                Curve::open(
                    vec![j, Vec2::new(0.0, 8.0)],
                    2,
                    1,
                    jb,
                    Binding::Wall(Wall::Left),
                ),
                Curve::open(
                    vec![j, Vec2::new(10.0, 8.0)],
                    1,
                    3,
                    jb,
                    Binding::Wall(Wall::Right),
                ),
            ],
        );
        let p = dir.join("c.json");
        write_contours(&p, &net).unwrap();
        let back = read_contours(&p).unwrap();
        assert_eq!(back.junctions.len(), 1);
        assert_eq!(back.boundary_points.len(), 3);
        assert_eq!(back.to_network(), net);

        let mut labels = LabelMap::filled(4, 3, 2);
        labels.labels[5] = 7;
        let p = dir.join("l.pgm");
        write_labels(&p, &labels).unwrap();
        assert_eq!(read_labels(&p).unwrap(), labels);
        labels.labels[0] = 300;
        assert!(matches!(
            write_labels(&p, &labels),
            Err(IoError::LabelRange { id: 300, .. })
        ));

        let rows = vec![TraceRow {
            step: 0,
            total: 3.5,
            length: 1.25,
            external: 2.25,
            sigma: 0.1,
            nodes: 64,
            events: "split;merge".into(),
        }];
        let p = dir.join("t.csv");
        write_trace(&p, &rows).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("step,total,length,external,sigma,nodes,events\n"));
        assert_eq!(read_trace(&p).unwrap(), rows);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn overlay_marks_the_curve() {
        let base = Image::new(20, 20, 1);
        let net = CurveNetwork::with_curves(
            Domain::new(20.0, 20.0),
            vec![Curve::circle(Vec2::new(10.0, 10.0), 5.0, 32, 2, 1)],
        );
        let o = overlay(&base, &net, [1.0, 0.0, 0.0]);
        assert_eq!(o.pixel(15, 10), &[1.0, 0.0, 0.0]);
        assert_eq!(o.pixel(10, 10), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn reconstruction_paints_region_colours() {
        let mut labels = LabelMap::filled(2, 1, 1);
        labels.labels[1] = 2;
        let model = ImageModel::Cb {
            lambda_c: 1.0,
            lambda_b: 1.0,
        };
        let f = model.features(&[0.2, 0.4, 0.6]);
        let coeffs = Coefficients(
            [(1, f), (2, model.features(&[0.0, 0.0, 0.0]))]
                .into_iter()
                .collect(),
        );
        let img = reconstruction(&labels, &coeffs, &model);
        for (a, b) in img.pixel(0, 0).iter().zip([0.2, 0.4, 0.6]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(img.pixel(1, 0), &[0.0, 0.0, 0.0]);
    }
}
