//! Image segmentation by evolving polygonal curve networks.
//!
//! Curves move by a semi-implicit discretization of curvature flow plus a
//! region-based forcing that minimizes a piecewise-constant Mumford-Shah
//! energy. The networks may contain triple junctions and curve ends attached
//! to the image border, and change topology (split, merge, new junctions,
//! border contact, deletion) through a background-grid collision test.
//! Once segmented, each region is smoothed separately by an elliptic
//! Neumann problem so region edges stay sharp.

pub mod assembly;
pub mod denoise;
pub mod driver;
pub mod forcing;
pub mod geometry;
pub mod image;
pub mod io;
pub mod linalg;
pub mod regions;
pub mod topology;
pub mod vec2;

pub use geometry::{Binding, Curve, CurveNetwork, Domain, End, EndRef, RegionId, Wall};
pub use vec2::Vec2;
