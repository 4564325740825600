//! Coordinate projection and point-wise distance functions.
//!
//! Every metric and mechanism in the crate works on planar kilometre
//! coordinates. Geographic inputs are projected once, at ingest time, with
//! [`haversine_project`] about the centre of the study region.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LppmError, Result};

/// Mean Earth radius in km.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(LppmError::InvalidInput(format!(
                "coordinates out of range: lat={lat}, lon={lon}"
            )));
        }
        Ok(Self { lat, lon })
    }
}

/// A point on the local tangent plane, in km east/north of a reference.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanePoint {
    pub x: f64,
    pub y: f64,
}

impl PlanePoint {
    pub const ORIGIN: PlanePoint = PlanePoint { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dist(self, other: PlanePoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    #[inline]
    pub fn dist_sq(self, other: PlanePoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Exact bit pattern, used to key points in hash maps.
    pub(crate) fn key(self) -> (u64, u64) {
        // Normalise -0.0 so that it hashes like 0.0.
        ((self.x + 0.0).to_bits(), (self.y + 0.0).to_bits())
    }
}

impl fmt::Display for PlanePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

fn haversine_central_angle(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * a.sqrt().min(1.0).asin()
}

/// Great-circle distance in km.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    EARTH_RADIUS_KM * haversine_central_angle(a.lat, a.lon, b.lat, b.lon)
}

/// Projects `p` to km offsets east (`x`) and north (`y`) of `reference`.
///
/// The north offset is the haversine distance along the reference meridian;
/// the east offset is the haversine distance along the point's own parallel,
/// each signed by the direction of the coordinate difference.
pub fn haversine_project(p: GeoPoint, reference: GeoPoint) -> PlanePoint {
    let north = EARTH_RADIUS_KM * haversine_central_angle(reference.lat, reference.lon, p.lat, reference.lon);
    let east = EARTH_RADIUS_KM * haversine_central_angle(p.lat, reference.lon, p.lat, p.lon);
    PlanePoint {
        x: east.copysign(p.lon - reference.lon),
        y: north.copysign(p.lat - reference.lat),
    }
}

/// Semantic labels for tagged locations, keyed by exact coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TagTable {
    labels: Vec<String>,
    by_point: HashMap<(u64, u64), usize>,
}

impl TagTable {
    pub fn new<'a>(entries: impl IntoIterator<Item = (PlanePoint, &'a str)>) -> Self {
        let mut table = TagTable::default();
        for (p, tag) in entries {
            table.insert(p, tag);
        }
        table
    }

    pub fn insert(&mut self, p: PlanePoint, tag: &str) {
        let id = match self.labels.iter().position(|l| l == tag) {
            Some(i) => i,
            None => {
                self.labels.push(tag.to_owned());
                self.labels.len() - 1
            }
        };
        self.by_point.insert(p.key(), id);
    }

    /// Tag class index of a tagged location.
    pub fn class_of(&self, p: PlanePoint) -> Option<usize> {
        self.by_point.get(&p.key()).copied()
    }

    pub fn tag_of(&self, p: PlanePoint) -> Option<&str> {
        self.class_of(p).map(|i| self.labels[i].as_str())
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Point-wise loss used for quality loss (`d_Q`) or adversary error (`d_P`).
#[derive(Debug, Clone, PartialEq)]
pub enum DistanceFn {
    Euclidean,
    SquaredEuclidean,
    /// 0 when both locations carry the same tag, 1 otherwise.
    TagHamming(Arc<TagTable>),
}

impl DistanceFn {
    pub fn name(&self) -> &'static str {
        match self {
            DistanceFn::Euclidean => "euclidean",
            DistanceFn::SquaredEuclidean => "squared-euclidean",
            DistanceFn::TagHamming(_) => "tag-hamming",
        }
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self, DistanceFn::Euclidean)
    }

    pub fn eval(&self, a: PlanePoint, b: PlanePoint) -> Result<f64> {
        match self {
            DistanceFn::Euclidean => Ok(a.dist(b)),
            DistanceFn::SquaredEuclidean => Ok(a.dist_sq(b)),
            DistanceFn::TagHamming(table) => {
                let ta = table.class_of(a).ok_or_else(|| untagged(a))?;
                let tb = table.class_of(b).ok_or_else(|| untagged(b))?;
                Ok(if ta == tb { 0.0 } else { 1.0 })
            }
        }
    }

    /// Dense `|rows| x |cols|` matrix of distances, row-major.
    pub fn matrix(&self, rows: &[PlanePoint], cols: &[PlanePoint]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(rows.len() * cols.len());
        for &r in rows {
            for &c in cols {
                out.push(self.eval(r, c)?);
            }
        }
        Ok(out)
    }
}

fn untagged(p: PlanePoint) -> LppmError {
    LppmError::MetricDomain {
        kind: "tag-hamming",
        detail: format!("untagged point {p}"),
    }
}

/// Convenience wrapper matching the free-function form of the distance op.
pub fn distance(d: &DistanceFn, a: PlanePoint, b: PlanePoint) -> Result<f64> {
    d.eval(a, b)
}
