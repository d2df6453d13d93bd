//! POI and parking-lot geometry: GeoJSON ingestion, local-projection area and
//! distance, size classes, and nearest-lot matching.

pub mod fetch;
mod geojson;
mod geometry;
mod index;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use geojson::{
    lots_to_geojson, parse_parking_collection, parse_poi_collection, pois_to_geojson, Parsed,
};
pub use geometry::{
    geodesic_area_sqm, point_in_polygon, point_polygon_distance_m, LocalFrame, M_PER_DEG_LAT,
    M_PER_DEG_LON_EQUATOR,
};
pub use index::{build_spatial_index, match_linear, match_poi_to_lot, SpatialIndex};

/// Default POI-to-lot proximity threshold in meters.
pub const DEFAULT_PROXIMITY_M: f64 = 10.0;
/// Upper bound (inclusive) of the small class, square meters.
pub const SMALL_MAX_SQM: f64 = 5_000.0;
/// Lower bound (inclusive) of the large class, square meters.
pub const LARGE_MIN_SQM: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self> {
        if !(lon.is_finite() && lat.is_finite()) {
            return Err(Error::Geometry(format!(
                "non-finite coordinate ({lon}, {lat})"
            )));
        }
        if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::Geometry(format!(
                "coordinate out of range ({lon}, {lat})"
            )));
        }
        Ok(Self { lon, lat })
    }
}

/// Polygon with an unclosed exterior ring and optional holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonGeom {
    exterior: Vec<GeoPoint>,
    holes: Vec<Vec<GeoPoint>>,
}

impl PolygonGeom {
    /// Rings may be given closed (GeoJSON style) or unclosed; a closing vertex is dropped.
    pub fn new(exterior: Vec<GeoPoint>, holes: Vec<Vec<GeoPoint>>) -> Result<Self> {
        let exterior = normalize_ring(exterior, "exterior")?;
        let holes = holes
            .into_iter()
            .enumerate()
            .map(|(i, h)| normalize_ring(h, &format!("hole {i}")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { exterior, holes })
    }

    pub fn exterior(&self) -> &[GeoPoint] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<GeoPoint>] {
        &self.holes
    }

    pub fn rings(&self) -> impl Iterator<Item = &[GeoPoint]> {
        std::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(Vec::as_slice))
    }

    /// (min_lon, min_lat, max_lon, max_lat) of the exterior ring.
    pub fn bbox(&self) -> [f64; 4] {
        let mut b = [
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        ];
        for p in &self.exterior {
            b[0] = b[0].min(p.lon);
            b[1] = b[1].min(p.lat);
            b[2] = b[2].max(p.lon);
            b[3] = b[3].max(p.lat);
        }
        b
    }
}

fn normalize_ring(mut ring: Vec<GeoPoint>, what: &str) -> Result<Vec<GeoPoint>> {
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    if ring.len() < 3 {
        return Err(Error::Geometry(format!(
            "{what} ring has {} vertices, need >= 3",
            ring.len()
        )));
    }
    let n = ring.len();
    for i in 0..n {
        if ring[i] == ring[(i + 1) % n] {
            return Err(Error::Geometry(format!("{what} ring repeats vertex {i}")));
        }
    }
    Ok(ring)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoiCategory {
    Supermarket,
    Diy,
}

impl PoiCategory {
    /// Value of the OSM `shop` tag.
    pub fn shop_tag(self) -> &'static str {
        match self {
            PoiCategory::Supermarket => "supermarket",
            PoiCategory::Diy => "doityourself",
        }
    }

    pub fn from_shop_tag(tag: &str) -> Option<Self> {
        match tag {
            "supermarket" => Some(PoiCategory::Supermarket),
            "doityourself" => Some(PoiCategory::Diy),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointOfInterest {
    pub id: String,
    pub category: PoiCategory,
    pub location: GeoPoint,
    pub name: Option<String>,
}

/// Lot size classes, declared in report order (large first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Large,
    Medium,
    Small,
}

impl SizeClass {
    pub const ALL: [SizeClass; 3] = [SizeClass::Large, SizeClass::Medium, SizeClass::Small];

    pub fn as_str(self) -> &'static str {
        match self {
            SizeClass::Large => "large",
            SizeClass::Medium => "medium",
            SizeClass::Small => "small",
        }
    }
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SizeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "large" => Ok(SizeClass::Large),
            "medium" => Ok(SizeClass::Medium),
            "small" => Ok(SizeClass::Small),
            other => Err(Error::invalid(format!("unknown size class `{other}`"))),
        }
    }
}

/// Small iff area <= 5,000 sqm; Large iff area >= 10,000 sqm; Medium strictly between.
pub fn classify_size(area_sqm: f64) -> Result<SizeClass> {
    if !area_sqm.is_finite() || area_sqm <= 0.0 {
        return Err(Error::invalid(format!(
            "area must be positive and finite, got {area_sqm}"
        )));
    }
    Ok(if area_sqm <= SMALL_MAX_SQM {
        SizeClass::Small
    } else if area_sqm >= LARGE_MIN_SQM {
        SizeClass::Large
    } else {
        SizeClass::Medium
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParkingLot {
    pub id: String,
    pub geometry: PolygonGeom,
    pub tags: BTreeMap<String, String>,
    pub area_sqm: f64,
    pub size_class: SizeClass,
}

impl ParkingLot {
    /// Builds a lot, deriving area and size class from the geometry.
    pub fn new(id: String, geometry: PolygonGeom, tags: BTreeMap<String, String>) -> Result<Self> {
        let area_sqm = geodesic_area_sqm(&geometry)?;
        let size_class = classify_size(area_sqm)?;
        Ok(Self {
            id,
            geometry,
            tags,
            area_sqm,
            size_class,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub poi_id: String,
    pub lot_id: String,
    pub distance_m: f64,
}

/// One line of the match output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub poi_id: String,
    pub lot_id: String,
    pub distance_m: f64,
    pub area_sqm: f64,
    pub size_class: SizeClass,
}

impl MatchRecord {
    pub fn new(m: &MatchResult, lot: &ParkingLot) -> Self {
        Self {
            poi_id: m.poi_id.clone(),
            lot_id: m.lot_id.clone(),
            distance_m: m.distance_m,
            area_sqm: lot.area_sqm,
            size_class: lot.size_class,
        }
    }
}
