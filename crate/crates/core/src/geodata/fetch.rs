//! Overpass query template and a record/replay store for raw responses.
//!
//! Responses are keyed by the SHA-256 of `endpoint + "\n" + query`, so a
//! replay returns exactly the bytes that were recorded. The transport itself
//! lives outside this crate; acceptance never touches the network.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fsio;

pub const OVERPASS_TEMPLATE: &str = include_str!("overpass_query.txt");
pub const DEFAULT_ENDPOINT: &str = "https://overpass-api.de/api/interpreter";

/// `[south, west, north, east]` in degrees.
pub fn overpass_query(bbox: [f64; 4]) -> Result<String> {
    let [s, w, n, e] = bbox;
    let ok = (-90.0..=90.0).contains(&s) && (-90.0..=90.0).contains(&n) && (-180.0..=180.0).contains(&w)
        && (-180.0..=180.0).contains(&e) && s < n && w < e;
    if !ok {
        return Err(Error::invalid(format!("invalid bounding box {bbox:?}")));
    }
    Ok(OVERPASS_TEMPLATE.replace("{{bbox}}", &format!("{s},{w},{n},{e}")))
}

pub fn request_key(endpoint: &str, query: &str) -> String {
    let mut h = Sha256::new();
    h.update(endpoint.as_bytes());
    h.update(b"\n");
    h.update(query.as_bytes());
    hex::encode(h.finalize())
}

/// Directory of recorded responses, one `<key>.json` per request.
#[derive(Debug, Clone)]
pub struct ReplayStore {
    dir: PathBuf,
}

impl ReplayStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, endpoint: &str, query: &str) -> PathBuf {
        self.dir.join(format!("{}.json", request_key(endpoint, query)))
    }

    pub fn replay(&self, endpoint: &str, query: &str) -> Result<Vec<u8>> {
        let path = self.path_for(endpoint, query);
        if !path.exists() {
            return Err(Error::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no recorded response for this query"),
            ));
        }
        fsio::read(&path)
    }

    pub fn record(&self, endpoint: &str, query: &str, body: &[u8]) -> Result<PathBuf> {
        let path = self.path_for(endpoint, query);
        fsio::write_atomic(&path, body)?;
        Ok(path)
    }
}

#[derive(Deserialize)]
struct OsmResponse {
    elements: Vec<OsmElement>,
}

#[derive(Deserialize)]
struct LatLon {
    lat: f64,
    lon: f64,
}

#[derive(Deserialize)]
struct OsmElement {
    #[serde(rename = "type")]
    kind: String,
    id: i64,
    lat: Option<f64>,
    lon: Option<f64>,
    #[serde(default)]
    geometry: Vec<LatLon>,
    #[serde(default)]
    tags: BTreeMap<String, String>,
}

/// Converts an Overpass JSON response (`out geom`) to a GeoJSON
/// FeatureCollection: tagged nodes become Points, closed ways Polygons. Other
/// elements are dropped. Feature ids are `node/<id>` and `way/<id>`.
pub fn overpass_to_geojson(bytes: &[u8]) -> Result<String> {
    let response: OsmResponse = serde_json::from_slice(bytes)?;
    let mut features = Vec::new();
    let mut dropped = 0usize;
    for el in response.elements {
        let geometry = match (el.kind.as_str(), el.lat, el.lon) {
            ("node", Some(lat), Some(lon)) if !el.tags.is_empty() => {
                serde_json::json!({"type": "Point", "coordinates": [lon, lat]})
            }
            ("way", _, _) if el.geometry.len() >= 4 => {
                let first = &el.geometry[0];
                let last = &el.geometry[el.geometry.len() - 1];
                if first.lat != last.lat || first.lon != last.lon {
                    dropped += 1;
                    continue;
                }
                let ring: Vec<[f64; 2]> = el.geometry.iter().map(|p| [p.lon, p.lat]).collect();
                serde_json::json!({"type": "Polygon", "coordinates": [ring]})
            }
            _ => {
                dropped += 1;
                continue;
            }
        };
        features.push(serde_json::json!({
            "type": "Feature",
            "id": format!("{}/{}", el.kind, el.id),
            "properties": el.tags,
            "geometry": geometry,
        }));
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} Overpass elements that are neither tagged nodes nor closed ways");
    }
    let fc = serde_json::json!({"type": "FeatureCollection", "features": features});
    Ok(serde_json::to_string_pretty(&fc)?)
}

/// Replays a recorded response for `bbox` and converts it to GeoJSON.
pub fn replay_geojson(store: &ReplayStore, endpoint: &str, bbox: [f64; 4]) -> Result<String> {
    let query = overpass_query(bbox)?;
    overpass_to_geojson(&store.replay(endpoint, &query)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::{parse_parking_collection, parse_poi_collection};

    const RESPONSE: &str = r#"{"version":0.6,"elements":[
      {"type":"node","id":11,"lat":50.0,"lon":8.0,"tags":{"shop":"supermarket","name":"A"}},
      {"type":"node","id":12,"lat":50.1,"lon":8.1},
      {"type":"way","id":21,"tags":{"amenity":"parking","parking":"surface"},
       "geometry":[{"lat":50.0,"lon":8.0},{"lat":50.0,"lon":8.001},{"lat":50.001,"lon":8.001},{"lat":50.0,"lon":8.0}]},
      {"type":"way","id":22,"tags":{"amenity":"parking","parking":"surface"},
       "geometry":[{"lat":50.0,"lon":8.0},{"lat":50.0,"lon":8.001},{"lat":50.001,"lon":8.001},{"lat":50.002,"lon":8.0}]}
    ]}"#;

    #[test]
    fn query_substitutes_the_box() {
        let q = overpass_query([49.9, 7.9, 50.1, 8.1]).unwrap();
        assert!(q.contains("node[\"shop\"=\"supermarket\"](49.9,7.9,50.1,8.1);"));
        assert!(!q.contains("{{bbox}}"));
        assert!(overpass_query([50.1, 7.9, 49.9, 8.1]).is_err());
    }

    #[test]
    fn converted_response_parses_as_collections() {
        let gj = overpass_to_geojson(RESPONSE.as_bytes()).unwrap();
        let pois = parse_poi_collection(gj.as_bytes()).unwrap();
        assert_eq!(pois.items.len(), 1);
        assert_eq!(pois.items[0].id, "node/11");
        let lots = parse_parking_collection(gj.as_bytes()).unwrap();
        assert_eq!(lots.items.len(), 1);
        assert_eq!(lots.items[0].id, "way/21");
    }

    #[test]
    fn replay_returns_recorded_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReplayStore::new(dir.path());
        let q = overpass_query([49.9, 7.9, 50.1, 8.1]).unwrap();
        assert!(store.replay(DEFAULT_ENDPOINT, &q).is_err());
        store.record(DEFAULT_ENDPOINT, &q, RESPONSE.as_bytes()).unwrap();
        assert_eq!(store.replay(DEFAULT_ENDPOINT, &q).unwrap(), RESPONSE.as_bytes());
        assert_ne!(request_key(DEFAULT_ENDPOINT, &q), request_key("http://other", &q));
    }
}
