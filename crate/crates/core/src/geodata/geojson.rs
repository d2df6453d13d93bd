//! Minimal RFC 7946 FeatureCollection reading and writing for POIs and lots.

use std::collections::BTreeMap;

use log::warn;
use serde_json::{json, Map, Value};

use super::{GeoPoint, ParkingLot, PoiCategory, PointOfInterest, PolygonGeom};
use crate::error::{Error, Result};

/// Parsed items plus the warnings for features that matched the filter but were skipped.
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub items: Vec<T>,
    pub warnings: Vec<String>,
}

impl<T> Default for Parsed<T> {
    fn default() -> Self {
        Self {
            items: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in bytes.split(|&b| b == b'\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1).min(l.len());
        }
        offset += l.len() + 1;
    }
    bytes.len()
}

fn parse_features(bytes: &[u8]) -> Result<Vec<Value>> {
    let root: Value = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let structural = |message: &str| Error::Parse {
        offset: 0,
        message: message.to_string(),
    };
    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(structural("top-level object is not a FeatureCollection"));
    }
    match root.get("features") {
        Some(Value::Array(features)) => Ok(features.clone()),
        _ => Err(structural("FeatureCollection has no `features` array")),
    }
}

fn string_tags(feature: &Value) -> BTreeMap<String, String> {
    let mut tags = BTreeMap::new();
    if let Some(Value::Object(props)) = feature.get("properties") {
        for (k, v) in props {
            let v = match v {
                Value::String(s) => s.clone(),
                Value::Null => continue,
                other => other.to_string(),
            };
            tags.insert(k.clone(), v);
        }
    }
    tags
}

fn feature_id(
    feature: &Value,
    tags: &BTreeMap<String, String>,
    index: usize,
    prefix: &str,
) -> String {
    match feature.get("id") {
        Some(Value::String(s)) if !s.is_empty() => return s.clone(),
        Some(Value::Number(n)) => return n.to_string(),
        _ => {}
    }
    tags.get("@id")
        .or_else(|| tags.get("id"))
        .filter(|s| !s.is_empty())
        .cloned()
        .unwrap_or_else(|| format!("{prefix}-{index}"))
}

fn position(v: &Value) -> Result<GeoPoint> {
    let arr = v
        .as_array()
        .filter(|a| a.len() >= 2)
        .ok_or_else(|| Error::Geometry("position is not an [lon, lat] array".into()))?;
    let lon = arr[0]
        .as_f64()
        .ok_or_else(|| Error::Geometry("non-numeric longitude".into()))?;
    let lat = arr[1]
        .as_f64()
        .ok_or_else(|| Error::Geometry("non-numeric latitude".into()))?;
    GeoPoint::new(lon, lat)
}

fn polygon(coords: &Value) -> Result<PolygonGeom> {
    let rings = coords
        .as_array()
        .filter(|r| !r.is_empty())
        .ok_or_else(|| Error::Geometry("polygon has no rings".into()))?;
    let mut parsed = rings.iter().map(|ring| {
        ring.as_array()
            .ok_or_else(|| Error::Geometry("ring is not an array".into()))?
            .iter()
            .map(position)
            .collect::<Result<Vec<_>>>()
    });
    let exterior = parsed.next().expect("non-empty")?;
    let holes = parsed.collect::<Result<Vec<_>>>()?;
    PolygonGeom::new(exterior, holes)
}

/// Supermarket (`shop=supermarket`) and DIY (`shop=doityourself`) Point features,
/// in file order.
pub fn parse_poi_collection(bytes: &[u8]) -> Result<Parsed<PointOfInterest>> {
    let mut out = Parsed::default();
    for (i, feature) in parse_features(bytes)?.iter().enumerate() {
        let tags = string_tags(feature);
        let Some(category) = tags.get("shop").and_then(|s| PoiCategory::from_shop_tag(s)) else {
            continue;
        };
        let id = feature_id(feature, &tags, i, "poi");
        let geometry = feature.get("geometry").unwrap_or(&Value::Null);
        let location = match geometry.get("type").and_then(Value::as_str) {
            Some("Point") => position(geometry.get("coordinates").unwrap_or(&Value::Null)),
            other => Err(Error::Geometry(format!(
                "expected Point geometry, found {other:?}"
            ))),
        };
        match location {
            Ok(location) => out.items.push(PointOfInterest {
                id,
                category,
                location,
                name: tags.get("name").cloned(),
            }),
            Err(e) => {
                warn!("skipping POI {id}: {e}");
                out.warnings.push(format!("{id}: {e}"));
            }
        }
    }
    Ok(out)
}

/// `access` absent or one of yes/customers/permissive.
fn open_to_customers(tags: &BTreeMap<String, String>) -> bool {
    match tags.get("access").map(String::as_str) {
        None => true,
        Some(a) => matches!(a, "yes" | "customers" | "permissive"),
    }
}

fn eligible_parking(tags: &BTreeMap<String, String>) -> bool {
    tags.get("amenity").map(String::as_str) == Some("parking")
        && matches!(
            tags.get("parking").map(String::as_str),
            Some("surface" | "rooftop")
        )
        && open_to_customers(tags)
}

/// Surface and rooftop `amenity=parking` polygons open to customers. MultiPolygon
/// features are split into one lot per part with ids suffixed `#<part>`.
pub fn parse_parking_collection(bytes: &[u8]) -> Result<Parsed<ParkingLot>> {
    let mut out = Parsed::default();
    for (i, feature) in parse_features(bytes)?.iter().enumerate() {
        let tags = string_tags(feature);
        if !eligible_parking(&tags) {
            continue;
        }
        let id = feature_id(feature, &tags, i, "lot");
        let geometry = feature.get("geometry").unwrap_or(&Value::Null);
        let coords = geometry.get("coordinates").unwrap_or(&Value::Null);
        let parts: Vec<(String, Result<PolygonGeom>)> =
            match geometry.get("type").and_then(Value::as_str) {
                Some("Polygon") => vec![(id.clone(), polygon(coords))],
                Some("MultiPolygon") => coords
                    .as_array()
                    .map(|polys| {
                        polys
                            .iter()
                            .enumerate()
                            .map(|(k, c)| (format!("{id}#{k}"), polygon(c)))
                            .collect()
                    })
                    .unwrap_or_else(|| {
                        vec![(id.clone(), Err(Error::Geometry("bad MultiPolygon".into())))]
                    }),
                other => vec![(
                    id.clone(),
                    Err(Error::Geometry(format!(
                        "expected Polygon geometry, found {other:?}"
                    ))),
                )],
            };
        for (part_id, geom) in parts {
            match geom.and_then(|g| ParkingLot::new(part_id.clone(), g, tags.clone())) {
                Ok(lot) => out.items.push(lot),
                Err(e) => {
                    warn!("skipping lot {part_id}: {e}");
                    out.warnings.push(format!("{part_id}: {e}"));
                }
            }
        }
    }
    Ok(out)
}

fn closed_ring(ring: &[GeoPoint]) -> Value {
    let mut coords: Vec<Value> = ring.iter().map(|p| json!([p.lon, p.lat])).collect();
    coords.push(json!([ring[0].lon, ring[0].lat]));
    Value::Array(coords)
}

fn collection(features: Vec<Value>) -> String {
    let fc = json!({ "type": "FeatureCollection", "features": features });
    let mut s = serde_json::to_string_pretty(&fc).expect("serializable");
    s.push('\n');
    s
}

pub fn pois_to_geojson(pois: &[PointOfInterest]) -> String {
    collection(
        pois.iter()
            .map(|p| {
                let mut props = Map::new();
                props.insert("shop".into(), p.category.shop_tag().into());
                if let Some(name) = &p.name {
                    props.insert("name".into(), name.clone().into());
                }
                json!({
                    "type": "Feature",
                    "id": p.id,
                    "properties": props,
                    "geometry": { "type": "Point", "coordinates": [p.location.lon, p.location.lat] },
                })
            })
            .collect(),
    )
}

pub fn lots_to_geojson(lots: &[ParkingLot]) -> String {
    collection(
        lots.iter()
            .map(|lot| {
                let rings: Vec<Value> = lot.geometry.rings().map(closed_ring).collect();
                json!({
                    "type": "Feature",
                    "id": lot.id,
                    "properties": lot.tags,
                    "geometry": { "type": "Polygon", "coordinates": rings },
                })
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn point_feature(id: &str, props: Value, lon: f64, lat: f64) -> Value {
        json!({"type": "Feature", "id": id, "properties": props,
               "geometry": {"type": "Point", "coordinates": [lon, lat]}})
    }

    fn fc(features: Vec<Value>) -> Vec<u8> {
        serde_json::to_vec(&json!({"type": "FeatureCollection", "features": features})).unwrap()
    }

    fn square(lon: f64, lat: f64, d: f64) -> Value {
        json!([[
            [lon, lat],
            [lon + d, lat],
            [lon + d, lat + d],
            [lon, lat + d],
            [lon, lat]
        ]])
    }

    fn lot_feature(id: &str, props: Value) -> Value {
        json!({"type": "Feature", "id": id, "properties": props,
               "geometry": {"type": "Polygon", "coordinates": square(13.0, 52.0, 0.001)}})
    }

    #[test]
    fn single_supermarket() {
        let bytes = fc(vec![point_feature(
            "n1",
            json!({"shop": "supermarket"}),
            13.0,
            52.0,
        )]);
        let pois = parse_poi_collection(&bytes).unwrap().items;
        assert_eq!(pois.len(), 1);
        assert_eq!(pois[0].category, PoiCategory::Supermarket);
    }

    #[test]
    fn bakery_only_is_empty() {
        let bytes = fc(vec![point_feature(
            "n1",
            json!({"shop": "bakery"}),
            13.0,
            52.0,
        )]);
        assert!(parse_poi_collection(&bytes).unwrap().items.is_empty());
    }

    #[test]
    fn non_point_match_is_skipped_with_warning() {
        let mut f = lot_feature("w1", json!({"shop": "supermarket"}));
        f["id"] = json!("w1");
        let bytes = fc(vec![
            f,
            point_feature("n2", json!({"shop": "doityourself"}), 13.0, 52.0),
        ]);
        let parsed = parse_poi_collection(&bytes).unwrap();
        assert_eq!(parsed.items.len(), 1);
        assert_eq!(parsed.items[0].category, PoiCategory::Diy);
        assert_eq!(parsed.warnings.len(), 1);
    }

    #[test]
    fn malformed_json_reports_offset() {
        let bytes = b"{\"type\": \"FeatureCollection\",\n \"features\": [ }";
        match parse_poi_collection(bytes) {
            Err(Error::Parse { offset, .. }) => assert!(offset > 30 && offset <= bytes.len()),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            parse_poi_collection(br#"{"type": "Feature"}"#),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn parking_filters() {
        let bytes = fc(vec![
            lot_feature("a", json!({"amenity": "parking", "parking": "surface"})),
            lot_feature("b", json!({"amenity": "parking", "parking": "underground"})),
            lot_feature(
                "c",
                json!({"amenity": "parking", "parking": "surface", "access": "private"}),
            ),
            lot_feature(
                "d",
                json!({"amenity": "parking", "parking": "rooftop", "access": "customers"}),
            ),
            lot_feature(
                "e",
                json!({"amenity": "parking", "parking": "surface", "access": "no"}),
            ),
            lot_feature("f", json!({"amenity": "fuel", "parking": "surface"})),
        ]);
        let ids: Vec<_> = parse_parking_collection(&bytes)
            .unwrap()
            .items
            .into_iter()
            .map(|l| l.id)
            .collect();
        assert_eq!(ids, ["a", "d"]);
    }

    #[test]
    fn multipolygon_split_and_bad_ring_skipped() {
        let multi = json!({"type": "Feature", "id": "r9",
        "properties": {"amenity": "parking", "parking": "surface"},
        "geometry": {"type": "MultiPolygon", "coordinates": [
            square(13.0, 52.0, 0.001), square(13.01, 52.0, 0.002),
            [[[13.0, 52.0], [13.1, 52.0], [13.0, 52.0]]]
        ]}});
        let parsed = parse_parking_collection(&fc(vec![multi])).unwrap();
        let ids: Vec<_> = parsed.items.iter().map(|l| l.id.as_str()).collect();
        assert_eq!(ids, ["r9#0", "r9#1"]);
        assert!(parsed.items[1].area_sqm > 3.5 * parsed.items[0].area_sqm);
        assert_eq!(parsed.warnings.len(), 1);
    }

    #[test]
    fn mixed_fixture_file() {
        let bytes = include_bytes!("../../tests/fixtures/pois_mixed.geojson");
        let pois = parse_poi_collection(bytes).unwrap().items;
        let got: Vec<_> = pois.iter().map(|p| (p.id.as_str(), p.category)).collect();
        assert_eq!(
            got,
            [
                ("node/1", PoiCategory::Supermarket),
                ("node/3", PoiCategory::Diy),
                ("node/4", PoiCategory::Supermarket),
            ]
        );
    }

    proptest! {
        #[test]
        fn lot_round_trip(
            lon in -170.0f64..170.0,
            lat in -60.0f64..60.0,
            d in 1e-4f64..1e-2,
            name in "[a-zA-Z ]{0,12}",
        ) {
            let props = json!({"amenity": "parking", "parking": "surface", "name": name});
            let feature = json!({"type": "Feature", "id": "way/7", "properties": props,
                "geometry": {"type": "Polygon", "coordinates": square(lon, lat, d)}});
            let first = parse_parking_collection(&fc(vec![feature])).unwrap().items;
            let text = lots_to_geojson(&first);
            let second = parse_parking_collection(text.as_bytes()).unwrap().items;
            prop_assert_eq!(first, second);
        }

        #[test]
        fn poi_round_trip(lon in -180.0f64..180.0, lat in -90.0f64..90.0, diy: bool) {
            let shop = if diy { "doityourself" } else { "supermarket" };
            let bytes = fc(vec![point_feature("n5", json!({"shop": shop, "name": "X"}), lon, lat)]);
            let first = parse_poi_collection(&bytes).unwrap().items;
            let second = parse_poi_collection(pois_to_geojson(&first).as_bytes()).unwrap().items;
            prop_assert_eq!(first, second);
        }
    }
}
