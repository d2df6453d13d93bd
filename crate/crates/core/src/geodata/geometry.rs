use super::{GeoPoint, PolygonGeom};
use crate::error::{Error, Result};

/// Meters per degree of latitude.
pub const M_PER_DEG_LAT: f64 = 110_574.0;
/// Meters per degree of longitude at the equator; scaled by cos(latitude) elsewhere.
pub const M_PER_DEG_LON_EQUATOR: f64 = 111_320.0;

/// Equirectangular tangent frame in meters around an origin.
#[derive(Debug, Clone, Copy)]
pub struct LocalFrame {
    origin: GeoPoint,
    m_per_deg_lon: f64,
}

impl LocalFrame {
    pub fn new(origin: GeoPoint) -> Self {
        Self::with_scale_lat(origin, origin.lat)
    }

    /// Frame at `origin` whose longitude scale is taken at `scale_lat`.
    pub fn with_scale_lat(origin: GeoPoint, scale_lat: f64) -> Self {
        let m_per_deg_lon = M_PER_DEG_LON_EQUATOR * scale_lat.to_radians().cos().max(1e-12);
        Self {
            origin,
            m_per_deg_lon,
        }
    }

    pub fn m_per_deg_lon(&self) -> f64 {
        self.m_per_deg_lon
    }

    pub fn project(&self, p: GeoPoint) -> (f64, f64) {
        (
            (p.lon - self.origin.lon) * self.m_per_deg_lon,
            (p.lat - self.origin.lat) * M_PER_DEG_LAT,
        )
    }

    pub fn unproject(&self, x: f64, y: f64) -> GeoPoint {
        GeoPoint {
            lon: self.origin.lon + x / self.m_per_deg_lon,
            lat: self.origin.lat + y / M_PER_DEG_LAT,
        }
    }
}

fn ring_signed_area(ring: &[(f64, f64)]) -> f64 {
    let n = ring.len();
    let mut acc = 0.0;
    for i in 0..n {
        let (x0, y0) = ring[i];
        let (x1, y1) = ring[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    0.5 * acc
}

/// Area in square meters: shoelace in a local equirectangular frame scaled at the
/// mean exterior latitude, holes subtracted.
pub fn geodesic_area_sqm(polygon: &PolygonGeom) -> Result<f64> {
    let ext = polygon.exterior();
    let n = ext.len() as f64;
    let origin = GeoPoint {
        lon: ext.iter().map(|p| p.lon).sum::<f64>() / n,
        lat: ext.iter().map(|p| p.lat).sum::<f64>() / n,
    };
    let frame = LocalFrame::new(origin);
    let ring_area = |ring: &[GeoPoint]| {
        let pts: Vec<_> = ring.iter().map(|&p| frame.project(p)).collect();
        ring_signed_area(&pts).abs()
    };
    let outer = ring_area(ext);
    let holes: f64 = polygon.holes().iter().map(|h| ring_area(h)).sum();
    let area = outer - holes;
    // Anything under a square centimeter is a collapsed ring.
    if !(area > 1e-4) {
        return Err(Error::Geometry(format!(
            "degenerate polygon (area {area} sqm)"
        )));
    }
    Ok(area)
}

/// Even-odd containment over all rings (holes excluded naturally).
pub fn point_in_polygon(polygon: &PolygonGeom, p: GeoPoint) -> bool {
    let mut inside = false;
    for ring in polygon.rings() {
        let n = ring.len();
        for i in 0..n {
            let a = ring[i];
            let b = ring[(i + 1) % n];
            if (a.lat > p.lat) != (b.lat > p.lat) {
                let x = a.lon + (p.lat - a.lat) / (b.lat - a.lat) * (b.lon - a.lon);
                if p.lon < x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

fn segment_distance(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

/// Distance in meters from `p` to the polygon, 0 when `p` is inside. Computed in a
/// local frame centered on `p`, minimum over all ring edges.
pub fn point_polygon_distance_m(polygon: &PolygonGeom, p: GeoPoint) -> f64 {
    if point_in_polygon(polygon, p) {
        return 0.0;
    }
    let frame = LocalFrame::new(p);
    let mut best = f64::INFINITY;
    for ring in polygon.rings() {
        let n = ring.len();
        for i in 0..n {
            let a = frame.project(ring[i]);
            let b = frame.project(ring[(i + 1) % n]);
            best = best.min(segment_distance(0.0, 0.0, a, b));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(lon: f64, lat: f64) -> GeoPoint {
        GeoPoint::new(lon, lat).unwrap()
    }

    /// Axis-aligned rectangle of `w` x `h` meters at the equator from the
    /// meters-per-degree constants directly.
    fn equator_rect(lon0: f64, lat0: f64, w: f64, h: f64) -> Vec<GeoPoint> {
        let dlon = w / 111_320.0;
        let dlat = h / 110_574.0;
        vec![
            pt(lon0, lat0),
            pt(lon0 + dlon, lat0),
            pt(lon0 + dlon, lat0 + dlat),
            pt(lon0, lat0 + dlat),
        ]
    }

    #[test]
    fn hundred_meter_square_at_equator() {
        let sq = equator_rect(0.0, 0.0, 100.0, 100.0);
        let area = geodesic_area_sqm(&PolygonGeom::new(sq, vec![]).unwrap()).unwrap();
        assert!((area - 10_000.0).abs() / 10_000.0 < 0.005, "{area}");
    }

    #[test]
    fn square_with_hole() {
        let lat0 = 0.0;
        let sq = equator_rect(0.0, lat0, 100.0, 100.0);
        let hole = equator_rect(40.0 / 111_320.0, lat0 + 40.0 / 110_574.0, 10.0, 10.0);
        let area = geodesic_area_sqm(&PolygonGeom::new(sq, vec![hole]).unwrap()).unwrap();
        assert!((area - 9_900.0).abs() / 9_900.0 < 0.005, "{area}");
    }

    #[test]
    fn degenerate_triangle_is_an_error() {
        let dup = PolygonGeom::new(vec![pt(0.0, 0.0), pt(0.001, 0.0), pt(0.001, 0.0)], vec![]);
        assert!(dup.is_err());
        let collinear =
            PolygonGeom::new(vec![pt(0.0, 0.0), pt(0.001, 0.0), pt(0.002, 0.0)], vec![]).unwrap();
        assert!(geodesic_area_sqm(&collinear).is_err());
    }

    #[test]
    fn distance_inside_and_outside() {
        let lat0 = 51.0;
        let frame = LocalFrame::new(pt(10.0, lat0));
        let ring: Vec<_> = [(0.0, 0.0), (40.0, 0.0), (40.0, 30.0), (0.0, 30.0)]
            .iter()
            .map(|&(x, y)| frame.unproject(x, y))
            .collect();
        let poly = PolygonGeom::new(ring, vec![]).unwrap();
        assert_eq!(
            point_polygon_distance_m(&poly, frame.unproject(20.0, 15.0)),
            0.0
        );
        let d = point_polygon_distance_m(&poly, frame.unproject(52.0, 15.0));
        assert!((d - 12.0).abs() < 0.01, "{d}");
        let d = point_polygon_distance_m(&poly, frame.unproject(43.0, 34.0));
        assert!((d - 5.0).abs() < 0.01, "{d}");
    }

    #[test]
    fn point_in_hole_is_outside() {
        let frame = LocalFrame::new(pt(10.0, 51.0));
        let sq = |x0: f64, y0: f64, s: f64| -> Vec<GeoPoint> {
            [(x0, y0), (x0 + s, y0), (x0 + s, y0 + s), (x0, y0 + s)]
                .iter()
                .map(|&(x, y)| frame.unproject(x, y))
                .collect()
        };
        let poly = PolygonGeom::new(sq(0.0, 0.0, 100.0), vec![sq(40.0, 40.0, 20.0)]).unwrap();
        let p = frame.unproject(50.0, 50.0);
        assert!(!point_in_polygon(&poly, p));
        let d = point_polygon_distance_m(&poly, p);
        assert!((d - 10.0).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn area_invariant_under_rotation_and_reversal(
            lon in -170.0f64..170.0,
            lat in -70.0f64..70.0,
            radii in proptest::collection::vec(20.0f64..200.0, 5..12),
            shift in 0usize..12,
        ) {
            let frame = LocalFrame::new(pt(lon, lat));
            let n = radii.len();
            let ring: Vec<GeoPoint> = radii
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let a = std::f64::consts::TAU * i as f64 / n as f64;
                    frame.unproject(r * a.cos(), r * a.sin())
                })
                .collect();
            let base = geodesic_area_sqm(&PolygonGeom::new(ring.clone(), vec![]).unwrap()).unwrap();
            let mut rotated = ring.clone();
            rotated.rotate_left(shift % n);
            let rot = geodesic_area_sqm(&PolygonGeom::new(rotated, vec![]).unwrap()).unwrap();
            let mut reversed = ring;
            reversed.reverse();
            let rev = geodesic_area_sqm(&PolygonGeom::new(reversed, vec![]).unwrap()).unwrap();
            prop_assert!((rot - base).abs() <= 1e-9 * base);
            prop_assert!((rev - base).abs() <= 1e-9 * base);
        }
    }
}
