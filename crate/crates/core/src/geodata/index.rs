use super::geometry::{point_polygon_distance_m, LocalFrame, M_PER_DEG_LAT};
use super::{GeoPoint, MatchResult, ParkingLot, PointOfInterest};
use crate::error::{Error, Result};

type BBox = [f64; 4];

fn intersects(a: &BBox, b: &BBox) -> bool {
    a[0] <= b[2] && b[0] <= a[2] && a[1] <= b[3] && b[1] <= a[3]
}

fn contains(outer: &BBox, inner: &BBox) -> bool {
    outer[0] <= inner[0] && outer[1] <= inner[1] && outer[2] >= inner[2] && outer[3] >= inner[3]
}

/// Read-only uniform grid over lot bounding boxes (degrees). Each lot is
/// registered in every cell its box touches; exact distances are evaluated on
/// candidates only.
#[derive(Debug)]
pub struct SpatialIndex {
    lots: Vec<ParkingLot>,
    boxes: Vec<BBox>,
    extent: BBox,
    cell: f64,
    cols: usize,
    rows: usize,
    cells: Vec<Vec<u32>>,
}

const INITIAL_RADIUS_M: f64 = 64.0;
const MAX_CELLS: usize = 1 << 20;

pub fn build_spatial_index(lots: Vec<ParkingLot>) -> Result<SpatialIndex> {
    if lots.is_empty() {
        return Err(Error::invalid("cannot index an empty lot list"));
    }
    let boxes: Vec<BBox> = lots.iter().map(|l| l.geometry.bbox()).collect();
    let mut extent = boxes[0];
    for b in &boxes[1..] {
        extent = [
            extent[0].min(b[0]),
            extent[1].min(b[1]),
            extent[2].max(b[2]),
            extent[3].max(b[3]),
        ];
    }
    let span = (extent[2] - extent[0]).max(extent[3] - extent[1]).max(1e-9);
    // about one lot per cell on average, capped
    let target = (lots.len() as f64).sqrt().ceil().max(1.0);
    let mut cell = span / target;
    while ((span / cell).ceil() as usize + 1).pow(2) > MAX_CELLS {
        cell *= 2.0;
    }
    let cols = ((extent[2] - extent[0]) / cell).floor() as usize + 1;
    let rows = ((extent[3] - extent[1]) / cell).floor() as usize + 1;
    let mut index = SpatialIndex {
        lots,
        boxes,
        extent,
        cell,
        cols,
        rows,
        cells: vec![Vec::new(); cols * rows],
    };
    for i in 0..index.boxes.len() {
        let (c0, r0, c1, r1) = index.cell_range(&index.boxes[i]);
        for r in r0..=r1 {
            for c in c0..=c1 {
                index.cells[r * cols + c].push(i as u32);
            }
        }
    }
    Ok(index)
}

/// Keeps the closer candidate; equal distances go to the smaller lot id.
fn better(
    lots: &[ParkingLot],
    best: Option<(usize, f64)>,
    cand: (usize, f64),
) -> Option<(usize, f64)> {
    match best {
        None => Some(cand),
        Some((bi, bd)) => {
            if cand.1 < bd || (cand.1 == bd && lots[cand.0].id < lots[bi].id) {
                Some(cand)
            } else {
                best
            }
        }
    }
}

impl SpatialIndex {
    pub fn lots(&self) -> &[ParkingLot] {
        &self.lots
    }

    pub fn len(&self) -> usize {
        self.lots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lots.is_empty()
    }

    /// Nearest lot (index into [`lots`](Self::lots)) and its distance in meters.
    ///
    /// Searches boxes of growing radius; a lot at distance d has its bounding box
    /// inside the d-box around the query, so a best distance within the searched
    /// radius is the global minimum.
    pub fn nearest(&self, p: GeoPoint) -> (usize, f64) {
        let frame = LocalFrame::new(p);
        let mut radius = INITIAL_RADIUS_M;
        let mut seen = vec![false; self.lots.len()];
        loop {
            let dlon = radius / frame.m_per_deg_lon();
            let dlat = radius / M_PER_DEG_LAT;
            let query = [p.lon - dlon, p.lat - dlat, p.lon + dlon, p.lat + dlat];
            let mut best = None;
            seen.iter_mut().for_each(|s| *s = false);
            if intersects(&query, &self.extent) {
                let (c0, r0, c1, r1) = self.cell_range(&query);
                for r in r0..=r1 {
                    for c in c0..=c1 {
                        for &i in &self.cells[r * self.cols + c] {
                            let i = i as usize;
                            if seen[i] || !intersects(&query, &self.boxes[i]) {
                                continue;
                            }
                            seen[i] = true;
                            let d = point_polygon_distance_m(&self.lots[i].geometry, p);
                            best = better(&self.lots, best, (i, d));
                        }
                    }
                }
            }
            let covers_all = contains(&query, &self.extent);
            if let Some((i, d)) = best {
                if d <= radius || covers_all {
                    return (i, d);
                }
            }
            assert!(!covers_all, "a covering query visits every lot");
            radius *= 4.0;
        }
    }

    /// Inclusive cell range (col0, row0, col1, row1) touched by a box, clipped to the grid.
    fn cell_range(&self, b: &BBox) -> (usize, usize, usize, usize) {
        let col = |x: f64| {
            (((x - self.extent[0]) / self.cell).floor().max(0.0) as usize).min(self.cols - 1)
        };
        let row = |y: f64| {
            (((y - self.extent[1]) / self.cell).floor().max(0.0) as usize).min(self.rows - 1)
        };
        (col(b[0]), row(b[1]), col(b[2]), row(b[3]))
    }

    /// Reference nearest search over every lot.
    pub fn nearest_linear(&self, p: GeoPoint) -> (usize, f64) {
        nearest_linear(&self.lots, p).expect("index is non-empty")
    }
}

fn nearest_linear(lots: &[ParkingLot], p: GeoPoint) -> Option<(usize, f64)> {
    lots.iter().enumerate().fold(None, |best, (i, lot)| {
        better(lots, best, (i, point_polygon_distance_m(&lot.geometry, p)))
    })
}

fn to_match(
    poi: &PointOfInterest,
    lot: &ParkingLot,
    d: f64,
    threshold_m: f64,
) -> Option<MatchResult> {
    (d <= threshold_m).then(|| MatchResult {
        poi_id: poi.id.clone(),
        lot_id: lot.id.clone(),
        distance_m: d,
    })
}

/// Nearest eligible lot within `threshold_m` meters of the POI, if any.
pub fn match_poi_to_lot(
    poi: &PointOfInterest,
    index: &SpatialIndex,
    threshold_m: f64,
) -> Option<MatchResult> {
    debug_assert!(threshold_m > 0.0);
    let (i, d) = index.nearest(poi.location);
    to_match(poi, &index.lots[i], d, threshold_m)
}

/// Same contract as [`match_poi_to_lot`] without an index.
pub fn match_linear(
    poi: &PointOfInterest,
    lots: &[ParkingLot],
    threshold_m: f64,
) -> Option<MatchResult> {
    let (i, d) = nearest_linear(lots, poi.location)?;
    to_match(poi, &lots[i], d, threshold_m)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::geodata::{PoiCategory, PolygonGeom};
    use crate::rng::SplitMix64;

    fn rect_lot(id: &str, frame: &LocalFrame, x0: f64, y0: f64, w: f64, h: f64) -> ParkingLot {
        let ring = [(x0, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0, y0 + h)]
            .iter()
            .map(|&(x, y)| frame.unproject(x, y))
            .collect();
        ParkingLot::new(
            id.into(),
            PolygonGeom::new(ring, vec![]).unwrap(),
            BTreeMap::new(),
        )
        .unwrap()
    }

    fn poi_at(p: GeoPoint) -> PointOfInterest {
        PointOfInterest {
            id: "poi".into(),
            category: PoiCategory::Supermarket,
            location: p,
            name: None,
        }
    }

    #[test]
    fn empty_index_is_an_error() {
        assert!(build_spatial_index(vec![]).is_err());
    }

    #[test]
    fn single_lot_is_nearest() {
        let frame = LocalFrame::new(GeoPoint::new(8.0, 49.0).unwrap());
        let index =
            build_spatial_index(vec![rect_lot("only", &frame, 0.0, 0.0, 50.0, 50.0)]).unwrap();
        let (i, d) = index.nearest(frame.unproject(5_000.0, -3_000.0));
        assert_eq!(index.lots()[i].id, "only");
        assert!(d > 5_000.0);
    }

    #[test]
    fn inside_matches_at_zero() {
        let frame = LocalFrame::new(GeoPoint::new(8.0, 49.0).unwrap());
        let index = build_spatial_index(vec![rect_lot("a", &frame, 0.0, 0.0, 50.0, 50.0)]).unwrap();
        let m = match_poi_to_lot(&poi_at(frame.unproject(10.0, 10.0)), &index, 10.0).unwrap();
        assert_eq!(m.distance_m, 0.0);
    }

    #[test]
    fn tie_goes_to_smaller_id() {
        let frame = LocalFrame::new(GeoPoint::new(8.0, 49.0).unwrap());
        // mirror images about x = 0
        let lots = vec![
            rect_lot("b", &frame, 5.0, -10.0, 20.0, 20.0),
            rect_lot("a", &frame, -25.0, -10.0, 20.0, 20.0),
        ];
        let index = build_spatial_index(lots).unwrap();
        let (i, _) = index.nearest(frame.unproject(0.0, 0.0));
        let (j, _) = index.nearest_linear(frame.unproject(0.0, 0.0));
        assert_eq!(i, j);
        assert_eq!(index.lots()[i].id, "a");
    }

    #[test]
    fn index_matches_linear_scan() {
        let frame = LocalFrame::new(GeoPoint::new(10.0, 51.0).unwrap());
        let mut rng = SplitMix64::new(5);
        let lots: Vec<_> = (0..300)
            .map(|k| {
                let (x, y) = (
                    rng.uniform(-20_000.0, 20_000.0),
                    rng.uniform(-20_000.0, 20_000.0),
                );
                rect_lot(
                    &format!("lot{k:04}"),
                    &frame,
                    x,
                    y,
                    rng.uniform(10.0, 200.0),
                    rng.uniform(10.0, 200.0),
                )
            })
            .collect();
        let index = build_spatial_index(lots).unwrap();
        for _ in 0..50 {
            let q = frame.unproject(
                rng.uniform(-25_000.0, 25_000.0),
                rng.uniform(-25_000.0, 25_000.0),
            );
            assert_eq!(index.nearest(q), index.nearest_linear(q));
        }
    }
}
