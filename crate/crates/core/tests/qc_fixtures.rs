//! QC decisions on hand-built stacks whose histogram distances are known in
//! closed form from an independent binning oracle.

use chrono::NaiveDate;
use lotpair::geodata::{GeoPoint, PolygonGeom};
use lotpair::imaging::{
    qc_pipeline, GeoTransform, ImageChip, LotImageStack, MaskClass, QcOptions, RejectReason, UsableMask,
    DEFAULT_BINS,
};

const SIDE: usize = 10;
const BASE_BIN: usize = 20;

fn gt() -> GeoTransform {
    GeoTransform { origin_lon: 8.0, origin_lat: 50.0, dlon: 1e-4, dlat: -1e-4 }
}

fn day(k: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, 1 + k).unwrap()
}

/// Polygon along the pixel edges of columns `[0, cols)`; the geotransform
/// origin is the center of pixel (0, 0).
fn columns_polygon(cols: usize) -> PolygonGeom {
    let g = gt();
    let (w, e) = (g.origin_lon - 0.5 * g.dlon, g.origin_lon + (cols as f64 - 0.5) * g.dlon);
    let (n, s) = (g.origin_lat - 0.5 * g.dlat, g.origin_lat + (SIDE as f64 - 0.5) * g.dlat);
    let p = |lon, lat| GeoPoint::new(lon, lat).unwrap();
    PolygonGeom::new(vec![p(w, n), p(e, n), p(e, s), p(w, s)], vec![]).unwrap()
}

/// Equal-band chip whose pixel `k` has luminance `lum(k)`.
fn chip(date: NaiveDate, lum: impl Fn(usize) -> f64) -> ImageChip {
    let plane: Vec<f32> = (0..SIDE * SIDE).map(|k| lum(k) as f32).collect();
    let pixels = plane.iter().copied().cycle().take(4 * plane.len()).collect();
    ImageChip::new("lot", Some(date), (4, SIDE, SIDE), 3.0, gt(), pixels).unwrap()
}

/// Every pixel in one bin, spread evenly across it, then shifted by `shift` bin widths.
fn shifted(date: NaiveDate, shift: f64) -> ImageChip {
    chip(date, |k| (BASE_BIN as f64 + (k as f64 + 0.5) / 100.0 + shift) / DEFAULT_BINS as f64)
}

fn clear() -> UsableMask {
    UsableMask::filled(SIDE, SIDE, MaskClass::Clear)
}

/// Total variation between the binned luminances of two chips, binning by hand.
fn oracle_tv(a: &ImageChip, b: &ImageChip) -> f64 {
    let hist = |c: &ImageChip| {
        let mut h = vec![0.0f64; DEFAULT_BINS];
        for k in 0..SIDE * SIDE {
            let v = c.pixels[k] as f64;
            h[((v * DEFAULT_BINS as f64) as usize).min(DEFAULT_BINS - 1)] += 0.01;
        }
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    0.5 * ha.iter().zip(&hb).map(|(p, q)| (p - q).abs()).sum::<f64>()
}

fn decide(stack: Vec<(ImageChip, UsableMask)>, polygon: &PolygonGeom) -> Vec<(NaiveDate, Option<RejectReason>)> {
    let stack = LotImageStack::new("lot", stack).unwrap();
    let report = qc_pipeline(&stack, polygon, &QcOptions::default()).unwrap();
    report.decisions.iter().map(|d| (d.date, d.reason)).collect()
}

#[test]
fn brightness_shift_fixtures_have_the_intended_distance() {
    let base = shifted(day(0), 0.0);
    assert!((oracle_tv(&base, &shifted(day(9), 0.3)) - 0.3).abs() < 1e-12);
    assert!((oracle_tv(&base, &shifted(day(9), 0.15)) - 0.15).abs() < 1e-12);
}

#[test]
fn brightness_shift_of_point_three_is_rejected_and_point_one_five_kept() {
    for (shift, expected) in [(0.3, Some(RejectReason::Brightness)), (0.15, None)] {
        let mut stack: Vec<_> = (0..4).map(|k| (shifted(day(k), 0.0), clear())).collect();
        stack.push((shifted(day(4), shift), clear()));
        let decisions = decide(stack, &columns_polygon(SIDE));
        assert_eq!(decisions[4], (day(4), expected), "shift {shift}");
        assert!(decisions[..4].iter().all(|(_, r)| r.is_none()));
    }
}

#[test]
fn one_cloud_pixel_inside_rejects_and_outside_keeps() {
    let polygon = columns_polygon(5);
    let mut inside = clear();
    inside.set(9, 4, MaskClass::Cloud);
    let mut outside = clear();
    for r in 0..SIDE {
        for c in 5..SIDE {
            outside.set(r, c, MaskClass::Cloud);
        }
    }
    let mut stack: Vec<_> = (0..3).map(|k| (shifted(day(k), 0.0), clear())).collect();
    stack.push((shifted(day(3), 0.0), inside));
    stack.push((shifted(day(4), 0.0), outside));
    let decisions = decide(stack, &polygon);
    assert_eq!(decisions[3], (day(3), Some(RejectReason::Cloud)));
    assert_eq!(decisions[4], (day(4), None));
}

#[test]
fn nodata_in_footprint_fails_coverage_before_clouds() {
    let mut mask = clear();
    mask.set(0, 0, MaskClass::NoData);
    mask.set(1, 1, MaskClass::Cloud);
    let stack = vec![(shifted(day(0), 0.0), mask), (shifted(day(1), 0.0), clear())];
    let decisions = decide(stack, &columns_polygon(SIDE));
    assert_eq!(decisions[0].1, Some(RejectReason::Coverage));
    assert_eq!(decisions[1].1, None);
}
