use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};

use super::{
    histogram_distance, luminance_histogram, median_image, GeoTransform, ImageChip, LotImageStack,
    MaskClass, UsableMask, DEFAULT_BINS,
};
use crate::error::{Error, Result};
use crate::geodata::{point_in_polygon, GeoPoint, PolygonGeom};

pub const DEFAULT_TV_THRESHOLD: f64 = 0.2;
pub const MIN_MEDIAN_IMAGES: usize = 3;
pub const DEFAULT_REJECT_CLASSES: [MaskClass; 3] =
    [MaskClass::Cloud, MaskClass::HeavyHaze, MaskClass::Shadow];

/// Pixels whose centers lie inside the lot polygon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Footprint {
    height: usize,
    width: usize,
    mask: Vec<bool>,
}

impl Footprint {
    pub fn full(height: usize, width: usize) -> Self {
        Self::from_fn(height, width, |_, _| true)
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut mask = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                mask.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            mask,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|b| **b).count()
    }

    /// Inclusive (row0, col0, row1, col1) bounding box of the true pixels.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut b: Option<(usize, usize, usize, usize)> = None;
        for r in 0..self.height {
            for c in 0..self.width {
                if self.contains(r, c) {
                    b = Some(match b {
                        None => (r, c, r, c),
                        Some((r0, c0, r1, c1)) => (r0.min(r), c0.min(c), r1.max(r), c1.max(c)),
                    });
                }
            }
        }
        b
    }

    pub(crate) fn check_shape(&self, height: usize, width: usize) -> Result<()> {
        if (self.height, self.width) != (height, width) {
            return Err(Error::Shape {
                layer: "footprint".into(),
                expected: vec![height, width],
                found: vec![self.height, self.width],
            });
        }
        Ok(())
    }
}

/// Even-odd point-in-polygon test at every pixel center.
pub fn rasterize_footprint(
    polygon: &PolygonGeom,
    geotransform: &GeoTransform,
    height: usize,
    width: usize,
) -> Result<Footprint> {
    let fp = Footprint::from_fn(height, width, |r, c| {
        let (lon, lat) = geotransform.pixel_center(r, c);
        point_in_polygon(polygon, GeoPoint { lon, lat })
    });
    if fp.count() == 0 {
        return Err(Error::Geometry(
            "polygon does not cover any pixel center of the chip".into(),
        ));
    }
    Ok(fp)
}

fn any_in_footprint(
    mask: &UsableMask,
    footprint: &Footprint,
    pred: impl Fn(MaskClass) -> bool,
) -> Result<bool> {
    footprint.check_shape(mask.height, mask.width)?;
    Ok(mask
        .classes
        .iter()
        .zip(&footprint.mask)
        .any(|(&c, &inside)| inside && pred(c)))
}

/// True iff no footprint pixel is NoData.
pub fn coverage_ok(chip: &ImageChip, mask: &UsableMask, footprint: &Footprint) -> Result<bool> {
    footprint.check_shape(chip.height, chip.width)?;
    Ok(!any_in_footprint(mask, footprint, |c| {
        c == MaskClass::NoData
    })?)
}

/// True iff no footprint pixel carries one of `reject` classes.
pub fn cloud_free(
    chip: &ImageChip,
    mask: &UsableMask,
    footprint: &Footprint,
    reject: &[MaskClass],
) -> Result<bool> {
    footprint.check_shape(chip.height, chip.width)?;
    Ok(!any_in_footprint(mask, footprint, |c| reject.contains(&c))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RejectReason {
    Coverage,
    Cloud,
    Brightness,
}

/// One line of the QC report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcDecision {
    pub lot_id: String,
    pub date: NaiveDate,
    pub kept: bool,
    pub reason: Option<RejectReason>,
}

#[derive(Debug, Clone)]
pub struct QcOptions {
    pub tv_threshold: f64,
    pub reject_classes: Vec<MaskClass>,
    pub bins: usize,
}

impl Default for QcOptions {
    fn default() -> Self {
        Self {
            tv_threshold: DEFAULT_TV_THRESHOLD,
            reject_classes: DEFAULT_REJECT_CLASSES.to_vec(),
            bins: DEFAULT_BINS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QcReport {
    pub kept: LotImageStack,
    /// One decision per input image, in date order.
    pub decisions: Vec<QcDecision>,
    /// Set when fewer than three images survived the coverage and cloud stages.
    pub brightness_skipped: bool,
}

/// Coverage, then clouds, then histogram distance to the median of the
/// survivors. Each rejected image carries the first stage it failed.
pub fn qc_pipeline(
    stack: &LotImageStack,
    polygon: &PolygonGeom,
    opts: &QcOptions,
) -> Result<QcReport> {
    if stack.is_empty() {
        return Err(Error::invalid(format!(
            "lot {}: empty image stack",
            stack.lot_id
        )));
    }
    let mut reasons: Vec<Option<RejectReason>> = vec![None; stack.len()];
    let mut footprints: Vec<Option<Footprint>> = Vec::with_capacity(stack.len());

    for (i, (chip, mask)) in stack.entries().iter().enumerate() {
        let fp = rasterize_footprint(polygon, &chip.geotransform, chip.height, chip.width).ok();
        match &fp {
            None => reasons[i] = Some(RejectReason::Coverage),
            Some(fp) if !coverage_ok(chip, mask, fp)? => reasons[i] = Some(RejectReason::Coverage),
            Some(fp) if !cloud_free(chip, mask, fp, &opts.reject_classes)? => {
                reasons[i] = Some(RejectReason::Cloud)
            }
            Some(_) => {}
        }
        footprints.push(fp);
    }

    let survivors: Vec<usize> = (0..stack.len()).filter(|&i| reasons[i].is_none()).collect();
    let brightness_skipped = survivors.len() < MIN_MEDIAN_IMAGES;
    if brightness_skipped {
        warn!(
            "lot {}: {} images after coverage/cloud filtering, brightness filter skipped",
            stack.lot_id,
            survivors.len()
        );
    } else {
        let chips: Vec<&ImageChip> = survivors.iter().map(|&i| &stack.entries()[i].0).collect();
        let median = median_image(&chips)?;
        let median_fp =
            rasterize_footprint(polygon, &median.geotransform, median.height, median.width)?;
        let reference = luminance_histogram(&median, &median_fp, opts.bins)?;
        for &i in &survivors {
            let chip = &stack.entries()[i].0;
            let fp = footprints[i].as_ref().expect("survivor has a footprint");
            let h = luminance_histogram(chip, fp, opts.bins)?;
            if histogram_distance(&h, &reference)? > opts.tv_threshold {
                reasons[i] = Some(RejectReason::Brightness);
            }
        }
    }

    let mut kept = Vec::new();
    let mut decisions = Vec::with_capacity(stack.len());
    for ((chip, mask), reason) in stack.entries().iter().zip(&reasons) {
        decisions.push(QcDecision {
            lot_id: stack.lot_id.clone(),
            date: chip.capture_date.expect("stack dates are set"),
            kept: reason.is_none(),
            reason: *reason,
        });
        if reason.is_none() {
            kept.push((chip.clone(), mask.clone()));
        }
    }
    Ok(QcReport {
        kept: LotImageStack::new(stack.lot_id.clone(), kept)?,
        decisions,
        brightness_skipped,
    })
}
