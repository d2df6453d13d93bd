//! Image chips, usable-data masks, footprints, and the three-stage chip QC
//! (coverage, clouds, brightness consistency against the lot's median image).

mod chip;
mod histogram;
mod qc;
mod store;

pub use chip::{
    band_stats, median_image, normalize_chip, BandStats, GeoTransform, ImageChip, LotImageStack,
    MaskClass, UsableMask,
};
pub use histogram::{histogram_distance, luminance_histogram, Histogram, DEFAULT_BINS};
pub use qc::{
    cloud_free, coverage_ok, qc_pipeline, rasterize_footprint, Footprint, QcDecision, QcOptions,
    QcReport, RejectReason, DEFAULT_REJECT_CLASSES, DEFAULT_TV_THRESHOLD, MIN_MEDIAN_IMAGES,
};
pub use store::{ChipSidecar, ChipStore};
