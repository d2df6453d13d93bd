//! Synthetic 3 m parking-lot chips with known occupancy.
//!
//! Cars (2 x 5 m) sit in a 3 x 6 m slot grid rendered at 0.5 m and box-averaged
//! to 3 m, so individual cars are sub-pixel. Weekend series draw a full-ish
//! Saturday and an empty-ish Sunday; label noise swaps the two.

mod benchmark;
mod render;
mod series;

pub use benchmark::{
    gen_benchmark, lot_id, BenchmarkConfig, BenchmarkManifest, ChipTruth, LotTruth, CHIPS_DIR,
    MANIFEST_FILE, PARKING_FILE,
};
pub use render::{
    box_average, car_count, occupancy_contrast, render_lot, render_native, CarMixture, LotRect,
    NativeScene, RenderedLot, SceneConfig, SceneStyle, BOX, CAR_LENGTH_M, CAR_WIDTH_M,
    DEFAULT_MARGIN_PX, NATIVE_GSD_M, OUTPUT_GSD_M, SLOT_LENGTH_M, SLOT_WIDTH_M,
};
pub use series::{
    area_band, epoch_saturday, gen_weekend_series, render_dates, sample_rect, SeriesChip,
    SeriesSpec, SyntheticSeries, WeekendTruth, SATURDAY_RHO, SUNDAY_RHO,
};
