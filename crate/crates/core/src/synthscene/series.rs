use chrono::{Days, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use super::render::{render_lot, LotRect, SceneConfig, SceneStyle, SLOT_LENGTH_M};
use crate::error::{Error, Result};
use crate::geodata::{GeoPoint, SizeClass, LARGE_MIN_SQM, SMALL_MAX_SQM};
use crate::imaging::ImageChip;
use crate::rng::{derive_seed, SplitMix64};

/// First Saturday of every generated series.
pub fn epoch_saturday() -> NaiveDate {
    let d = NaiveDate::from_ymd_opt(2019, 1, 5).expect("valid date");
    debug_assert_eq!(chrono::Datelike::weekday(&d), Weekday::Sat);
    d
}

pub const SATURDAY_RHO: (f64, f64) = (0.6, 0.95);
pub const SUNDAY_RHO: (f64, f64) = (0.0, 0.25);

/// Target area band per class, kept clear of the class boundaries so the
/// rounded rectangle still lands in its class.
pub fn area_band(class: SizeClass) -> (f64, f64) {
    match class {
        SizeClass::Small => (1_500.0, SMALL_MAX_SQM - 500.0),
        SizeClass::Medium => (SMALL_MAX_SQM + 600.0, LARGE_MIN_SQM - 600.0),
        SizeClass::Large => (LARGE_MIN_SQM + 1_000.0, 16_000.0),
    }
}

/// Rectangle with an area drawn from the class band and aspect ratio in
/// `[0.7, 1.4]`, both sides rounded to whole slot lengths.
pub fn sample_rect(class: SizeClass, anchor: GeoPoint, rng: &mut SplitMix64) -> Result<LotRect> {
    let (lo, hi) = area_band(class);
    loop {
        let area = rng.uniform(lo, hi);
        let aspect = rng.uniform(0.7, 1.4);
        let round = |v: f64| (v / SLOT_LENGTH_M).round().max(1.0) * SLOT_LENGTH_M;
        let w = round((area * aspect).sqrt());
        let h = round(area / w);
        let rect = LotRect::new(w, h, anchor)?;
        if (lo..=hi).contains(&rect.area_sqm()) {
            return Ok(rect);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeekendTruth {
    pub saturday: NaiveDate,
    pub rho_sat: f64,
    pub rho_sun: f64,
    /// Occupancies were swapped, so the Saturday label is wrong this weekend.
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesChip {
    pub date: NaiveDate,
    pub rho: f64,
    pub n_cars: usize,
    pub chip: ImageChip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSeries {
    pub lot_id: String,
    pub size_class: SizeClass,
    pub rect: LotRect,
    pub epsilon: f64,
    pub weekends: Vec<WeekendTruth>,
    /// Saturday then Sunday for each weekend, in date order.
    pub chips: Vec<SeriesChip>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSpec {
    pub lot_id: String,
    pub size_class: SizeClass,
    pub n_weekends: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub anchor: GeoPoint,
    pub style: SceneStyle,
}

/// Renders the chips of one lot at the given `(date, rho)` points. Chip `i`
/// uses seed `derive_seed(seed, i)`.
pub fn render_dates(
    lot_id: &str,
    rect: LotRect,
    style: &SceneStyle,
    seed: u64,
    points: &[(NaiveDate, f64)],
) -> Result<Vec<SeriesChip>> {
    points
        .iter()
        .enumerate()
        .map(|(i, &(date, rho))| {
            let cfg = SceneConfig {
                rect,
                rho,
                style: style.clone(),
                seed: derive_seed(seed, i as u64),
            };
            let r = render_lot(&cfg, lot_id, Some(date))?;
            Ok(SeriesChip {
                date,
                rho,
                n_cars: r.n_cars,
                chip: r.chip,
            })
        })
        .collect()
}

/// Draws the lot rectangle, then per weekend `rho_sat ~ U[0.6, 0.95]`,
/// `rho_sun ~ U[0, 0.25]` and a swap with probability `epsilon`.
pub fn gen_weekend_series(spec: &SeriesSpec) -> Result<SyntheticSeries> {
    if spec.n_weekends == 0 {
        return Err(Error::invalid("a series needs at least one weekend"));
    }
    if !(0.0..0.5).contains(&spec.epsilon) {
        return Err(Error::invalid(format!(
            "label noise must be in [0, 0.5), got {}",
            spec.epsilon
        )));
    }
    let mut rng = SplitMix64::new(spec.seed);
    let rect = sample_rect(spec.size_class, spec.anchor, &mut rng)?;
    let weekends: Vec<WeekendTruth> = (0..spec.n_weekends)
        .map(|k| {
            let mut rho_sat = rng.uniform(SATURDAY_RHO.0, SATURDAY_RHO.1);
            let mut rho_sun = rng.uniform(SUNDAY_RHO.0, SUNDAY_RHO.1);
            let flipped = rng.next_f64() < spec.epsilon;
            if flipped {
                std::mem::swap(&mut rho_sat, &mut rho_sun);
            }
            let saturday = epoch_saturday() + Days::new(7 * k as u64);
            WeekendTruth {
                saturday,
                rho_sat,
                rho_sun,
                flipped,
            }
        })
        .collect();
    let points: Vec<(NaiveDate, f64)> = weekends
        .iter()
        .flat_map(|w| {
            [
                (w.saturday, w.rho_sat),
                (w.saturday + Days::new(1), w.rho_sun),
            ]
        })
        .collect();
    let chips = render_dates(
        &spec.lot_id,
        rect,
        &spec.style,
        derive_seed(spec.seed, u64::MAX),
        &points,
    )?;
    Ok(SyntheticSeries {
        lot_id: spec.lot_id.clone(),
        size_class: spec.size_class,
        rect,
        epsilon: spec.epsilon,
        weekends,
        chips,
    })
}
