use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::render::{LotRect, SceneStyle};
use super::series::{gen_weekend_series, SeriesSpec, SyntheticSeries, WeekendTruth};
use crate::error::{Error, Result};
use crate::fsio;
use crate::geodata::{lots_to_geojson, GeoPoint, ParkingLot, SizeClass};
use crate::imaging::{ChipStore, MaskClass, UsableMask};
use crate::rng::{derive_seed, SplitMix64};
use crate::weakpairs::LabeledPair;

pub const MANIFEST_FILE: &str = "synth_manifest.json";
pub const PARKING_FILE: &str = "parking.geojson";
pub const CHIPS_DIR: &str = "chips";

/// Lots are laid out west to east from here, one every `LOT_SPACING_DEG`.
const BASE_LON: f64 = 8.0;
const BASE_LAT: f64 = 50.0;
const LOT_SPACING_DEG: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    /// Classes to generate, in generation order.
    pub classes: Vec<SizeClass>,
    pub lots_per_class: usize,
    pub n_weekends: usize,
    pub epsilon: f64,
    pub seed: u64,
    /// Probability that a chip gets a cloud patch over the lot. Zero by default;
    /// only meant for exercising QC.
    pub cloud_rate: f64,
    pub style: SceneStyle,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            classes: SizeClass::ALL.to_vec(),
            lots_per_class: 20,
            n_weekends: 8,
            epsilon: 0.05,
            seed: 0,
            cloud_rate: 0.0,
            style: SceneStyle::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipTruth {
    pub date: NaiveDate,
    pub rho_true: f64,
    pub n_cars: usize,
    pub cloudy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotTruth {
    pub lot_id: String,
    pub size_class: SizeClass,
    pub width_m: f64,
    pub height_m: f64,
    pub area_sqm: f64,
    pub n_slots: usize,
    pub anchor: GeoPoint,
    pub seed: u64,
    pub weekends: Vec<WeekendTruth>,
    pub chips: Vec<ChipTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub config: BenchmarkConfig,
    pub lots: Vec<LotTruth>,
}

impl BenchmarkManifest {
    pub fn lot(&self, lot_id: &str) -> Option<&LotTruth> {
        self.lots.iter().find(|l| l.lot_id == lot_id)
    }

    /// Relabels `pairs` by ground truth: 1 iff the first chip's true occupancy
    /// exceeds the second's. Fails on chips missing from the manifest and on
    /// equal occupancies.
    pub fn truth_labels(&self, pairs: &[LabeledPair]) -> Result<Vec<LabeledPair>> {
        let rho: BTreeMap<(&str, NaiveDate), f64> = self
            .lots
            .iter()
            .flat_map(|l| l.chips.iter().map(move |c| ((l.lot_id.as_str(), c.date), c.rho_true)))
            .collect();
        pairs
            .iter()
            .map(|p| {
                let get = |d: NaiveDate| {
                    rho.get(&(p.lot_id.as_str(), d)).copied().ok_or_else(|| {
                        Error::invalid(format!("chip {} {d} is not in the manifest", p.lot_id))
                    })
                };
                let (a, b) = (get(p.date_a)?, get(p.date_b)?);
                if a == b {
                    return Err(Error::invalid(format!(
                        "pair {} {} {} has no ground-truth order",
                        p.lot_id, p.date_a, p.date_b
                    )));
                }
                Ok(LabeledPair { label: (a > b) as u8, ..p.clone() })
            })
            .collect()
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fsio::read(
            &dir.join(MANIFEST_FILE),
        )?)?)
    }
}

pub fn lot_id(class: SizeClass, k: usize) -> String {
    format!("synth-{class}-{k:03}")
}

fn lot_rect_geometry(rect: &LotRect, id: &str) -> Result<ParkingLot> {
    let tags: BTreeMap<String, String> = [
        ("amenity", "parking"),
        ("parking", "surface"),
        ("access", "customers"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    ParkingLot::new(id.to_string(), rect.polygon()?, tags)
}

/// Square cloud patch of side 5 centered on a random lot pixel.
fn add_cloud(
    series: &mut SyntheticSeries,
    idx: usize,
    rng: &mut SplitMix64,
    mask: &mut UsableMask,
) {
    let margin = series.chips[idx].chip.height - series.rect.pixel_extent().0;
    let margin = margin / 2;
    let (h, w) = series.rect.pixel_extent();
    let cr = margin + rng.below(h as u64) as usize;
    let cc = margin + rng.below(w as u64) as usize;
    let chip = &mut series.chips[idx].chip;
    let (ch, cw) = (chip.height, chip.width);
    for r in cr.saturating_sub(2)..(cr + 3).min(ch) {
        for c in cc.saturating_sub(2)..(cc + 3).min(cw) {
            mask.set(r, c, MaskClass::Cloud);
            for b in 0..chip.bands {
                chip.pixels[(b * ch + r) * cw + c] = 0.9;
            }
        }
    }
}

/// Generates `lots_per_class` lots for each requested class and writes the chip store, `parking.geojson` and the manifest under
/// `out_dir`. Lot `i` (global index) uses seed `derive_seed(seed, i)`.
pub fn gen_benchmark(cfg: &BenchmarkConfig, out_dir: &Path) -> Result<BenchmarkManifest> {
    if cfg.lots_per_class == 0 {
        return Err(Error::invalid("lots_per_class must be positive"));
    }
    if !(0.0..1.0).contains(&cfg.cloud_rate) {
        return Err(Error::invalid(format!(
            "cloud rate must be in [0, 1), got {}",
            cfg.cloud_rate
        )));
    }
    if cfg.classes.is_empty() {
        return Err(Error::invalid("no size classes requested"));
    }
    let specs: Vec<SeriesSpec> = cfg
        .classes
        .iter()
        .flat_map(|&class| (0..cfg.lots_per_class).map(move |k| (class, k)))
        .enumerate()
        .map(|(i, (class, k))| {
            Ok(SeriesSpec {
                lot_id: lot_id(class, k),
                size_class: class,
                n_weekends: cfg.n_weekends,
                epsilon: cfg.epsilon,
                seed: derive_seed(cfg.seed, i as u64),
                anchor: GeoPoint::new(BASE_LON + LOT_SPACING_DEG * i as f64, BASE_LAT)?,
                style: cfg.style.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let rendered = specs
        .par_iter()
        .map(gen_weekend_series)
        .collect::<Result<Vec<_>>>()?;

    let store = ChipStore::new(out_dir.join(CHIPS_DIR));
    let mut lots = Vec::with_capacity(rendered.len());
    let mut parking = Vec::with_capacity(rendered.len());
    for (mut series, spec) in rendered.into_iter().zip(&specs) {
        let geometry = lot_rect_geometry(&series.rect, &series.lot_id)?;
        if geometry.size_class != series.size_class {
            return Err(Error::Geometry(format!(
                "{} has area {} outside its class",
                series.lot_id, geometry.area_sqm
            )));
        }
        let mut cloud_rng = SplitMix64::new(derive_seed(spec.seed, 0xc10d));
        let mut chips = Vec::with_capacity(series.chips.len());
        for idx in 0..series.chips.len() {
            let (h, w) = (series.chips[idx].chip.height, series.chips[idx].chip.width);
            let mut mask = UsableMask::filled(h, w, MaskClass::Clear);
            let cloudy = cfg.cloud_rate > 0.0 && cloud_rng.next_f64() < cfg.cloud_rate;
            if cloudy {
                add_cloud(&mut series, idx, &mut cloud_rng, &mut mask);
            }
            let entry = &series.chips[idx];
            store.write(&entry.chip, &mask)?;
            chips.push(ChipTruth {
                date: entry.date,
                rho_true: entry.rho,
                n_cars: entry.n_cars,
                cloudy,
            });
        }
        lots.push(LotTruth {
            lot_id: series.lot_id.clone(),
            size_class: series.size_class,
            width_m: series.rect.width_m,
            height_m: series.rect.height_m,
            area_sqm: geometry.area_sqm,
            n_slots: series.rect.n_slots(),
            anchor: series.rect.anchor,
            seed: spec.seed,
            weekends: series.weekends.clone(),
            chips,
        });
        parking.push(geometry);
    }
    fsio::write_atomic(
        &out_dir.join(PARKING_FILE),
        lots_to_geojson(&parking).as_bytes(),
    )?;
    let manifest = BenchmarkManifest {
        config: cfg.clone(),
        lots,
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fsio::write_atomic(&out_dir.join(MANIFEST_FILE), json.as_bytes())?;
    Ok(manifest)
}
