//! End-to-end data flow shared by the command line and the acceptance suite:
//! QC over a chip store, weak pairs, band statistics, model inputs and
//! per-class grouping of held-out pairs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fsio;
use crate::geodata::{parse_parking_collection, ParkingLot, SizeClass};
use crate::imaging::{
    band_stats, normalize_chip, qc_pipeline, rasterize_footprint, BandStats, ChipStore, Footprint, ImageChip,
    QcDecision, QcOptions,
};
use crate::pairnet::prepare_input;
use crate::weakpairs::{enumerate_weekend_pairs, make_labeled_pairs, LabeledPair, PairingWindow, SplitSpec};

/// Chip identity inside a store.
pub type ChipKey = (String, NaiveDate);

pub fn read_parking(path: &Path) -> Result<Vec<ParkingLot>> {
    let parsed = parse_parking_collection(&fsio::read(path)?)?;
    for w in &parsed.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(parsed.items)
}

pub fn lots_by_id(lots: Vec<ParkingLot>) -> Result<BTreeMap<String, ParkingLot>> {
    let mut out = BTreeMap::new();
    for lot in lots {
        let id = lot.id.clone();
        if out.insert(id.clone(), lot).is_some() {
            return Err(Error::invalid(format!("duplicate lot id {id}")));
        }
    }
    Ok(out)
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fsio::read(path)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fsio::write_atomic(path, text.as_bytes())
}

pub fn write_ndjson<T: serde::Serialize>(path: &Path, records: &[T]) -> Result<()> {
    fsio::write_atomic(path, fsio::to_ndjson(records)?.as_bytes())
}

pub fn read_ndjson<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    fsio::from_ndjson(&fsio::read_to_string(path)?)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fsio::read(path)?)?)
}

/// Pretty JSON with a trailing newline, written atomically.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fsio::write_atomic(path, text.as_bytes())
}

/// QC decisions for every lot that has chips in the store, lots in id order.
/// Lots without chips are skipped with a warning.
pub fn qc_store(store: &ChipStore, lots: &BTreeMap<String, ParkingLot>, opts: &QcOptions) -> Result<Vec<QcDecision>> {
    let stored: BTreeSet<String> = store.lot_ids()?.into_iter().collect();
    let ids: Vec<&String> = lots.keys().filter(|id| stored.contains(*id)).collect();
    for id in lots.keys().filter(|id| !stored.contains(*id)) {
        log::warn!("lot {id} has no chips in {}", store.root().display());
    }
    let per_lot = ids
        .par_iter()
        .map(|id| {
            let stack = store.read_stack(id)?;
            let report = qc_pipeline(&stack, &lots[*id].geometry, opts)?;
            if report.brightness_skipped {
                log::warn!("lot {id}: fewer than 3 images after cloud screening, brightness check skipped");
            }
            Ok(report.decisions)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_lot.into_iter().flatten().collect())
}

pub fn kept_dates(decisions: &[QcDecision]) -> BTreeMap<String, BTreeSet<NaiveDate>> {
    let mut out: BTreeMap<String, BTreeSet<NaiveDate>> = BTreeMap::new();
    for d in decisions {
        let entry = out.entry(d.lot_id.clone()).or_default();
        if d.kept {
            entry.insert(d.date);
        }
    }
    out
}

/// Weekend pairs per lot over the stored dates, restricted to QC survivors
/// when `kept` is given. Lots in id order.
pub fn build_pairs(
    store: &ChipStore,
    lots: &BTreeMap<String, ParkingLot>,
    kept: Option<&BTreeMap<String, BTreeSet<NaiveDate>>>,
    window: PairingWindow,
    include_both_orders: bool,
) -> Result<Vec<LabeledPair>> {
    let stored: BTreeSet<String> = store.lot_ids()?.into_iter().collect();
    let mut out = Vec::new();
    for id in lots.keys().filter(|id| stored.contains(*id)) {
        let mut dates = store.dates(id)?;
        if let Some(kept) = kept {
            let allowed = kept.get(id);
            dates.retain(|d| allowed.is_some_and(|a| a.contains(d)));
        }
        let weekend = enumerate_weekend_pairs(id, &dates, window);
        out.extend(make_labeled_pairs(&weekend, include_both_orders));
    }
    Ok(out)
}

/// Unique chips referenced by `pairs`, sorted.
pub fn pair_chips<'a>(pairs: impl IntoIterator<Item = &'a LabeledPair>) -> Vec<ChipKey> {
    let set: BTreeSet<ChipKey> = pairs
        .into_iter()
        .flat_map(|p| [(p.lot_id.clone(), p.date_a), (p.lot_id.clone(), p.date_b)])
        .collect();
    set.into_iter().collect()
}

fn load_chip(
    store: &ChipStore,
    lots: &BTreeMap<String, ParkingLot>,
    (lot_id, date): &ChipKey,
) -> Result<(ImageChip, Footprint)> {
    let lot = lots
        .get(lot_id)
        .ok_or_else(|| Error::invalid(format!("lot {lot_id} is not in the parking file")))?;
    let (chip, _) = store.read(lot_id, *date)?;
    let fp = rasterize_footprint(&lot.geometry, &chip.geotransform, chip.height, chip.width)?;
    Ok((chip, fp))
}

/// Per-band statistics over the footprint pixels of the given chips.
pub fn fit_band_stats(store: &ChipStore, lots: &BTreeMap<String, ParkingLot>, keys: &[ChipKey]) -> Result<BandStats> {
    let loaded = keys
        .par_iter()
        .map(|k| load_chip(store, lots, k))
        .collect::<Result<Vec<_>>>()?;
    band_stats(loaded.iter().map(|(c, f)| (c, f)))
}

/// Normalized, cropped and resampled model inputs in `keys` order.
#[derive(Debug, Clone)]
pub struct PreparedInputs {
    pub keys: Vec<ChipKey>,
    pub inputs: Vec<Vec<f32>>,
    index: BTreeMap<ChipKey, usize>,
}

impl PreparedInputs {
    pub fn position(&self, lot_id: &str, date: NaiveDate) -> Option<usize> {
        self.index.get(&(lot_id.to_string(), date)).copied()
    }

    /// `(index_a, index_b, label)` triples for the model.
    pub fn index_pairs(&self, pairs: &[LabeledPair]) -> Result<Vec<(usize, usize, u8)>> {
        pairs
            .iter()
            .map(|p| {
                let a = self.position(&p.lot_id, p.date_a);
                let b = self.position(&p.lot_id, p.date_b);
                match (a, b) {
                    (Some(a), Some(b)) => Ok((a, b, p.label)),
                    _ => Err(Error::invalid(format!("no prepared input for pair {p:?}"))),
                }
            })
            .collect()
    }
}

pub fn prepare_inputs(
    store: &ChipStore,
    lots: &BTreeMap<String, ParkingLot>,
    keys: Vec<ChipKey>,
    stats: &BandStats,
    side: usize,
) -> Result<PreparedInputs> {
    let inputs = keys
        .par_iter()
        .map(|k| {
            let (chip, fp) = load_chip(store, lots, k)?;
            let normalized = normalize_chip(&chip, stats)?;
            prepare_input(&normalized, chip.shape(), &fp, side)
        })
        .collect::<Result<Vec<_>>>()?;
    let index = keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
    Ok(PreparedInputs { keys, inputs, index })
}

/// Pairs whose lot is on the given side of the split.
pub fn select_pairs(pairs: &[LabeledPair], lot_ids: &BTreeSet<&str>) -> Vec<LabeledPair> {
    pairs.iter().filter(|p| lot_ids.contains(p.lot_id.as_str())).cloned().collect()
}

/// Test pairs grouped by the size class recorded in the split.
pub fn test_pairs_by_class(pairs: &[LabeledPair], split: &SplitSpec) -> BTreeMap<SizeClass, Vec<LabeledPair>> {
    let test = split.test_lot_ids();
    let class_of = split.class_of();
    let mut out: BTreeMap<SizeClass, Vec<LabeledPair>> = BTreeMap::new();
    for p in pairs.iter().filter(|p| test.contains(p.lot_id.as_str())) {
        out.entry(class_of[p.lot_id.as_str()]).or_default().push(p.clone());
    }
    out
}
