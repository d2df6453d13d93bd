//! Weekend pairing, weak labels, and lot-level train/test splits.
//!
//! A Saturday chip is assumed to show a fuller lot than the following Sunday
//! chip of the same lot. The pair (Saturday, Sunday) is labeled 1 and the
//! swapped pair 0.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, Days, NaiveDate, Weekday};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodata::SizeClass;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairingWindow {
    /// Saturday with the Sunday immediately after it.
    #[default]
    SameWeekend,
    /// Every Saturday with every Sunday of the lot.
    CrossWeekend,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WeekendPair {
    pub lot_id: String,
    pub sat_date: NaiveDate,
    pub sun_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub lot_id: String,
    pub date_a: NaiveDate,
    pub date_b: NaiveDate,
    pub label: u8,
}

/// The weak label implied by the dates alone: 1 iff the first date is the Saturday.
pub fn weak_label(date_a: NaiveDate) -> u8 {
    (date_a.weekday() == Weekday::Sat) as u8
}

/// Saturday/Sunday pairs among the QC-surviving dates of one lot, sorted by Saturday.
pub fn enumerate_weekend_pairs(
    lot_id: &str,
    dates: &[NaiveDate],
    window: PairingWindow,
) -> Vec<WeekendPair> {
    let set: BTreeSet<NaiveDate> = dates.iter().copied().collect();
    let saturdays = set.iter().filter(|d| d.weekday() == Weekday::Sat);
    let mut out = Vec::new();
    match window {
        PairingWindow::SameWeekend => {
            for &sat in saturdays {
                let sun = sat + Days::new(1);
                if set.contains(&sun) {
                    out.push(WeekendPair {
                        lot_id: lot_id.to_string(),
                        sat_date: sat,
                        sun_date: sun,
                    });
                }
            }
        }
        PairingWindow::CrossWeekend => {
            let sundays: Vec<NaiveDate> = set
                .iter()
                .copied()
                .filter(|d| d.weekday() == Weekday::Sun)
                .collect();
            for &sat in saturdays {
                for &sun in &sundays {
                    out.push(WeekendPair {
                        lot_id: lot_id.to_string(),
                        sat_date: sat,
                        sun_date: sun,
                    });
                }
            }
        }
    }
    out
}

/// (Saturday, Sunday, 1) per pair, followed by (Sunday, Saturday, 0) when
/// `include_both_orders`.
pub fn make_labeled_pairs(pairs: &[WeekendPair], include_both_orders: bool) -> Vec<LabeledPair> {
    let mut out = Vec::with_capacity(pairs.len() * if include_both_orders { 2 } else { 1 });
    for p in pairs {
        out.push(LabeledPair {
            lot_id: p.lot_id.clone(),
            date_a: p.sat_date,
            date_b: p.sun_date,
            label: 1,
        });
        if include_both_orders {
            out.push(LabeledPair {
                lot_id: p.lot_id.clone(),
                date_a: p.sun_date,
                date_b: p.sat_date,
                label: 0,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Lot-level split, stratified by size class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub ratio: f64,
    pub classes: BTreeMap<SizeClass, ClassSplit>,
}

impl SplitSpec {
    pub fn train_lot_ids(&self) -> BTreeSet<&str> {
        self.classes
            .values()
            .flat_map(|c| c.train.iter().map(String::as_str))
            .collect()
    }

    pub fn test_lot_ids(&self) -> BTreeSet<&str> {
        self.classes
            .values()
            .flat_map(|c| c.test.iter().map(String::as_str))
            .collect()
    }

    /// Size class of every lot in the split.
    pub fn class_of(&self) -> BTreeMap<&str, SizeClass> {
        let mut m = BTreeMap::new();
        for (&class, split) in &self.classes {
            for id in split.train.iter().chain(&split.test) {
                m.insert(id.as_str(), class);
            }
        }
        m
    }
}

/// Test-side count: round-half-up of `(1 - ratio) * n`, at least 1 when `n >= 2`.
pub fn test_count(n: usize, ratio: f64) -> usize {
    if n < 2 {
        return 0;
    }
    let raw = ((1.0 - ratio) * n as f64 + 0.5 + 1e-9).floor() as usize;
    raw.max(1)
}

/// Splits lots per size class. Classes are processed in the order large,
/// medium, small from a single SplitMix64 stream seeded with `seed`; within a
/// class the sorted ids are Fisher–Yates shuffled and the first
/// [`test_count`] go to test.
pub fn split_lots(lots: &[(String, SizeClass)], ratio: f64, seed: u64) -> Result<SplitSpec> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!(
            "split ratio must be in (0, 1), got {ratio}"
        )));
    }
    let mut by_class: BTreeMap<SizeClass, BTreeSet<&str>> = BTreeMap::new();
    let mut seen: BTreeMap<&str, SizeClass> = BTreeMap::new();
    for (id, class) in lots {
        if let Some(prev) = seen.insert(id, *class) {
            if prev != *class {
                return Err(Error::invalid(format!(
                    "lot {id} listed with two size classes"
                )));
            }
        }
        by_class.entry(*class).or_default().insert(id);
    }
    let mut rng = SplitMix64::new(seed);
    let mut classes = BTreeMap::new();
    for (class, ids) in by_class {
        let mut ids: Vec<String> = ids.into_iter().map(str::to_string).collect();
        if ids.len() == 1 {
            warn!("size class {class} has a single lot; it goes to train");
        }
        rng.shuffle(&mut ids);
        let n_test = test_count(ids.len(), ratio);
        let mut test = ids[..n_test].to_vec();
        let mut train = ids[n_test..].to_vec();
        test.sort();
        train.sort();
        classes.insert(class, ClassSplit { train, test });
    }
    Ok(SplitSpec {
        seed,
        ratio,
        classes,
    })
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn lot_list() -> impl Strategy<Value = Vec<(String, SizeClass)>> {
        prop::collection::btree_map("[a-z]{1,6}", 0usize..3, 1..40).prop_map(|m| {
            m.into_iter()
                .map(|(id, c)| (id, SizeClass::ALL[c]))
                .collect()
        })
    }

    fn day_offsets() -> impl Strategy<Value = Vec<u64>> {
        prop::collection::vec(0u64..120, 0..40)
    }

    proptest! {
        #[test]
        fn split_partitions_each_class(lots in lot_list(), seed in any::<u64>(), ratio in 0.5f64..0.95) {
            let split = split_lots(&lots, ratio, seed).unwrap();
            prop_assert_eq!(&split, &split_lots(&lots, ratio, seed).unwrap());
            let train = split.train_lot_ids();
            let test = split.test_lot_ids();
            prop_assert!(train.is_disjoint(&test));
            prop_assert_eq!(train.len() + test.len(), lots.len());
            for (class, cs) in &split.classes {
                let n = lots.iter().filter(|l| l.1 == *class).count();
                prop_assert_eq!(cs.test.len(), test_count(n, ratio));
                prop_assert_eq!(cs.train.len() + cs.test.len(), n);
            }
        }

        #[test]
        fn labels_are_recomputable_and_closed_under_swap(offsets in day_offsets(), cross in any::<bool>()) {
            let epoch = NaiveDate::from_ymd_opt(2021, 1, 2).unwrap();
            let dates: Vec<NaiveDate> = offsets.iter().map(|&k| epoch + Days::new(k)).collect();
            let window = if cross { PairingWindow::CrossWeekend } else { PairingWindow::SameWeekend };
            let pairs = enumerate_weekend_pairs("lot", &dates, window);
            let labeled = make_labeled_pairs(&pairs, true);
            let set: BTreeSet<(NaiveDate, NaiveDate, u8)> =
                labeled.iter().map(|p| (p.date_a, p.date_b, p.label)).collect();
            for p in &labeled {
                prop_assert!(dates.contains(&p.date_a) && dates.contains(&p.date_b));
                prop_assert_ne!(p.date_a, p.date_b);
                prop_assert_eq!(p.label, weak_label(p.date_a));
                prop_assert!(set.contains(&(p.date_b, p.date_a, 1 - p.label)));
            }
        }
    }
}
