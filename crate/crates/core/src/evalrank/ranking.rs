use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairnet::PairNet;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingEntry {
    pub date: NaiveDate,
    pub period_tag: String,
    /// Mean symmetrized score against every other date (soft Borda count).
    pub win_fraction: f64,
    pub n_opponents: usize,
}

/// Lowercase three-letter weekday, the default period tag.
pub fn weekday_tag(date: NaiveDate) -> String {
    date.weekday().to_string().to_lowercase()
}

/// Ranks dates from a pairwise preference `p(i, j)` that must satisfy
/// `p(i, j) + p(j, i) = 1`. Sorted by win fraction descending, earlier date
/// first on ties.
pub fn rank_from_pairwise(
    dates: &[NaiveDate],
    p: impl Fn(usize, usize) -> f64,
) -> Result<Vec<RankingEntry>> {
    if dates.len() < 2 {
        return Err(Error::invalid(format!(
            "ranking needs at least 2 dates, got {}",
            dates.len()
        )));
    }
    let mut order: Vec<usize> = (0..dates.len()).collect();
    order.sort_by_key(|&i| dates[i]);
    if let Some(w) = order.windows(2).find(|w| dates[w[0]] == dates[w[1]]) {
        return Err(Error::invalid(format!("duplicate date {}", dates[w[0]])));
    }
    let n = dates.len();
    let mut entries: Vec<RankingEntry> = order
        .iter()
        .map(|&i| {
            let total: f64 = order.iter().filter(|&&j| j != i).map(|&j| p(i, j)).sum();
            RankingEntry {
                date: dates[i],
                period_tag: weekday_tag(dates[i]),
                win_fraction: total / (n - 1) as f64,
                n_opponents: n - 1,
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        b.win_fraction
            .total_cmp(&a.win_fraction)
            .then(a.date.cmp(&b.date))
    });
    Ok(entries)
}

/// All-pairs date ranking of one lot's prepared chips with symmetrized scores.
pub fn rank_dates<T: Scalar>(
    net: &PairNet<T>,
    chips: &[(NaiveDate, Vec<T>)],
) -> Result<Vec<RankingEntry>> {
    let embeddings = chips
        .par_iter()
        .map(|(_, x)| net.encode(x))
        .collect::<Result<Vec<_>>>()?;
    let n = chips.len();
    let raw: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n, k % n);
            if i == j {
                0.5
            } else {
                net.score_embeddings(&embeddings[i], &embeddings[j])
                    .value()
                    .to_f64_lossy()
            }
        })
        .collect();
    let dates: Vec<NaiveDate> = chips.iter().map(|(d, _)| *d).collect();
    rank_from_pairwise(&dates, |i, j| (raw[i * n + j] + 1.0 - raw[j * n + i]) / 2.0)
}

/// Tags dates before `boundary` as `pre` and the rest as `post`.
pub fn tag_periods(entries: &mut [RankingEntry], boundary: NaiveDate) {
    for e in entries {
        e.period_tag = if e.date < boundary { "pre" } else { "post" }.to_string();
    }
}
