use crate::error::{Error, Result};

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::invalid(format!("label must be 0 or 1, got {l}")));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("non-finite score {s}")));
    }
    Ok(())
}

/// ROC-AUC as the Mann-Whitney statistic: the fraction of (positive, negative)
/// pairs ordered correctly, ties counting one half. Midranks over a sort make it
/// `O(n log n)`; rank sums are half-integers, so the result is exact for any
/// realistic `n`.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid(format!(
            "AUC needs both classes, got {n_pos} positive and {n_neg} negative"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // twice the positive rank sum keeps midranks integral
    let mut rank_sum_x2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j share the midrank (i + 1 + j) / 2
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k] == 1).count() as u64;
        rank_sum_x2 += pos_in_group * (i + 1 + j) as u64;
        i = j;
    }
    let (p, n) = (n_pos as u64, n_neg as u64);
    let u_x2 = rank_sum_x2 - p * (p + 1);
    Ok(u_x2 as f64 / (2 * p * n) as f64)
}

/// Fraction of scores whose strict-threshold prediction equals the label.
pub fn accuracy(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    check_inputs(scores, labels)?;
    if scores.is_empty() {
        return Err(Error::invalid("accuracy of an empty set"));
    }
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &l)| crate::pairnet::predict_label(s, threshold) == l)
        .count();
    Ok(correct as f64 / scores.len() as f64)
}
