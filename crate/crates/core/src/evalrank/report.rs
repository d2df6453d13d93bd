use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, auc};
use crate::error::{Error, Result};
use crate::geodata::SizeClass;
use crate::pairnet::PairNet;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub auc: f64,
    pub accuracy: f64,
    pub n_pairs: usize,
}

/// Per-class metrics in report order (large, medium, small) plus the pooled
/// totals over every evaluated pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: BTreeMap<SizeClass, ClassMetrics>,
    pub overall: ClassMetrics,
}

impl EvalReport {
    pub fn get(&self, class: SizeClass) -> Option<&ClassMetrics> {
        self.classes.get(&class)
    }
}

/// Scores and labels of one class.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoredPairs {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

fn metrics(scores: &[f64], labels: &[u8], threshold: f64) -> Result<ClassMetrics> {
    Ok(ClassMetrics {
        auc: auc(scores, labels)?,
        accuracy: accuracy(scores, labels, threshold)?,
        n_pairs: scores.len(),
    })
}

/// Builds a report from precomputed scores. Classes without pairs are left
/// out with a warning.
pub fn evaluate_scores(
    by_class: &BTreeMap<SizeClass, ScoredPairs>,
    threshold: f64,
) -> Result<EvalReport> {
    let mut classes = BTreeMap::new();
    let mut all = ScoredPairs::default();
    for (&class, set) in by_class {
        if set.scores.is_empty() {
            log::warn!("no test pairs for class {class}; omitted from the report");
            continue;
        }
        classes.insert(class, metrics(&set.scores, &set.labels, threshold)?);
        all.scores.extend_from_slice(&set.scores);
        all.labels.extend_from_slice(&set.labels);
    }
    if classes.is_empty() {
        return Err(Error::invalid("no class has test pairs"));
    }
    let overall = metrics(&all.scores, &all.labels, threshold)?;
    Ok(EvalReport { classes, overall })
}

/// Raw (unsymmetrized) model scores for each class's `(a, b, label)` pairs.
/// Every referenced input is encoded once.
pub fn score_pairs<T: Scalar>(
    net: &PairNet<T>,
    inputs: &[Vec<T>],
    pairs_by_class: &BTreeMap<SizeClass, Vec<(usize, usize, u8)>>,
) -> Result<BTreeMap<SizeClass, ScoredPairs>> {
    let needed: BTreeSet<usize> = pairs_by_class
        .values()
        .flatten()
        .flat_map(|&(a, b, _)| [a, b])
        .collect();
    if let Some(&bad) = needed.iter().find(|&&i| i >= inputs.len()) {
        return Err(Error::invalid(format!(
            "pair index {bad} past {} inputs",
            inputs.len()
        )));
    }
    let needed: Vec<usize> = needed.into_iter().collect();
    let encoded = needed
        .par_iter()
        .map(|&i| net.encode(&inputs[i]))
        .collect::<Result<Vec<_>>>()?;
    let embedding: BTreeMap<usize, &Vec<T>> = needed.iter().copied().zip(&encoded).collect();
    Ok(pairs_by_class
        .iter()
        .map(|(&class, pairs)| {
            let mut set = ScoredPairs::default();
            for &(a, b, y) in pairs {
                set.scores.push(
                    net.score_embeddings(embedding[&a], embedding[&b])
                        .value()
                        .to_f64_lossy(),
                );
                set.labels.push(y);
            }
            (class, set)
        })
        .collect())
}

/// Per-class AUC and accuracy of the model on held-out pairs.
pub fn evaluate_split<T: Scalar>(
    net: &PairNet<T>,
    inputs: &[Vec<T>],
    pairs_by_class: &BTreeMap<SizeClass, Vec<(usize, usize, u8)>>,
    threshold: f64,
) -> Result<EvalReport> {
    evaluate_scores(&score_pairs(net, inputs, pairs_by_class)?, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairnet::PairNetConfig;

    fn tiny() -> PairNetConfig {
        let mut c = PairNetConfig::default();
        c.encoder.side = 8;
        c.encoder.blocks = vec![2, 2];
        c.head_hidden = 4;
        c
    }

    #[test]
    fn zero_head_gives_chance_auc() {
        let mut net = PairNet::<f64>::init(tiny(), 1).unwrap();
        let head = net.encoder_range().end;
        net.params_mut()[head..].iter_mut().for_each(|v| *v = 0.0);
        let mut rng = crate::rng::SplitMix64::new(2);
        let inputs: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..4 * 64).map(|_| rng.normal()).collect())
            .collect();
        let mut by_class = BTreeMap::new();
        by_class.insert(
            SizeClass::Small,
            vec![(0, 1, 1), (1, 0, 0), (2, 3, 1), (3, 2, 0)],
        );
        by_class.insert(SizeClass::Large, vec![(4, 5, 1), (5, 4, 0)]);
        by_class.insert(SizeClass::Medium, vec![]);
        let report = evaluate_split(&net, &inputs, &by_class, 0.5).unwrap();
        assert_eq!(
            report.classes.keys().copied().collect::<Vec<_>>(),
            vec![SizeClass::Large, SizeClass::Small]
        );
        for m in report.classes.values() {
            assert_eq!(m.auc, 0.5);
            assert_eq!(m.accuracy, 0.5);
        }
        assert_eq!(report.overall.n_pairs, 6);
    }

    #[test]
    fn report_order_is_large_medium_small() {
        let set = ScoredPairs {
            scores: vec![0.9, 0.1],
            labels: vec![1, 0],
        };
        let by_class: BTreeMap<_, _> = [SizeClass::Small, SizeClass::Medium, SizeClass::Large]
            .into_iter()
            .map(|c| (c, set.clone()))
            .collect();
        let report = evaluate_scores(&by_class, 0.5).unwrap();
        let order: Vec<_> = report.classes.keys().map(|c| c.as_str()).collect();
        assert_eq!(order, ["large", "medium", "small"]);
    }

    #[test]
    fn all_empty_is_an_error() {
        let mut by_class = BTreeMap::new();
        by_class.insert(SizeClass::Large, ScoredPairs::default());
        assert!(evaluate_scores(&by_class, 0.5).is_err());
    }
}
