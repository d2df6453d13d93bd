use super::{Footprint, ImageChip};
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 64;

/// Normalized luminance histogram over [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    probs: Vec<f64>,
}

impl Histogram {
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::invalid(
                "histogram probabilities must be non-negative",
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "histogram sums to {total}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn bins(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Histogram of per-pixel band-mean luminance over footprint pixels. Bin `k`
/// covers `[k/K, (k+1)/K)`; values at or above 1 land in the top bin.
pub fn luminance_histogram(
    chip: &ImageChip,
    footprint: &Footprint,
    bins: usize,
) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    footprint.check_shape(chip.height, chip.width)?;
    let n = footprint.count();
    if n == 0 {
        return Err(Error::invalid("empty footprint"));
    }
    let mut counts = vec![0usize; bins];
    for r in 0..chip.height {
        for c in 0..chip.width {
            if footprint.contains(r, c) {
                let lum = chip.luminance(r, c);
                let k = ((lum * bins as f64).floor().max(0.0) as usize).min(bins - 1);
                counts[k] += 1;
            }
        }
    }
    Ok(Histogram {
        probs: counts.into_iter().map(|c| c as f64 / n as f64).collect(),
    })
}

/// Total variation distance, `0.5 * sum |p_i - q_i|`.
pub fn histogram_distance(a: &Histogram, b: &Histogram) -> Result<f64> {
    if a.bins() != b.bins() {
        return Err(Error::invalid(format!(
            "histograms have {} and {} bins",
            a.bins(),
            b.bins()
        )));
    }
    let l1: f64 = a
        .probs
        .iter()
        .zip(&b.probs)
        .map(|(p, q)| (p - q).abs())
        .sum();
    Ok((0.5 * l1).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::GeoTransform;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn chip(h: usize, w: usize, f: impl Fn(usize, usize, usize) -> f32) -> ImageChip {
        let mut px = Vec::new();
        for b in 0..4 {
            for r in 0..h {
                for c in 0..w {
                    px.push(f(b, r, c));
                }
            }
        }
        let gt = GeoTransform {
            origin_lon: 0.0,
            origin_lat: 0.0,
            dlon: 1e-5,
            dlat: -1e-5,
        };
        ImageChip::new("l", None, (4, h, w), 3.0, gt, px).unwrap()
    }

    fn hist(v: &[f64]) -> Histogram {
        let mut p = v.to_vec();
        p.resize(8, 0.0);
        Histogram::from_probs(p).unwrap()
    }

    #[test]
    fn constant_chip_is_one_hot() {
        let c = chip(4, 4, |_, _, _| 0.5);
        let h = luminance_histogram(&c, &Footprint::full(4, 4), 64).unwrap();
        assert_eq!(h.probs()[32], 1.0);
        assert_eq!(h.probs().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn two_level_chip() {
        let c = chip(2, 4, |_, _, col| if col < 2 { 0.1 } else { 0.9 });
        let h = luminance_histogram(&c, &Footprint::full(2, 4), 64).unwrap();
        assert_eq!(h.probs()[6], 0.5);
        assert_eq!(h.probs()[57], 0.5);
    }

    #[test]
    fn values_at_one_clamp_to_top_bin() {
        let c = chip(1, 1, |_, _, _| 1.0);
        let h = luminance_histogram(&c, &Footprint::full(1, 1), 16).unwrap();
        assert_eq!(h.probs()[15], 1.0);
    }

    #[test]
    fn random_chip_matches_binning_oracle() {
        let mut rng = SplitMix64::new(11);
        let vals: Vec<f32> = (0..4 * 9 * 7).map(|_| rng.next_f64() as f32).collect();
        let c = chip(9, 7, |b, r, col| vals[(b * 9 + r) * 7 + col]);
        let fp = Footprint::from_fn(9, 7, |r, col| (r + col) % 3 != 0);
        let h = luminance_histogram(&c, &fp, 64).unwrap();
        let mut oracle = [0f64; 64];
        let mut n = 0.0;
        for r in 0..9 {
            for col in 0..7 {
                if (r + col) % 3 == 0 {
                    continue;
                }
                let lum: f64 = (0..4)
                    .map(|b| vals[(b * 9 + r) * 7 + col] as f64)
                    .sum::<f64>()
                    / 4.0;
                oracle[(lum * 64.0) as usize] += 1.0;
                n += 1.0;
            }
        }
        for k in 0..64 {
            assert!((h.probs()[k] - oracle[k] / n).abs() < 1e-15);
        }
        assert!((h.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn distance_examples() {
        let a = hist(&[0.5, 0.5]);
        let b = hist(&[0.0, 0.5, 0.5]);
        assert_eq!(histogram_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(
            histogram_distance(&hist(&[1.0]), &hist(&[0.0, 1.0])).unwrap(),
            1.0
        );
        assert!((histogram_distance(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        let other = Histogram::from_probs(vec![1.0, 0.0]).unwrap();
        assert!(histogram_distance(&a, &other).is_err());
    }

    fn simplex(raw: Vec<f64>) -> Histogram {
        let s: f64 = raw.iter().sum();
        Histogram {
            probs: raw.iter().map(|x| x / s).collect(),
        }
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(
            a in proptest::collection::vec(0.01f64..1.0, 16),
            b in proptest::collection::vec(0.01f64..1.0, 16),
            c in proptest::collection::vec(0.01f64..1.0, 16),
        ) {
            let (a, b, c) = (simplex(a), simplex(b), simplex(c));
            let ab = histogram_distance(&a, &b).unwrap();
            let ba = histogram_distance(&b, &a).unwrap();
            let bc = histogram_distance(&b, &c).unwrap();
            let ac = histogram_distance(&a, &c).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(histogram_distance(&a, &a).unwrap(), 0.0);
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert!(ab > 0.0 || a == b);
        }
    }
}
