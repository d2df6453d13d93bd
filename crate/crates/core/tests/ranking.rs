use chrono::NaiveDate;
use lotpair::evalrank::rank_dates;
use lotpair::pairnet::PairNetConfig;
use lotpair::rng::SplitMix64;
use lotpair::PairNetF64;

fn net(seed: u64) -> PairNetF64 {
    let mut c = PairNetConfig::default();
    c.encoder.side = 8;
    c.encoder.blocks = vec![4, 4];
    c.head_hidden = 6;
    let mut net = PairNetF64::init(c, seed).unwrap();
    // non-zero head biases so raw scores are not antisymmetric on their own
    let mut rng = SplitMix64::new(seed + 100);
    for name in ["head.fc1.bias", "head.fc2.bias"] {
        net.tensor_mut(name)
            .unwrap()
            .iter_mut()
            .for_each(|v| *v = rng.normal());
    }
    net
}

fn dates(n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2020, 2, 1).unwrap();
    (0..n)
        .map(|i| start + chrono::Duration::days(7 * i as i64))
        .collect()
}

#[test]
fn win_fractions_sum_to_half_the_date_count() {
    for seed in 0..5 {
        let net = net(seed);
        let mut rng = SplitMix64::new(seed);
        let n = 3 + seed as usize;
        let chips: Vec<_> = dates(n)
            .into_iter()
            .map(|d| (d, (0..4 * 64).map(|_| rng.normal()).collect::<Vec<f64>>()))
            .collect();
        let ranking = rank_dates(&net, &chips).unwrap();
        assert_eq!(ranking.len(), n);
        let total: f64 = ranking.iter().map(|e| e.win_fraction).sum();
        assert!((total - n as f64 / 2.0).abs() < 1e-12, "{total}");
        assert!(ranking
            .windows(2)
            .all(|w| w[0].win_fraction >= w[1].win_fraction));
        assert!(ranking.iter().all(|e| e.n_opponents == n - 1));
        // permuting the input order changes nothing
        let mut rev = chips.clone();
        rev.reverse();
        assert_eq!(rank_dates(&net, &rev).unwrap(), ranking);
    }
}

#[test]
fn identical_images_all_score_one_half() {
    let net = net(7);
    let mut rng = SplitMix64::new(1);
    let x: Vec<f64> = (0..4 * 64).map(|_| rng.normal()).collect();
    let chips: Vec<_> = dates(5).into_iter().map(|d| (d, x.clone())).collect();
    let ranking = rank_dates(&net, &chips).unwrap();
    assert!(ranking.iter().all(|e| e.win_fraction == 0.5));
    let order: Vec<_> = ranking.iter().map(|e| e.date).collect();
    assert_eq!(order, dates(5));
}
