use lotpair::pairnet::{mean_loss, train, PairNetConfig, PairSet, TrainConfig};
use lotpair::rng::SplitMix64;
use lotpair::PairNetF32;

fn config() -> PairNetConfig {
    let mut c = PairNetConfig::default();
    c.encoder.side = 16;
    c.encoder.blocks = vec![8, 16];
    c.head_hidden = 16;
    c
}

/// Inputs whose label is carried by the mean level of the first band.
fn toy_set(n: usize, seed: u64) -> (Vec<Vec<f32>>, Vec<(usize, usize, u8)>) {
    let mut rng = SplitMix64::new(seed);
    let len = config().input_len();
    let inputs: Vec<Vec<f32>> = (0..n)
        .map(|i| {
            let level = if i % 2 == 0 { -1.0 } else { 1.0 };
            (0..len)
                .map(|k| if k < 256 { level } else { 0.0 } + 0.3 * rng.normal() as f32)
                .collect()
        })
        .collect();
    let mut pairs = Vec::new();
    for i in (0..n).step_by(2) {
        pairs.push((i, i + 1, 0));
        pairs.push((i + 1, i, 1));
    }
    (inputs, pairs)
}

#[test]
fn zero_epochs_leave_parameters_unchanged() {
    let (inputs, pairs) = toy_set(8, 1);
    let mut net = PairNetF32::init(config(), 3).unwrap();
    let before = net.params().to_vec();
    let cfg = TrainConfig {
        epochs: 0,
        ..Default::default()
    };
    let history = train(
        &mut net,
        PairSet {
            inputs: &inputs,
            pairs: &pairs,
        },
        &cfg,
        |_| {},
    )
    .unwrap();
    assert!(history.epochs.is_empty());
    assert_eq!(net.params(), &before[..]);
}

#[test]
fn same_seed_is_bitwise_reproducible_and_parallel_matches_serial() {
    let (inputs, pairs) = toy_set(12, 2);
    let set = PairSet {
        inputs: &inputs,
        pairs: &pairs,
    };
    let run = |parallel: bool| {
        let mut net = PairNetF32::init(config(), 5).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 4,
            seed: 9,
            parallel,
            ..Default::default()
        };
        let h = train(&mut net, set, &cfg, |_| {}).unwrap();
        (
            net.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            h,
        )
    };
    let (a, ha) = run(false);
    let (b, hb) = run(false);
    let (c, _) = run(true);
    assert_eq!(a, b);
    assert_eq!(a, c);
    let losses = |h: &lotpair::pairnet::TrainHistory| {
        h.epochs
            .iter()
            .map(|e| e.mean_loss.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(losses(&ha), losses(&hb));
}

#[test]
fn different_seed_changes_the_result() {
    let (inputs, pairs) = toy_set(12, 2);
    let set = PairSet {
        inputs: &inputs,
        pairs: &pairs,
    };
    let run = |seed| {
        let mut net = PairNetF32::init(config(), 5).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            seed,
            ..Default::default()
        };
        train(&mut net, set, &cfg, |_| {}).unwrap();
        net.params().to_vec()
    };
    assert_ne!(run(1), run(2));
}

#[test]
fn training_reduces_loss_on_a_separable_toy_set() {
    let (inputs, pairs) = toy_set(40, 4);
    let set = PairSet {
        inputs: &inputs,
        pairs: &pairs,
    };
    let mut net = PairNetF32::init(config(), 7).unwrap();
    let initial = mean_loss(&net, set).unwrap();
    let cfg = TrainConfig {
        epochs: 10,
        batch_size: 8,
        ..Default::default()
    };
    let mut seen = 0;
    let history = train(&mut net, set, &cfg, |_| seen += 1).unwrap();
    assert_eq!(seen, 10);
    assert_eq!(history.epochs.len(), 10);
    let fin = mean_loss(&net, set).unwrap();
    assert!(fin < initial, "{initial} -> {fin}");
    assert!(fin < 0.3, "{fin}");
}

#[test]
fn rejects_bad_inputs() {
    let (inputs, pairs) = toy_set(4, 1);
    let mut net = PairNetF32::init(config(), 1).unwrap();
    let cfg = TrainConfig::default();
    assert!(train(
        &mut net,
        PairSet {
            inputs: &inputs,
            pairs: &[]
        },
        &cfg,
        |_| {}
    )
    .is_err());
    assert!(train(
        &mut net,
        PairSet {
            inputs: &inputs,
            pairs: &[(0, 9, 1)]
        },
        &cfg,
        |_| {}
    )
    .is_err());
    let bad = TrainConfig {
        learning_rate: 0.0,
        ..Default::default()
    };
    assert!(train(
        &mut net,
        PairSet {
            inputs: &inputs,
            pairs: &pairs
        },
        &bad,
        |_| {}
    )
    .is_err());
    let short = vec![vec![0.0f32; 3]; 2];
    assert!(train(
        &mut net,
        PairSet {
            inputs: &short,
            pairs: &[(0, 1, 1)]
        },
        &cfg,
        |_| {}
    )
    .is_err());
}
