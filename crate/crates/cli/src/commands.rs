use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use lotpair::evalrank::{
    evaluate_split, export_ranking, export_report, parse_ranking_csv, rank_dates, tag_periods, ExportFormat,
};
use lotpair::geodata::{
    build_spatial_index, lots_to_geojson, match_poi_to_lot, parse_parking_collection, parse_poi_collection,
    pois_to_geojson, MatchRecord, PointOfInterest, SizeClass, DEFAULT_PROXIMITY_M,
};
use lotpair::imaging::{
    normalize_chip, rasterize_footprint, BandStats, ChipStore, QcDecision, QcOptions, RejectReason,
    DEFAULT_TV_THRESHOLD,
};
use lotpair::pairnet::{
    load_checkpoint, prepare_input, save_checkpoint, train as fit, Activation, EncoderConfig, PairNet,
    PairNetConfig, PairSet, TrainConfig, DEFAULT_THRESHOLD,
};
use lotpair::pipeline::{self, ChipKey};
use lotpair::synthscene::{gen_benchmark, BenchmarkConfig, BenchmarkManifest};
use lotpair::weakpairs::{split_lots, LabeledPair, PairingWindow, SplitSpec};
use lotpair::{Error, Result};

use crate::config::{require, Settings};
use crate::{EvalArgs, IngestArgs, MatchArgs, PairsArgs, PlotArgs, QcArgs, RankArgs, SplitArgs, SynthArgs, TrainArgs};

pub const BAND_STATS_FILE: &str = "band_stats.json";
pub const TRAIN_LOG_FILE: &str = "train_log.ndjson";

#[derive(Debug, Clone, Copy)]
pub enum Layer {
    Poi,
    Parking,
}

fn shown(p: &Path) -> String {
    p.display().to_string()
}

fn load_lots(path: &Path) -> Result<BTreeMap<String, lotpair::geodata::ParkingLot>> {
    pipeline::lots_by_id(pipeline::read_parking(require(path)?)?)
}

fn parse_window(raw: &str) -> Result<PairingWindow> {
    match raw {
        "same-weekend" => Ok(PairingWindow::SameWeekend),
        "cross-weekend" => Ok(PairingWindow::CrossWeekend),
        other => Err(Error::InvalidInput(format!(
            "window must be same-weekend or cross-weekend, got `{other}`"
        ))),
    }
}

fn parse_activation(raw: &str) -> Result<Activation> {
    match raw {
        "silu" => Ok(Activation::Silu),
        "relu" => Ok(Activation::Relu),
        other => Err(Error::InvalidInput(format!("activation must be silu or relu, got `{other}`"))),
    }
}

fn parse_blocks(raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|w| {
            w.trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad block width `{w}` in `{raw}`")))
        })
        .collect()
}

fn source_bytes(s: &Settings, a: &IngestArgs, layer: Layer) -> Result<Vec<u8>> {
    if let Some(input) = &a.input {
        return pipeline::read_bytes(require(input)?);
    }
    let (Some(bbox), Some(fixtures)) = (&a.bbox, &a.fixtures) else {
        let _ = s;
        return Err(Error::InvalidInput(format!(
            "ingest-{}: give --input FILE or --bbox S,W,N,E with --fixtures DIR",
            match layer {
                Layer::Poi => "poi",
                Layer::Parking => "parking",
            }
        )));
    };
    let bbox: [f64; 4] = bbox
        .as_slice()
        .try_into()
        .map_err(|_| Error::InvalidInput("--bbox takes four numbers".into()))?;
    let endpoint = a.endpoint.as_deref().unwrap_or(lotpair::geodata::fetch::DEFAULT_ENDPOINT);
    let store = lotpair::geodata::fetch::ReplayStore::new(fixtures);
    if a.live {
        crate::commands::live::fetch_and_record(&store, endpoint, bbox)?;
    }
    Ok(lotpair::geodata::fetch::replay_geojson(&store, endpoint, bbox)?.into_bytes())
}

pub fn ingest(s: &Settings, a: IngestArgs, layer: Layer) -> Result<Value> {
    let bytes = source_bytes(s, &a, layer)?;
    match layer {
        Layer::Poi => {
            let out = s.path(a.out, "poi_file", "pois.geojson");
            let parsed = parse_poi_collection(&bytes)?;
            for w in &parsed.warnings {
                log::warn!("{w}");
            }
            pipeline::write_text(&out, &pois_to_geojson(&parsed.items))?;
            Ok(json!({"command": "ingest-poi", "pois": parsed.items.len(),
                      "skipped": parsed.warnings.len(), "out": shown(&out)}))
        }
        Layer::Parking => {
            let out = s.path(a.out, "parking_file", "parking.geojson");
            let parsed = parse_parking_collection(&bytes)?;
            for w in &parsed.warnings {
                log::warn!("{w}");
            }
            pipeline::lots_by_id(parsed.items.clone())?;
            let mut by_class: BTreeMap<SizeClass, usize> = BTreeMap::new();
            for lot in &parsed.items {
                *by_class.entry(lot.size_class).or_default() += 1;
            }
            pipeline::write_text(&out, &lots_to_geojson(&parsed.items))?;
            Ok(json!({"command": "ingest-parking", "lots": parsed.items.len(),
                      "skipped": parsed.warnings.len(), "by_class": by_class, "out": shown(&out)}))
        }
    }
}

pub fn match_pois(s: &Settings, a: MatchArgs) -> Result<Value> {
    let pois_path = s.path(a.pois, "poi_file", "pois.geojson");
    let parking_path = s.path(a.parking, "parking_file", "parking.geojson");
    let threshold = s.value(a.proximity_m, "proximity_m", DEFAULT_PROXIMITY_M)?;
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::InvalidInput(format!("proximity must be positive, got {threshold}")));
    }
    let pois: Vec<PointOfInterest> = {
        let parsed = parse_poi_collection(&pipeline::read_bytes(require(&pois_path)?)?)?;
        for w in &parsed.warnings {
            log::warn!("{}: {w}", pois_path.display());
        }
        parsed.items
    };
    let lots = pipeline::read_parking(require(&parking_path)?)?;
    let index = build_spatial_index(lots)?;
    let records: Vec<MatchRecord> = pois
        .iter()
        .filter_map(|p| match_poi_to_lot(p, &index, threshold))
        .map(|m| {
            let lot = index.lots().iter().find(|l| l.id == m.lot_id).expect("matched lot is indexed");
            MatchRecord::new(&m, lot)
        })
        .collect();
    let out = s.path(a.out, "matches_file", "matches.ndjson");
    pipeline::write_ndjson(&out, &records)?;
    Ok(json!({"command": "match", "pois": pois.len(), "matched": records.len(),
              "unmatched": pois.len() - records.len(), "out": shown(&out)}))
}

pub fn qc(s: &Settings, a: QcArgs) -> Result<Value> {
    let lots = load_lots(&s.path(a.parking, "parking_file", "parking.geojson"))?;
    let store = ChipStore::new(s.chip_store(a.chips));
    require(store.root())?;
    let opts = QcOptions {
        tv_threshold: s.value(a.tv_threshold, "tv_threshold", DEFAULT_TV_THRESHOLD)?,
        ..QcOptions::default()
    };
    let decisions = pipeline::qc_store(&store, &lots, &opts)?;
    let out = s.path(a.out, "qc_file", "qc.ndjson");
    pipeline::write_ndjson(&out, &decisions)?;
    let count = |r: RejectReason| decisions.iter().filter(|d| d.reason == Some(r)).count();
    Ok(json!({"command": "qc", "images": decisions.len(),
              "kept": decisions.iter().filter(|d| d.kept).count(),
              "rejected": {"coverage": count(RejectReason::Coverage), "cloud": count(RejectReason::Cloud),
                           "brightness": count(RejectReason::Brightness)},
              "out": shown(&out)}))
}

pub fn pairs(s: &Settings, a: PairsArgs) -> Result<Value> {
    let lots = load_lots(&s.path(a.parking, "parking_file", "parking.geojson"))?;
    let store = ChipStore::new(s.chip_store(a.chips));
    require(store.root())?;
    let window = parse_window(&s.value(a.window, "window", "same-weekend".to_string())?)?;
    let both = !a.single_order && s.value(None, "both_orders", true)?;
    let kept = match &a.qc {
        Some(path) => Some(pipeline::kept_dates(&pipeline::read_ndjson::<QcDecision>(require(path)?)?)),
        None => None,
    };
    let pairs = pipeline::build_pairs(&store, &lots, kept.as_ref(), window, both)?;
    let out = s.path(a.out, "pairs_file", "pairs.ndjson");
    pipeline::write_ndjson(&out, &pairs)?;
    let n_lots = pairs.iter().map(|p| p.lot_id.as_str()).collect::<BTreeSet<_>>().len();
    Ok(json!({"command": "pairs", "lots": n_lots, "pairs": pairs.len(),
              "positive": pairs.iter().filter(|p| p.label == 1).count(), "out": shown(&out)}))
}

pub fn split(s: &Settings, a: SplitArgs) -> Result<Value> {
    let lots = load_lots(&s.path(a.parking, "parking_file", "parking.geojson"))?;
    let pairs: Vec<LabeledPair> = pipeline::read_ndjson(require(&s.path(a.pairs, "pairs_file", "pairs.ndjson"))?)?;
    let with_pairs: BTreeSet<&str> = pairs.iter().map(|p| p.lot_id.as_str()).collect();
    let listed = with_pairs
        .iter()
        .map(|id| {
            lots.get(*id)
                .map(|l| (l.id.clone(), l.size_class))
                .ok_or_else(|| Error::InvalidInput(format!("pair lot {id} is not in the parking file")))
        })
        .collect::<Result<Vec<_>>>()?;
    let spec = split_lots(
        &listed,
        s.value(a.ratio, "split_ratio", 0.8)?,
        s.value(a.seed, "seed", 0)?,
    )?;
    let out = s.path(a.out, "split_file", "split.json");
    pipeline::write_json(&out, &spec)?;
    let classes: BTreeMap<SizeClass, Value> = spec
        .classes
        .iter()
        .map(|(c, v)| (*c, json!({"train": v.train.len(), "test": v.test.len()})))
        .collect();
    Ok(json!({"command": "split", "classes": classes, "out": shown(&out)}))
}

struct Loaded {
    lots: BTreeMap<String, lotpair::geodata::ParkingLot>,
    store: ChipStore,
    pairs: Vec<LabeledPair>,
    split: SplitSpec,
}

fn load_common(
    s: &Settings,
    parking: Option<PathBuf>,
    chips: Option<PathBuf>,
    pairs: Option<PathBuf>,
    split: Option<PathBuf>,
) -> Result<Loaded> {
    let lots = load_lots(&s.path(parking, "parking_file", "parking.geojson"))?;
    let store = ChipStore::new(s.chip_store(chips));
    require(store.root())?;
    let pairs = pipeline::read_ndjson(require(&s.path(pairs, "pairs_file", "pairs.ndjson"))?)?;
    let split = pipeline::read_json(require(&s.path(split, "split_file", "split.json"))?)?;
    Ok(Loaded { lots, store, pairs, split })
}

pub fn train(s: &Settings, a: TrainArgs) -> Result<Value> {
    let d = load_common(s, a.parking, a.chips, a.pairs, a.split)?;
    let defaults = PairNetConfig::default();
    let blocks = match a.blocks {
        Some(raw) => parse_blocks(&raw)?,
        None => match s.value(None, "blocks", String::new())?.as_str() {
            "" => defaults.encoder.blocks.clone(),
            raw => parse_blocks(raw)?,
        },
    };
    let config = PairNetConfig {
        encoder: EncoderConfig {
            side: s.value(a.input_side, "input_side", defaults.encoder.side)?,
            blocks,
            activation: parse_activation(&s.value(a.activation, "activation", "silu".to_string())?)?,
            ..defaults.encoder.clone()
        },
        head_hidden: s.value(a.head_hidden, "head_hidden", defaults.head_hidden)?,
    };
    config.validate()?;
    let td = TrainConfig::default();
    let cfg = TrainConfig {
        learning_rate: s.value(a.learning_rate, "learning_rate", td.learning_rate)?,
        epochs: s.value(a.epochs, "epochs", td.epochs)?,
        batch_size: s.value(a.batch_size, "batch_size", td.batch_size)?,
        seed: s.value(a.seed, "seed", td.seed)?,
        parallel: a.parallel,
        ..td
    };
    let train_pairs = pipeline::select_pairs(&d.pairs, &d.split.train_lot_ids());
    if train_pairs.is_empty() {
        return Err(Error::InvalidInput("no pairs belong to train-side lots".into()));
    }
    let keys: Vec<ChipKey> = pipeline::pair_chips(&train_pairs);
    let stats = pipeline::fit_band_stats(&d.store, &d.lots, &keys)?;
    if stats.means.len() != config.encoder.bands {
        return Err(Error::InvalidInput(format!(
            "chips have {} bands, model expects {}",
            stats.means.len(),
            config.encoder.bands
        )));
    }
    let prepared = pipeline::prepare_inputs(&d.store, &d.lots, keys, &stats, config.encoder.side)?;
    let indexed = prepared.index_pairs(&train_pairs)?;
    let mut net = PairNet::<f32>::init(config, cfg.seed)?;
    let history = fit(
        &mut net,
        PairSet { inputs: &prepared.inputs, pairs: &indexed },
        &cfg,
        |e| log::info!("epoch {} mean loss {:.5} ({} ms)", e.epoch, e.mean_loss, e.wall_ms),
    )?;
    let out = s.path(a.out, "model_dir", "model");
    save_checkpoint(&net, cfg.seed, &out)?;
    pipeline::write_json(&out.join(BAND_STATS_FILE), &stats)?;
    pipeline::write_ndjson(&out.join(TRAIN_LOG_FILE), &history.epochs)?;
    Ok(json!({"command": "train", "pairs": indexed.len(), "chips": prepared.inputs.len(),
              "params": net.num_params(), "epochs": history.epochs.len(),
              "final_loss": history.epochs.last().map(|e| e.mean_loss), "out": shown(&out)}))
}

fn load_model(dir: &Path) -> Result<(PairNet<f32>, BandStats)> {
    let (net, _) = load_checkpoint::<f32>(require(dir)?)?;
    let stats: BandStats = pipeline::read_json(require(&dir.join(BAND_STATS_FILE))?)?;
    Ok((net, stats))
}

pub fn eval(s: &Settings, a: EvalArgs) -> Result<Value> {
    let d = load_common(s, a.parking, a.chips, a.pairs, a.split)?;
    let (net, stats) = load_model(&s.path(a.model, "model_dir", "model"))?;
    let threshold = s.value(a.score_threshold, "score_threshold", DEFAULT_THRESHOLD)?;
    let mut by_class = pipeline::test_pairs_by_class(&d.pairs, &d.split);
    if let Some(path) = &a.truth {
        let manifest: BenchmarkManifest = pipeline::read_json(require(path)?)?;
        for pairs in by_class.values_mut() {
            *pairs = manifest.truth_labels(pairs)?;
        }
    }
    let keys = pipeline::pair_chips(by_class.values().flatten());
    let prepared = pipeline::prepare_inputs(&d.store, &d.lots, keys, &stats, net.config().encoder.side)?;
    let indexed = by_class
        .iter()
        .map(|(c, p)| Ok((*c, prepared.index_pairs(p)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let report = evaluate_split(&net, &prepared.inputs, &indexed, threshold)?;
    let out = s.path(a.out, "report_file", "report.json");
    pipeline::write_json(&out, &report)?;
    let csv = out.with_extension("csv");
    export_report(&report, &csv)?;
    let auc: BTreeMap<SizeClass, f64> = report.classes.iter().map(|(c, m)| (*c, m.auc)).collect();
    let labels = if a.truth.is_some() { "truth" } else { "weak" };
    Ok(json!({"command": "eval", "labels": labels, "auc": auc, "overall_auc": report.overall.auc,
              "overall_accuracy": report.overall.accuracy, "out": shown(&out), "csv": shown(&csv)}))
}

pub fn rank(s: &Settings, a: RankArgs) -> Result<Value> {
    let lots = load_lots(&s.path(a.parking, "parking_file", "parking.geojson"))?;
    let lot = lots
        .get(&a.lot)
        .ok_or_else(|| Error::InvalidInput(format!("lot {} is not in the parking file", a.lot)))?;
    let store = ChipStore::new(s.chip_store(a.chips));
    require(store.root())?;
    let (net, stats) = load_model(&s.path(a.model, "model_dir", "model"))?;
    let mut dates = store.dates(&a.lot)?;
    if let Some(path) = &a.qc {
        let kept = pipeline::kept_dates(&pipeline::read_ndjson::<QcDecision>(require(path)?)?);
        let allowed = kept.get(&a.lot).cloned().unwrap_or_default();
        dates.retain(|d| allowed.contains(d));
    }
    let side = net.config().encoder.side;
    let chips = dates
        .iter()
        .map(|&date| {
            let (chip, _) = store.read(&a.lot, date)?;
            let fp = rasterize_footprint(&lot.geometry, &chip.geotransform, chip.height, chip.width)?;
            let x = prepare_input(&normalize_chip(&chip, &stats)?, chip.shape(), &fp, side)?;
            Ok((date, x))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut entries = rank_dates(&net, &chips)?;
    if let Some(boundary) = a.boundary {
        tag_periods(&mut entries, boundary);
    }
    let out = s.path(a.out, "ranking_file", "ranking.csv");
    export_ranking(&entries, &out, ExportFormat::Csv)?;
    if let Some(svg) = &a.svg {
        export_ranking(&entries, svg, ExportFormat::SvgBars)?;
    }
    Ok(json!({"command": "rank", "lot": a.lot, "dates": entries.len(),
              "top": entries[0].date.to_string(), "out": shown(&out)}))
}

pub fn synth_gen(s: &Settings, a: SynthArgs) -> Result<Value> {
    let d = BenchmarkConfig::default();
    let cfg = BenchmarkConfig {
        lots_per_class: s.value(a.lots, "lots_per_class", d.lots_per_class)?,
        n_weekends: s.value(a.weekends, "weekends", d.n_weekends)?,
        epsilon: s.value(a.epsilon, "epsilon", d.epsilon)?,
        seed: s.value(a.seed, "seed", d.seed)?,
        cloud_rate: s.value(a.cloud_rate, "cloud_rate", d.cloud_rate)?,
        ..d
    };
    let out = a.out.unwrap_or_else(|| s.out_dir());
    let manifest = gen_benchmark(&cfg, &out)?;
    Ok(json!({"command": "synth-gen", "lots": manifest.lots.len(),
              "chips": manifest.lots.iter().map(|l| l.chips.len()).sum::<usize>(), "out": shown(&out)}))
}

pub fn plot(s: &Settings, a: PlotArgs) -> Result<Value> {
    let input = s.path(a.ranking, "ranking_file", "ranking.csv");
    let text = String::from_utf8(pipeline::read_bytes(require(&input)?)?)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", input.display())))?;
    let entries = parse_ranking_csv(&text)?;
    let out = a.out.unwrap_or_else(|| input.with_extension("svg"));
    export_ranking(&entries, &out, ExportFormat::SvgBars)?;
    Ok(json!({"command": "plot", "dates": entries.len(), "out": shown(&out)}))
}

mod live {
    use lotpair::geodata::fetch::{overpass_query, ReplayStore};
    use lotpair::{Error, Result};

    #[cfg(feature = "live")]
    pub fn fetch_and_record(store: &ReplayStore, endpoint: &str, bbox: [f64; 4]) -> Result<()> {
        let query = overpass_query(bbox)?;
        let body = ureq::post(endpoint)
            .send_form([("data", query.as_str())])
            .map_err(|e| Error::InvalidInput(format!("Overpass request to {endpoint} failed: {e}")))?
            .into_body()
            .read_to_vec()
            .map_err(|e| Error::InvalidInput(format!("reading Overpass response: {e}")))?;
        let path = store.record(endpoint, &query, &body)?;
        log::info!("recorded {} bytes to {}", body.len(), path.display());
        Ok(())
    }

    #[cfg(not(feature = "live"))]
    pub fn fetch_and_record(_store: &ReplayStore, _endpoint: &str, bbox: [f64; 4]) -> Result<()> {
        overpass_query(bbox)?;
        Err(Error::InvalidInput(
            "--live needs a build with the `live` feature; replay recorded fixtures instead".into(),
        ))
    }
}
