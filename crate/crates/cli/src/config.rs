//! Flat `key = value` run configuration. Command-line flags override the
//! environment, which overrides the file, which overrides built-in defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lotpair::{Error, Result};

/// Environment variable naming the chip-store root.
pub const CHIP_STORE_ENV: &str = "LOTPAIR_CHIP_STORE";

/// Every recognized key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("poi_file", "POI GeoJSON written by ingest-poi"),
    ("parking_file", "parking-lot GeoJSON written by ingest-parking or synth-gen"),
    ("chip_store", "chip-store root directory"),
    ("matches_file", "match output (matches.ndjson)"),
    ("qc_file", "QC decisions (qc.ndjson)"),
    ("pairs_file", "weak pairs (pairs.ndjson)"),
    ("split_file", "lot split (split.json)"),
    ("model_dir", "checkpoint directory (model)"),
    ("report_file", "evaluation report JSON (report.json); the CSV sits next to it"),
    ("ranking_file", "ranking CSV (ranking.csv)"),
    ("out_dir", "directory for default output and input file names"),
    ("proximity_m", "POI-to-lot match threshold in meters (10)"),
    ("tv_threshold", "brightness QC total-variation threshold (0.2)"),
    ("score_threshold", "probability threshold for class 1 (0.5)"),
    ("seed", "seed for splits, initialization, batch order and synthesis (0)"),
    ("split_ratio", "train fraction of lots per size class (0.8)"),
    ("window", "pairing window: same-weekend or cross-weekend"),
    ("both_orders", "emit (Sunday, Saturday, 0) pairs too (true)"),
    ("learning_rate", "Adam learning rate"),
    ("epochs", "training epochs"),
    ("batch_size", "pairs per Adam step"),
    ("input_side", "model input side in pixels (64)"),
    ("blocks", "comma-separated conv block widths (16,32,64,128)"),
    ("head_hidden", "hidden width of the comparison head (64)"),
    ("activation", "encoder activation: silu or relu"),
    ("lots_per_class", "synth-gen lots per size class (20)"),
    ("weekends", "synth-gen weekends per lot (8)"),
    ("epsilon", "synth-gen label-noise rate (0.05)"),
    ("cloud_rate", "synth-gen probability of a cloudy chip (0)"),
];

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
    source: Option<PathBuf>,
}

impl ConfigFile {
    pub fn parse(text: &str, source: Option<PathBuf>) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let trimmed = line.trim();
            let here = offset;
            offset += line.len();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (k, v) = trimmed.split_once('=').ok_or_else(|| Error::Parse {
                offset: here,
                message: format!("expected `key = value`, found `{trimmed}`"),
            })?;
            let k = k.trim().to_string();
            if !KEYS.iter().any(|(known, _)| *known == k) {
                return Err(Error::Parse { offset: here, message: format!("unknown config key `{k}`") });
            }
            if values.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Parse { offset: here, message: format!("config key `{k}` set twice") });
            }
        }
        Ok(Self { values, source })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
        Self::parse(&text, Some(path.to_path_buf()))
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn origin(&self) -> String {
        self.source.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "config".into())
    }
}

/// Resolves settings for one invocation.
#[derive(Debug, Clone)]
pub struct Settings {
    file: ConfigFile,
    out_dir_flag: Option<PathBuf>,
}

impl Settings {
    pub fn new(file: ConfigFile, out_dir_flag: Option<PathBuf>) -> Self {
        Self { file, out_dir_flag }
    }

    pub fn value<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.file.raw(key) {
            Some(raw) => raw.parse().map_err(|e| {
                Error::InvalidInput(format!("{}: bad value `{raw}` for `{key}`: {e}", self.file.origin()))
            }),
            None => Ok(default),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir_flag
            .clone()
            .or_else(|| self.file.raw("out_dir").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }

    /// Flag, then config key, then `out_dir/<default_name>`.
    pub fn path(&self, flag: Option<PathBuf>, key: &str, default_name: &str) -> PathBuf {
        flag.or_else(|| self.file.raw(key).map(PathBuf::from))
            .unwrap_or_else(|| self.out_dir().join(default_name))
    }

    /// Flag, then the environment variable, then the config key, then `out_dir/chips`.
    pub fn chip_store(&self, flag: Option<PathBuf>) -> PathBuf {
        flag.or_else(|| std::env::var_os(CHIP_STORE_ENV).map(PathBuf::from))
            .or_else(|| self.file.raw("chip_store").map(PathBuf::from))
            .unwrap_or_else(|| self.out_dir().join("chips"))
    }
}

/// Fails with a not-found error naming `path` unless it exists.
pub fn require(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "required input does not exist"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_overrides() {
        let f = ConfigFile::parse("# run\nseed = 7\n\nout_dir=/tmp/x\nepochs = 3\n", None).unwrap();
        let s = Settings::new(f, None);
        assert_eq!(s.value(None, "seed", 0u64).unwrap(), 7);
        assert_eq!(s.value(Some(9u64), "seed", 0).unwrap(), 9);
        assert_eq!(s.value(None, "batch_size", 16usize).unwrap(), 16);
        assert_eq!(s.path(None, "pairs_file", "pairs.ndjson"), PathBuf::from("/tmp/x/pairs.ndjson"));
        assert!(s.value(None, "out_dir", 0u64).is_err());
    }

    #[test]
    fn rejects_unknown_and_malformed_lines() {
        assert!(matches!(ConfigFile::parse("sede = 1\n", None), Err(Error::Parse { .. })));
        assert!(matches!(ConfigFile::parse("seed 1\n", None), Err(Error::Parse { offset: 0, .. })));
        assert!(ConfigFile::parse("seed = 1\nseed = 2\n", None).is_err());
    }
}
