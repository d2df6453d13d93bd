//! On-disk chip store:
//!
//! ```text
//! <root>/<lot_id>/<YYYY-MM-DD>.img   little-endian f32, band-planar, row-major within band
//! <root>/<lot_id>/<YYYY-MM-DD>.json  sidecar metadata
//! <root>/<lot_id>/<YYYY-MM-DD>.msk   u8 mask class codes, row-major
//! ```
//!
//! Lot ids are used verbatim as directory names except that `%`, `/`, `\` and
//! `:` are percent-encoded.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{GeoTransform, ImageChip, LotImageStack, UsableMask};
use crate::error::{Error, Result};
use crate::fsio::{read, write_atomic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipSidecar {
    pub lot_id: String,
    pub date: NaiveDate,
    pub bands: usize,
    pub height: usize,
    pub width: usize,
    pub gsd_m: f64,
    pub geotransform: [f64; 4],
    pub scale_applied: f64,
}

#[derive(Debug, Clone)]
pub struct ChipStore {
    root: PathBuf,
}

fn encode_lot_dir(lot_id: &str) -> String {
    let mut out = String::with_capacity(lot_id.len());
    for ch in lot_id.chars() {
        match ch {
            '%' | '/' | '\\' | ':' => out.push_str(&format!("%{:02X}", ch as u32)),
            c => out.push(c),
        }
    }
    out
}

fn decode_lot_dir(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut rest = name;
    while let Some(i) = rest.find('%') {
        out.push_str(&rest[..i]);
        match rest
            .get(i + 1..i + 3)
            .and_then(|h| u8::from_str_radix(h, 16).ok())
        {
            Some(b) => {
                out.push(b as char);
                rest = &rest[i + 3..];
            }
            None => {
                out.push('%');
                rest = &rest[i + 1..];
            }
        }
    }
    out.push_str(rest);
    out
}

impl ChipStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn lot_dir(&self, lot_id: &str) -> PathBuf {
        self.root.join(encode_lot_dir(lot_id))
    }

    fn paths(&self, lot_id: &str, date: NaiveDate) -> (PathBuf, PathBuf, PathBuf) {
        let dir = self.lot_dir(lot_id);
        let stem = date.format("%Y-%m-%d").to_string();
        (
            dir.join(format!("{stem}.img")),
            dir.join(format!("{stem}.json")),
            dir.join(format!("{stem}.msk")),
        )
    }

    pub fn write(&self, chip: &ImageChip, mask: &UsableMask) -> Result<()> {
        chip.validate()?;
        let date = chip
            .capture_date
            .ok_or_else(|| Error::invalid("cannot store a chip without a capture date"))?;
        if (mask.height, mask.width) != (chip.height, chip.width) {
            return Err(Error::Shape {
                layer: "mask".into(),
                expected: vec![chip.height, chip.width],
                found: vec![mask.height, mask.width],
            });
        }
        let (img, json, msk) = self.paths(&chip.lot_id, date);
        let bytes: Vec<u8> = chip.pixels.iter().flat_map(|v| v.to_le_bytes()).collect();
        let sidecar = ChipSidecar {
            lot_id: chip.lot_id.clone(),
            date,
            bands: chip.bands,
            height: chip.height,
            width: chip.width,
            gsd_m: chip.gsd_m,
            geotransform: chip.geotransform.to_array(),
            scale_applied: chip.scale_applied,
        };
        let mut meta = serde_json::to_string_pretty(&sidecar)?;
        meta.push('\n');
        write_atomic(&img, &bytes)?;
        write_atomic(&msk, &mask.codes())?;
        write_atomic(&json, meta.as_bytes())
    }

    pub fn read(&self, lot_id: &str, date: NaiveDate) -> Result<(ImageChip, UsableMask)> {
        let (img, json, msk) = self.paths(lot_id, date);
        let sidecar: ChipSidecar = serde_json::from_slice(&read(&json)?)?;
        if sidecar.lot_id != lot_id || sidecar.date != date {
            return Err(Error::Integrity(format!(
                "{}: sidecar names {} {}",
                json.display(),
                sidecar.lot_id,
                sidecar.date
            )));
        }
        let raw = read(&img)?;
        let expected = sidecar.bands * sidecar.height * sidecar.width * 4;
        if raw.len() != expected {
            return Err(Error::Integrity(format!(
                "{}: {} bytes, expected {expected}",
                img.display(),
                raw.len()
            )));
        }
        let pixels = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let mut chip = ImageChip::new(
            lot_id,
            Some(date),
            (sidecar.bands, sidecar.height, sidecar.width),
            sidecar.gsd_m,
            GeoTransform::from_array(sidecar.geotransform),
            pixels,
        )?;
        chip.scale_applied = sidecar.scale_applied;
        let mask = UsableMask::from_codes(sidecar.height, sidecar.width, &read(&msk)?)?;
        Ok((chip, mask))
    }

    /// Lot ids present in the store, sorted.
    pub fn lot_ids(&self) -> Result<Vec<String>> {
        let entries = fs::read_dir(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let mut ids = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.root, e))?;
            if entry.path().is_dir() {
                ids.push(decode_lot_dir(&entry.file_name().to_string_lossy()));
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Capture dates with a sidecar for the lot, sorted.
    pub fn dates(&self, lot_id: &str) -> Result<Vec<NaiveDate>> {
        let dir = self.lot_dir(lot_id);
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut dates = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(stem) = name.strip_suffix(".json") {
                if let Ok(d) = NaiveDate::parse_from_str(stem, "%Y-%m-%d") {
                    dates.push(d);
                }
            }
        }
        dates.sort();
        Ok(dates)
    }

    pub fn read_stack(&self, lot_id: &str) -> Result<LotImageStack> {
        let entries = self
            .dates(lot_id)?
            .into_iter()
            .map(|d| self.read(lot_id, d))
            .collect::<Result<Vec<_>>>()?;
        LotImageStack::new(lot_id, entries)
    }
}
