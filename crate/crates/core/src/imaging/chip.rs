use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lon/lat of the center of pixel (0, 0) plus per-pixel degree steps
/// (`dlat` is negative for north-up chips).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub dlon: f64,
    pub dlat: f64,
}

impl GeoTransform {
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_lon + col as f64 * self.dlon,
            self.origin_lat + row as f64 * self.dlat,
        )
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.origin_lon, self.origin_lat, self.dlon, self.dlat]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            origin_lon: a[0],
            origin_lat: a[1],
            dlon: a[2],
            dlat: a[3],
        }
    }
}

/// Multi-band reflectance chip, band-planar and row-major within a band.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageChip {
    pub lot_id: String,
    /// Unset for derived images such as the median.
    pub capture_date: Option<NaiveDate>,
    pub bands: usize,
    pub height: usize,
    pub width: usize,
    pub gsd_m: f64,
    pub geotransform: GeoTransform,
    /// Provider integer scale already divided out (1.0 when values were native reflectance).
    pub scale_applied: f64,
    pub pixels: Vec<f32>,
}

impl ImageChip {
    pub fn new(
        lot_id: impl Into<String>,
        capture_date: Option<NaiveDate>,
        (bands, height, width): (usize, usize, usize),
        gsd_m: f64,
        geotransform: GeoTransform,
        pixels: Vec<f32>,
    ) -> Result<Self> {
        let chip = Self {
            lot_id: lot_id.into(),
            capture_date,
            bands,
            height,
            width,
            gsd_m,
            geotransform,
            scale_applied: 1.0,
            pixels,
        };
        chip.validate()?;
        Ok(chip)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands != 4 && self.bands != 8 {
            return Err(Error::invalid(format!(
                "chip has {} bands, expected 4 or 8",
                self.bands
            )));
        }
        if !(self.gsd_m > 0.0) {
            return Err(Error::invalid(format!(
                "gsd must be positive, got {}",
                self.gsd_m
            )));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::invalid("chip has zero extent"));
        }
        if self.pixels.len() != self.bands * self.height * self.width {
            return Err(Error::Shape {
                layer: format!("chip {}", self.lot_id),
                expected: vec![self.bands, self.height, self.width],
                found: vec![self.pixels.len()],
            });
        }
        if let Some(i) = self.pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite pixel value at index {i}"
            )));
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.bands, self.height, self.width)
    }

    pub fn plane(&self, band: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.pixels[band * n..(band + 1) * n]
    }

    pub fn get(&self, band: usize, row: usize, col: usize) -> f32 {
        self.pixels[(band * self.height + row) * self.width + col]
    }

    /// Mean over bands at one pixel.
    pub fn luminance(&self, row: usize, col: usize) -> f64 {
        let n = self.height * self.width;
        let i = row * self.width + col;
        (0..self.bands)
            .map(|b| self.pixels[b * n + i] as f64)
            .sum::<f64>()
            / self.bands as f64
    }

    fn same_grid(&self, other: &ImageChip) -> bool {
        self.shape() == other.shape() && self.gsd_m == other.gsd_m
    }
}

/// Usable-data mask class codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum MaskClass {
    Clear = 0,
    Snow = 1,
    Shadow = 2,
    LightHaze = 3,
    HeavyHaze = 4,
    Cloud = 5,
    NoData = 255,
}

impl MaskClass {
    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => MaskClass::Clear,
            1 => MaskClass::Snow,
            2 => MaskClass::Shadow,
            3 => MaskClass::LightHaze,
            4 => MaskClass::HeavyHaze,
            5 => MaskClass::Cloud,
            255 => MaskClass::NoData,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UsableMask {
    pub height: usize,
    pub width: usize,
    pub classes: Vec<MaskClass>,
}

impl UsableMask {
    pub fn filled(height: usize, width: usize, class: MaskClass) -> Self {
        Self {
            height,
            width,
            classes: vec![class; height * width],
        }
    }

    pub fn from_codes(height: usize, width: usize, codes: &[u8]) -> Result<Self> {
        if codes.len() != height * width {
            return Err(Error::Integrity(format!(
                "mask has {} bytes, expected {}",
                codes.len(),
                height * width
            )));
        }
        let classes = codes
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                MaskClass::from_code(c)
                    .ok_or_else(|| Error::Integrity(format!("unknown mask code {c} at pixel {i}")))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            height,
            width,
            classes,
        })
    }

    pub fn codes(&self) -> Vec<u8> {
        self.classes.iter().map(|&c| c as u8).collect()
    }

    pub fn set(&mut self, row: usize, col: usize, class: MaskClass) {
        self.classes[row * self.width + col] = class;
    }
}

/// All images of one lot, sorted by capture date.
#[derive(Debug, Clone, PartialEq)]
pub struct LotImageStack {
    pub lot_id: String,
    entries: Vec<(ImageChip, UsableMask)>,
}

impl LotImageStack {
    pub fn new(
        lot_id: impl Into<String>,
        mut entries: Vec<(ImageChip, UsableMask)>,
    ) -> Result<Self> {
        let lot_id = lot_id.into();
        entries.sort_by_key(|(c, _)| c.capture_date);
        for w in entries.windows(2) {
            if w[0].0.capture_date.is_none() || w[0].0.capture_date >= w[1].0.capture_date {
                return Err(Error::invalid(format!(
                    "lot {lot_id}: capture dates must be set and distinct"
                )));
            }
        }
        if let Some((first, _)) = entries.first() {
            for (chip, mask) in &entries {
                if chip.lot_id != lot_id {
                    return Err(Error::invalid(format!(
                        "chip of lot {} in stack {lot_id}",
                        chip.lot_id
                    )));
                }
                if !chip.same_grid(first) || mask.height != chip.height || mask.width != chip.width
                {
                    return Err(Error::Shape {
                        layer: format!("lot {lot_id} stack"),
                        expected: vec![first.bands, first.height, first.width],
                        found: vec![chip.bands, chip.height, chip.width],
                    });
                }
            }
        }
        Ok(Self { lot_id, entries })
    }

    pub fn entries(&self) -> &[(ImageChip, UsableMask)] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<(ImageChip, UsableMask)> {
        self.entries
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.entries
            .iter()
            .filter_map(|(c, _)| c.capture_date)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Per-pixel, per-band median across chips; the mean of the two middle values
/// for an even count. Needs at least three chips of identical shape.
pub fn median_image(chips: &[&ImageChip]) -> Result<ImageChip> {
    if chips.len() < 3 {
        return Err(Error::invalid(format!(
            "median image needs at least 3 chips, got {}",
            chips.len()
        )));
    }
    let first = chips[0];
    if let Some(c) = chips.iter().find(|c| !c.same_grid(first)) {
        return Err(Error::Shape {
            layer: "median stack".into(),
            expected: vec![first.bands, first.height, first.width],
            found: vec![c.bands, c.height, c.width],
        });
    }
    let n = chips.len();
    let mut column = vec![0f32; n];
    let pixels = (0..first.pixels.len())
        .map(|i| {
            for (slot, c) in column.iter_mut().zip(chips) {
                *slot = c.pixels[i];
            }
            column.sort_by(f32::total_cmp);
            if n % 2 == 1 {
                column[n / 2]
            } else {
                ((column[n / 2 - 1] as f64 + column[n / 2] as f64) / 2.0) as f32
            }
        })
        .collect();
    Ok(ImageChip {
        capture_date: None,
        pixels,
        ..first.clone()
    })
}

/// Per-band mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// Band statistics over the footprint pixels of every chip.
pub fn band_stats<'a>(
    chips: impl IntoIterator<Item = (&'a ImageChip, &'a super::Footprint)>,
) -> Result<BandStats> {
    let mut sums: Vec<f64> = Vec::new();
    let mut sq: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for (chip, fp) in chips {
        if sums.is_empty() {
            sums = vec![0.0; chip.bands];
            sq = vec![0.0; chip.bands];
        }
        if sums.len() != chip.bands {
            return Err(Error::invalid("chips with differing band counts"));
        }
        for b in 0..chip.bands {
            for (&v, &inside) in chip.plane(b).iter().zip(fp.mask()) {
                if inside {
                    sums[b] += v as f64;
                    sq[b] += (v as f64) * (v as f64);
                }
            }
        }
        count += fp.count();
    }
    if count == 0 {
        return Err(Error::invalid("no footprint pixels for band statistics"));
    }
    let n = count as f64;
    let means: Vec<f64> = sums.iter().map(|s| s / n).collect();
    let stds = sq
        .iter()
        .zip(&means)
        .map(|(s, m)| (s / n - m * m).max(0.0).sqrt().max(1e-6))
        .collect();
    Ok(BandStats { means, stds })
}

/// `(value - mean_b) / std_b` per band; returns a B×H×W buffer.
pub fn normalize_chip(chip: &ImageChip, stats: &BandStats) -> Result<Vec<f32>> {
    if stats.means.len() != chip.bands || stats.stds.len() != chip.bands {
        return Err(Error::invalid(format!(
            "band statistics for {} bands, chip has {}",
            stats.means.len(),
            chip.bands
        )));
    }
    if let Some(s) = stats.stds.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::invalid(format!(
            "band std must be positive, got {s}"
        )));
    }
    let plane = chip.height * chip.width;
    Ok(chip
        .pixels
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let b = i / plane;
            ((v as f64 - stats.means[b]) / stats.stds[b]) as f32
        })
        .collect())
}
