use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodata::{GeoPoint, LocalFrame, PolygonGeom, M_PER_DEG_LAT};
use crate::imaging::{Footprint, GeoTransform, ImageChip};
use crate::rng::SplitMix64;

pub const CAR_WIDTH_M: f64 = 2.0;
pub const CAR_LENGTH_M: f64 = 5.0;
pub const SLOT_WIDTH_M: f64 = 3.0;
pub const SLOT_LENGTH_M: f64 = 6.0;
pub const NATIVE_GSD_M: f64 = 0.5;
pub const OUTPUT_GSD_M: f64 = 3.0;
/// Native pixels per output pixel along each axis.
pub const BOX: usize = 6;
/// Output pixels of unpaved surround on each side of the lot.
pub const DEFAULT_MARGIN_PX: usize = 2;

/// Car paint reflectance: dark cars share one value across bands, bright or
/// colored cars draw each band independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarMixture {
    pub dark: (f64, f64),
    pub bright: (f64, f64),
    pub p_dark: f64,
}

impl Default for CarMixture {
    fn default() -> Self {
        Self {
            dark: (0.08, 0.18),
            bright: (0.45, 0.7),
            p_dark: 0.7,
        }
    }
}

impl CarMixture {
    /// Expected reflectance of a car pixel.
    pub fn mean(&self) -> f64 {
        let mid = |(a, b): (f64, f64)| (a + b) / 2.0;
        self.p_dark * mid(self.dark) + (1.0 - self.p_dark) * mid(self.bright)
    }
}

/// Radiometry shared by every chip of a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneStyle {
    pub bands: usize,
    /// Asphalt reflectance inside the lot.
    pub mu_bg: f64,
    /// Reflectance of the unpaved margin around the lot.
    pub surround: f64,
    pub cars: CarMixture,
    pub noise_sigma: f64,
    pub jitter: (f64, f64),
    pub margin_px: usize,
}

impl Default for SceneStyle {
    fn default() -> Self {
        Self {
            bands: 4,
            mu_bg: 0.35,
            surround: 0.22,
            cars: CarMixture::default(),
            noise_sigma: 0.02,
            jitter: (0.95, 1.05),
            margin_px: DEFAULT_MARGIN_PX,
        }
    }
}

impl SceneStyle {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let range = |(a, b): (f64, f64)| unit(a) && unit(b) && a <= b;
        let ok = (self.bands == 4 || self.bands == 8)
            && unit(self.mu_bg)
            && unit(self.surround)
            && range(self.cars.dark)
            && range(self.cars.bright)
            && unit(self.cars.p_dark)
            && self.noise_sigma >= 0.0
            && self.jitter.0 > 0.0
            && self.jitter.0 <= self.jitter.1;
        if !ok {
            return Err(Error::invalid(format!("invalid scene style: {self:?}")));
        }
        Ok(())
    }

    /// Noise-free, unjittered rendering for exact checks.
    pub fn noiseless(mut self) -> Self {
        self.noise_sigma = 0.0;
        self.jitter = (1.0, 1.0);
        self
    }
}

/// Axis-aligned lot rectangle; `anchor` is its north-west corner. Both sides
/// are whole multiples of the slot length, so slots tile the lot and the lot
/// edges fall on output pixel edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LotRect {
    pub width_m: f64,
    pub height_m: f64,
    pub anchor: GeoPoint,
}

impl LotRect {
    pub fn new(width_m: f64, height_m: f64, anchor: GeoPoint) -> Result<Self> {
        let whole = |v: f64| v > 0.0 && (v / SLOT_LENGTH_M).fract() == 0.0;
        if !whole(width_m) || !whole(height_m) {
            return Err(Error::invalid(format!(
                "lot sides must be positive multiples of {SLOT_LENGTH_M} m, got {width_m} x {height_m}"
            )));
        }
        Ok(Self {
            width_m,
            height_m,
            anchor,
        })
    }

    pub fn area_sqm(&self) -> f64 {
        self.width_m * self.height_m
    }

    pub fn slot_grid(&self) -> (usize, usize) {
        (
            (self.height_m / SLOT_LENGTH_M) as usize,
            (self.width_m / SLOT_WIDTH_M) as usize,
        )
    }

    pub fn n_slots(&self) -> usize {
        let (r, c) = self.slot_grid();
        r * c
    }

    /// Lot extent in output pixels `(rows, cols)`.
    pub fn pixel_extent(&self) -> (usize, usize) {
        (
            (self.height_m / OUTPUT_GSD_M) as usize,
            (self.width_m / OUTPUT_GSD_M) as usize,
        )
    }

    fn steps(&self) -> (f64, f64) {
        let frame = LocalFrame::new(self.anchor);
        (
            OUTPUT_GSD_M / frame.m_per_deg_lon(),
            -OUTPUT_GSD_M / M_PER_DEG_LAT,
        )
    }

    /// Chip grid `(height, width, geotransform)` with `margin` pixels around the lot.
    pub fn chip_grid(&self, margin: usize) -> (usize, usize, GeoTransform) {
        let (h, w) = self.pixel_extent();
        let (dlon, dlat) = self.steps();
        let offset = margin as f64 - 0.5;
        let gt = GeoTransform {
            origin_lon: self.anchor.lon - offset * dlon,
            origin_lat: self.anchor.lat - offset * dlat,
            dlon,
            dlat,
        };
        (h + 2 * margin, w + 2 * margin, gt)
    }

    pub fn polygon(&self) -> Result<PolygonGeom> {
        let (h, w) = self.pixel_extent();
        let (dlon, dlat) = self.steps();
        let (lon0, lat0) = (self.anchor.lon, self.anchor.lat);
        let (lon1, lat1) = (lon0 + w as f64 * dlon, lat0 + h as f64 * dlat);
        PolygonGeom::new(
            vec![
                GeoPoint::new(lon0, lat0)?,
                GeoPoint::new(lon1, lat0)?,
                GeoPoint::new(lon1, lat1)?,
                GeoPoint::new(lon0, lat1)?,
            ],
            vec![],
        )
    }

    /// Pixels of a chip grid with `margin` that lie inside the lot.
    pub fn footprint(&self, margin: usize) -> Footprint {
        let (h, w) = self.pixel_extent();
        Footprint::from_fn(h + 2 * margin, w + 2 * margin, |r, c| {
            (margin..margin + h).contains(&r) && (margin..margin + w).contains(&c)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub rect: LotRect,
    pub rho: f64,
    pub style: SceneStyle,
    pub seed: u64,
}

/// Band-planar reflectance at the native resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct NativeScene {
    pub bands: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub n_slots: usize,
    pub n_cars: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedLot {
    pub chip: ImageChip,
    pub rho: f64,
    pub n_slots: usize,
    pub n_cars: usize,
}

/// Cars to place for an occupancy, `round(rho * n_slots)`.
pub fn car_count(rho: f64, n_slots: usize) -> usize {
    (rho * n_slots as f64).round() as usize
}

/// Lays out the slot grid and paints `round(rho * n)` cars. The slot order and
/// every slot's paint are drawn before the occupancy is applied, so for a fixed
/// seed a higher occupancy only adds cars.
pub fn render_native(cfg: &SceneConfig, rng: &mut SplitMix64) -> Result<NativeScene> {
    cfg.style.validate()?;
    if !(0.0..=1.0).contains(&cfg.rho) {
        return Err(Error::invalid(format!(
            "occupancy must be in [0, 1], got {}",
            cfg.rho
        )));
    }
    let style = &cfg.style;
    let margin = style.margin_px;
    let (h_px, w_px) = cfg.rect.pixel_extent();
    let (height, width) = ((h_px + 2 * margin) * BOX, (w_px + 2 * margin) * BOX);
    let plane = height * width;
    let lot0 = margin * BOX;
    let (lot_h, lot_w) = (h_px * BOX, w_px * BOX);

    let mut values = vec![style.surround; style.bands * plane];
    for b in 0..style.bands {
        for r in lot0..lot0 + lot_h {
            values[b * plane + r * width + lot0..][..lot_w].fill(style.mu_bg);
        }
    }

    let (slot_rows, slot_cols) = cfg.rect.slot_grid();
    let n_slots = slot_rows * slot_cols;
    let mut order: Vec<usize> = (0..n_slots).collect();
    rng.shuffle(&mut order);
    let paint: Vec<Vec<f64>> = (0..n_slots)
        .map(|_| {
            let cars = &style.cars;
            if rng.next_f64() < cars.p_dark {
                vec![rng.uniform(cars.dark.0, cars.dark.1); style.bands]
            } else {
                (0..style.bands)
                    .map(|_| rng.uniform(cars.bright.0, cars.bright.1))
                    .collect()
            }
        })
        .collect();

    let n_cars = car_count(cfg.rho, n_slots);
    let slot_w = (SLOT_WIDTH_M / NATIVE_GSD_M) as usize;
    let slot_l = (SLOT_LENGTH_M / NATIVE_GSD_M) as usize;
    let car_w = (CAR_WIDTH_M / NATIVE_GSD_M) as usize;
    let car_l = (CAR_LENGTH_M / NATIVE_GSD_M) as usize;
    let (inset_w, inset_l) = ((slot_w - car_w) / 2, (slot_l - car_l) / 2);
    for &slot in &order[..n_cars] {
        let (sr, sc) = (slot / slot_cols, slot % slot_cols);
        let y0 = lot0 + sr * slot_l + inset_l;
        let x0 = lot0 + sc * slot_w + inset_w;
        for (b, &v) in paint[slot].iter().enumerate() {
            for r in y0..y0 + car_l {
                values[b * plane + r * width + x0..][..car_w].fill(v);
            }
        }
    }
    Ok(NativeScene {
        bands: style.bands,
        height,
        width,
        values,
        n_slots,
        n_cars,
    })
}

/// Mean of each `factor x factor` block.
pub fn box_average(
    values: &[f64],
    bands: usize,
    height: usize,
    width: usize,
    factor: usize,
) -> Vec<f64> {
    let (oh, ow) = (height / factor, width / factor);
    let norm = (factor * factor) as f64;
    let mut out = vec![0.0; bands * oh * ow];
    for b in 0..bands {
        let src = &values[b * height * width..(b + 1) * height * width];
        for r in 0..oh {
            for c in 0..ow {
                let mut acc = 0.0;
                for y in r * factor..(r + 1) * factor {
                    acc += src[y * width + c * factor..][..factor].iter().sum::<f64>();
                }
                out[(b * oh + r) * ow + c] = acc / norm;
            }
        }
    }
    out
}

/// Renders one chip: native scene, 6x6 box average, brightness multiplier,
/// additive Gaussian noise, clamp to `[0, 1]`.
pub fn render_lot(cfg: &SceneConfig, lot_id: &str, date: Option<NaiveDate>) -> Result<RenderedLot> {
    let mut rng = SplitMix64::new(cfg.seed);
    let native = render_native(cfg, &mut rng)?;
    let coarse = box_average(
        &native.values,
        native.bands,
        native.height,
        native.width,
        BOX,
    );
    let (jlo, jhi) = cfg.style.jitter;
    let gain = rng.uniform(jlo, jhi);
    let pixels: Vec<f32> = coarse
        .iter()
        .map(|&v| (v * gain + cfg.style.noise_sigma * rng.normal()).clamp(0.0, 1.0) as f32)
        .collect();
    let (h, w, gt) = cfg.rect.chip_grid(cfg.style.margin_px);
    let chip = ImageChip::new(lot_id, date, (native.bands, h, w), OUTPUT_GSD_M, gt, pixels)?;
    Ok(RenderedLot {
        chip,
        rho: cfg.rho,
        n_slots: native.n_slots,
        n_cars: native.n_cars,
    })
}

/// Mean absolute deviation from `mu_bg` over the footprint, `hi` minus `lo`.
pub fn occupancy_contrast(
    lo: &ImageChip,
    hi: &ImageChip,
    footprint: &Footprint,
    mu_bg: f64,
) -> Result<f64> {
    if lo.shape() != hi.shape() {
        return Err(Error::invalid("contrast needs chips of the same shape"));
    }
    footprint.check_shape(lo.height, lo.width)?;
    if footprint.count() == 0 {
        return Err(Error::invalid("empty footprint"));
    }
    let mad = |chip: &ImageChip| {
        let mut acc = 0.0;
        for b in 0..chip.bands {
            let plane = chip.plane(b);
            for (v, _) in plane.iter().zip(footprint.mask()).filter(|(_, &m)| m) {
                acc += (*v as f64 - mu_bg).abs();
            }
        }
        acc / (footprint.count() * chip.bands) as f64
    };
    Ok(mad(hi) - mad(lo))
}
