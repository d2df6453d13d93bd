use crate::error::{Error, Result};
use crate::imaging::Footprint;

/// Model input for one chip: zero outside the footprint, cropped to the
/// footprint bounding box, zero-padded to a centered square, and bilinearly
/// resampled to `side x side` (half-pixel centers, edge clamped).
///
/// `normalized` is a B×H×W buffer in which 0 is the band mean, so padding
/// with 0 is padding with the training mean.
pub fn prepare_input(
    normalized: &[f32],
    (bands, height, width): (usize, usize, usize),
    footprint: &Footprint,
    side: usize,
) -> Result<Vec<f32>> {
    if normalized.len() != bands * height * width {
        return Err(Error::Shape {
            layer: "chip".into(),
            expected: vec![bands, height, width],
            found: vec![normalized.len()],
        });
    }
    if (footprint.height(), footprint.width()) != (height, width) {
        return Err(Error::Shape {
            layer: "footprint".into(),
            expected: vec![height, width],
            found: vec![footprint.height(), footprint.width()],
        });
    }
    let (r0, c0, r1, c1) = footprint
        .bbox()
        .ok_or_else(|| Error::invalid("empty footprint"))?;
    let (h, w) = (r1 - r0 + 1, c1 - c0 + 1);
    let len = h.max(w);
    let (pad_r, pad_c) = ((len - h) / 2, (len - w) / 2);

    let mut square = vec![0f32; bands * len * len];
    for b in 0..bands {
        for r in r0..=r1 {
            for c in c0..=c1 {
                if footprint.contains(r, c) {
                    let dst = (b * len + (r - r0 + pad_r)) * len + (c - c0 + pad_c);
                    square[dst] = normalized[(b * height + r) * width + c];
                }
            }
        }
    }
    if len == side {
        return Ok(square);
    }

    let scale = len as f64 / side as f64;
    let taps: Vec<(usize, usize, f32)> = (0..side)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(len - 1);
            (i0, i1, (s - i0 as f64) as f32)
        })
        .collect();
    let mut out = vec![0f32; bands * side * side];
    for b in 0..bands {
        let src = &square[b * len * len..(b + 1) * len * len];
        for (oy, &(y0, y1, fy)) in taps.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in taps.iter().enumerate() {
                let top = src[y0 * len + x0] * (1.0 - fx) + src[y0 * len + x1] * fx;
                let bottom = src[y1 * len + x0] * (1.0 - fx) + src[y1 * len + x1] * fx;
                out[(b * side + oy) * side + ox] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_box_is_identity_up_to_masking() {
        let (h, w, s) = (10, 10, 8);
        let data: Vec<f32> = (0..4 * h * w).map(|i| i as f32 * 0.01).collect();
        // 8x8 box at rows 1..9, cols 2..10 with one hole pixel
        let fp = Footprint::from_fn(h, w, |r, c| {
            (1..9).contains(&r) && (2..10).contains(&c) && (r, c) != (3, 4)
        });
        let out = prepare_input(&data, (4, h, w), &fp, s).unwrap();
        for b in 0..4 {
            for r in 0..s {
                for c in 0..s {
                    let want = if (r + 1, c + 2) == (3, 4) {
                        0.0
                    } else {
                        data[(b * h + r + 1) * w + c + 2]
                    };
                    assert_eq!(out[(b * s + r) * s + c], want);
                }
            }
        }
    }

    #[test]
    fn downsample_matches_bilinear_oracle() {
        let s = 4;
        let n = 2 * s;
        let data: Vec<f32> = (0..4 * n * n)
            .map(|i| ((i * 7) % 13) as f32 / 13.0)
            .collect();
        let fp = Footprint::full(n, n);
        let out = prepare_input(&data, (4, n, n), &fp, s).unwrap();
        // at 2x the sample point of output pixel i is source coordinate 2i + 0.5
        for b in 0..4 {
            for oy in 0..s {
                for ox in 0..s {
                    let (y, x) = (2 * oy, 2 * ox);
                    let px = |r: usize, c: usize| data[(b * n + r) * n + c];
                    let want = 0.25 * (px(y, x) + px(y, x + 1) + px(y + 1, x) + px(y + 1, x + 1));
                    assert!((out[(b * s + oy) * s + ox] - want).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn zero_chip_gives_zero_tensor() {
        let fp = Footprint::from_fn(7, 5, |r, _| r > 1);
        let out = prepare_input(&vec![0.0; 4 * 35], (4, 7, 5), &fp, 16).unwrap();
        assert_eq!(out.len(), 4 * 256);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_square_box_is_centered() {
        // 2 rows x 4 cols of ones -> padded to 4x4 with a zero row above and below
        let fp = Footprint::full(2, 4);
        let out = prepare_input(&vec![1.0; 4 * 8], (4, 2, 4), &fp, 4).unwrap();
        let rows: Vec<f32> = (0..4).map(|r| out[r * 4]).collect();
        assert_eq!(rows, [0.0, 1.0, 1.0, 0.0]);
    }
}
