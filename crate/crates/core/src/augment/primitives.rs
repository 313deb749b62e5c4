//! Label-preserving image operations used inside augmentation chains.
//!
//! Every operation maps a `[C, H, W]` image with pixels in `[0, 1]` to an
//! image of the same shape with pixels in `[0, 1]`. `magnitude` is in
//! `[0, 1]`:
//!
//! | kind                | effect                                                     |
//! |---------------------|------------------------------------------------------------|
//! | `translate-x`       | shift right by `round(magnitude * W / 4)` px, zero fill     |
//! | `translate-y`       | shift down by `round(magnitude * H / 4)` px, zero fill      |
//! | `flip-horizontal`   | mirror columns (magnitude ignored)                         |
//! | `rotate90`          | rotate clockwise by `k * 90` degrees, `k = 1 + floor(3m)` capped at 3; square images only |
//! | `posterize-quantize`| `L = 16 - round(14 m)` levels, `round(x (L-1)) / (L-1)`      |
//! | `contrast-scale`    | `mean + (x - mean) * (1 - 0.8 m)` per channel              |
//! | `brightness-shift`  | `x + 0.3 m`, clipped                                        |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrimitiveKind {
    TranslateX,
    TranslateY,
    FlipHorizontal,
    Rotate90,
    PosterizeQuantize,
    ContrastScale,
    BrightnessShift,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 7] = [
        PrimitiveKind::TranslateX,
        PrimitiveKind::TranslateY,
        PrimitiveKind::FlipHorizontal,
        PrimitiveKind::Rotate90,
        PrimitiveKind::PosterizeQuantize,
        PrimitiveKind::ContrastScale,
        PrimitiveKind::BrightnessShift,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveKind::TranslateX => "translate-x",
            PrimitiveKind::TranslateY => "translate-y",
            PrimitiveKind::FlipHorizontal => "flip-horizontal",
            PrimitiveKind::Rotate90 => "rotate90",
            PrimitiveKind::PosterizeQuantize => "posterize-quantize",
            PrimitiveKind::ContrastScale => "contrast-scale",
            PrimitiveKind::BrightnessShift => "brightness-shift",
        }
    }
}

impl fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PrimitiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown augmentation primitive `{s}`")))
    }
}

/// Number of grey levels `posterize-quantize` keeps at a magnitude.
pub fn posterize_levels(magnitude: f64) -> usize {
    16 - (14.0 * magnitude.clamp(0.0, 1.0)).round() as usize
}

pub(crate) fn quantize(v: f64, levels: usize) -> f64 {
    let steps = (levels.max(2) - 1) as f64;
    (v.clamp(0.0, 1.0) * steps).round() / steps
}

fn shift(image: &[f64], c: usize, h: usize, w: usize, dy: usize, dx: usize) -> Vec<f64> {
    let mut out = vec![0.0; image.len()];
    for ch in 0..c {
        for y in dy..h {
            for x in dx..w {
                out[(ch * h + y) * w + x] = image[(ch * h + y - dy) * w + x - dx];
            }
        }
    }
    out
}

/// Applies one primitive to a `[C, H, W]` image.
pub fn primitive_transform(
    image: &[f64],
    dims: (usize, usize, usize),
    kind: PrimitiveKind,
    magnitude: f64,
) -> Result<Vec<f64>> {
    let (c, h, w) = dims;
    if image.len() != c * h * w {
        return Err(crate::error::dim_err(
            "primitive_transform",
            format!("{} pixels for {c}x{h}x{w}", image.len()),
        ));
    }
    let m = magnitude.clamp(0.0, 1.0);
    let out = match kind {
        PrimitiveKind::TranslateX => {
            let dx = ((m * w as f64 / 4.0).round() as usize).min(w);
            shift(image, c, h, w, 0, dx)
        }
        PrimitiveKind::TranslateY => {
            let dy = ((m * h as f64 / 4.0).round() as usize).min(h);
            shift(image, c, h, w, dy, 0)
        }
        PrimitiveKind::FlipHorizontal => {
            let mut out = image.to_vec();
            for row in out.chunks_mut(w.max(1)) {
                row.reverse();
            }
            out
        }
        PrimitiveKind::Rotate90 => {
            if h != w {
                return Err(Error::Config(format!("rotate90 needs square images, got {h}x{w}")));
            }
            let turns = (1 + (3.0 * m).floor() as usize).min(3);
            let mut cur = image.to_vec();
            for _ in 0..turns {
                let mut next = vec![0.0; cur.len()];
                for ch in 0..c {
                    for y in 0..h {
                        for x in 0..w {
                            // clockwise: (y, x) -> (x, h - 1 - y)
                            next[(ch * h + x) * w + (h - 1 - y)] = cur[(ch * h + y) * w + x];
                        }
                    }
                }
                cur = next;
            }
            cur
        }
        PrimitiveKind::PosterizeQuantize => {
            let levels = posterize_levels(m);
            image.iter().map(|&v| quantize(v, levels)).collect()
        }
        PrimitiveKind::ContrastScale => {
            let factor = 1.0 - 0.8 * m;
            let plane = h * w;
            let mut out = image.to_vec();
            for chunk in out.chunks_mut(plane.max(1)) {
                let mean = chunk.iter().sum::<f64>() / plane.max(1) as f64;
                chunk
                    .iter_mut()
                    .for_each(|v| *v = (mean + (*v - mean) * factor).clamp(0.0, 1.0));
            }
            out
        }
        PrimitiveKind::BrightnessShift => image.iter().map(|&v| (v + 0.3 * m).clamp(0.0, 1.0)).collect(),
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(c: usize, h: usize, w: usize) -> Vec<f64> {
        let n = c * h * w;
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn flip_is_an_involution() {
        let img = ramp(2, 3, 5);
        let once = primitive_transform(&img, (2, 3, 5), PrimitiveKind::FlipHorizontal, 0.4).unwrap();
        assert_ne!(once, img);
        let twice = primitive_transform(&once, (2, 3, 5), PrimitiveKind::FlipHorizontal, 0.9).unwrap();
        assert_eq!(twice, img);
    }

    #[test]
    fn zero_translation_is_identity() {
        let img = ramp(1, 8, 8);
        for kind in [PrimitiveKind::TranslateX, PrimitiveKind::TranslateY] {
            assert_eq!(primitive_transform(&img, (1, 8, 8), kind, 0.0).unwrap(), img);
        }
    }

    #[test]
    fn posterize_value_set() {
        let img = ramp(1, 16, 16);
        for m in [0.0, 0.3, 0.77, 1.0] {
            let levels = posterize_levels(m);
            let out = primitive_transform(&img, (1, 16, 16), PrimitiveKind::PosterizeQuantize, m).unwrap();
            let allowed: Vec<f64> = (0..levels).map(|k| k as f64 / (levels - 1) as f64).collect();
            for v in out {
                assert!(
                    allowed.iter().any(|a| (a - v).abs() < 1e-12),
                    "{v} not a level of {levels}"
                );
            }
        }
    }

    #[test]
    fn four_quarter_turns_restore() {
        let img = ramp(1, 4, 4);
        let mut cur = img.clone();
        for _ in 0..4 {
            cur = primitive_transform(&cur, (1, 4, 4), PrimitiveKind::Rotate90, 0.0).unwrap();
        }
        assert_eq!(cur, img);
        assert!(primitive_transform(&ramp(1, 2, 3), (1, 2, 3), PrimitiveKind::Rotate90, 0.0).is_err());
    }

    #[test]
    fn outputs_stay_in_unit_range() {
        let img = ramp(3, 6, 6);
        for kind in PrimitiveKind::ALL {
            for m in [0.0, 0.5, 1.0] {
                let out = primitive_transform(&img, (3, 6, 6), kind, m).unwrap();
                assert_eq!(out.len(), img.len());
                assert!(out.iter().all(|v| (0.0..=1.0).contains(v)), "{kind}");
            }
        }
    }

    #[test]
    fn unknown_kind_is_config_error() {
        assert!(matches!("solarize".parse::<PrimitiveKind>(), Err(Error::Config(_))));
        assert_eq!("rotate90".parse::<PrimitiveKind>().unwrap(), PrimitiveKind::Rotate90);
    }
}
