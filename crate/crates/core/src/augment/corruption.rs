//! Severity-graded image corruptions for robust-accuracy evaluation.
//!
//! Parameters live in a versioned TOML table; the copy shipped with the
//! crate is `data/corruptions.toml`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::batch::ImageBatch;
use super::primitives::quantize;
use crate::error::{Error, Result};

pub const BUILTIN_TABLE: &str = include_str!("../../data/corruptions.toml");

pub const MAX_SEVERITY: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionKind {
    GaussianNoise,
    ShotNoiseAnalog,
    BoxBlur,
    Quantize,
    OcclusionPatch,
    BrightnessShift,
    ContrastScale,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 7] = [
        CorruptionKind::GaussianNoise,
        CorruptionKind::ShotNoiseAnalog,
        CorruptionKind::BoxBlur,
        CorruptionKind::Quantize,
        CorruptionKind::OcclusionPatch,
        CorruptionKind::BrightnessShift,
        CorruptionKind::ContrastScale,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::GaussianNoise => "gaussian-noise",
            CorruptionKind::ShotNoiseAnalog => "shot-noise-analog",
            CorruptionKind::BoxBlur => "box-blur",
            CorruptionKind::Quantize => "quantize",
            CorruptionKind::OcclusionPatch => "occlusion-patch",
            CorruptionKind::BrightnessShift => "brightness-shift",
            CorruptionKind::ContrastScale => "contrast-scale",
        }
    }

    /// Name of the tabulated parameter.
    pub fn parameter(self) -> &'static str {
        match self {
            CorruptionKind::GaussianNoise => "sigma",
            CorruptionKind::ShotNoiseAnalog => "rate",
            CorruptionKind::BoxBlur => "passes",
            CorruptionKind::Quantize => "levels",
            CorruptionKind::OcclusionPatch => "fraction",
            CorruptionKind::BrightnessShift => "delta",
            CorruptionKind::ContrastScale => "factor",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&k| k == self).expect("listed")
    }

    fn check(self, v: f64) -> bool {
        let integral = v.fract() == 0.0;
        match self {
            CorruptionKind::GaussianNoise | CorruptionKind::BrightnessShift => (0.0..=1.0).contains(&v),
            CorruptionKind::ShotNoiseAnalog => v > 0.0 && v <= 1e6,
            CorruptionKind::BoxBlur => integral && (0.0..=64.0).contains(&v),
            CorruptionKind::Quantize => integral && (2.0..=256.0).contains(&v),
            CorruptionKind::OcclusionPatch => v > 0.0 && v <= 1.0,
            CorruptionKind::ContrastScale => (0.0..=1.0).contains(&v),
        }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown corruption kind `{s}`")))
    }
}

/// One evaluation cell. Severity 0 is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: u8,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, severity: u8) -> Result<Self> {
        if severity > MAX_SEVERITY {
            return Err(Error::Config(format!("severity {severity} outside 0..={MAX_SEVERITY}")));
        }
        Ok(Self { kind, severity })
    }

    /// Every kind at severities 1 through 5.
    pub fn full_suite() -> Vec<CorruptionSpec> {
        CorruptionKind::ALL
            .into_iter()
            .flat_map(|kind| (1..=MAX_SEVERITY).map(move |severity| CorruptionSpec { kind, severity }))
            .collect()
    }

    /// Every kind at severity 0.
    pub fn identity_suite() -> Vec<CorruptionSpec> {
        CorruptionKind::ALL
            .into_iter()
            .map(|kind| CorruptionSpec { kind, severity: 0 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KindEntry {
    parameter: String,
    severities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct TableFile {
    version: u32,
    gaussian_noise: KindEntry,
    shot_noise_analog: KindEntry,
    box_blur: KindEntry,
    quantize: KindEntry,
    occlusion_patch: KindEntry,
    brightness_shift: KindEntry,
    contrast_scale: KindEntry,
}

impl TableFile {
    fn entries(&self) -> [&KindEntry; 7] {
        [
            &self.gaussian_noise,
            &self.shot_noise_analog,
            &self.box_blur,
            &self.quantize,
            &self.occlusion_patch,
            &self.brightness_shift,
            &self.contrast_scale,
        ]
    }
}

/// Severity parameters for every corruption kind.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionTable {
    version: u32,
    params: [[f64; MAX_SEVERITY as usize]; 7],
}

impl CorruptionTable {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_TABLE).expect("shipped corruption table is valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: TableFile = toml::from_str(text).map_err(|e| Error::Config(format!("corruption table: {e}")))?;
        let mut params = [[0.0; MAX_SEVERITY as usize]; 7];
        for (kind, entry) in CorruptionKind::ALL.into_iter().zip(file.entries()) {
            if entry.parameter != kind.parameter() {
                return Err(Error::Config(format!(
                    "corruption table: [{kind}] parameter must be `{}`, found `{}`",
                    kind.parameter(),
                    entry.parameter
                )));
            }
            if entry.severities.len() != MAX_SEVERITY as usize {
                return Err(Error::Config(format!(
                    "corruption table: [{kind}] needs {MAX_SEVERITY} severities, found {}",
                    entry.severities.len()
                )));
            }
            for (s, &v) in entry.severities.iter().enumerate() {
                if !v.is_finite() || !kind.check(v) {
                    return Err(Error::Config(format!(
                        "corruption table: [{kind}] severity {} has invalid {} {v}",
                        s + 1,
                        kind.parameter()
                    )));
                }
            }
            params[kind.index()].copy_from_slice(&entry.severities);
        }
        Ok(Self {
            version: file.version,
            params,
        })
    }

    pub fn to_toml(&self) -> String {
        let entry = |k: CorruptionKind| KindEntry {
            parameter: k.parameter().to_string(),
            severities: self.params[k.index()].to_vec(),
        };
        let file = TableFile {
            version: self.version,
            gaussian_noise: entry(CorruptionKind::GaussianNoise),
            shot_noise_analog: entry(CorruptionKind::ShotNoiseAnalog),
            box_blur: entry(CorruptionKind::BoxBlur),
            quantize: entry(CorruptionKind::Quantize),
            occlusion_patch: entry(CorruptionKind::OcclusionPatch),
            brightness_shift: entry(CorruptionKind::BrightnessShift),
            contrast_scale: entry(CorruptionKind::ContrastScale),
        };
        toml::to_string(&file).expect("table serialises")
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    /// Parameter for a non-zero severity.
    pub fn parameter(&self, kind: CorruptionKind, severity: u8) -> Option<f64> {
        (1..=MAX_SEVERITY)
            .contains(&severity)
            .then(|| self.params[kind.index()][severity as usize - 1])
    }
}

impl Default for CorruptionTable {
    fn default() -> Self {
        Self::builtin()
    }
}

fn box_blur_once(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; plane.len()];
    for y in 0..h {
        for x in 0..w {
            let (mut sum, mut n) = (0.0, 0.0);
            for yy in y.saturating_sub(1)..(y + 2).min(h) {
                for xx in x.saturating_sub(1)..(x + 2).min(w) {
                    sum += plane[yy * w + xx];
                    n += 1.0;
                }
            }
            out[y * w + x] = sum / n;
        }
    }
    out
}

fn corrupt_image(
    image: &mut [f64],
    dims: (usize, usize, usize),
    kind: CorruptionKind,
    p: f64,
    rng: &mut impl Rng,
) -> Result<()> {
    let (c, h, w) = dims;
    let plane = h * w;
    match kind {
        CorruptionKind::GaussianNoise => {
            let normal = Normal::new(0.0, p).map_err(|e| Error::Config(e.to_string()))?;
            for v in image.iter_mut() {
                *v = (*v + normal.sample(rng)).clamp(0.0, 1.0);
            }
        }
        CorruptionKind::ShotNoiseAnalog => {
            for v in image.iter_mut() {
                let mean = *v * p;
                *v = if mean > 0.0 {
                    let poisson = Poisson::new(mean).map_err(|e| Error::Config(e.to_string()))?;
                    (poisson.sample(rng) / p).clamp(0.0, 1.0)
                } else {
                    0.0
                };
            }
        }
        CorruptionKind::BoxBlur => {
            for ch in image.chunks_mut(plane.max(1)) {
                let mut cur = ch.to_vec();
                for _ in 0..p as usize {
                    cur = box_blur_once(&cur, h, w);
                }
                ch.copy_from_slice(&cur);
            }
        }
        CorruptionKind::Quantize => {
            let levels = p as usize;
            image.iter_mut().for_each(|v| *v = quantize(*v, levels));
        }
        CorruptionKind::OcclusionPatch => {
            let side = ((p * h.min(w) as f64).round() as usize).clamp(1, h.min(w));
            let y0 = rng.random_range(0..=h - side);
            let x0 = rng.random_range(0..=w - side);
            for ch in 0..c {
                for y in y0..y0 + side {
                    let off = ch * plane + y * w;
                    image[off + x0..off + x0 + side].fill(0.0);
                }
            }
        }
        CorruptionKind::BrightnessShift => {
            image.iter_mut().for_each(|v| *v = (*v + p).clamp(0.0, 1.0));
        }
        CorruptionKind::ContrastScale => {
            for ch in image.chunks_mut(plane.max(1)) {
                let mean = ch.iter().sum::<f64>() / ch.len() as f64;
                ch.iter_mut()
                    .for_each(|v| *v = (mean + (*v - mean) * p).clamp(0.0, 1.0));
            }
        }
    }
    Ok(())
}

/// Corrupted copy of `batch`; labels are unchanged. Severity 0 returns the
/// batch untouched without consuming randomness.
pub fn corrupt(
    batch: &ImageBatch,
    spec: CorruptionSpec,
    table: &CorruptionTable,
    rng: &mut impl Rng,
) -> Result<ImageBatch> {
    let Some(p) = table.parameter(spec.kind, spec.severity) else {
        if spec.severity == 0 {
            return Ok(batch.clone());
        }
        return Err(Error::Config(format!("severity {} out of range", spec.severity)));
    };
    let dims = batch.dims();
    let per = dims.0 * dims.1 * dims.2;
    let mut data = batch.images().data().to_vec();
    for image in data.chunks_mut(per.max(1)) {
        corrupt_image(image, dims, spec.kind, p, rng)?;
    }
    Ok(batch.with_images(data))
}
