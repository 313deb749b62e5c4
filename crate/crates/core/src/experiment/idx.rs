//! IDX image/label files: a big-endian magic word, big-endian `u32`
//! extents, then raw `u8` payload.

use std::path::Path;

use thiserror::Error;

use crate::augment::ImageBatch;
use crate::nn::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("{file}: bad magic 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic {
        file: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("{file}: truncated while reading {field} (need {needed} bytes, have {available})")]
    Truncated {
        file: &'static str,
        field: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("{file}: {extra} trailing bytes after payload")]
    TrailingBytes { file: &'static str, extra: usize },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("{file}: dimension {field} overflows")]
    Overflow { file: &'static str, field: &'static str },
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
}

/// Decoded image file: `count` images of `rows x cols` bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

struct Reader<'a> {
    file: &'static str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8], IdxError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(IdxError::Truncated {
                file: self.file,
                field,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, field: &'static str) -> Result<u32, IdxError> {
        let b = self.take(4, field)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn finish(self) -> Result<(), IdxError> {
        let extra = self.bytes.len() - self.pos;
        if extra > 0 {
            return Err(IdxError::TrailingBytes { file: self.file, extra });
        }
        Ok(())
    }
}

fn magic(r: &mut Reader<'_>, expected: u32) -> Result<(), IdxError> {
    let found = r.u32("magic")?;
    if found != expected {
        return Err(IdxError::BadMagic {
            file: r.file,
            found,
            expected,
        });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages, IdxError> {
    let mut r = Reader {
        file: "images",
        bytes,
        pos: 0,
    };
    magic(&mut r, IMAGES_MAGIC)?;
    let count = r.u32("image count")? as usize;
    let rows = r.u32("rows")? as usize;
    let cols = r.u32("cols")? as usize;
    let len = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or(IdxError::Overflow {
            file: "images",
            field: "pixel count",
        })?;
    let pixels = r.take(len, "pixels")?.to_vec();
    r.finish()?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    let mut r = Reader {
        file: "labels",
        bytes,
        pos: 0,
    };
    magic(&mut r, LABELS_MAGIC)?;
    let count = r.u32("label count")? as usize;
    let labels = r.take(count, "labels")?.to_vec();
    r.finish()?;
    Ok(labels)
}

/// Pairs decoded images with labels, scaling pixels by 1/255 and keeping at
/// most `limit` samples.
pub fn decode_idx_dataset(images: &[u8], labels: &[u8], limit: usize) -> Result<ImageBatch, IdxError> {
    let imgs = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if imgs.count != labels.len() {
        return Err(IdxError::CountMismatch {
            images: imgs.count,
            labels: labels.len(),
        });
    }
    let n = imgs.count.min(limit);
    let per = imgs.rows * imgs.cols;
    let data: Vec<f64> = imgs.pixels[..n * per].iter().map(|&p| f64::from(p) / 255.0).collect();
    let tensor = Tensor::new(vec![n, 1, imgs.rows, imgs.cols], data).expect("extents checked");
    let labels = labels[..n].iter().map(|&l| usize::from(l)).collect();
    Ok(ImageBatch::new(tensor, labels).expect("finite pixels"))
}

fn read(path: &Path) -> Result<Vec<u8>, IdxError> {
    std::fs::read(path).map_err(|e| IdxError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_idx_dataset(images_path: &Path, labels_path: &Path, limit: usize) -> Result<ImageBatch, IdxError> {
    decode_idx_dataset(&read(images_path)?, &read(labels_path)?, limit)
}

/// Encodes images as an IDX image file; pixels are rounded from `[0, 1]`.
pub fn encode_idx_images(batch: &ImageBatch) -> Vec<u8> {
    let (_, h, w) = batch.dims();
    let mut out = Vec::with_capacity(16 + batch.images().len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for v in [batch.len(), h, w] {
        out.extend_from_slice(&(v as u32).to_be_bytes());
    }
    // Only the first channel is stored.
    for i in 0..batch.len() {
        out.extend(
            batch.image(i)[..h * w]
                .iter()
                .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
    }
    out
}

pub fn encode_idx_labels(labels: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend(labels.iter().map(|&l| l.min(255) as u8));
    out
}
