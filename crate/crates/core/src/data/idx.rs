//! Big-endian IDX files as distributed for MNIST, optionally gzip-compressed.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::preprocess::{image_to_sample, RawImage, Sample};
use crate::{Error, IdxError, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Decoded `idx3-ubyte` payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` bytes, image after image.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let b = bytes.get(offset..offset + 4).ok_or(IdxError::Truncated {
        expected: offset + 4,
        found: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(b.try_into().expect("4 bytes")))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(IdxError::BadMagic {
            offset: 0,
            found,
            expected,
        }
        .into());
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() < expected {
        return Err(IdxError::Truncated {
            expected,
            found: bytes.len(),
        }
        .into());
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..expected].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(IdxError::Truncated {
            expected,
            found: bytes.len(),
        }
        .into());
    }
    Ok(bytes[8..expected].to_vec())
}

/// Reads a file, transparently inflating gzip content.
pub fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::file(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::file(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Images decoded into labeled samples (bytes scaled to `[0, 1]`, resized to
/// 28x28 when the file holds another size).
pub fn idx_to_samples(images: &IdxImages, labels: &[u8]) -> Result<Vec<Sample>> {
    if images.count != labels.len() {
        return Err(IdxError::CountMismatch {
            images: images.count,
            labels: labels.len(),
        }
        .into());
    }
    (0..images.count)
        .map(|i| {
            let img = RawImage::gray_u8(images.rows, images.cols, images.image(i).to_vec());
            Ok(image_to_sample(&img)?.with_label(labels[i] as u32))
        })
        .collect()
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let images = parse_idx_images(&read_maybe_gzip(images_path.as_ref())?)?;
    let labels = parse_idx_labels(&read_maybe_gzip(labels_path.as_ref())?)?;
    idx_to_samples(&images, &labels)
}
