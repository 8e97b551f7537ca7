//! Big-endian IDX files (the MNIST distribution format), optionally gzipped.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;

use super::{DataError, LabeledImage};
use crate::image::Image;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

pub(crate) fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, DataError> {
    let raw = fs::read(path).map_err(|e| DataError::Io { path: path.to_path_buf(), source: e })?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| DataError::Io { path: path.to_path_buf(), source: e })?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize, file: &Path) -> Result<u32, DataError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::Truncated { path: file.to_path_buf(), offset, needed: 4 })
}

fn check_magic(bytes: &[u8], expected: u32, file: &Path) -> Result<(), DataError> {
    let found = be_u32(bytes, 0, file)?;
    if found != expected {
        return Err(DataError::BadMagic { path: file.to_path_buf(), offset: 0, expected, found });
    }
    Ok(())
}

/// Parses an IDX image file into `(rows, cols, pixels per image)`.
pub fn parse_images(bytes: &[u8], file: &Path) -> Result<(usize, usize, Vec<Vec<u8>>), DataError> {
    check_magic(bytes, IMAGE_MAGIC, file)?;
    let count = be_u32(bytes, 4, file)? as usize;
    let rows = be_u32(bytes, 8, file)? as usize;
    let cols = be_u32(bytes, 12, file)? as usize;
    let stride = rows * cols;
    let body = 16;
    let needed = body + count * stride;
    if bytes.len() < needed {
        return Err(DataError::Truncated {
            path: file.to_path_buf(),
            offset: bytes.len(),
            needed: needed - bytes.len(),
        });
    }
    let images = (0..count).map(|i| bytes[body + i * stride..body + (i + 1) * stride].to_vec()).collect();
    Ok((rows, cols, images))
}

pub fn parse_labels(bytes: &[u8], file: &Path) -> Result<Vec<u8>, DataError> {
    check_magic(bytes, LABEL_MAGIC, file)?;
    let count = be_u32(bytes, 4, file)? as usize;
    let needed = 8 + count;
    if bytes.len() < needed {
        return Err(DataError::Truncated {
            path: file.to_path_buf(),
            offset: bytes.len(),
            needed: needed - bytes.len(),
        });
    }
    Ok(bytes[8..needed].to_vec())
}

/// Loads paired IDX image and label files; pixel bytes are scaled to `[0, 1]`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Vec<LabeledImage>, DataError> {
    let (rows, cols, images) = parse_images(&read_maybe_gz(images_path)?, images_path)?;
    let labels = parse_labels(&read_maybe_gz(labels_path)?, labels_path)?;
    if images.len() != labels.len() {
        return Err(DataError::CountMismatch { images: images.len(), labels: labels.len() });
    }
    Ok(images
        .into_iter()
        .zip(labels)
        .map(|(px, label)| LabeledImage {
            image: Image::new(rows, cols, px.iter().map(|&b| f64::from(b) / 255.0).collect()).expect("idx dims"),
            label: u32::from(label),
        })
        .collect())
}

/// Writes images and labels as uncompressed IDX files.
pub fn write_idx(items: &[LabeledImage], images_path: &Path, labels_path: &Path) -> std::io::Result<()> {
    let (rows, cols) = items.first().map_or((0, 0), |it| it.image.dims());
    let mut img = Vec::with_capacity(16 + items.len() * rows * cols);
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&(items.len() as u32).to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    let mut lab = Vec::with_capacity(8 + items.len());
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(items.len() as u32).to_be_bytes());
    for it in items {
        img.extend_from_slice(&it.image.to_u8());
        lab.push(it.label as u8);
    }
    fs::File::create(images_path)?.write_all(&img)?;
    fs::File::create(labels_path)?.write_all(&lab)
}
