//! IDX (MNIST-style) binary files: big-endian magic, big-endian u32 dimension
//! sizes, then raw unsigned bytes.

use std::fs;
use std::path::Path;

use super::LabeledVector;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self) -> Result<u32> {
        let end = self.offset + 4;
        let chunk = self
            .bytes
            .get(self.offset..end)
            .ok_or_else(|| Error::Format {
                offset: self.offset as u64,
                message: "unexpected end of file in header".into(),
            })?;
        self.offset = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4-byte slice")))
    }

    fn payload(&mut self, len: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.offset;
        if available < len {
            return Err(Error::Format {
                offset: self.bytes.len() as u64,
                message: format!("truncated payload: expected {len} bytes, found {available}"),
            });
        }
        let out = &self.bytes[self.offset..self.offset + len];
        self.offset += len;
        Ok(out)
    }
}

fn magic(r: &mut Reader<'_>, expected: u32) -> Result<()> {
    let m = r.u32()?;
    if m != expected {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad magic number 0x{m:08x}, expected 0x{expected:08x}"),
        });
    }
    Ok(())
}

/// Parses an image file into flattened rows scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    let mut r = Reader { bytes, offset: 0 };
    magic(&mut r, IMAGES_MAGIC)?;
    let count = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let dim = rows * cols;
    let payload = r.payload(count * dim)?;
    Ok(payload
        .chunks_exact(dim.max(1))
        .take(count)
        .map(|px| px.iter().map(|&b| f64::from(b) / 255.0).collect())
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let mut r = Reader { bytes, offset: 0 };
    magic(&mut r, LABELS_MAGIC)?;
    let count = r.u32()? as usize;
    Ok(r.payload(count)?.iter().map(|&b| usize::from(b)).collect())
}

/// Loads an image/label IDX pair.
pub fn load_idx_dataset(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Vec<LabeledVector>> {
    let (images_path, labels_path) = (images_path.as_ref(), labels_path.as_ref());
    let images = fs::read(images_path)
        .map_err(Error::from)
        .and_then(|b| parse_idx_images(&b))
        .map_err(Error::in_file(images_path))?;
    let labels = fs::read(labels_path)
        .map_err(Error::from)
        .and_then(|b| parse_idx_labels(&b))
        .map_err(Error::in_file(labels_path))?;
    if images.len() != labels.len() {
        return Err(Error::Format {
            offset: 4,
            message: format!(
                "image count {} does not match label count {}",
                images.len(),
                labels.len()
            ),
        });
    }
    Ok(images
        .into_iter()
        .zip(labels)
        .map(|(f, l)| LabeledVector::new(f, l))
        .collect())
}
