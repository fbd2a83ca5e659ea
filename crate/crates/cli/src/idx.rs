//! IDX file format (big-endian), the MNIST container: magic 0x00000803 for
//! unsigned-byte image tensors (count, rows, cols, scaled to [0,1]) and
//! 0x00000801 for label vectors.

use std::path::Path;

use faithbench_core::tensor::Tensor;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("unsupported IDX magic {magic:#010x} at byte offset 0")]
    BadMagic { magic: u32 },
    #[error("truncated IDX payload: needed {needed} bytes at byte offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("expected {expected} content, found {found}")]
    WrongContent {
        expected: &'static str,
        found: &'static str,
    },
}

#[derive(Debug, Clone)]
pub enum IdxData {
    Images(Vec<Tensor>),
    Labels(Vec<usize>),
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32, IdxError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(IdxError::Truncated {
            offset,
            needed: end - bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Parses an IDX byte buffer into images or labels.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxData, IdxError> {
    let magic = read_u32(bytes, 0)?;
    match magic {
        0x0000_0801 => {
            let count = read_u32(bytes, 4)? as usize;
            let start = 8;
            if bytes.len() < start + count {
                return Err(IdxError::Truncated {
                    offset: bytes.len(),
                    needed: start + count - bytes.len(),
                });
            }
            Ok(IdxData::Labels(
                bytes[start..start + count].iter().map(|&b| b as usize).collect(),
            ))
        }
        0x0000_0803 => {
            let count = read_u32(bytes, 4)? as usize;
            let rows = read_u32(bytes, 8)? as usize;
            let cols = read_u32(bytes, 12)? as usize;
            let start = 16;
            let per_image = rows * cols;
            let needed = start + count * per_image;
            if bytes.len() < needed {
                return Err(IdxError::Truncated {
                    offset: bytes.len(),
                    needed: needed - bytes.len(),
                });
            }
            let images = (0..count)
                .map(|i| {
                    let slice = &bytes[start + i * per_image..start + (i + 1) * per_image];
                    Tensor::new(
                        vec![rows, cols],
                        slice.iter().map(|&b| b as f64 / 255.0).collect(),
                    )
                    .expect("byte-scaled pixels are finite")
                })
                .collect();
            Ok(IdxData::Images(images))
        }
        other => Err(IdxError::BadMagic { magic: other }),
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, IdxError> {
    std::fs::read(path).map_err(|source| IdxError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_idx_images(path: &Path) -> Result<Vec<Tensor>, IdxError> {
    match parse_idx(&read_file(path)?)? {
        IdxData::Images(images) => Ok(images),
        IdxData::Labels(_) => Err(IdxError::WrongContent {
            expected: "images",
            found: "labels",
        }),
    }
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<usize>, IdxError> {
    match parse_idx(&read_file(path)?)? {
        IdxData::Labels(labels) => Ok(labels),
        IdxData::Images(_) => Err(IdxError::WrongContent {
            expected: "labels",
            found: "images",
        }),
    }
}

/// Serializes images back to IDX (pixels rounded to bytes).
pub fn write_idx_images(path: &Path, images: &[Tensor]) -> Result<(), IdxError> {
    let (rows, cols) = images
        .first()
        .map(|t| t.image_dims())
        .unwrap_or((0, 0));
    let mut bytes = Vec::with_capacity(16 + images.len() * rows * cols);
    bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
    bytes.extend_from_slice(&(images.len() as u32).to_be_bytes());
    bytes.extend_from_slice(&(rows as u32).to_be_bytes());
    bytes.extend_from_slice(&(cols as u32).to_be_bytes());
    for image in images {
        bytes.extend(
            image
                .data()
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
    }
    std::fs::write(path, bytes).map_err(|source| IdxError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_idx_labels(path: &Path, labels: &[usize]) -> Result<(), IdxError> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&0x0000_0801u32.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend(labels.iter().map(|&l| l as u8));
    std::fs::write(path, bytes).map_err(|source| IdxError::Io {
        path: path.display().to_string(),
        source,
    })
}
