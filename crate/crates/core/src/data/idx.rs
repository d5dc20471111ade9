//! IDX files: big-endian magic `0x00000803` (u8 images, 3 dims) or `0x00000801` (u8 labels,
//! 1 dim), one big-endian u32 per dimension, then the raw bytes.

use std::path::{Path, PathBuf};

use super::dataset::{DataSplit, LabeledDataset};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            expected: (at + 4) as u64,
            found: bytes.len() as u64,
        })
}

/// Header dimensions and payload of an IDX buffer with the given magic.
fn parse_idx<'a>(bytes: &'a [u8], magic: u32, path: &Path) -> Result<(Vec<usize>, &'a [u8])> {
    let found = read_u32(bytes, 0, path)?;
    if found != magic {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: magic,
            found,
        });
    }
    let n_dims = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(n_dims);
    for d in 0..n_dims {
        dims.push(read_u32(bytes, 4 + 4 * d, path)? as usize);
    }
    let header = 4 + 4 * n_dims;
    let expected = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
        .and_then(|payload| payload.checked_add(header as u64))
        .ok_or_else(|| {
            Error::InvalidDataset(format!("{}: header dimensions overflow", path.display()))
        })?;
    if (bytes.len() as u64) < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len() as u64,
        });
    }
    if (bytes.len() as u64) > expected {
        return Err(Error::InvalidDataset(format!(
            "{}: {} trailing bytes after payload",
            path.display(),
            bytes.len() as u64 - expected
        )));
    }
    Ok((dims, &bytes[header..]))
}

/// Parses image and label buffers; pixels are scaled to `[0, 1]`.
pub fn parse_idx_pair(
    images: &[u8],
    labels: &[u8],
    images_path: &Path,
    labels_path: &Path,
) -> Result<LabeledDataset> {
    let (idims, pixels) = parse_idx(images, IMAGES_MAGIC, images_path)?;
    let (ldims, lab) = parse_idx(labels, LABELS_MAGIC, labels_path)?;
    if idims[0] != ldims[0] {
        return Err(Error::CountMismatch {
            images: idims[0],
            labels: ldims[0],
        });
    }
    if idims.contains(&0) {
        return Err(Error::InvalidDataset(format!(
            "{}: zero-sized dimension",
            images_path.display()
        )));
    }
    let features = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let labels: Vec<usize> = lab.iter().map(|&l| l as usize).collect();
    let num_classes = labels.iter().max().map_or(1, |m| m + 1);
    LabeledDataset::new(
        Tensor::new(vec![idims[0], 1, idims[1], idims[2]], features)?,
        labels,
        num_classes,
    )
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    parse_idx_pair(&images, &labels, images_path, labels_path)
}

/// Loads `train-*-idx?-ubyte` and `t10k-*-idx?-ubyte` from a directory and standardizes them.
pub fn load_idx_dir(dir: &Path) -> Result<DataSplit> {
    let p = |name: &str| -> PathBuf { dir.join(name) };
    let mut train = load_idx(&p("train-images-idx3-ubyte"), &p("train-labels-idx1-ubyte"))?;
    let mut test = load_idx(&p("t10k-images-idx3-ubyte"), &p("t10k-labels-idx1-ubyte"))?;
    let classes = train.num_classes.max(test.num_classes);
    train.num_classes = classes;
    test.num_classes = classes;
    Ok(DataSplit { train, test }.standardized())
}

pub fn encode_idx_images(count: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
