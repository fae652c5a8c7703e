//! IDX image/label files (optionally gzip-compressed).

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use thiserror::Error;

use crate::tensor::Tensor;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const CLASSES: usize = 10;
/// Pixels are mapped to `[0, 255/256]`.
pub const PIXEL_SCALE: f64 = 1.0 / 256.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic { found: u32, expected: u32 },
    #[error("truncated file: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {0} is not a digit")]
    BadLabel(u8),
    #[error("empty dataset")]
    Empty,
    #[error("bad split: {0}")]
    Split(String),
}

type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `N × (rows·cols)`, scaled by 1/256.
    pub images: Tensor,
    /// `N × 10` one-hot.
    pub labels: Tensor,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self) -> usize {
        self.images.cols()
    }

    /// First `n_train` samples for training, the rest for validation.
    pub fn with_split(mut self, n_train: usize) -> Result<Self> {
        let n = self.len();
        if n_train == 0 || n_train >= n {
            return Err(DataError::Split(format!("{n_train} training samples out of {n}")));
        }
        self.train = (0..n_train).collect();
        self.validation = (n_train..n).collect();
        Ok(self)
    }

    pub fn train_set(&self) -> (Tensor, Tensor) {
        self.subset(&self.train)
    }

    pub fn validation_set(&self) -> (Tensor, Tensor) {
        self.subset(&self.validation)
    }

    pub fn subset(&self, indices: &[usize]) -> (Tensor, Tensor) {
        (
            self.images.select_rows(indices).expect("indices are in range"),
            self.labels.select_rows(indices).expect("indices are in range"),
        )
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let io = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let raw = std::fs::read(path).map_err(io)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out).map_err(io)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let b = bytes.get(at..at + 4).ok_or(DataError::Truncated {
        needed: at + 4,
        have: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(b.try_into().unwrap()))
}

/// Parses an IDX image file into `(count, pixels per image, bytes)`.
pub fn parse_images(bytes: &[u8], limit: usize) -> Result<(usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(DataError::BadMagic {
            found: magic,
            expected: IMAGE_MAGIC,
        });
    }
    let count = be_u32(bytes, 4)? as usize;
    let pixels = be_u32(bytes, 8)? as usize * be_u32(bytes, 12)? as usize;
    let n = count.min(limit);
    let needed = 16 + n * pixels;
    if bytes.len() < needed {
        return Err(DataError::Truncated {
            needed,
            have: bytes.len(),
        });
    }
    Ok((n, pixels, &bytes[16..needed]))
}

pub fn parse_labels(bytes: &[u8], limit: usize) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(DataError::BadMagic {
            found: magic,
            expected: LABEL_MAGIC,
        });
    }
    let n = (be_u32(bytes, 4)? as usize).min(limit);
    let needed = 8 + n;
    if bytes.len() < needed {
        return Err(DataError::Truncated {
            needed,
            have: bytes.len(),
        });
    }
    Ok(&bytes[8..needed])
}

/// Loads at most `limit` samples and holds out the last fifth for
/// validation.
pub fn load_idx(images_path: &Path, labels_path: &Path, limit: usize) -> Result<Dataset> {
    let images = read_all(images_path)?;
    let labels = read_all(labels_path)?;
    from_idx_bytes(&images, &labels, limit)
}

pub fn from_idx_bytes(images: &[u8], labels: &[u8], limit: usize) -> Result<Dataset> {
    if limit == 0 {
        return Err(DataError::Empty);
    }
    let (n, pixels, px) = parse_images(images, limit)?;
    let lb = parse_labels(labels, limit)?;
    if n != lb.len() {
        return Err(DataError::CountMismatch {
            images: n,
            labels: lb.len(),
        });
    }
    if n < 2 {
        return Err(DataError::Empty);
    }
    let data: Vec<f64> = px.iter().map(|&p| p as f64 * PIXEL_SCALE).collect();
    let mut onehot = vec![0.0; n * CLASSES];
    for (i, &l) in lb.iter().enumerate() {
        if l as usize >= CLASSES {
            return Err(DataError::BadLabel(l));
        }
        onehot[i * CLASSES + l as usize] = 1.0;
    }
    let ds = Dataset {
        images: Tensor::new(vec![n, pixels], data).expect("sizes agree"),
        labels: Tensor::new(vec![n, CLASSES], onehot).expect("sizes agree"),
        train: Vec::new(),
        validation: Vec::new(),
    };
    let n_val = (n / 5).max(1);
    ds.with_split(n - n_val)
}

/// Writes IDX files; used for fixtures and synthetic data.
pub fn write_idx(images: &[Vec<u8>], rows: usize, cols: usize, labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let mut im = Vec::new();
    im.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    im.extend_from_slice(&(images.len() as u32).to_be_bytes());
    im.extend_from_slice(&(rows as u32).to_be_bytes());
    im.extend_from_slice(&(cols as u32).to_be_bytes());
    for img in images {
        im.extend_from_slice(img);
    }
    let mut lb = Vec::new();
    lb.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lb.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lb.extend_from_slice(labels);
    (im, lb)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (Vec<u8>, Vec<u8>) {
        let images: Vec<Vec<u8>> = (0..5u8).map(|i| vec![i, 255, 0, 128]).collect();
        write_idx(&images, 2, 2, &[3, 1, 4, 1, 5])
    }

    #[test]
    fn parses_and_scales() {
        let (im, lb) = tiny();
        let ds = from_idx_bytes(&im, &lb, 100).unwrap();
        assert_eq!(ds.images.shape(), [5, 4]);
        assert_eq!(ds.images.get(1, 1), 255.0 / 256.0);
        assert_eq!(ds.images.get(2, 3), 0.5);
        assert_eq!(ds.labels.get(0, 3), 1.0);
        assert_eq!((ds.train.len(), ds.validation.len()), (4, 1));
        for r in 0..5 {
            assert_eq!((0..10).map(|c| ds.labels.get(r, c)).sum::<f64>(), 1.0);
        }
        let ds = from_idx_bytes(&im, &lb, 3).unwrap();
        assert_eq!(ds.len(), 3);
    }

    #[test]
    fn rejects_bad_input() {
        let (im, lb) = tiny();
        assert!(matches!(from_idx_bytes(&im, &lb, 0), Err(DataError::Empty)));
        assert!(matches!(from_idx_bytes(&lb, &lb, 5), Err(DataError::BadMagic { .. })));
        assert!(matches!(from_idx_bytes(&im[..im.len() - 1], &lb, 5), Err(DataError::Truncated { .. })));
        assert!(matches!(from_idx_bytes(&im, &lb[..9], 5), Err(DataError::Truncated { .. })));
        let (im2, lb2) = write_idx(&[vec![0; 4], vec![0; 4]], 2, 2, &[1, 12]);
        assert!(matches!(from_idx_bytes(&im2, &lb2, 5), Err(DataError::BadLabel(12))));
    }
}
