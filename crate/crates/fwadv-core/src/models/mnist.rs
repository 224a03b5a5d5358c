//! MNIST IDX ingestion: big-endian IDX parsing with distinct error cases,
//! pixel scaling to [0, 1], and a helper that inflates the checked-in
//! `.gz` archives into raw IDX files on first use.

use std::io::Read;
use std::path::{Path, PathBuf};

use thiserror::Error;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum MnistError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("truncated file {path}: expected {expected} bytes of payload, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} out of range at index {index}")]
    BadLabel { index: usize, label: u8 },
}

/// Flat image/label store: `n` rows of `dim` pixels in [0, 1].
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Vec<f64>,
    labels: Vec<u8>,
    dim: usize,
}

impl Dataset {
    pub fn from_parts(images: Vec<f64>, labels: Vec<u8>, dim: usize) -> Result<Self, MnistError> {
        if dim != 0 && images.len() / dim != labels.len() || images.len() % dim.max(1) != 0 {
            return Err(MnistError::CountMismatch {
                images: images.len() / dim.max(1),
                labels: labels.len(),
            });
        }
        Ok(Self {
            images,
            labels,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.images[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }
}

fn read_u32_be(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, MnistError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(MnistError::Truncated {
            path: path.to_path_buf(),
            expected: end,
            found: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

fn read_file(path: &Path) -> Result<Vec<u8>, MnistError> {
    std::fs::read(path).map_err(|source| MnistError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses an IDX image file: magic 0x00000803, then count/rows/cols,
/// then row-major u8 pixels, scaled by 1/255.
pub fn load_idx_images(path: &Path) -> Result<(Vec<f64>, usize, usize, usize), MnistError> {
    let bytes = read_file(path)?;
    let magic = read_u32_be(&bytes, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(MnistError::BadMagic {
            path: path.to_path_buf(),
            expected: IMAGES_MAGIC,
            found: magic,
        });
    }
    let n = read_u32_be(&bytes, 4, path)? as usize;
    let rows = read_u32_be(&bytes, 8, path)? as usize;
    let cols = read_u32_be(&bytes, 12, path)? as usize;
    let expected = 16 + n * rows * cols;
    if bytes.len() < expected {
        return Err(MnistError::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    let pixels = bytes[16..expected]
        .iter()
        .map(|b| *b as f64 / 255.0)
        .collect();
    Ok((pixels, n, rows, cols))
}

/// Parses an IDX label file: magic 0x00000801, then count, then u8 labels.
pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>, MnistError> {
    let bytes = read_file(path)?;
    let magic = read_u32_be(&bytes, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(MnistError::BadMagic {
            path: path.to_path_buf(),
            expected: LABELS_MAGIC,
            found: magic,
        });
    }
    let n = read_u32_be(&bytes, 4, path)? as usize;
    let expected = 8 + n;
    if bytes.len() < expected {
        return Err(MnistError::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    let labels = bytes[8..expected].to_vec();
    for (index, label) in labels.iter().enumerate() {
        if *label > 9 {
            return Err(MnistError::BadLabel {
                index,
                label: *label,
            });
        }
    }
    Ok(labels)
}

/// Loads a paired image/label IDX set into a [`Dataset`].
pub fn load_mnist(images_path: &Path, labels_path: &Path) -> Result<Dataset, MnistError> {
    let (images, n, rows, cols) = load_idx_images(images_path)?;
    let labels = load_idx_labels(labels_path)?;
    if labels.len() != n {
        return Err(MnistError::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    Dataset::from_parts(images, labels, rows * cols)
}

/// The four standard MNIST file stems.
pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// Inflates `<stem>.gz` next to each missing raw file in `dir`. Returns an
/// error if neither the raw file nor the archive exists.
pub fn ensure_decompressed(dir: &Path) -> Result<(), MnistError> {
    for stem in MNIST_FILES {
        let raw = dir.join(stem);
        if raw.exists() {
            continue;
        }
        let gz = dir.join(format!("{stem}.gz"));
        let file = std::fs::File::open(&gz).map_err(|source| MnistError::Io {
            path: gz.clone(),
            source,
        })?;
        let mut decoder = flate2::read::GzDecoder::new(file);
        let mut bytes = Vec::new();
        decoder
            .read_to_end(&mut bytes)
            .map_err(|source| MnistError::Io {
                path: gz.clone(),
                source,
            })?;
        std::fs::write(&raw, bytes).map_err(|source| MnistError::Io {
            path: raw.clone(),
            source,
        })?;
    }
    Ok(())
}

/// Loads the train or test split from a directory of standard MNIST files,
/// inflating archives as needed.
pub fn load_split(dir: &Path, train: bool) -> Result<Dataset, MnistError> {
    ensure_decompressed(dir)?;
    let (images, labels) = if train {
        (MNIST_FILES[0], MNIST_FILES[1])
    } else {
        (MNIST_FILES[2], MNIST_FILES[3])
    };
    load_mnist(&dir.join(images), &dir.join(labels))
}
