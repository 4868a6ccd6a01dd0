use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};

use super::dataset::Dataset;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

const SAMPLE_TRAIN_IMAGES: &[u8] = include_bytes!("../../data/sample-train-images-idx3-ubyte.gz");
const SAMPLE_TRAIN_LABELS: &[u8] = include_bytes!("../../data/sample-train-labels-idx1-ubyte.gz");
const SAMPLE_TEST_IMAGES: &[u8] = include_bytes!("../../data/sample-test-images-idx3-ubyte.gz");
const SAMPLE_TEST_LABELS: &[u8] = include_bytes!("../../data/sample-test-labels-idx1-ubyte.gz");

fn gunzip_if_needed(raw: Vec<u8>, path: &Path) -> Result<Vec<u8>> {
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    gunzip_if_needed(raw, path)
}

/// The bundled handwritten-digit sample: 4,000 training and 1,000 test
/// images, balanced across the ten classes.
pub fn bundled_digits() -> Result<(Dataset, Dataset)> {
    let open = |bytes: &[u8], name: &str| gunzip_if_needed(bytes.to_vec(), Path::new(name));
    let train = parse_idx(
        &open(SAMPLE_TRAIN_IMAGES, "sample-train-images")?,
        &open(SAMPLE_TRAIN_LABELS, "sample-train-labels")?,
    )?;
    let test = parse_idx(
        &open(SAMPLE_TEST_IMAGES, "sample-test-images")?,
        &open(SAMPLE_TEST_LABELS, "sample-test-labels")?,
    )?;
    Ok((train, test))
}

/// Loads `train-images-idx3-ubyte` and friends (optionally `.gz`) from a
/// directory laid out like the standard distribution.
pub fn load_idx_dir(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let dir = dir.as_ref();
    let find = |stem: &str| {
        let plain = dir.join(stem);
        if plain.exists() {
            plain
        } else {
            dir.join(format!("{stem}.gz"))
        }
    };
    let train = load_idx(
        find("train-images-idx3-ubyte"),
        find("train-labels-idx1-ubyte"),
    )?;
    let test = load_idx(
        find("t10k-images-idx3-ubyte"),
        find("t10k-labels-idx1-ubyte"),
    )?;
    Ok((train, test))
}

fn be_u32(bytes: &[u8], at: usize, field: &'static str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::Truncated { field })
}

/// Loads an IDX image/label pair (optionally gzip-compressed). Pixels are
/// mapped from 0..=255 onto [0, 1].
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images = read_maybe_gz(images_path.as_ref())?;
    let labels = read_maybe_gz(labels_path.as_ref())?;
    parse_idx(&images, &labels)
}

pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let magic = be_u32(images, 0, "images")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::BadMagic {
            field: "images",
            expected: IMAGES_MAGIC,
            found: magic,
        });
    }
    let magic = be_u32(labels, 0, "labels")?;
    if magic != LABELS_MAGIC {
        return Err(Error::BadMagic {
            field: "labels",
            expected: LABELS_MAGIC,
            found: magic,
        });
    }
    let n_images = be_u32(images, 4, "images")? as usize;
    let rows = be_u32(images, 8, "images")? as usize;
    let cols = be_u32(images, 12, "images")? as usize;
    let n_labels = be_u32(labels, 4, "labels")? as usize;
    if n_images != n_labels {
        return Err(Error::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }
    let dim = rows * cols;
    let pixels = images
        .get(16..16 + n_images * dim)
        .ok_or(Error::Truncated { field: "images" })?;
    let label_bytes = labels
        .get(8..8 + n_labels)
        .ok_or(Error::Truncated { field: "labels" })?;
    let features = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels: Vec<usize> = label_bytes.iter().map(|&l| usize::from(l)).collect();
    let num_classes = labels.iter().max().map_or(2, |m| (m + 1).max(2));
    Dataset::new(features, labels, dim, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(n: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        v.extend_from_slice(&n.to_be_bytes());
        v.extend_from_slice(&1u32.to_be_bytes());
        v.extend_from_slice(&2u32.to_be_bytes());
        v.extend_from_slice(pixels);
        v
    }

    fn labels(ls: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        v.extend_from_slice(&(ls.len() as u32).to_be_bytes());
        v.extend_from_slice(ls);
        v
    }

    #[test]
    fn parses_and_scales() {
        let d = parse_idx(&images(2, &[0, 255, 51, 102]), &labels(&[3, 9])).unwrap();
        assert_eq!(d.dim, 2);
        assert_eq!(d.features, vec![0.0, 1.0, 0.2, 0.4]);
        assert_eq!(d.labels, vec![3, 9]);
        assert_eq!(d.num_classes, 10);
    }

    #[test]
    fn format_errors_name_the_field() {
        let mut bad = images(2, &[0; 4]);
        bad[3] = 0x01;
        let err = parse_idx(&bad, &labels(&[0, 1])).unwrap_err();
        assert!(matches!(
            err,
            Error::BadMagic {
                field: "images",
                ..
            }
        ));
        assert!(err.to_string().contains("images"));
        let mut bad = labels(&[0, 1]);
        bad[3] = 0x03;
        assert!(matches!(
            parse_idx(&images(2, &[0; 4]), &bad),
            Err(Error::BadMagic {
                field: "labels",
                ..
            })
        ));
        assert!(matches!(
            parse_idx(&images(2, &[0; 3]), &labels(&[0, 1])),
            Err(Error::Truncated { field: "images" })
        ));
        assert!(matches!(
            parse_idx(&images(2, &[0; 4]), &labels(&[0])),
            Err(Error::CountMismatch {
                images: 2,
                labels: 1
            })
        ));
    }

    #[test]
    fn embedded_sample_matches_files() {
        let (train, test) = bundled_digits().unwrap();
        assert_eq!((train.len(), test.len()), (4000, 1000));
        assert_eq!(train.label_counts(), vec![400; 10]);
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/data");
        let from_disk = load_idx(
            format!("{dir}/sample-test-images-idx3-ubyte.gz"),
            format!("{dir}/sample-test-labels-idx1-ubyte.gz"),
        )
        .unwrap();
        assert_eq!(test, from_disk);
        assert!(load_idx_dir("/nonexistent").is_err());
    }

    #[test]
    fn bundled_sample_loads() {
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/data");
        let d = load_idx(
            format!("{dir}/sample-test-images-idx3-ubyte.gz"),
            format!("{dir}/sample-test-labels-idx1-ubyte.gz"),
        )
        .unwrap();
        assert_eq!(d.dim, 784);
        assert_eq!(d.len(), 1000);
        assert_eq!(d.num_classes, 10);
        assert!(d.features.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
