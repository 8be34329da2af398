//! IDX image and label files: big-endian, magic 2051 for u8 images with
//! dims [n, rows, cols] and 2049 for u8 labels. Pixels load as
//! features in [0, 1] via division by 255.

use std::fs;
use std::path::Path;

use lpntk_core::data::LabeledDataset;

use crate::{CliError, CliResult};

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

fn be_u32(bytes: &[u8], pos: usize, what: &str) -> CliResult<u32> {
    if pos + 4 > bytes.len() {
        return Err(CliError::config(format!("{what} is truncated")));
    }
    Ok(u32::from_be_bytes([
        bytes[pos],
        bytes[pos + 1],
        bytes[pos + 2],
        bytes[pos + 3],
    ]))
}

pub fn image_bytes(rows: usize, cols: usize, pixels: &[u8]) -> CliResult<Vec<u8>> {
    if rows == 0 || cols == 0 || pixels.len() % (rows * cols) != 0 {
        return Err(CliError::config("pixel count does not tile into images"));
    }
    let n = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(n as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend_from_slice(pixels);
    Ok(out)
}

pub fn label_bytes(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn write_idx_images(path: &Path, rows: usize, cols: usize, pixels: &[u8]) -> CliResult<()> {
    fs::write(path, image_bytes(rows, cols, pixels)?)?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> CliResult<()> {
    fs::write(path, label_bytes(labels))?;
    Ok(())
}

struct RawImages {
    n: usize,
    dim: usize,
    pixels: Vec<u8>,
}

fn parse_images(bytes: &[u8], what: &str) -> CliResult<RawImages> {
    let magic = be_u32(bytes, 0, what)?;
    if magic != IMAGE_MAGIC {
        return Err(CliError::config(format!(
            "{what} has magic {magic}, expected {IMAGE_MAGIC}"
        )));
    }
    let n = be_u32(bytes, 4, what)? as usize;
    let rows = be_u32(bytes, 8, what)? as usize;
    let cols = be_u32(bytes, 12, what)? as usize;
    let dim = rows * cols;
    let expected = 16 + n * dim;
    if bytes.len() != expected {
        return Err(CliError::config(format!(
            "{what} has {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    Ok(RawImages {
        n,
        dim,
        pixels: bytes[16..].to_vec(),
    })
}

fn parse_labels(bytes: &[u8], what: &str) -> CliResult<Vec<u8>> {
    let magic = be_u32(bytes, 0, what)?;
    if magic != LABEL_MAGIC {
        return Err(CliError::config(format!(
            "{what} has magic {magic}, expected {LABEL_MAGIC}"
        )));
    }
    let n = be_u32(bytes, 4, what)? as usize;
    if bytes.len() != 8 + n {
        return Err(CliError::config(format!(
            "{what} has {} bytes, expected {}",
            bytes.len(),
            8 + n
        )));
    }
    Ok(bytes[8..].to_vec())
}

/// Loads an image/label file pair into a dataset. The class count is the
/// largest label plus one, floored at two so a degenerate subset still
/// yields a trainable output layer.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> CliResult<LabeledDataset> {
    let image_file = fs::read(images_path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", images_path.display())))?;
    let label_file = fs::read(labels_path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", labels_path.display())))?;
    let images = parse_images(&image_file, &format!("images {}", images_path.display()))?;
    let labels = parse_labels(&label_file, &format!("labels {}", labels_path.display()))?;
    if labels.len() != images.n {
        return Err(CliError::config(format!(
            "image/label count mismatch: {} images, {} labels",
            images.n,
            labels.len()
        )));
    }
    let features: Vec<f64> = images.pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let classes = labels.iter().copied().max().map_or(2, |m| (m + 1).max(2));
    LabeledDataset::new(images.dim, classes, features, labels)
        .map_err(|e| CliError::config(format!("{}: {e}", images_path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn three_image_round_trip_is_bit_identical() {
        let dir = tempdir().unwrap();
        let img = dir.path().join("img.idx");
        let lab = dir.path().join("lab.idx");
        let pixels: Vec<u8> = (0..3 * 4).map(|v| (v * 21) as u8).collect();
        write_idx_images(&img, 2, 2, &pixels).unwrap();
        write_idx_labels(&lab, &[0, 1, 2]).unwrap();
        let ds = load_idx(&img, &lab).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 4);
        assert_eq!(ds.classes(), 3);
        for (i, &p) in pixels.iter().enumerate() {
            let back = (ds.features_flat()[i] * 255.0).round() as u8;
            assert_eq!(back, p, "pixel {i}");
        }
        assert_eq!(ds.labels(), &[0, 1, 2]);
        // writing the loaded pixels again reproduces the file exactly
        let rewritten = image_bytes(2, 2, &pixels).unwrap();
        assert_eq!(std::fs::read(&img).unwrap(), rewritten);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut bytes = image_bytes(1, 1, &[5]).unwrap();
        bytes[3] = 0xfe; // magic 2051 -> 2046
        assert!(parse_images(&bytes, "test").is_err());
        let labels = label_bytes(&[1]);
        assert!(parse_images(&labels, "test").is_err());
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let dir = tempdir().unwrap();
        let img = dir.path().join("img.idx");
        let lab = dir.path().join("lab.idx");
        write_idx_images(&img, 1, 2, &[0, 1, 2, 3]).unwrap(); // 2 images
        write_idx_labels(&lab, &[0, 1, 0]).unwrap(); // 3 labels
        assert!(load_idx(&img, &lab).is_err());
    }

    #[test]
    fn truncated_files_are_rejected() {
        let good = image_bytes(2, 2, &[1, 2, 3, 4]).unwrap();
        assert!(parse_images(&good[..good.len() - 1], "test").is_err());
        assert!(parse_images(&good[..10], "test").is_err());
        let labels = label_bytes(&[1, 2]);
        assert!(parse_labels(&labels[..9], "test").is_err());
    }

    #[test]
    fn pixels_scale_into_unit_interval() {
        let dir = tempdir().unwrap();
        let img = dir.path().join("img.idx");
        let lab = dir.path().join("lab.idx");
        write_idx_images(&img, 1, 2, &[0, 255]).unwrap();
        write_idx_labels(&lab, &[1]).unwrap();
        let ds = load_idx(&img, &lab).unwrap();
        assert_eq!(ds.features(0), &[0.0, 1.0]);
    }
}
