//! IDX binary image/label reader and writer.
//!
//! Big-endian headers: magic 0x00000803 + (count, rows, cols) for images,
//! 0x00000801 + count for labels. Pixels are unsigned bytes scaled to
//! [0, 1] by division by 255 on read.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};

use crate::data::{Dataset, Example};
use crate::error::{Error, Result};
use crate::vector::FeatureVec;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Reads an image/label file pair into a dataset of dense `[0,1]` pixel
/// vectors with integer class labels.
pub fn read_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images_display = images_path.display().to_string();
    let labels_display = labels_path.display().to_string();

    let mut img = BufReader::new(File::open(images_path)?);
    let magic = img.read_u32::<BigEndian>()?;
    if magic != IMAGES_MAGIC {
        return Err(Error::BadMagic {
            path: images_display,
            got: magic,
            expected: IMAGES_MAGIC,
        });
    }
    let count = img.read_u32::<BigEndian>()? as usize;
    let rows = img.read_u32::<BigEndian>()? as usize;
    let cols = img.read_u32::<BigEndian>()? as usize;
    let dim = rows * cols;
    if dim == 0 {
        return Err(Error::Format(format!(
            "{images_display}: zero image dimensions {rows}x{cols}"
        )));
    }
    let mut pixels = vec![0u8; count * dim];
    img.read_exact(&mut pixels).map_err(|_| {
        Error::Format(format!(
            "{images_display}: truncated image data, header promises {count} records"
        ))
    })?;

    let mut lab = BufReader::new(File::open(labels_path)?);
    let magic = lab.read_u32::<BigEndian>()?;
    if magic != LABELS_MAGIC {
        return Err(Error::BadMagic {
            path: labels_display,
            got: magic,
            expected: LABELS_MAGIC,
        });
    }
    let label_count = lab.read_u32::<BigEndian>()? as usize;
    if label_count != count {
        return Err(Error::Format(format!(
            "{labels_display}: {label_count} labels for {count} images"
        )));
    }
    let mut labels = vec![0u8; label_count];
    lab.read_exact(&mut labels).map_err(|_| {
        Error::Format(format!(
            "{labels_display}: truncated label data, header promises {label_count} records"
        ))
    })?;

    let examples = pixels
        .chunks_exact(dim)
        .zip(&labels)
        .map(|(chunk, &y)| Example {
            features: FeatureVec::Dense(chunk.iter().map(|&b| b as f64 / 255.0).collect()),
            label: y as i32,
        })
        .collect();
    Dataset::new(examples, dim)
}

/// Writes raw byte images in the IDX format.
pub fn write_idx_images(path: &Path, images: &[Vec<u8>], rows: usize, cols: usize) -> Result<()> {
    let dim = rows * cols;
    for (i, img) in images.iter().enumerate() {
        if img.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: images[i].len(),
            });
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    out.write_u32::<BigEndian>(IMAGES_MAGIC)?;
    out.write_u32::<BigEndian>(images.len() as u32)?;
    out.write_u32::<BigEndian>(rows as u32)?;
    out.write_u32::<BigEndian>(cols as u32)?;
    for img in images {
        out.write_all(img)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes labels in the IDX format.
pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_u32::<BigEndian>(LABELS_MAGIC)?;
    out.write_u32::<BigEndian>(labels.len() as u32)?;
    out.write_all(labels)?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;
    use tempfile::TempDir;

    /// Minimal independent reader used to cross-check the main one.
    fn naive_first_label(path: &Path) -> u8 {
        let bytes = std::fs::read(path).unwrap();
        assert_eq!(&bytes[0..4], &[0, 0, 8, 1]);
        bytes[8]
    }

    #[test]
    fn round_trip_and_scaling() {
        let dir = TempDir::new().unwrap();
        let images = dir.path().join("img.idx");
        let labels = dir.path().join("lab.idx");
        // One all-white 28x28 image: every pixel reads back as 1.0.
        write_idx_images(&images, &[vec![255u8; 784], vec![0u8; 784]], 28, 28).unwrap();
        write_idx_labels(&labels, &[7, 3]).unwrap();

        let d = read_idx(&images, &labels).unwrap();
        assert_eq!(d.dim(), 784);
        assert_eq!(d.len(), 2);
        assert_eq!(d.examples()[0].label, 7);
        assert!(d.examples()[0]
            .features
            .to_dense(784)
            .iter()
            .all(|&v| v == 1.0));
        assert!(d.examples()[1]
            .features
            .to_dense(784)
            .iter()
            .all(|&v| v == 0.0));
        assert_eq!(naive_first_label(&labels), 7);
    }

    #[test]
    fn magic_mismatch_is_rejected() {
        let dir = TempDir::new().unwrap();
        let images = dir.path().join("img.idx");
        let labels = dir.path().join("lab.idx");
        write_idx_labels(&images, &[1]).unwrap(); // wrong magic for images
        write_idx_labels(&labels, &[1]).unwrap();
        assert!(matches!(
            read_idx(&images, &labels),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = TempDir::new().unwrap();
        let images = dir.path().join("img.idx");
        let labels = dir.path().join("lab.idx");
        // Header promises 10000 records but carries none.
        let mut f = File::create(&images).unwrap();
        f.write_all(&IMAGES_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&10_000u32.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        drop(f);
        write_idx_labels(&labels, &[0; 4]).unwrap();
        assert!(matches!(read_idx(&images, &labels), Err(Error::Format(_))));
    }

    #[test]
    fn count_mismatch_between_files_is_rejected() {
        let dir = TempDir::new().unwrap();
        let images = dir.path().join("img.idx");
        let labels = dir.path().join("lab.idx");
        write_idx_images(&images, &[vec![0u8; 4]], 2, 2).unwrap();
        write_idx_labels(&labels, &[1, 2]).unwrap();
        assert!(matches!(read_idx(&images, &labels), Err(Error::Format(_))));
    }
}
