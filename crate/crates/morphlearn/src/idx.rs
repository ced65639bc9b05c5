//! IDX binary container format (the MNIST file layout).
//!
//! Big-endian throughout: images carry magic `0x00000803`, then count, rows
//! and cols as u32, then unsigned bytes row-major; labels carry magic
//! `0x00000801`, then count, then one byte per label. Pixels map to reals in
//! `[0, 1]` by dividing by 255.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::{scalar, Scalar};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Guard against absurd headers before allocating.
const MAX_DIM: u32 = 1 << 16;

fn read_u32(reader: &mut impl Read, needed: usize, found: usize) -> Result<u32> {
    reader
        .read_u32::<BigEndian>()
        .map_err(|_| Error::IdxTruncated { needed, found })
}

/// Parse an IDX image file into unit-range images.
pub fn load_idx_images<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<Image<T>>> {
    let file = File::open(path.as_ref())?;
    let total = file.metadata().map(|m| m.len() as usize).unwrap_or(0);
    let mut reader = BufReader::new(file);

    let magic = read_u32(&mut reader, 4, total)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::IdxBadMagic {
            expected: IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = read_u32(&mut reader, 16, total)?;
    let rows = read_u32(&mut reader, 16, total)?;
    let cols = read_u32(&mut reader, 16, total)?;
    if rows == 0 || cols == 0 || rows > MAX_DIM || cols > MAX_DIM {
        return Err(Error::IdxDimensions(format!("{rows}x{cols} images")));
    }

    let per_image = rows as usize * cols as usize;
    let needed = 16 + count as usize * per_image;
    let mut payload = vec![0u8; count as usize * per_image];
    reader
        .read_exact(&mut payload)
        .map_err(|_| Error::IdxTruncated {
            needed,
            found: total,
        })?;

    let inv = scalar::<T>(1.0 / 255.0);
    let mut images = Vec::with_capacity(count as usize);
    for chunk in payload.chunks_exact(per_image) {
        let pixels = chunk.iter().map(|&b| scalar::<T>(b as f64) * inv).collect();
        images.push(Image::new(cols as usize, rows as usize, pixels)?);
    }
    Ok(images)
}

/// Parse an IDX label file.
pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let file = File::open(path.as_ref())?;
    let total = file.metadata().map(|m| m.len() as usize).unwrap_or(0);
    let mut reader = BufReader::new(file);

    let magic = read_u32(&mut reader, 4, total)?;
    if magic != LABELS_MAGIC {
        return Err(Error::IdxBadMagic {
            expected: LABELS_MAGIC,
            found: magic,
        });
    }
    let count = read_u32(&mut reader, 8, total)?;
    let mut labels = vec![0u8; count as usize];
    reader
        .read_exact(&mut labels)
        .map_err(|_| Error::IdxTruncated {
            needed: 8 + count as usize,
            found: total,
        })?;
    Ok(labels)
}

/// Write images as an IDX file, quantizing unit-range pixels back to bytes.
/// All images must share dimensions.
pub fn write_idx_images<T: Scalar>(path: impl AsRef<Path>, images: &[Image<T>]) -> Result<()> {
    if images.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (w, h) = (images[0].width(), images[0].height());
    for img in images {
        if img.width() != w || img.height() != h {
            return Err(Error::DimensionMismatch(
                "idx images must share dimensions".into(),
            ));
        }
    }
    let mut writer = BufWriter::new(File::create(path.as_ref())?);
    writer.write_u32::<BigEndian>(IMAGES_MAGIC)?;
    writer.write_u32::<BigEndian>(images.len() as u32)?;
    writer.write_u32::<BigEndian>(h as u32)?;
    writer.write_u32::<BigEndian>(w as u32)?;
    let max = scalar::<T>(255.0);
    for img in images {
        for &v in img.pixels() {
            let byte = (v * max)
                .round()
                .max(T::zero())
                .min(max)
                .to_u8()
                .unwrap_or(0);
            writer.write_all(&[byte])?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_idx_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.idx");
        let img = Image::new(3, 2, vec![0.0, 1.0, 0.5, 17.0 / 255.0, 0.25, 1.0]).unwrap();
        write_idx_images(&path, &[img.clone()]).unwrap();
        let back = load_idx_images::<f64>(&path).unwrap();
        assert_eq!(back.len(), 1);
        // byte-level identity: write(load(x)) reproduces the file exactly
        let bytes1 = std::fs::read(&path).unwrap();
        let path2 = dir.path().join("img2.idx");
        write_idx_images(&path2, &back).unwrap();
        let bytes2 = std::fs::read(&path2).unwrap();
        assert_eq!(bytes1, bytes2);
        // quantization grid values also round-trip as pixels
        assert_eq!(back[0].get(0, 1), 17.0 / 255.0);
        assert_eq!(back[0].get(1, 0), 1.0);
    }

    #[test]
    fn wrong_magic_is_a_distinct_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.idx");
        let mut f = File::create(&path).unwrap();
        f.write_all(&0x0000_0802u32.to_be_bytes()).unwrap();
        f.write_all(&1u32.to_be_bytes()).unwrap();
        drop(f);
        match load_idx_images::<f64>(&path) {
            Err(Error::IdxBadMagic { expected, found }) => {
                assert_eq!(expected, IMAGES_MAGIC);
                assert_eq!(found, 0x0000_0802);
            }
            other => panic!("expected bad magic, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_is_a_distinct_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.idx");
        let img = Image::new(4, 4, vec![0.5; 16]).unwrap();
        write_idx_images(&path, &[img]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(
            load_idx_images::<f64>(&path),
            Err(Error::IdxTruncated { .. })
        ));
    }

    #[test]
    fn zero_dimensions_are_a_distinct_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dims.idx");
        let mut f = File::create(&path).unwrap();
        f.write_all(&IMAGES_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&1u32.to_be_bytes()).unwrap();
        f.write_all(&0u32.to_be_bytes()).unwrap();
        f.write_all(&28u32.to_be_bytes()).unwrap();
        drop(f);
        assert!(matches!(
            load_idx_images::<f64>(&path),
            Err(Error::IdxDimensions(_))
        ));
    }

    #[test]
    fn labels_parse_and_reject_foreign_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.idx");
        let mut f = File::create(&path).unwrap();
        f.write_all(&LABELS_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&3u32.to_be_bytes()).unwrap();
        f.write_all(&[7u8, 0, 9]).unwrap();
        drop(f);
        assert_eq!(load_idx_labels(&path).unwrap(), vec![7, 0, 9]);

        let path = dir.path().join("imgs-as-labels.idx");
        let mut f = File::create(&path).unwrap();
        f.write_all(&IMAGES_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&0u32.to_be_bytes()).unwrap();
        drop(f);
        assert!(matches!(
            load_idx_labels(&path),
            Err(Error::IdxBadMagic { .. })
        ));
    }
}
