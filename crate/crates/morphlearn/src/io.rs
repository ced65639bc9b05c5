//! Output formats: binary PGM for images, CSV for kernels, loss histories and
//! report tables, and a flat text bundle for trained networks.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::kernel::Kernel;
use crate::layers::LayerKind;
use crate::network::Network;
use crate::train::EpochStats;
use crate::Scalar;

/// Write an image as binary PGM (P5, maxval 255), mapping the image's own
/// value range linearly onto the gray levels. Constant images come out black.
pub fn write_pgm<T: Scalar>(path: impl AsRef<Path>, image: &Image<T>) -> Result<()> {
    if image.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (mn, mx) = image.min_max()?;
    let span = mx - mn;
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    write!(w, "P5\n{} {}\n255\n", image.width(), image.height())?;
    let bytes: Vec<u8> = image
        .pixels()
        .iter()
        .map(|&v| {
            if span == T::zero() {
                0u8
            } else {
                let t = (v - mn) / span;
                (t.to_f64().unwrap_or(0.0) * 255.0).round().clamp(0.0, 255.0) as u8
            }
        })
        .collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Kernel as CSV: one line per kernel row, full-precision decimal values.
pub fn kernel_csv_string<T: Scalar>(kernel: &Kernel<T>) -> String {
    let mut out = String::new();
    for ky in 0..kernel.side() {
        let row: Vec<String> = (0..kernel.side())
            .map(|kx| format!("{}", kernel.get(kx, ky)))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_kernel_csv<T: Scalar>(path: impl AsRef<Path>, kernel: &Kernel<T>) -> Result<()> {
    std::fs::write(path.as_ref(), kernel_csv_string(kernel))?;
    Ok(())
}

/// Loss history as CSV with columns `epoch,mean_loss,lr`.
pub fn loss_history_csv_string<T: Scalar>(history: &[EpochStats<T>]) -> String {
    let mut out = String::from("epoch,mean_loss,lr\n");
    for e in history {
        out.push_str(&format!("{},{},{}\n", e.epoch, e.mean_loss, e.lr));
    }
    out
}

pub fn write_loss_history_csv<T: Scalar>(
    path: impl AsRef<Path>,
    history: &[EpochStats<T>],
) -> Result<()> {
    std::fs::write(path.as_ref(), loss_history_csv_string(history))?;
    Ok(())
}

/// Trained network as a flat text bundle: one header line per layer followed
/// by its kernel rows.
pub fn write_network_bundle<T: Scalar>(path: impl AsRef<Path>, net: &Network<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    writeln!(w, "layers {}", net.layers().len())?;
    for (i, layer) in net.layers().iter().enumerate() {
        match layer.kind() {
            LayerKind::ScaleBias => {
                let (s, b) = layer.scale_and_bias().expect("affine layer");
                writeln!(w, "layer {i} scale_bias scale {s} bias {b}")?;
            }
            kind => {
                let k = layer.kernel().expect("window layer");
                let p = layer.shape_param().expect("window layer");
                writeln!(w, "layer {i} {kind} side {} shape_param {p}", k.side())?;
                w.write_all(kernel_csv_string(k).as_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_has_the_p5_header_and_linear_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let img = Image::new(2, 2, vec![0.0, 0.5, 0.75, 1.0]).unwrap();
        write_pgm(&path, &img).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0u8, 128, 191, 255]);
    }

    #[test]
    fn constant_image_writes_black() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flat.pgm");
        write_pgm(&path, &Image::constant(3, 1, 2.5).unwrap()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[bytes.len() - 3..], &[0u8, 0, 0]);
    }

    #[test]
    fn kernel_csv_round_trips_through_parse() {
        let k = Kernel::new(3, vec![0.0, 0.1, -0.25, 1.0 / 3.0, 0.4, 0.5, 2.0, -1.5, 0.125])
            .unwrap();
        let csv = kernel_csv_string(&k);
        let parsed: Vec<f64> = csv
            .lines()
            .flat_map(|l| l.split(',').map(|v| v.parse().unwrap()))
            .collect();
        assert_eq!(parsed, k.weights());
    }

    #[test]
    fn loss_history_csv_is_stable() {
        let history = vec![
            EpochStats {
                epoch: 1,
                mean_loss: 0.5,
                lr: 0.01,
            },
            EpochStats {
                epoch: 2,
                mean_loss: 0.25,
                lr: 0.01,
            },
        ];
        let a = loss_history_csv_string(&history);
        let b = loss_history_csv_string(&history);
        assert_eq!(a, b);
        assert!(a.starts_with("epoch,mean_loss,lr\n1,0.5,0.01\n"));
    }
}
