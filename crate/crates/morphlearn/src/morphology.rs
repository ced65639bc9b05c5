//! Exact grayscale morphology: erosion, dilation, opening, closing.
//!
//! Both elementary operators read the kernel through the same reflected access
//! pattern: the output at `x` combines `f(x - d)` with `b(d)` over every kernel
//! offset `d`. This matters for asymmetric kernels and is pinned by tests.
//!
//! Flat structuring elements mark off-support cells with the
//! [`Kernel::excluded`] sentinel; those cells are skipped outright rather than
//! pulled through arithmetic.

use crate::error::{Error, Result};
use crate::image::{Image, PadMode, Padded};
use crate::kernel::Kernel;
use crate::Scalar;

#[derive(Clone, Copy)]
enum Extremum {
    Min,
    Max,
}

fn window_extremum<T: Scalar>(
    f: &Image<T>,
    b: &Kernel<T>,
    mode: PadMode<T>,
    which: Extremum,
) -> Image<T> {
    let r = b.radius();
    let side = b.side();
    let padded = Padded::build(f, r, mode);
    let mut out = f.zeros_like();
    for y in 0..f.height() {
        for x in 0..f.width() {
            let mut best: Option<T> = None;
            for ky in 0..side {
                for kx in 0..side {
                    let w = b.get(kx, ky);
                    if Kernel::<T>::is_excluded(w) {
                        continue;
                    }
                    // sample f(x - d) for kernel offset d = (kx - r, ky - r)
                    let v = padded.value(x + 2 * r - kx, y + 2 * r - ky);
                    let candidate = match which {
                        Extremum::Min => v - w,
                        Extremum::Max => v + w,
                    };
                    best = Some(match (best, which) {
                        (None, _) => candidate,
                        (Some(b0), Extremum::Min) => b0.min(candidate),
                        (Some(b0), Extremum::Max) => b0.max(candidate),
                    });
                }
            }
            // constructors reject kernels with empty support
            out.set(x, y, best.expect("kernel support is nonempty"));
        }
    }
    out
}

/// Grayscale erosion: windowed minimum of `f(x - d) - b(d)`.
pub fn erode<T: Scalar>(f: &Image<T>, b: &Kernel<T>, mode: PadMode<T>) -> Image<T> {
    window_extremum(f, b, mode, Extremum::Min)
}

/// Grayscale dilation: windowed maximum of `f(x - d) + b(d)`.
pub fn dilate<T: Scalar>(f: &Image<T>, b: &Kernel<T>, mode: PadMode<T>) -> Image<T> {
    window_extremum(f, b, mode, Extremum::Max)
}

/// Opening: erosion followed by dilation with the same kernel.
pub fn open<T: Scalar>(f: &Image<T>, b: &Kernel<T>, mode: PadMode<T>) -> Image<T> {
    dilate(&erode(f, b, mode), b, mode)
}

/// Closing: dilation followed by erosion with the same kernel.
pub fn close<T: Scalar>(f: &Image<T>, b: &Kernel<T>, mode: PadMode<T>) -> Image<T> {
    erode(&dilate(f, b, mode), b, mode)
}

/// Encode a flat structuring element: 0 on the support, the excluded sentinel
/// elsewhere. `mask` is row-major with `side * side` entries.
pub fn flat_kernel<T: Scalar>(side: usize, mask: &[bool]) -> Result<Kernel<T>> {
    if side % 2 == 0 {
        return Err(Error::EvenKernelSide(side));
    }
    if mask.len() != side * side {
        return Err(Error::DimensionMismatch(format!(
            "{} mask cells for a {side}x{side} kernel",
            mask.len()
        )));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptySupport);
    }
    Kernel::new(
        side,
        mask.iter()
            .map(|&m| if m { T::zero() } else { Kernel::<T>::excluded() })
            .collect(),
    )
}
