//! Image container, padding, rescaling and error metrics.
//!
//! An [`Image`] is a dense row-major grid of finite real pixel values. All
//! operations here are pure: they take references and return fresh values.

use crate::error::{Error, Result};
use crate::{scalar, Scalar};

/// Border handling for windowed operations.
///
/// `EdgeReplicate` clamps out-of-image samples to the nearest edge pixel and is
/// the default everywhere: it keeps padded values inside the value band of the
/// image itself, which the CHM-based layers need. `Constant` fills the border
/// with a fixed value and is mainly useful when an exact operator and a smooth
/// layer must see identical windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PadMode<T> {
    EdgeReplicate,
    Constant(T),
}

/// A 2D grid of real-valued pixels, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    pixels: Vec<T>,
}

impl<T: Scalar> Image<T> {
    /// Build an image from row-major pixel data.
    ///
    /// Fails if the pixel count does not match `width * height` or if any
    /// value is NaN or infinite.
    pub fn new(width: usize, height: usize, pixels: Vec<T>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {}x{} image",
                pixels.len(),
                width,
                height
            )));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image pixels"));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn constant(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Build an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub(crate) fn set(&mut self, x: usize, y: usize, value: T) {
        self.pixels[y * self.width + x] = value;
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Minimum and maximum pixel value. Errors on an empty image.
    pub fn min_max(&self) -> Result<(T, T)> {
        if self.pixels.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut mn = self.pixels[0];
        let mut mx = self.pixels[0];
        for &v in &self.pixels[1..] {
            if v < mn {
                mn = v;
            }
            if v > mx {
                mx = v;
            }
        }
        Ok((mn, mx))
    }

    /// Pixelwise map. Internal: callers must keep values finite.
    pub(crate) fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn zeros_like(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: vec![T::zero(); self.pixels.len()],
        }
    }

    pub(crate) fn pixels_mut(&mut self) -> &mut [T] {
        &mut self.pixels
    }
}

/// Rescale an image into the band `[1, 2]`.
///
/// `out = 1 + (f - min f) / (max f - min f)`. A constant image has no range to
/// stretch and maps to the constant image `1`, which stays inside the band.
pub fn rescale_unit_band<T: Scalar>(f: &Image<T>) -> Result<Image<T>> {
    let (rescaled, _) = rescale_with_gain(f)?;
    Ok(rescaled)
}

/// Rescale and also return the slope `d out / d f` (zero for a constant image).
///
/// The trainer differentiates through the rescale as an affine map, treating
/// the min and max as constants of the sample, so the slope is all it needs.
pub(crate) fn rescale_with_gain<T: Scalar>(f: &Image<T>) -> Result<(Image<T>, T)> {
    let (mn, mx) = f.min_max()?;
    if mx == mn {
        return Ok((Image::constant(f.width(), f.height(), T::one())?, T::zero()));
    }
    let gain = T::one() / (mx - mn);
    Ok((f.map(|v| T::one() + (v - mn) * gain), gain))
}

/// Pad an image by `margin` pixels on every side.
pub fn pad<T: Scalar>(f: &Image<T>, margin: usize, mode: PadMode<T>) -> Image<T> {
    let padded = Padded::build(f, margin, mode);
    Image {
        width: f.width() + 2 * margin,
        height: f.height() + 2 * margin,
        pixels: padded.values,
    }
}

/// Remove `margin` pixels from every side. Inverse of [`pad`].
pub fn crop<T: Scalar>(f: &Image<T>, margin: usize) -> Result<Image<T>> {
    if f.width() < 2 * margin || f.height() < 2 * margin {
        return Err(Error::DimensionMismatch(format!(
            "cannot crop {} pixels from a {}x{} image",
            margin,
            f.width(),
            f.height()
        )));
    }
    let w = f.width() - 2 * margin;
    let h = f.height() - 2 * margin;
    Image::from_fn(w, h, |x, y| f.get(x + margin, y + margin))
}

/// Mean squared error between two images of identical dimensions.
pub fn mse<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<T> {
    if !a.same_dims(b) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum: T = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok(sum / scalar::<T>(a.len() as f64))
}

/// Padded view of an image with, for every padded cell, the index of the
/// in-image pixel it mirrors (`None` for constant fill). Windowed operators
/// read values through this view; backward passes use the source map to route
/// border gradients back to the replicated pixels.
pub(crate) struct Padded<T> {
    pub width: usize,
    pub values: Vec<T>,
    pub source: Vec<Option<usize>>,
}

impl<T: Scalar> Padded<T> {
    pub fn build(f: &Image<T>, margin: usize, mode: PadMode<T>) -> Self {
        let w = f.width() + 2 * margin;
        let h = f.height() + 2 * margin;
        if f.is_empty() {
            // nothing to replicate; fill with the constant (or zero)
            let fill = match mode {
                PadMode::EdgeReplicate => T::zero(),
                PadMode::Constant(c) => c,
            };
            return Self {
                width: w,
                values: vec![fill; w * h],
                source: vec![None; w * h],
            };
        }
        let mut values = Vec::with_capacity(w * h);
        let mut source = Vec::with_capacity(w * h);
        for py in 0..h {
            for px in 0..w {
                let ix = px as isize - margin as isize;
                let iy = py as isize - margin as isize;
                let inside = ix >= 0
                    && iy >= 0
                    && (ix as usize) < f.width()
                    && (iy as usize) < f.height();
                match mode {
                    PadMode::EdgeReplicate => {
                        let cx = ix.clamp(0, f.width() as isize - 1) as usize;
                        let cy = iy.clamp(0, f.height() as isize - 1) as usize;
                        let idx = cy * f.width() + cx;
                        values.push(f.pixels()[idx]);
                        source.push(Some(idx));
                    }
                    PadMode::Constant(c) => {
                        if inside {
                            let idx = iy as usize * f.width() + ix as usize;
                            values.push(f.pixels()[idx]);
                            source.push(Some(idx));
                        } else {
                            values.push(c);
                            source.push(None);
                        }
                    }
                }
            }
        }
        Self {
            width: w,
            values,
            source,
        }
    }

    #[inline]
    pub fn value(&self, px: usize, py: usize) -> T {
        self.values[py * self.width + px]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, px: &[f64]) -> Image<f64> {
        Image::new(w, h, px.to_vec()).unwrap()
    }

    #[test]
    fn new_rejects_bad_length_and_nonfinite() {
        assert!(matches!(
            Image::new(2, 2, vec![1.0; 3]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            Image::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            Image::new(1, 2, vec![1.0, f64::INFINITY]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn rescale_maps_into_unit_band() {
        let f = img(3, 1, &[0.0, 0.5, 1.0]);
        let r = rescale_unit_band(&f).unwrap();
        assert_eq!(r.pixels(), &[1.0, 1.5, 2.0]);

        let f = img(2, 1, &[-3.0, 1.0]);
        let r = rescale_unit_band(&f).unwrap();
        assert_eq!(r.pixels(), &[1.0, 2.0]);
    }

    #[test]
    fn rescale_constant_image_maps_to_one() {
        let f = img(2, 2, &[7.0; 4]);
        let r = rescale_unit_band(&f).unwrap();
        assert_eq!(r.pixels(), &[1.0; 4]);
    }

    #[test]
    fn rescale_empty_image_errors() {
        let f = Image::<f64>::new(0, 0, vec![]).unwrap();
        assert!(matches!(rescale_unit_band(&f), Err(Error::EmptyInput)));
    }

    #[test]
    fn rescale_stays_in_band_and_is_idempotent() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..20 {
            let f = Image::from_fn(9, 7, |_, _| next() * 100.0 - 50.0).unwrap();
            let r = rescale_unit_band(&f).unwrap();
            let (mn, mx) = r.min_max().unwrap();
            assert!(mn >= 1.0 && mx <= 2.0);
            let rr = rescale_unit_band(&r).unwrap();
            for (a, b) in rr.pixels().iter().zip(r.pixels()) {
                assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn pad_replicates_single_pixel() {
        let f = img(1, 1, &[5.0]);
        let p = pad(&f, 1, PadMode::EdgeReplicate);
        assert_eq!(p.width(), 3);
        assert_eq!(p.height(), 3);
        assert_eq!(p.pixels(), &[5.0; 9]);
    }

    #[test]
    fn pad_constant_fills_border() {
        let f = img(1, 1, &[5.0]);
        let p = pad(&f, 1, PadMode::Constant(1.0));
        assert_eq!(
            p.pixels(),
            &[1.0, 1.0, 1.0, 1.0, 5.0, 1.0, 1.0, 1.0, 1.0]
        );
    }

    #[test]
    fn pad_zero_margin_is_identity() {
        let f = img(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(pad(&f, 0, PadMode::EdgeReplicate), f);
        assert_eq!(pad(&f, 0, PadMode::Constant(0.0)), f);
    }

    #[test]
    fn pad_then_crop_is_identity() {
        let f = img(4, 3, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
        for mode in [PadMode::EdgeReplicate, PadMode::Constant(-2.5)] {
            let p = pad(&f, 2, mode);
            assert_eq!(crop(&p, 2).unwrap(), f);
        }
    }

    #[test]
    fn mse_matches_hand_computed_values() {
        let a = img(2, 1, &[0.0, 0.0]);
        let b = img(2, 1, &[1.0, 1.0]);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &b).unwrap(), 1.0);
        let a = img(2, 1, &[0.0, 2.0]);
        let b = img(2, 1, &[1.0, 1.0]);
        assert_eq!(mse(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn mse_is_symmetric_and_positive_unless_equal() {
        let a = img(2, 2, &[0.5, -1.0, 2.0, 0.25]);
        let b = img(2, 2, &[0.5, -1.0, 2.5, 0.25]);
        assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
        assert!(mse(&a, &b).unwrap() > 0.0);
        assert_eq!(mse(&b, &b).unwrap(), 0.0);
    }

    #[test]
    fn mse_rejects_dimension_mismatch() {
        let a = img(2, 1, &[0.0, 0.0]);
        let b = img(1, 2, &[0.0, 0.0]);
        assert!(matches!(mse(&a, &b), Err(Error::DimensionMismatch(_))));
    }
}
