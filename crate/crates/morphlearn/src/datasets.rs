//! Training data: the six committed 7x7 target structuring elements, MNIST
//! ingestion with a synthetic fallback corpus, and oracle-generated
//! (input, target) pairs.
//!
//! The structuring-element values are frozen literal tables, not recomputed
//! from geometry, so they are identical across platforms and runs. Each is a
//! cone peaking at 0.4 in the center, falling off linearly with the shape's
//! distance measure, zero off support.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::idx::load_idx_images;
use crate::image::{Image, PadMode};
use crate::kernel::Kernel;
use crate::layers::LayerKind;
use crate::morphology::{close, dilate, erode, open};
use crate::{scalar, Scalar};

/// The six target structuring elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SEName {
    Cross3,
    Cross7,
    Disk2,
    Disk3,
    Diamond3,
    Complex,
}

impl SEName {
    pub fn all() -> [SEName; 6] {
        [
            SEName::Cross3,
            SEName::Cross7,
            SEName::Disk2,
            SEName::Disk3,
            SEName::Diamond3,
            SEName::Complex,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            SEName::Cross3 => "cross3",
            SEName::Cross7 => "cross7",
            SEName::Disk2 => "disk2",
            SEName::Disk3 => "disk3",
            SEName::Diamond3 => "diamond3",
            SEName::Complex => "complex",
        }
    }
}

impl std::fmt::Display for SEName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SEName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cross3" => Ok(SEName::Cross3),
            "cross7" => Ok(SEName::Cross7),
            "disk2" => Ok(SEName::Disk2),
            "disk3" => Ok(SEName::Disk3),
            "diamond3" => Ok(SEName::Diamond3),
            "complex" => Ok(SEName::Complex),
            other => Err(Error::InvalidConfig(format!(
                "unknown structuring element {other:?}"
            ))),
        }
    }
}

/// The four morphological operations of the scenario matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MorphOp {
    Dilation,
    Erosion,
    Closing,
    Opening,
}

impl MorphOp {
    pub fn all() -> [MorphOp; 4] {
        [
            MorphOp::Dilation,
            MorphOp::Erosion,
            MorphOp::Closing,
            MorphOp::Opening,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            MorphOp::Dilation => "dilation",
            MorphOp::Erosion => "erosion",
            MorphOp::Closing => "closing",
            MorphOp::Opening => "opening",
        }
    }

    /// Compositions need two morphological layers; elementary operations one.
    pub fn layer_count(&self) -> usize {
        match self {
            MorphOp::Dilation | MorphOp::Erosion => 1,
            MorphOp::Closing | MorphOp::Opening => 2,
        }
    }
}

impl std::fmt::Display for MorphOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MorphOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dilation" | "dilate" => Ok(MorphOp::Dilation),
            "erosion" | "erode" => Ok(MorphOp::Erosion),
            "closing" | "close" => Ok(MorphOp::Closing),
            "opening" | "open" => Ok(MorphOp::Opening),
            other => Err(Error::InvalidConfig(format!("unknown operation {other:?}"))),
        }
    }
}

/// One scenario: learn one operation with one target structuring element
/// using one layer kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScenarioSpec {
    pub op: MorphOp,
    pub se: SEName,
    pub layer: LayerKind,
    pub sample_count: usize,
}

impl ScenarioSpec {
    pub fn new(op: MorphOp, se: SEName, layer: LayerKind, sample_count: usize) -> Result<Self> {
        if sample_count == 0 {
            return Err(Error::InvalidConfig("sample_count must be positive".into()));
        }
        if layer == LayerKind::ScaleBias {
            return Err(Error::InvalidConfig(
                "scenario layer must be morphological".into(),
            ));
        }
        Ok(Self {
            op,
            se,
            layer,
            sample_count,
        })
    }

    pub fn label(&self) -> String {
        format!("{}-{}-{}", self.op, self.se, self.layer)
    }
}

const SIDE: usize = 7;

const CROSS3: [f64; 49] = [
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
    0.0, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0, //
    0.0, 0.0, 0.2, 0.4, 0.2, 0.0, 0.0, //
    0.0, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0, //
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
];

const CROSS7: [f64; 49] = [
    0.0, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0, //
    0.0, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0, //
    0.0, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0, //
    0.1, 0.2, 0.3, 0.4, 0.3, 0.2, 0.1, //
    0.0, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0, //
    0.0, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0, //
    0.0, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0,
];

const DISK2: [f64; 49] = [
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
    0.0, 0.0, 0.0, 0.13333333333333333, 0.0, 0.0, 0.0, //
    0.0, 0.0, 0.21143819168358732, 0.26666666666666666, 0.21143819168358732, 0.0, 0.0, //
    0.0, 0.13333333333333333, 0.26666666666666666, 0.4, 0.26666666666666666, 0.13333333333333333, 0.0, //
    0.0, 0.0, 0.21143819168358732, 0.26666666666666666, 0.21143819168358732, 0.0, 0.0, //
    0.0, 0.0, 0.0, 0.13333333333333333, 0.0, 0.0, 0.0, //
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
];

const DISK3: [f64; 49] = [
    0.0, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0, //
    0.0, 0.11715728752538097, 0.17639320225002103, 0.2, 0.17639320225002103, 0.11715728752538097, 0.0, //
    0.0, 0.17639320225002103, 0.2585786437626905, 0.3, 0.2585786437626905, 0.17639320225002103, 0.0, //
    0.1, 0.2, 0.3, 0.4, 0.3, 0.2, 0.1, //
    0.0, 0.17639320225002103, 0.2585786437626905, 0.3, 0.2585786437626905, 0.17639320225002103, 0.0, //
    0.0, 0.11715728752538097, 0.17639320225002103, 0.2, 0.17639320225002103, 0.11715728752538097, 0.0, //
    0.0, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0,
];

const DIAMOND3: [f64; 49] = [
    0.0, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0, //
    0.0, 0.0, 0.1, 0.2, 0.1, 0.0, 0.0, //
    0.0, 0.1, 0.2, 0.3, 0.2, 0.1, 0.0, //
    0.1, 0.2, 0.3, 0.4, 0.3, 0.2, 0.1, //
    0.0, 0.1, 0.2, 0.3, 0.2, 0.1, 0.0, //
    0.0, 0.0, 0.1, 0.2, 0.1, 0.0, 0.0, //
    0.0, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0,
];

/// Asymmetric two-lobe shape: a cone around the center plus a ridge running
/// toward the lower-right corner and a spur at the upper-right.
const COMPLEX: [f64; 49] = [
    0.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.0, //
    0.0, 0.1, 0.2, 0.1, 0.1, 0.2, 0.0, //
    0.0, 0.2, 0.3, 0.2, 0.0, 0.1, 0.0, //
    0.0, 0.1, 0.3, 0.4, 0.2, 0.1, 0.0, //
    0.0, 0.0, 0.2, 0.3, 0.3, 0.2, 0.0, //
    0.0, 0.0, 0.0, 0.2, 0.3, 0.2, 0.1, //
    0.0, 0.0, 0.0, 0.0, 0.1, 0.1, 0.0,
];

/// The committed 7x7 grayscale target structuring element.
pub fn target_se<T: Scalar>(name: SEName) -> Kernel<T> {
    let table: &[f64; 49] = match name {
        SEName::Cross3 => &CROSS3,
        SEName::Cross7 => &CROSS7,
        SEName::Disk2 => &DISK2,
        SEName::Disk3 => &DISK3,
        SEName::Diamond3 => &DIAMOND3,
        SEName::Complex => &COMPLEX,
    };
    Kernel::new(SIDE, table.iter().map(|&v| scalar(v)).collect())
        .expect("committed tables are valid kernels")
}

/// Number of committed fallback images.
pub const SYNTHETIC_CORPUS_SIZE: usize = 64;
const SYNTHETIC_SEED: u64 = 0x6d6f_7270_686c; // fixed: the corpus is part of the artifact
pub const SYNTHETIC_IMAGE_SIDE: usize = 28;

/// The committed synthetic fallback corpus: 64 deterministic 28x28 images of
/// bright curved strokes on a dark background, so the test suite and CLI run
/// without the MNIST files.
pub fn synthetic_corpus<T: Scalar>() -> Vec<Image<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(SYNTHETIC_SEED);
    (0..SYNTHETIC_CORPUS_SIZE)
        .map(|_| synthetic_image(&mut rng))
        .collect()
}

/// One binary image mixing the structures both directions of learning need:
/// a thick blob arc (bright interiors make erosion targets informative), a
/// thin stroke, isolated bright dots on the background and dark pinholes
/// inside the blob (single-pixel structures expose every kernel cell to the
/// windowed extrema as the window slides).
fn synthetic_image<T: Scalar>(rng: &mut ChaCha8Rng) -> Image<T> {
    let side = SYNTHETIC_IMAGE_SIDE;
    let mut field = vec![0.0f64; side * side];
    let stamp_arc = |field: &mut [f64], rng: &mut ChaCha8Rng, sigma: f64| {
        let p0 = (rng.gen_range(5.0..23.0), rng.gen_range(5.0..23.0));
        let p1 = (rng.gen_range(2.0..26.0), rng.gen_range(2.0..26.0));
        let p2 = (rng.gen_range(5.0..23.0), rng.gen_range(5.0..23.0));
        let reach = (3.0 * sigma).ceil();
        for s in 0..=64 {
            let t = s as f64 / 64.0;
            let u = 1.0 - t;
            let cx = u * u * p0.0 + 2.0 * u * t * p1.0 + t * t * p2.0;
            let cy = u * u * p0.1 + 2.0 * u * t * p1.1 + t * t * p2.1;
            let x0 = (cx - reach).floor().max(0.0) as usize;
            let x1 = (cx + reach).ceil().min(side as f64 - 1.0) as usize;
            let y0 = (cy - reach).floor().max(0.0) as usize;
            let y1 = (cy + reach).ceil().min(side as f64 - 1.0) as usize;
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    let v = (-d2 / (2.0 * sigma * sigma)).exp();
                    let cell = &mut field[y * side + x];
                    *cell = cell.max(v);
                }
            }
        }
    };
    let blobs = rng.gen_range(1..=2);
    for _ in 0..blobs {
        let sigma = rng.gen_range(2.2..3.2);
        stamp_arc(&mut field, rng, sigma);
    }
    let thin_sigma = rng.gen_range(0.7..0.95);
    stamp_arc(&mut field, rng, thin_sigma);

    let mut pixels: Vec<f64> = field
        .into_iter()
        .map(|v| if v > 0.35 { 1.0 } else { 0.0 })
        .collect();

    // isolated bright dots on dark background
    for _ in 0..rng.gen_range(3..=6) {
        for _attempt in 0..20 {
            let x = rng.gen_range(1..side - 1);
            let y = rng.gen_range(1..side - 1);
            let clear = (0..9).all(|k| {
                let (dx, dy) = (k % 3, k / 3);
                pixels[(y + dy - 1) * side + (x + dx - 1)] == 0.0
            });
            if clear {
                pixels[y * side + x] = 1.0;
                break;
            }
        }
    }
    // dark pinholes inside bright interiors
    for _ in 0..rng.gen_range(3..=6) {
        for _attempt in 0..20 {
            let x = rng.gen_range(1..side - 1);
            let y = rng.gen_range(1..side - 1);
            let interior = (0..9).all(|k| {
                let (dx, dy) = (k % 3, k / 3);
                pixels[(y + dy - 1) * side + (x + dx - 1)] == 1.0
            });
            if interior {
                pixels[y * side + x] = 0.0;
                break;
            }
        }
    }

    Image::new(side, side, pixels.into_iter().map(scalar).collect())
        .expect("synthetic pixels are finite")
}

/// Load `count` images: the first `count` MNIST training digits when a
/// directory with `train-images-idx3-ubyte` is given, otherwise the committed
/// synthetic corpus cycled up to `count`.
pub fn load_images<T: Scalar>(mnist_dir: Option<&Path>, count: usize) -> Result<Vec<Image<T>>> {
    if count == 0 {
        return Err(Error::InvalidConfig("image count must be positive".into()));
    }
    if let Some(dir) = mnist_dir {
        let path = dir.join("train-images-idx3-ubyte");
        let images = load_idx_images::<T>(&path)?;
        if images.len() < count {
            return Err(Error::InvalidConfig(format!(
                "requested {count} images but {} holds {}",
                path.display(),
                images.len()
            )));
        }
        return Ok(images.into_iter().take(count).collect());
    }
    let base = synthetic_corpus::<T>();
    Ok((0..count).map(|i| base[i % base.len()].clone()).collect())
}

/// Morphological targets for one scenario: exactly `spec.sample_count` pairs,
/// cycling the provided images if there are fewer.
///
/// Sign convention: dilation, closing and opening apply the structuring
/// function `b = target_se` directly; erosion applies `b = -target_se`, so a
/// layer that converges to the erosion limit recovers a kernel directly
/// comparable to the displayed nonnegative target.
pub fn make_pairs<T: Scalar>(
    images: &[Image<T>],
    spec: &ScenarioSpec,
) -> Result<Vec<(Image<T>, Image<T>)>> {
    if images.is_empty() {
        return Err(Error::EmptyInput);
    }
    let se = target_se::<T>(spec.se);
    let mode = PadMode::EdgeReplicate;
    let mut pairs = Vec::with_capacity(spec.sample_count);
    for i in 0..spec.sample_count {
        let f = &images[i % images.len()];
        let target = apply_op(f, spec.op, &se, mode);
        pairs.push((f.clone(), target));
    }
    Ok(pairs)
}

/// The oracle operation behind one scenario, with the erosion sign convention.
pub fn apply_op<T: Scalar>(
    f: &Image<T>,
    op: MorphOp,
    se: &Kernel<T>,
    mode: PadMode<T>,
) -> Image<T> {
    match op {
        MorphOp::Dilation => dilate(f, se, mode),
        MorphOp::Erosion => erode(f, &se.negated(), mode),
        MorphOp::Closing => close(f, se, mode),
        MorphOp::Opening => open(f, se, mode),
    }
}

/// The kernel each layer is expected to recover, per layer position.
///
/// Single-layer scenarios and both dilation-side layers recover the target
/// itself. The erosion stage inside a two-layer composition applies the
/// kernel through `(g - (-w))`-style subtraction, so it recovers the negated
/// target.
pub fn expected_kernels<T: Scalar>(op: MorphOp, se: SEName) -> Vec<Kernel<T>> {
    let se = target_se::<T>(se);
    match op {
        MorphOp::Dilation | MorphOp::Erosion => vec![se],
        MorphOp::Closing => {
            let neg = se.negated();
            vec![se, neg]
        }
        MorphOp::Opening => {
            let neg = se.negated();
            vec![neg, se]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_ses_fit_the_committed_contract() {
        for name in SEName::all() {
            let k = target_se::<f64>(name);
            assert_eq!(k.side(), 7);
            let (mn, mx) = (
                k.weights().iter().cloned().fold(f64::INFINITY, f64::min),
                k.weights().iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            );
            assert_eq!(mn, 0.0, "{name}");
            assert_eq!(mx, 0.4, "{name}");
            // center cell is the unique maximum
            assert_eq!(k.get(3, 3), 0.4, "{name}");
            assert_eq!(
                k.weights().iter().filter(|&&v| v == 0.4).count(),
                1,
                "{name}"
            );
        }
    }

    #[test]
    fn cross3_support_has_exactly_five_cells() {
        let k = target_se::<f64>(SEName::Cross3);
        assert_eq!(k.weights().iter().filter(|&&v| v > 0.0).count(), 5);
    }

    #[test]
    fn disk_supports_are_rotation_symmetric() {
        for name in [SEName::Disk2, SEName::Disk3] {
            let k = target_se::<f64>(name);
            for y in 0..7 {
                for x in 0..7 {
                    // 90-degree rotation: (x, y) -> (y, 6 - x)
                    assert_eq!(k.get(x, y), k.get(y, 6 - x), "{name} at ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn complex_is_asymmetric() {
        let k = target_se::<f64>(SEName::Complex);
        let mut mirrored = false;
        let mut rotated = false;
        for y in 0..7 {
            for x in 0..7 {
                if k.get(x, y) != k.get(6 - x, y) {
                    mirrored = true;
                }
                if k.get(x, y) != k.get(y, 6 - x) {
                    rotated = true;
                }
            }
        }
        assert!(mirrored && rotated);
    }

    #[test]
    fn synthetic_corpus_is_deterministic_and_in_range() {
        let a = synthetic_corpus::<f64>();
        let b = synthetic_corpus::<f64>();
        assert_eq!(a.len(), SYNTHETIC_CORPUS_SIZE);
        assert_eq!(a, b);
        for img in &a {
            assert_eq!(img.width(), 28);
            assert_eq!(img.height(), 28);
            let (mn, mx) = img.min_max().unwrap();
            assert!(mn >= 0.0 && mx <= 1.0);
        }
        // images carry actual strokes: a few dozen bright pixels each
        let bright: usize = a
            .iter()
            .map(|i| i.pixels().iter().filter(|&&v| v > 0.5).count())
            .sum();
        assert!(bright > SYNTHETIC_CORPUS_SIZE * 20, "{bright}");
    }

    #[test]
    fn pairs_cycle_and_preserve_dimensions() {
        let images = synthetic_corpus::<f64>();
        let spec = ScenarioSpec::new(MorphOp::Dilation, SEName::Cross3, LayerKind::SMorph, 130)
            .unwrap();
        let pairs = make_pairs(&images, &spec).unwrap();
        assert_eq!(pairs.len(), 130);
        assert_eq!(pairs[0].0, pairs[64].0);
        for (f, t) in &pairs {
            assert!(f.same_dims(t));
        }
    }

    #[test]
    fn dilation_of_a_constant_adds_the_kernel_maximum() {
        let f = Image::constant(10, 10, 0.25).unwrap();
        let se = target_se::<f64>(SEName::Cross3);
        let out = apply_op(&f, MorphOp::Dilation, &se, PadMode::EdgeReplicate);
        for &v in out.pixels() {
            assert!((v - 0.65).abs() < 1e-15);
        }
        // erosion applies the negated kernel: the window minimum of f + se,
        // which on a constant image is the constant plus the kernel minimum
        let out = apply_op(&f, MorphOp::Erosion, &se, PadMode::EdgeReplicate);
        for &v in out.pixels() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn closing_pairs_match_the_manual_composition() {
        let images = synthetic_corpus::<f64>();
        let spec =
            ScenarioSpec::new(MorphOp::Closing, SEName::Disk2, LayerKind::SMorph, 3).unwrap();
        let pairs = make_pairs(&images, &spec).unwrap();
        let se = target_se::<f64>(SEName::Disk2);
        for (i, (f, t)) in pairs.iter().enumerate() {
            let manual = erode(
                &dilate(f, &se, PadMode::EdgeReplicate),
                &se,
                PadMode::EdgeReplicate,
            );
            assert_eq!(t, &manual, "pair {i}");
        }
    }

    #[test]
    fn opening_with_flat_target_is_anti_extensive() {
        let images = synthetic_corpus::<f64>();
        let se = crate::morphology::flat_kernel::<f64>(3, &[true; 9]).unwrap();
        for f in images.iter().take(4) {
            let o = apply_op(f, MorphOp::Opening, &se, PadMode::EdgeReplicate);
            for (a, b) in o.pixels().iter().zip(f.pixels()) {
                assert!(a <= b);
            }
        }
    }
}
