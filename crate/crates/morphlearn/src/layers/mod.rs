//! Differentiable morphological layers.
//!
//! Three window layers share one scheme: per output pixel, a softmax-weighted
//! mean of window values, where the logits decide the layer's character.
//!
//! - `PConv`: values `f`, logits `p*ln f + ln w` — the ratio of the
//!   `f^(p+1)` and `f^p` convolutions with `w`.
//! - `LMorph`: values `f + w`, logits `p*ln(f + w)` — the counter-harmonic
//!   mean of the shifted window.
//! - `SMorph`: values `f + w`, logits `alpha*(f + w)` — the α-softmax of the
//!   shifted window.
//!
//! Positive shape parameters push toward the window maximum (pseudo-dilation),
//! negative toward the minimum (pseudo-erosion). A fourth `ScaleBias` layer is
//! the trailing pixelwise affine map.
//!
//! Exponentials are shifted so they never overflow: each forward pass subtracts
//! a bound on the largest exponent, falling back to an exact per-window
//! max-shift when the parameter is extreme enough that the shared shift could
//! underflow. Backward passes replay the forward pass from cached softmax
//! weights and return exact analytic derivatives contracted with the upstream
//! gradient.

mod lmorph;
mod pconv;
mod scale_bias;
mod smorph;

use crate::error::{Error, Result};
use crate::image::{Image, PadMode, Padded};
use crate::kernel::Kernel;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    PConv,
    LMorph,
    SMorph,
    ScaleBias,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::PConv => "pconv",
            LayerKind::LMorph => "lmorph",
            LayerKind::SMorph => "smorph",
            LayerKind::ScaleBias => "scale_bias",
        }
    }

    /// The three trainable morphological kinds.
    pub fn morphological() -> [LayerKind; 3] {
        [LayerKind::PConv, LayerKind::LMorph, LayerKind::SMorph]
    }
}

impl std::fmt::Display for LayerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pconv" => Ok(LayerKind::PConv),
            "lmorph" => Ok(LayerKind::LMorph),
            "smorph" => Ok(LayerKind::SMorph),
            "scale_bias" | "scalebias" => Ok(LayerKind::ScaleBias),
            other => Err(Error::InvalidConfig(format!("unknown layer kind {other:?}"))),
        }
    }
}

/// One layer's trainable state: a kernel plus shape parameter for the window
/// layers, or a scale and bias for the affine layer.
///
/// Constructors enforce the per-kind kernel domain: strictly positive weights
/// for `PConv`, nonnegative for `LMorph`, unconstrained for `SMorph`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState<T> {
    kind: LayerKind,
    kernel: Option<Kernel<T>>,
    shape_param: T,
    scale: T,
    bias: T,
}

impl<T: Scalar> LayerState<T> {
    pub fn pconv(kernel: Kernel<T>, p: T) -> Result<Self> {
        if kernel.weights().iter().any(|&w| w <= T::zero()) {
            return Err(Error::NonPositiveWeight);
        }
        Self::window(LayerKind::PConv, kernel, p)
    }

    pub fn lmorph(kernel: Kernel<T>, p: T) -> Result<Self> {
        if kernel.weights().iter().any(|&w| w < T::zero()) {
            return Err(Error::NegativeWeight);
        }
        Self::window(LayerKind::LMorph, kernel, p)
    }

    pub fn smorph(kernel: Kernel<T>, alpha: T) -> Result<Self> {
        Self::window(LayerKind::SMorph, kernel, alpha)
    }

    fn window(kind: LayerKind, kernel: Kernel<T>, shape_param: T) -> Result<Self> {
        if !shape_param.is_finite() {
            return Err(Error::NonFinite("shape parameter"));
        }
        Ok(Self {
            kind,
            kernel: Some(kernel),
            shape_param,
            scale: T::zero(),
            bias: T::zero(),
        })
    }

    pub fn scale_bias(scale: T, bias: T) -> Result<Self> {
        if !scale.is_finite() || !bias.is_finite() {
            return Err(Error::NonFinite("scale/bias"));
        }
        Ok(Self {
            kind: LayerKind::ScaleBias,
            kernel: None,
            shape_param: T::zero(),
            scale,
            bias,
        })
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn kernel(&self) -> Option<&Kernel<T>> {
        self.kernel.as_ref()
    }

    /// `p` for PConv/LMorph, `alpha` for SMorph; absent for ScaleBias.
    pub fn shape_param(&self) -> Option<T> {
        match self.kind {
            LayerKind::ScaleBias => None,
            _ => Some(self.shape_param),
        }
    }

    pub fn scale_and_bias(&self) -> Option<(T, T)> {
        match self.kind {
            LayerKind::ScaleBias => Some((self.scale, self.bias)),
            _ => None,
        }
    }

    pub(crate) fn shape_param_raw(&self) -> T {
        self.shape_param
    }

    pub(crate) fn kernel_weights_mut(&mut self) -> Option<&mut [T]> {
        self.kernel.as_mut().map(|k| k.weights_mut())
    }

    pub(crate) fn set_shape_param(&mut self, value: T) {
        self.shape_param = value;
    }

    pub(crate) fn set_scale_and_bias(&mut self, scale: T, bias: T) {
        self.scale = scale;
        self.bias = bias;
    }

    fn expect_kind(&self, expected: LayerKind) -> Result<()> {
        if self.kind != expected {
            return Err(Error::LayerKindMismatch {
                expected: expected.name(),
                actual: self.kind.name(),
            });
        }
        Ok(())
    }
}

/// Analytic derivatives of a layer's output contracted with an upstream
/// gradient: one entry per trainable parameter plus the input gradient for
/// chaining. Kernel and shape-parameter slots are zero/absent where the layer
/// has no such parameter.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub d_kernel: Option<Kernel<T>>,
    pub d_shape_param: T,
    pub d_input: Image<T>,
    pub d_scale: T,
    pub d_bias: T,
}

/// Replayable record of one forward pass.
pub(crate) enum LayerCache<T> {
    Window(WindowCache<T>),
    Affine { input: Image<T>, output: Image<T> },
}

impl<T: Scalar> LayerCache<T> {
    pub fn output(&self) -> &Image<T> {
        match self {
            LayerCache::Window(w) => &w.output,
            LayerCache::Affine { output, .. } => output,
        }
    }

    pub fn into_output(self) -> Image<T> {
        match self {
            LayerCache::Window(w) => w.output,
            LayerCache::Affine { output, .. } => output,
        }
    }
}

/// Cached forward quantities: the padded input view plus whatever compact
/// record lets the backward pass replay each window's softmax weights without
/// new transcendentals. Backward passes are pure arithmetic over this record.
pub(crate) struct WindowCache<T> {
    pub output: Image<T>,
    pub pad_values: Vec<T>,
    pub pad_source: Vec<Option<usize>>,
    pub pad_width: usize,
    /// ln of each padded pixel (PConv only, else empty).
    pub pad_logs: Vec<T>,
    pub replay: Replay<T>,
}

/// How the softmax weights of each (pixel, cell) pair are reconstructed.
pub(crate) enum Replay<T> {
    /// `sigma = af[pad idx] * aw[cell] / den[pixel]` (factored exponentials;
    /// `aux` carries the kernel maximum PConv's weight gradient needs)
    Factored {
        af: Vec<T>,
        aw: Vec<T>,
        den: Vec<T>,
        aux: T,
    },
    /// `sigma = e[vidx[pad idx] * cells + cell] / den[pixel]`, with the
    /// matching `ln(value + w)` table alongside (LMorph on quantized images)
    Table {
        vidx: Vec<u32>,
        lnv: Vec<T>,
        e: Vec<T>,
        den: Vec<T>,
    },
    /// explicit per-(pixel, cell) weights, plus per-cell logs for LMorph
    Dense { sigma: Vec<T>, cell_logs: Vec<T> },
}

impl<T: Scalar> WindowCache<T> {
    pub(crate) fn new_empty(f: &Image<T>, padded: Padded<T>) -> Self {
        WindowCache {
            output: f.zeros_like(),
            pad_width: padded.width,
            pad_values: padded.values,
            pad_source: padded.source,
            pad_logs: Vec::new(),
            replay: Replay::Dense {
                sigma: Vec::new(),
                cell_logs: Vec::new(),
            },
        }
    }
}

#[inline]
pub(crate) fn pad_index(
    x: usize,
    y: usize,
    kx: usize,
    ky: usize,
    radius: usize,
    pad_width: usize,
) -> usize {
    // sample position of f(x - d) for kernel offset d = (kx - r, ky - r)
    (y + 2 * radius - ky) * pad_width + (x + 2 * radius - kx)
}

/// Largest exponent magnitude the shared-shift fast paths allow before
/// switching to the exact per-window shift.
pub(crate) fn exp_budget<T: Scalar>() -> T {
    T::max_value().ln() * crate::scalar::<T>(0.7)
}

/// The CHM-based layers need strictly positive window values; a nonpositive
/// pad constant would poison the border windows just like a nonpositive pixel.
pub(crate) fn check_positive<T: Scalar>(
    f: &Image<T>,
    mode: PadMode<T>,
    pad_participates: bool,
) -> Result<()> {
    let (mn, _) = f.min_max()?;
    let effective_min = match mode {
        PadMode::Constant(c) if pad_participates => mn.min(c),
        _ => mn,
    };
    if effective_min <= T::zero() {
        return Err(Error::NonPositiveInput);
    }
    Ok(())
}

pub(crate) fn min_max_of<T: Scalar>(values: &[T]) -> (T, T) {
    let mut mn = values[0];
    let mut mx = values[0];
    for &v in &values[1..] {
        if v < mn {
            mn = v;
        }
        if v > mx {
            mx = v;
        }
    }
    (mn, mx)
}

/// PConv forward pass: `(f^(p+1) * w)(x) / (f^p * w)(x)` over each padded
/// window. The input must be strictly positive (rescale it first).
pub fn pconv_forward<T: Scalar>(
    f: &Image<T>,
    state: &LayerState<T>,
    mode: PadMode<T>,
) -> Result<Image<T>> {
    state.expect_kind(LayerKind::PConv)?;
    pconv::forward_full(f, state, mode).map(LayerCache::into_output)
}

/// LMorph forward pass: counter-harmonic mean of `f + w` over each window.
/// The input must be strictly positive; kernel weights are nonnegative.
pub fn lmorph_forward<T: Scalar>(
    f: &Image<T>,
    state: &LayerState<T>,
    mode: PadMode<T>,
) -> Result<Image<T>> {
    state.expect_kind(LayerKind::LMorph)?;
    lmorph::forward_full(f, state, mode).map(LayerCache::into_output)
}

/// SMorph forward pass: α-softmax of `f + w` over each window. No positivity
/// requirement on the input.
pub fn smorph_forward<T: Scalar>(
    f: &Image<T>,
    state: &LayerState<T>,
    mode: PadMode<T>,
) -> Result<Image<T>> {
    state.expect_kind(LayerKind::SMorph)?;
    smorph::forward_full(f, state, mode).map(LayerCache::into_output)
}

/// Pixelwise `scale * f + bias`.
pub fn scale_bias_forward<T: Scalar>(f: &Image<T>, state: &LayerState<T>) -> Result<Image<T>> {
    state.expect_kind(LayerKind::ScaleBias)?;
    scale_bias::forward_full(f, state).map(LayerCache::into_output)
}

/// Forward dispatch on the layer kind (`mode` is ignored by ScaleBias).
pub fn forward<T: Scalar>(
    f: &Image<T>,
    state: &LayerState<T>,
    mode: PadMode<T>,
) -> Result<Image<T>> {
    forward_full(f, state, mode).map(LayerCache::into_output)
}

pub(crate) fn forward_full<T: Scalar>(
    f: &Image<T>,
    state: &LayerState<T>,
    mode: PadMode<T>,
) -> Result<LayerCache<T>> {
    match state.kind() {
        LayerKind::PConv => pconv::forward_full(f, state, mode),
        LayerKind::LMorph => lmorph::forward_full(f, state, mode),
        LayerKind::SMorph => smorph::forward_full(f, state, mode),
        LayerKind::ScaleBias => scale_bias::forward_full(f, state),
    }
}

/// Analytic gradients of the layer output contracted with `upstream`.
///
/// Recomputes the forward pass internally; the trainer uses the cached variant
/// instead. Out-of-image window cells contribute no input gradient under
/// constant padding; edge replication routes them to the replicated pixels.
pub fn backward<T: Scalar>(
    f: &Image<T>,
    state: &LayerState<T>,
    upstream: &Image<T>,
    mode: PadMode<T>,
) -> Result<Gradients<T>> {
    let cache = forward_full(f, state, mode)?;
    backward_from_cache(state, &cache, upstream)
}

pub(crate) fn backward_from_cache<T: Scalar>(
    state: &LayerState<T>,
    cache: &LayerCache<T>,
    upstream: &Image<T>,
) -> Result<Gradients<T>> {
    if !upstream.same_dims(cache.output()) {
        return Err(Error::DimensionMismatch(format!(
            "upstream {}x{} vs output {}x{}",
            upstream.width(),
            upstream.height(),
            cache.output().width(),
            cache.output().height()
        )));
    }
    match (state.kind(), cache) {
        (LayerKind::PConv, LayerCache::Window(w)) => pconv::backward(state, w, upstream),
        (LayerKind::LMorph, LayerCache::Window(w)) => lmorph::backward(state, w, upstream),
        (LayerKind::SMorph, LayerCache::Window(w)) => smorph::backward(state, w, upstream),
        (LayerKind::ScaleBias, LayerCache::Affine { input, .. }) => {
            scale_bias::backward(state, input, upstream)
        }
        _ => Err(Error::InvalidNetwork("cache does not match layer".into())),
    }
}
