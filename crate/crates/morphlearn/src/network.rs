//! One- or two-layer morphological networks with a trailing scale/bias layer,
//! plus the parameter flattening the trainer works on.
//!
//! CHM-based networks (PConv, LMorph) rescale their input into `[1, 2]` before
//! every morphological layer; SMorph networks take the raw input. The rescale
//! is differentiated as an affine map: its per-sample min and max are treated
//! as constants, so only the slope carries gradient.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::{mse, rescale_with_gain, Image, PadMode};
use crate::kernel::Kernel;
use crate::layers::{self, Gradients, LayerCache, LayerKind, LayerState};
use crate::{scalar, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    layers: Vec<LayerState<T>>,
    pad: PadMode<T>,
}

/// Intermediates of one forward pass, consumed by the backward pass.
pub(crate) struct NetworkCache<T> {
    layer_caches: Vec<LayerCache<T>>,
    rescale_gains: Vec<T>,
}

impl<T: Scalar> NetworkCache<T> {
    pub fn output(&self) -> &Image<T> {
        self.layer_caches
            .last()
            .expect("networks have at least one layer")
            .output()
    }
}

impl<T: Scalar> Network<T> {
    /// Up to two morphological layers of one shared kind followed by exactly
    /// one scale/bias layer.
    pub fn new(layers: Vec<LayerState<T>>) -> Result<Self> {
        let Some((last, morph)) = layers.split_last() else {
            return Err(Error::InvalidNetwork("no layers".into()));
        };
        if last.kind() != LayerKind::ScaleBias {
            return Err(Error::InvalidNetwork(
                "last layer must be scale_bias".into(),
            ));
        }
        if morph.len() > 2 {
            return Err(Error::InvalidNetwork(
                "at most two morphological layers".into(),
            ));
        }
        let mut kind = None;
        for layer in morph {
            if layer.kind() == LayerKind::ScaleBias {
                return Err(Error::InvalidNetwork(
                    "scale_bias may only appear last".into(),
                ));
            }
            match kind {
                None => kind = Some(layer.kind()),
                Some(k) if k == layer.kind() => {}
                Some(_) => {
                    return Err(Error::InvalidNetwork(
                        "morphological layers must share one kind".into(),
                    ))
                }
            }
        }
        Ok(Self {
            layers,
            pad: PadMode::EdgeReplicate,
        })
    }

    /// Network for one scenario: a single morphological layer for the
    /// elementary operations, two for the compositions, always followed by a
    /// scale/bias layer initialized to the identity.
    ///
    /// Kernels start per protocol: all-ones for PConv, folded normal
    /// (sigma = 0.01) for LMorph, centered normal for SMorph; `p`/`alpha`
    /// start at zero.
    pub fn for_scenario<R: Rng + ?Sized>(
        kind: LayerKind,
        layer_count: usize,
        side: usize,
        rng: &mut R,
    ) -> Result<Self>
    where
        StandardNormal: Distribution<T>,
    {
        let mut layers = Vec::with_capacity(layer_count + 1);
        for _ in 0..layer_count {
            layers.push(init_layer(kind, side, rng)?);
        }
        layers.push(LayerState::scale_bias(T::one(), T::zero())?);
        Self::new(layers)
    }

    pub fn layers(&self) -> &[LayerState<T>] {
        &self.layers
    }

    pub fn morph_kind(&self) -> Option<LayerKind> {
        self.layers
            .iter()
            .find(|l| l.kind() != LayerKind::ScaleBias)
            .map(|l| l.kind())
    }

    pub fn pad_mode(&self) -> PadMode<T> {
        self.pad
    }

    pub fn set_pad_mode(&mut self, pad: PadMode<T>) {
        self.pad = pad;
    }

    fn needs_rescale(&self) -> bool {
        matches!(
            self.morph_kind(),
            Some(LayerKind::PConv) | Some(LayerKind::LMorph)
        )
    }

    pub fn forward(&self, f: &Image<T>) -> Result<Image<T>> {
        Ok(self.forward_cached(f)?.output().clone())
    }

    pub(crate) fn forward_cached(&self, f: &Image<T>) -> Result<NetworkCache<T>> {
        let rescale = self.needs_rescale();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut gains = Vec::with_capacity(self.layers.len());
        let mut current = f.clone();
        for layer in &self.layers {
            let mut gain = T::one();
            if rescale && layer.kind() != LayerKind::ScaleBias {
                let (rescaled, g) = rescale_with_gain(&current)?;
                current = rescaled;
                gain = g;
            }
            gains.push(gain);
            let cache = layers::forward_full(&current, layer, self.pad)?;
            current = cache.output().clone();
            caches.push(cache);
        }
        Ok(NetworkCache {
            layer_caches: caches,
            rescale_gains: gains,
        })
    }

    /// Per-layer gradients for an upstream gradient on the network output,
    /// ordered like the layers. Rescale stages scale the flowing gradient by
    /// their slope.
    pub fn backward(&self, f: &Image<T>, d_output: &Image<T>) -> Result<Vec<Gradients<T>>> {
        let cache = self.forward_cached(f)?;
        self.backward_cached(&cache, d_output)
    }

    pub(crate) fn backward_cached(
        &self,
        cache: &NetworkCache<T>,
        d_output: &Image<T>,
    ) -> Result<Vec<Gradients<T>>> {
        let mut upstream = d_output.clone();
        let mut grads: Vec<Option<Gradients<T>>> = (0..self.layers.len()).map(|_| None).collect();
        for i in (0..self.layers.len()).rev() {
            let g = layers::backward_from_cache(&self.layers[i], &cache.layer_caches[i], &upstream)?;
            let gain = cache.rescale_gains[i];
            upstream = g.d_input.map(|v| v * gain);
            grads[i] = Some(g);
        }
        Ok(grads.into_iter().map(|g| g.expect("filled in loop")).collect())
    }

    /// Mean-squared-error loss of the network output against `target`.
    pub fn loss(&self, f: &Image<T>, target: &Image<T>) -> Result<T> {
        let out = self.forward(f)?;
        mse(&out, target)
    }

    /// Loss and flattened parameter gradients for one sample.
    pub(crate) fn loss_and_gradients(
        &self,
        f: &Image<T>,
        target: &Image<T>,
    ) -> Result<(T, Vec<T>)> {
        let cache = self.forward_cached(f)?;
        let out = cache.output();
        if !out.same_dims(target) {
            return Err(Error::DimensionMismatch(format!(
                "output {}x{} vs target {}x{}",
                out.width(),
                out.height(),
                target.width(),
                target.height()
            )));
        }
        let loss = mse(out, target)?;
        let n = scalar::<T>(out.len() as f64);
        let two = scalar::<T>(2.0);
        let d_out = Image::new(
            out.width(),
            out.height(),
            out.pixels()
                .iter()
                .zip(target.pixels())
                .map(|(&o, &t)| two * (o - t) / n)
                .collect(),
        )?;
        let grads = self.backward_cached(&cache, &d_out)?;
        Ok((loss, self.flatten_gradients(&grads)))
    }

    /// Flattened gradients of the MSE loss with respect to the trainable
    /// parameter vector.
    pub fn loss_gradients(&self, f: &Image<T>, target: &Image<T>) -> Result<Vec<T>> {
        Ok(self.loss_and_gradients(f, target)?.1)
    }

    /// Trainable parameters as one flat vector, layer by layer: kernel cells
    /// then the shape parameter for morphological layers, scale then bias for
    /// the affine layer. PConv kernels are stored as logarithms, so gradient
    /// steps can never leave the strictly positive domain.
    pub fn trainable_params(&self) -> Vec<T> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer.kind() {
                LayerKind::ScaleBias => {
                    let (s, b) = layer.scale_and_bias().expect("affine layer");
                    out.push(s);
                    out.push(b);
                }
                kind => {
                    let k = layer.kernel().expect("window layer");
                    if kind == LayerKind::PConv {
                        out.extend(k.weights().iter().map(|&w| w.ln()));
                    } else {
                        out.extend_from_slice(k.weights());
                    }
                    out.push(layer.shape_param().expect("window layer"));
                }
            }
        }
        out
    }

    /// Write a flat parameter vector back into the layers (inverse of
    /// [`Network::trainable_params`]).
    pub fn apply_trainable(&mut self, params: &[T]) {
        let mut i = 0;
        for layer in &mut self.layers {
            match layer.kind() {
                LayerKind::ScaleBias => {
                    layer.set_scale_and_bias(params[i], params[i + 1]);
                    i += 2;
                }
                kind => {
                    let weights = layer.kernel_weights_mut().expect("window layer");
                    for w in weights.iter_mut() {
                        *w = if kind == LayerKind::PConv {
                            params[i].exp()
                        } else {
                            params[i]
                        };
                        i += 1;
                    }
                    layer.set_shape_param(params[i]);
                    i += 1;
                }
            }
        }
        debug_assert_eq!(i, params.len());
    }

    /// Domain projection applied after each optimizer step: LMorph kernel
    /// entries are clamped to the nonnegative halfspace. (PConv needs none:
    /// its parameters live in log space.)
    pub(crate) fn project_params(&self, params: &mut [T]) {
        let mut i = 0;
        for layer in &self.layers {
            match layer.kind() {
                LayerKind::ScaleBias => i += 2,
                kind => {
                    let cells = layer.kernel().expect("window layer").weights().len();
                    if kind == LayerKind::LMorph {
                        for p in params[i..i + cells].iter_mut() {
                            if *p < T::zero() {
                                *p = T::zero();
                            }
                        }
                    }
                    i += cells + 1;
                }
            }
        }
    }

    /// Contract per-layer gradients into the flat trainable space. The PConv
    /// log-reparameterization contributes its chain factor `w`.
    pub(crate) fn flatten_gradients(&self, grads: &[Gradients<T>]) -> Vec<T> {
        let mut out = Vec::new();
        for (layer, g) in self.layers.iter().zip(grads) {
            match layer.kind() {
                LayerKind::ScaleBias => {
                    out.push(g.d_scale);
                    out.push(g.d_bias);
                }
                kind => {
                    let k = layer.kernel().expect("window layer");
                    let dk = g.d_kernel.as_ref().expect("window layer gradient");
                    if kind == LayerKind::PConv {
                        out.extend(
                            dk.weights()
                                .iter()
                                .zip(k.weights())
                                .map(|(&dw, &w)| dw * w),
                        );
                    } else {
                        out.extend_from_slice(dk.weights());
                    }
                    out.push(g.d_shape_param);
                }
            }
        }
        out
    }
}

/// Protocol initialization for one morphological layer.
pub fn init_layer<T: Scalar, R: Rng + ?Sized>(
    kind: LayerKind,
    side: usize,
    rng: &mut R,
) -> Result<LayerState<T>>
where
    StandardNormal: Distribution<T>,
{
    let sigma = scalar::<T>(0.01);
    match kind {
        LayerKind::PConv => LayerState::pconv(Kernel::constant(side, T::one())?, T::zero()),
        LayerKind::LMorph => {
            let k = Kernel::from_fn(side, |_, _| {
                let n: T = StandardNormal.sample(rng);
                (n * sigma).abs()
            })?;
            LayerState::lmorph(k, T::zero())
        }
        LayerKind::SMorph => {
            let k = Kernel::from_fn(side, |_, _| {
                let n: T = StandardNormal.sample(rng);
                n * sigma
            })?;
            LayerState::smorph(k, T::zero())
        }
        LayerKind::ScaleBias => LayerState::scale_bias(T::one(), T::zero()),
    }
}
