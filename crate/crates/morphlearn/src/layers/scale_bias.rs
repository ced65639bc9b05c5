//! Trailing pixelwise affine layer: `out = scale * f + bias`.

use crate::error::Result;
use crate::image::Image;
use crate::Scalar;

use super::{Gradients, LayerCache, LayerState};

pub(super) fn forward_full<T: Scalar>(
    f: &Image<T>,
    state: &LayerState<T>,
) -> Result<LayerCache<T>> {
    let (scale, bias) = state
        .scale_and_bias()
        .expect("scale_bias state carries scale and bias");
    let output = f.map(|v| scale * v + bias);
    Ok(LayerCache::Affine {
        input: f.clone(),
        output,
    })
}

pub(super) fn backward<T: Scalar>(
    state: &LayerState<T>,
    input: &Image<T>,
    upstream: &Image<T>,
) -> Result<Gradients<T>> {
    let (scale, _) = state
        .scale_and_bias()
        .expect("scale_bias state carries scale and bias");
    let mut d_scale = T::zero();
    let mut d_bias = T::zero();
    for (&u, &f) in upstream.pixels().iter().zip(input.pixels()) {
        d_scale += u * f;
        d_bias += u;
    }
    Ok(Gradients {
        d_kernel: None,
        d_shape_param: T::zero(),
        d_input: upstream.map(|u| u * scale),
        d_scale,
        d_bias,
    })
}
