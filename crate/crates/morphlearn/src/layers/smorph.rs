//! SMorph: α-softmax of `f + w` over each window.
//!
//! Per pixel, with `v_i = f(x - d_i) + w(d_i)` and softmax weights
//! `sigma_i = exp(alpha*v_i) / sum_j exp(alpha*v_j)`:
//!
//! - output `S = sum_i sigma_i * v_i`
//! - `dS/dv_i = sigma_i * (1 + alpha*(v_i - S))`, shared by the kernel cell
//!   and the sampled input pixel
//! - `dS/dalpha = sum_i sigma_i * (v_i - S)^2`, the softmax variance, hence
//!   the output is nondecreasing in `alpha`.

use crate::error::Result;
use crate::image::{Image, PadMode, Padded};
use crate::Scalar;

use super::{
    exp_budget, min_max_of, pad_index, Gradients, LayerCache, LayerState, Replay, WindowCache,
};

pub(super) fn forward_full<T: Scalar>(
    f: &Image<T>,
    state: &LayerState<T>,
    mode: PadMode<T>,
) -> Result<LayerCache<T>> {
    let kernel = state.kernel().expect("smorph state carries a kernel");
    let alpha = state.shape_param_raw();
    let side = kernel.side();
    let r = kernel.radius();
    let cells = side * side;
    let padded = Padded::build(f, r, mode);

    if f.is_empty() {
        return Ok(LayerCache::Window(WindowCache::new_empty(f, padded)));
    }

    let (pmn, pmx) = min_max_of(&padded.values);
    let (wmn, wmx) = min_max_of(kernel.weights());
    let range = (pmx - pmn) + (wmx - wmn);
    let shared_shift_ok = alpha.abs() * range < exp_budget::<T>();

    let mut cache = WindowCache::new_empty(f, padded);
    let w = kernel.weights();

    if shared_shift_ok {
        // Factored exponentials with per-factor shifts: every exponent is
        // nonpositive, so nothing overflows and only one exp per padded pixel
        // plus one per kernel cell is needed.
        let cf = if alpha >= T::zero() { pmx } else { pmn };
        let cw = if alpha >= T::zero() { wmx } else { wmn };
        let af: Vec<T> = cache
            .pad_values
            .iter()
            .map(|&v| (alpha * (v - cf)).exp())
            .collect();
        let aw: Vec<T> = w.iter().map(|&v| (alpha * (v - cw)).exp()).collect();
        let mut den = vec![T::zero(); f.len()];
        for y in 0..f.height() {
            for x in 0..f.width() {
                let pixel = y * f.width() + x;
                let mut num = T::zero();
                let mut d = T::zero();
                for ky in 0..side {
                    for kx in 0..side {
                        let k = ky * side + kx;
                        let pidx = pad_index(x, y, kx, ky, r, cache.pad_width);
                        let e = af[pidx] * aw[k];
                        num += e * (cache.pad_values[pidx] + w[k]);
                        d += e;
                    }
                }
                den[pixel] = d;
                cache.output.set(x, y, num / d);
            }
        }
        cache.replay = Replay::Factored {
            af,
            aw,
            den,
            aux: T::zero(),
        };
    } else {
        // exact per-window max-shift
        let mut sigma = vec![T::zero(); f.len() * cells];
        let mut vals = vec![T::zero(); cells];
        for y in 0..f.height() {
            for x in 0..f.width() {
                let pixel = y * f.width() + x;
                let sig = &mut sigma[pixel * cells..(pixel + 1) * cells];
                let mut shift = T::neg_infinity();
                for ky in 0..side {
                    for kx in 0..side {
                        let k = ky * side + kx;
                        let pidx = pad_index(x, y, kx, ky, r, cache.pad_width);
                        vals[k] = cache.pad_values[pidx] + w[k];
                        shift = shift.max(alpha * vals[k]);
                    }
                }
                let mut num = T::zero();
                let mut den = T::zero();
                for k in 0..cells {
                    let e = (alpha * vals[k] - shift).exp();
                    num += e * vals[k];
                    den += e;
                    sig[k] = e;
                }
                let inv = T::one() / den;
                for s in sig.iter_mut() {
                    *s *= inv;
                }
                cache.output.set(x, y, num * inv);
            }
        }
        cache.replay = Replay::Dense {
            sigma,
            cell_logs: Vec::new(),
        };
    }
    Ok(LayerCache::Window(cache))
}

pub(super) fn backward<T: Scalar>(
    state: &LayerState<T>,
    cache: &WindowCache<T>,
    upstream: &Image<T>,
) -> Result<Gradients<T>> {
    let kernel = state.kernel().expect("smorph state carries a kernel");
    let alpha = state.shape_param_raw();
    let side = kernel.side();
    let r = kernel.radius();
    let cells = side * side;
    let w = kernel.weights();

    let mut d_kernel = vec![T::zero(); cells];
    let mut d_alpha = T::zero();
    let mut d_input = upstream.zeros_like();

    for y in 0..upstream.height() {
        for x in 0..upstream.width() {
            let pixel = y * upstream.width() + x;
            let u = upstream.pixels()[pixel];
            let s_out = cache.output.pixels()[pixel];
            let mut variance = T::zero();
            for ky in 0..side {
                for kx in 0..side {
                    let k = ky * side + kx;
                    let pidx = pad_index(x, y, kx, ky, r, cache.pad_width);
                    let v = cache.pad_values[pidx] + w[k];
                    let sig = match &cache.replay {
                        Replay::Factored { af, aw, den, .. } => af[pidx] * aw[k] / den[pixel],
                        Replay::Dense { sigma, .. } => sigma[pixel * cells + k],
                        Replay::Table { .. } => unreachable!("smorph never builds a table"),
                    };
                    let dv = sig * (T::one() + alpha * (v - s_out));
                    let gu = u * dv;
                    d_kernel[k] += gu;
                    if let Some(src) = cache.pad_source[pidx] {
                        d_input.pixels_mut()[src] += gu;
                    }
                    variance += sig * (v - s_out) * (v - s_out);
                }
            }
            d_alpha += u * variance;
        }
    }

    Ok(Gradients {
        d_kernel: Some(crate::kernel::Kernel::new(side, d_kernel)?),
        d_shape_param: d_alpha,
        d_input,
        d_scale: T::zero(),
        d_bias: T::zero(),
    })
}
