//! PConv: ratio of the `f^(p+1)` and `f^p` convolutions with a strictly
//! positive kernel `w`.
//!
//! Per pixel, with `f_i = f(x - d_i) > 0`, `w_i = w(d_i) > 0` and weights
//! `sigma_i = w_i * f_i^p / sum_j w_j * f_j^p`:
//!
//! - output `S = sum_i sigma_i * f_i`
//! - `dS/df_i = sigma_i * ((p + 1) - p * S / f_i)`
//! - `dS/dw_i = rho_i * (f_i - S)` with `rho_i = f_i^p / sum_j w_j * f_j^p`
//! - `dS/dp = sum_i sigma_i * (f_i - S) * ln f_i`
//!
//! `f^p` runs as `exp(p * ln f)` with the exponent shifted by its bound over
//! the image, so large `|p|` cannot overflow; the kernel factor is normalized
//! by its maximum for the same reason.

use crate::error::Result;
use crate::image::{Image, PadMode, Padded};
use crate::smooth::log_floor;
use crate::Scalar;

use super::{
    check_positive, exp_budget, min_max_of, pad_index, Gradients, LayerCache, LayerState, Replay,
    WindowCache,
};

pub(super) fn forward_full<T: Scalar>(
    f: &Image<T>,
    state: &LayerState<T>,
    mode: PadMode<T>,
) -> Result<LayerCache<T>> {
    let kernel = state.kernel().expect("pconv state carries a kernel");
    let p = state.shape_param_raw();
    let side = kernel.side();
    let r = kernel.radius();
    let cells = side * side;
    check_positive(f, mode, r > 0)?;
    let padded = Padded::build(f, r, mode);

    let floor = log_floor::<T>();
    let pad_logs: Vec<T> = padded.values.iter().map(|&v| v.max(floor).ln()).collect();
    let (lmn, lmx) = min_max_of(&pad_logs);
    let log_w: Vec<T> = kernel.weights().iter().map(|&w| w.ln()).collect();
    let (lwmn, lwmx) = min_max_of(&log_w);
    let shared_shift_ok = p.abs() * (lmx - lmn) + (lwmx - lwmn) < exp_budget::<T>();

    let mut cache = WindowCache::new_empty(f, padded);
    cache.pad_logs = pad_logs;

    if shared_shift_ok {
        // factored: one exp per padded pixel, kernel normalized by its max
        let shift = if p >= T::zero() { lmx } else { lmn };
        let af: Vec<T> = cache
            .pad_logs
            .iter()
            .map(|&l| (p * (l - shift)).exp())
            .collect();
        let wn: Vec<T> = log_w.iter().map(|&lw| (lw - lwmx).exp()).collect();
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
                        let e = af[pidx] * wn[k];
                        num += e * cache.pad_values[pidx];
                        d += e;
                    }
                }
                den[pixel] = d;
                cache.output.set(x, y, num / d);
            }
        }
        cache.replay = Replay::Factored {
            af,
            aw: wn,
            den,
            aux: lwmx.exp(), // the kernel maximum, for the weight gradient
        };
    } else {
        // exact per-window max-shift over p*ln f + ln w
        let mut sigma = vec![T::zero(); f.len() * cells];
        let mut exps = vec![T::zero(); cells];
        for y in 0..f.height() {
            for x in 0..f.width() {
                let pixel = y * f.width() + x;
                let sig = &mut sigma[pixel * cells..(pixel + 1) * cells];
                let mut shift = T::neg_infinity();
                for ky in 0..side {
                    for kx in 0..side {
                        let k = ky * side + kx;
                        let pidx = pad_index(x, y, kx, ky, r, cache.pad_width);
                        exps[k] = p * cache.pad_logs[pidx] + log_w[k];
                        shift = shift.max(exps[k]);
                    }
                }
                let mut num = T::zero();
                let mut den = T::zero();
                for ky in 0..side {
                    for kx in 0..side {
                        let k = ky * side + kx;
                        let pidx = pad_index(x, y, kx, ky, r, cache.pad_width);
                        let e = (exps[k] - shift).exp();
                        num += e * cache.pad_values[pidx];
                        den += e;
                        sig[k] = e;
                    }
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
    let kernel = state.kernel().expect("pconv state carries a kernel");
    let p = state.shape_param_raw();
    let side = kernel.side();
    let r = kernel.radius();
    let cells = side * side;
    let w = kernel.weights();

    let mut d_kernel = vec![T::zero(); cells];
    let mut d_p = T::zero();
    let mut d_input = upstream.zeros_like();

    for y in 0..upstream.height() {
        for x in 0..upstream.width() {
            let pixel = y * upstream.width() + x;
            let u = upstream.pixels()[pixel];
            let s_out = cache.output.pixels()[pixel];
            let mut dp_acc = T::zero();
            for ky in 0..side {
                for kx in 0..side {
                    let k = ky * side + kx;
                    let pidx = pad_index(x, y, kx, ky, r, cache.pad_width);
                    let fv = cache.pad_values[pidx];
                    let (sig, rho) = match &cache.replay {
                        Replay::Factored { af, aw, den, aux } => {
                            let sig = af[pidx] * aw[k] / den[pixel];
                            (sig, af[pidx] / (den[pixel] * *aux))
                        }
                        Replay::Dense { sigma, .. } => {
                            let sig = sigma[pixel * cells + k];
                            (sig, sig / w[k])
                        }
                        Replay::Table { .. } => unreachable!("pconv never builds a table"),
                    };
                    let dv = sig * ((p + T::one()) - p * s_out / fv);
                    let gu = u * dv;
                    if let Some(src) = cache.pad_source[pidx] {
                        d_input.pixels_mut()[src] += gu;
                    }
                    d_kernel[k] += u * rho * (fv - s_out);
                    dp_acc += sig * (fv - s_out) * cache.pad_logs[pidx];
                }
            }
            d_p += u * dp_acc;
        }
    }

    Ok(Gradients {
        d_kernel: Some(crate::kernel::Kernel::new(side, d_kernel)?),
        d_shape_param: d_p,
        d_input,
        d_scale: T::zero(),
        d_bias: T::zero(),
    })
}

#[cfg(test)]
mod tests {
    use crate::error::Error;
    use crate::image::{Image, PadMode};
    use crate::kernel::Kernel;
    use crate::layers::{pconv_forward, LayerState};
    use crate::morphology::{dilate, flat_kernel};
    use crate::smooth::chm;

    fn binary_blob() -> Image<f64> {
        let mut f = Image::constant(11, 11, 1.0).unwrap();
        for i in 2..9 {
            f.set(i, 5, 2.0);
            f.set(5, i, 2.0);
        }
        f.set(8, 2, 2.0);
        f
    }

    fn max_abs_diff(a: &Image<f64>, b: &Image<f64>) -> f64 {
        a.pixels()
            .iter()
            .zip(b.pixels())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn p_zero_with_uniform_kernel_is_the_windowed_mean() {
        let f = binary_blob();
        let k = Kernel::constant(3, 1.0).unwrap();
        let state = LayerState::pconv(k, 0.0).unwrap();
        let out = pconv_forward(&f, &state, PadMode::EdgeReplicate).unwrap();
        for y in 0..11usize {
            for x in 0..11usize {
                let mut acc = 0.0;
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let sx = (x as isize - dx).clamp(0, 10) as usize;
                        let sy = (y as isize - dy).clamp(0, 10) as usize;
                        acc += f.get(sx, sy);
                    }
                }
                assert!((out.get(x, y) - acc / 9.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn p_zero_with_nonuniform_kernel_is_the_weighted_mean() {
        let f = binary_blob();
        let k = Kernel::new(3, vec![0.5, 1.0, 0.5, 1.0, 2.0, 1.0, 0.5, 1.0, 0.5]).unwrap();
        let state = LayerState::pconv(k.clone(), 0.0).unwrap();
        let out = pconv_forward(&f, &state, PadMode::EdgeReplicate).unwrap();
        let wsum: f64 = k.weights().iter().sum();
        for y in [0usize, 4, 10] {
            for x in [0usize, 5, 8] {
                let mut acc = 0.0;
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let sx = (x as isize - dx).clamp(0, 10) as usize;
                        let sy = (y as isize - dy).clamp(0, 10) as usize;
                        acc += f.get(sx, sy) * k.get((dx + 1) as usize, (dy + 1) as usize);
                    }
                }
                assert!((out.get(x, y) - acc / wsum).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn matches_the_scalar_chm_per_window() {
        let f = binary_blob();
        let k = Kernel::new(3, vec![0.5, 1.0, 0.5, 1.0, 2.0, 1.0, 0.5, 1.0, 0.5]).unwrap();
        for p in [-9.0, -1.0, 0.0, 2.0, 11.5] {
            let state = LayerState::pconv(k.clone(), p).unwrap();
            let out = pconv_forward(&f, &state, PadMode::EdgeReplicate).unwrap();
            for y in [1usize, 6] {
                for x in [2usize, 9] {
                    let mut vals = Vec::new();
                    let mut weights = Vec::new();
                    for dy in -1isize..=1 {
                        for dx in -1isize..=1 {
                            let sx = (x as isize - dx).clamp(0, 10) as usize;
                            let sy = (y as isize - dy).clamp(0, 10) as usize;
                            vals.push(f.get(sx, sy));
                            weights.push(k.get((dx + 1) as usize, (dy + 1) as usize));
                        }
                    }
                    // PConv is the CHM of order p + 1 over the raw window
                    let want = chm(&vals, &weights, p + 1.0).unwrap();
                    assert!(
                        (out.get(x, y) - want).abs() <= 1e-10,
                        "p={p} at ({x},{y})"
                    );
                }
            }
        }
    }

    #[test]
    fn constant_image_maps_to_itself_for_any_order() {
        let f = Image::constant(6, 4, 1.7f64).unwrap();
        let k = Kernel::new(3, vec![0.5, 1.0, 0.5, 1.0, 2.0, 1.0, 0.5, 1.0, 0.5]).unwrap();
        for p in [-35.0, 0.0, 0.5, 60.0] {
            let state = LayerState::pconv(k.clone(), p).unwrap();
            let out = pconv_forward(&f, &state, PadMode::EdgeReplicate).unwrap();
            for &v in out.pixels() {
                assert!((v - 1.7).abs() <= 1e-12, "p={p}: {v}");
            }
        }
    }

    #[test]
    fn one_by_one_kernel_is_the_identity_for_any_order() {
        let f = binary_blob();
        for p in [-50.0, -0.5, 0.0, 3.0, 50.0] {
            let k = Kernel::new(1, vec![0.37]).unwrap();
            let state = LayerState::pconv(k, p).unwrap();
            let out = pconv_forward(&f, &state, PadMode::EdgeReplicate).unwrap();
            assert!(max_abs_diff(&out, &f) <= 1e-12, "p={p}");
        }
    }

    #[test]
    fn large_positive_order_with_flat_weights_is_a_flat_dilation() {
        let f = binary_blob();
        let k = Kernel::constant(3, 1.0).unwrap();
        let state = LayerState::pconv(k, 40.0).unwrap();
        let out = pconv_forward(&f, &state, PadMode::EdgeReplicate).unwrap();
        let target = dilate(&f, &flat_kernel(3, &[true; 9]).unwrap(), PadMode::EdgeReplicate);
        let gap = max_abs_diff(&out, &target);
        assert!(gap <= 0.01, "gap {gap}");
    }

    #[test]
    fn rejects_nonpositive_inputs_and_weights() {
        let f = Image::new(2, 1, vec![0.0, 1.0]).unwrap();
        let k = Kernel::constant(3, 1.0).unwrap();
        let state = LayerState::pconv(k.clone(), 1.0).unwrap();
        assert!(matches!(
            pconv_forward(&f, &state, PadMode::EdgeReplicate),
            Err(Error::NonPositiveInput)
        ));
        assert!(matches!(
            LayerState::pconv(Kernel::constant(3, 0.0).unwrap(), 1.0),
            Err(Error::NonPositiveWeight)
        ));
    }
}
