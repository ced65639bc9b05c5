//! LMorph: counter-harmonic mean of `f + w` over each window.
//!
//! Per pixel, with `v_i = f(x - d_i) + w(d_i) > 0` and weights
//! `sigma_i = v_i^p / sum_j v_j^p`:
//!
//! - output `S = sum_i sigma_i * v_i = sum_i v_i^(p+1) / sum_i v_i^p`
//! - `dS/dv_i = sigma_i * ((p + 1) - p * S / v_i)`
//! - `dS/dp = sum_i sigma_i * (v_i - S) * ln v_i`, a covariance of comonotone
//!   quantities, hence nonnegative.
//!
//! Powers run in the log domain, `v^p = exp(p * ln v)`, with the exponent
//! shifted by its bound over the image (or per window when the parameter is
//! extreme), so arbitrarily large `|p|` stays finite. Images quantized to few
//! distinct values (anything byte-derived) collapse the per-cell
//! transcendentals into a small per-(value, cell) table.

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
    let kernel = state.kernel().expect("lmorph state carries a kernel");
    let p = state.shape_param_raw();
    let side = kernel.side();
    let r = kernel.radius();
    let cells = side * side;
    check_positive(f, mode, r > 0)?;
    let padded = Padded::build(f, r, mode);

    let (pmn, pmx) = min_max_of(&padded.values);
    let (wmn, wmx) = min_max_of(kernel.weights());
    let floor = log_floor::<T>();
    let v_lo = (pmn + wmn).max(floor);
    let v_hi = (pmx + wmx).max(floor);
    let log_spread = v_hi.ln() - v_lo.ln();
    let shared_shift_ok = p.abs() * log_spread < exp_budget::<T>();

    let mut cache = WindowCache::new_empty(f, padded);
    let w = kernel.weights();

    // exponent shift: with a shared bound the exponent p*ln v - shift is
    // always nonpositive; otherwise each window subtracts its own maximum
    let shared_shift = if p >= T::zero() {
        p * v_hi.ln()
    } else {
        p * v_lo.ln()
    };

    if shared_shift_ok {
        if let Some((vidx, lnv_tab, e_tab)) =
            distinct_value_table(&cache.pad_values, w, p, shared_shift, floor)
        {
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
                            let e = e_tab[vidx[pidx] as usize * cells + k];
                            num += e * (cache.pad_values[pidx] + w[k]);
                            d += e;
                        }
                    }
                    den[pixel] = d;
                    cache.output.set(x, y, num / d);
                }
            }
            cache.replay = Replay::Table {
                vidx,
                lnv: lnv_tab,
                e: e_tab,
                den,
            };
            return Ok(LayerCache::Window(cache));
        }
    }

    let mut sigma = vec![T::zero(); f.len() * cells];
    let mut cell_logs = vec![T::zero(); f.len() * cells];
    let mut logs = vec![T::zero(); cells];
    for y in 0..f.height() {
        for x in 0..f.width() {
            let pixel = y * f.width() + x;
            let sig = &mut sigma[pixel * cells..(pixel + 1) * cells];
            let lns = &mut cell_logs[pixel * cells..(pixel + 1) * cells];
            let mut shift = shared_shift;
            if !shared_shift_ok {
                shift = T::neg_infinity();
                for ky in 0..side {
                    for kx in 0..side {
                        let k = ky * side + kx;
                        let pidx = pad_index(x, y, kx, ky, r, cache.pad_width);
                        logs[k] = (cache.pad_values[pidx] + w[k]).max(floor).ln();
                        shift = shift.max(p * logs[k]);
                    }
                }
            }
            let mut num = T::zero();
            let mut den = T::zero();
            for ky in 0..side {
                for kx in 0..side {
                    let k = ky * side + kx;
                    let pidx = pad_index(x, y, kx, ky, r, cache.pad_width);
                    let v = cache.pad_values[pidx] + w[k];
                    let lv = if shared_shift_ok {
                        v.max(floor).ln()
                    } else {
                        logs[k]
                    };
                    let e = (p * lv - shift).exp();
                    num += e * v;
                    den += e;
                    sig[k] = e;
                    lns[k] = lv;
                }
            }
            let inv = T::one() / den;
            for s in sig.iter_mut() {
                *s *= inv;
            }
            cache.output.set(x, y, num * inv);
        }
    }
    cache.replay = Replay::Dense { sigma, cell_logs };
    Ok(LayerCache::Window(cache))
}

const MAX_DISTINCT_VALUES: usize = 512;

/// When the padded image takes few distinct values, precompute
/// `ln(value + w_k)` and the shifted exponential per (value, cell) pair and
/// index every padded pixel into the table.
#[allow(clippy::type_complexity)]
fn distinct_value_table<T: Scalar>(
    pad_values: &[T],
    w: &[T],
    p: T,
    shift: T,
    floor: T,
) -> Option<(Vec<u32>, Vec<T>, Vec<T>)> {
    let mut distinct: Vec<T> = pad_values.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite pixels"));
    distinct.dedup();
    if distinct.len() > MAX_DISTINCT_VALUES {
        return None;
    }
    let mut lnv = Vec::with_capacity(distinct.len() * w.len());
    let mut e = Vec::with_capacity(distinct.len() * w.len());
    for &v in &distinct {
        for &wk in w {
            let lv = (v + wk).max(floor).ln();
            lnv.push(lv);
            e.push((p * lv - shift).exp());
        }
    }
    let vidx = pad_values
        .iter()
        .map(|v| {
            distinct
                .binary_search_by(|probe| probe.partial_cmp(v).expect("finite pixels"))
                .expect("value collected above") as u32
        })
        .collect();
    Some((vidx, lnv, e))
}

pub(super) fn backward<T: Scalar>(
    state: &LayerState<T>,
    cache: &WindowCache<T>,
    upstream: &Image<T>,
) -> Result<Gradients<T>> {
    let kernel = state.kernel().expect("lmorph state carries a kernel");
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
                    let v = cache.pad_values[pidx] + w[k];
                    let (sig, lv) = match &cache.replay {
                        Replay::Table { vidx, lnv, e, den } => {
                            let t = vidx[pidx] as usize * cells + k;
                            (e[t] / den[pixel], lnv[t])
                        }
                        Replay::Dense { sigma, cell_logs } => {
                            let t = pixel * cells + k;
                            (sigma[t], cell_logs[t])
                        }
                        Replay::Factored { .. } => {
                            unreachable!("lmorph never builds factored replay")
                        }
                    };
                    let dv = sig * ((p + T::one()) - p * s_out / v);
                    let gu = u * dv;
                    d_kernel[k] += gu;
                    if let Some(src) = cache.pad_source[pidx] {
                        d_input.pixels_mut()[src] += gu;
                    }
                    dp_acc += sig * (v - s_out) * lv;
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
