//! Finite-difference verification of the analytic gradients.
//!
//! The checks perturb one coordinate at a time and recompute the forward pass,
//! so they depend only on the forward code path, never on the analytic
//! backward they validate. The scalar functional under test is the upstream
//! contraction `J = sum(probe * forward(...))` for layers, and the MSE loss
//! for full networks.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::image::{Image, PadMode};
use crate::kernel::Kernel;
use crate::layers::{self, LayerKind, LayerState};
use crate::network::Network;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const NETWORK_TOLERANCE: f64 = 1e-3;
/// Coordinates where both gradients are below this magnitude are skipped.
pub const MAGNITUDE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub label: String,
    pub configs: usize,
    pub coords_checked: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

fn rel_err(analytic: f64, numeric: f64) -> Option<f64> {
    let scale = analytic.abs().max(numeric.abs());
    if scale <= MAGNITUDE_FLOOR {
        return None;
    }
    Some((analytic - numeric).abs() / scale)
}

/// Central difference of `eval` along one perturbed coordinate.
fn central_diff(mut eval: impl FnMut(f64) -> f64, at: f64, h: f64) -> f64 {
    (eval(at + h) - eval(at - h)) / (2.0 * h)
}

struct Tally {
    coords: usize,
    max_rel: f64,
}

impl Tally {
    fn new() -> Self {
        Tally {
            coords: 0,
            max_rel: 0.0,
        }
    }

    fn record(&mut self, analytic: f64, numeric: f64) {
        if let Some(e) = rel_err(analytic, numeric) {
            self.coords += 1;
            if e > self.max_rel {
                self.max_rel = e;
            }
        }
    }
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, lo: f64, hi: f64) -> Image<f64> {
    Image::from_fn(w, h, |_, _| rng.gen_range(lo..hi)).unwrap()
}

fn random_state(kind: LayerKind, side: usize, rng: &mut ChaCha8Rng) -> LayerState<f64> {
    match kind {
        LayerKind::PConv => {
            let k = Kernel::from_fn(side, |_, _| rng.gen_range(0.2..2.0)).unwrap();
            LayerState::pconv(k, rng.gen_range(-4.0..4.0)).unwrap()
        }
        LayerKind::LMorph => {
            let k = Kernel::from_fn(side, |_, _| rng.gen_range(1e-4..1.2)).unwrap();
            LayerState::lmorph(k, rng.gen_range(-4.0..4.0)).unwrap()
        }
        LayerKind::SMorph => {
            let k = Kernel::from_fn(side, |_, _| rng.gen_range(-0.8..0.8)).unwrap();
            LayerState::smorph(k, rng.gen_range(-6.0..6.0)).unwrap()
        }
        LayerKind::ScaleBias => {
            LayerState::scale_bias(rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0)).unwrap()
        }
    }
}

fn rebuild(kind: LayerKind, kernel: &[f64], side: usize, shape: f64, sb: (f64, f64)) -> LayerState<f64> {
    match kind {
        LayerKind::PConv => {
            LayerState::pconv(Kernel::new(side, kernel.to_vec()).unwrap(), shape).unwrap()
        }
        LayerKind::LMorph => {
            LayerState::lmorph(Kernel::new(side, kernel.to_vec()).unwrap(), shape).unwrap()
        }
        LayerKind::SMorph => {
            LayerState::smorph(Kernel::new(side, kernel.to_vec()).unwrap(), shape).unwrap()
        }
        LayerKind::ScaleBias => LayerState::scale_bias(sb.0, sb.1).unwrap(),
    }
}

/// Check one layer kind over `configs` random (image, state, probe) draws.
///
/// Every kernel cell, the shape parameter, every input pixel, and the
/// scale/bias parameters are perturbed in turn.
pub fn check_layer(
    kind: LayerKind,
    configs: usize,
    seed: u64,
    h: f64,
    tolerance: f64,
) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new();

    for cfg in 0..configs {
        let side = if cfg % 2 == 0 { 3 } else { 5 };
        let w = rng.gen_range(5..8);
        let hgt = rng.gen_range(5..8);
        // CHM layers need a positive band; SMorph and ScaleBias take any sign
        let f = match kind {
            LayerKind::PConv | LayerKind::LMorph => random_image(&mut rng, w, hgt, 1.0, 2.0),
            _ => random_image(&mut rng, w, hgt, -1.0, 1.0),
        };
        let state = random_state(kind, side, &mut rng);
        let mode = if rng.gen_bool(0.5) {
            PadMode::EdgeReplicate
        } else {
            PadMode::Constant(if matches!(kind, LayerKind::PConv | LayerKind::LMorph) {
                1.5
            } else {
                0.0
            })
        };
        let probe = random_image(&mut rng, w, hgt, -1.0, 1.0);

        let grads = layers::backward(&f, &state, &probe, mode)?;

        let kernel_vals: Vec<f64> = state
            .kernel()
            .map(|k| k.weights().to_vec())
            .unwrap_or_default();
        let shape = state.shape_param().unwrap_or(0.0);
        let sb = state.scale_and_bias().unwrap_or((0.0, 0.0));

        let eval_state = |st: &LayerState<f64>| -> f64 {
            let out = layers::forward(&f, st, mode).unwrap();
            out.pixels()
                .iter()
                .zip(probe.pixels())
                .map(|(o, pr)| o * pr)
                .sum()
        };

        // kernel cells
        if let Some(dk) = &grads.d_kernel {
            for i in 0..kernel_vals.len() {
                let numeric = central_diff(
                    |v| {
                        let mut kv = kernel_vals.clone();
                        kv[i] = v;
                        eval_state(&rebuild(kind, &kv, side, shape, sb))
                    },
                    kernel_vals[i],
                    h,
                );
                tally.record(dk.weights()[i], numeric);
            }
        }

        // shape parameter
        if state.shape_param().is_some() {
            let numeric = central_diff(
                |v| eval_state(&rebuild(kind, &kernel_vals, side, v, sb)),
                shape,
                h,
            );
            tally.record(grads.d_shape_param, numeric);
        }

        // scale and bias
        if state.scale_and_bias().is_some() {
            let numeric = central_diff(
                |v| eval_state(&rebuild(kind, &kernel_vals, side, shape, (v, sb.1))),
                sb.0,
                h,
            );
            tally.record(grads.d_scale, numeric);
            let numeric = central_diff(
                |v| eval_state(&rebuild(kind, &kernel_vals, side, shape, (sb.0, v))),
                sb.1,
                h,
            );
            tally.record(grads.d_bias, numeric);
        }

        // input pixels
        for i in 0..f.len() {
            let numeric = central_diff(
                |v| {
                    let mut px = f.pixels().to_vec();
                    px[i] = v;
                    let fi = Image::new(f.width(), f.height(), px).unwrap();
                    let out = layers::forward(&fi, &state, mode).unwrap();
                    out.pixels()
                        .iter()
                        .zip(probe.pixels())
                        .map(|(o, pr)| o * pr)
                        .sum()
                },
                f.pixels()[i],
                h,
            );
            tally.record(grads.d_input.pixels()[i], numeric);
        }
    }

    Ok(CheckReport {
        label: format!("layer {}", kind.name()),
        configs,
        coords_checked: tally.coords,
        max_rel_err: tally.max_rel,
        tolerance,
    })
}

/// Check gradients through a full network against finite differences of its
/// MSE loss. SMorph networks only: the inter-layer rescale of the CHM-based
/// two-layer networks treats its min/max as constants, so its analytic
/// gradient is intentionally not the exact derivative.
pub fn check_network(
    layers_count: usize,
    configs: usize,
    seed: u64,
    h: f64,
    tolerance: f64,
) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new();

    for _ in 0..configs {
        let w = rng.gen_range(6..9);
        let hgt = rng.gen_range(6..9);
        let f = random_image(&mut rng, w, hgt, 0.0, 1.0);
        let target = random_image(&mut rng, w, hgt, 0.0, 1.0);

        let mut states = Vec::new();
        for _ in 0..layers_count {
            states.push(random_state(LayerKind::SMorph, 3, &mut rng));
        }
        states.push(random_state(LayerKind::ScaleBias, 3, &mut rng));
        let net = Network::new(states)?;

        let params = net.trainable_params();
        let grads = net.loss_gradients(&f, &target)?;

        for i in 0..params.len() {
            let numeric = central_diff(
                |v| {
                    let mut pv = params.clone();
                    pv[i] = v;
                    let mut candidate = net.clone();
                    candidate.apply_trainable(&pv);
                    candidate.loss(&f, &target).unwrap()
                },
                params[i],
                h,
            );
            tally.record(grads[i], numeric);
        }
    }

    Ok(CheckReport {
        label: format!("network ({layers_count} smorph + scale_bias)"),
        configs,
        coords_checked: tally.coords,
        max_rel_err: tally.max_rel,
        tolerance,
    })
}

/// The full suite: every layer kind at the layer tolerance plus a two-layer
/// network at the network tolerance.
pub fn run_full_suite(configs: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let mut reports = Vec::new();
    for kind in [
        LayerKind::PConv,
        LayerKind::LMorph,
        LayerKind::SMorph,
        LayerKind::ScaleBias,
    ] {
        reports.push(check_layer(
            kind,
            configs,
            seed,
            DEFAULT_STEP,
            DEFAULT_TOLERANCE,
        )?);
    }
    reports.push(check_network(
        2,
        (configs / 10).max(3),
        seed,
        DEFAULT_STEP,
        NETWORK_TOLERANCE,
    )?);
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_kind_passes_a_small_sweep() {
        for kind in [
            LayerKind::PConv,
            LayerKind::LMorph,
            LayerKind::SMorph,
            LayerKind::ScaleBias,
        ] {
            let report = check_layer(kind, 8, 31, DEFAULT_STEP, DEFAULT_TOLERANCE).unwrap();
            assert!(
                report.passed(),
                "{}: max rel err {:.3e} over {} coords",
                report.label,
                report.max_rel_err,
                report.coords_checked
            );
            assert!(report.coords_checked > 0);
        }
    }

    #[test]
    fn two_layer_network_matches_finite_differences() {
        let report = check_network(2, 3, 17, DEFAULT_STEP, NETWORK_TOLERANCE).unwrap();
        assert!(
            report.passed(),
            "max rel err {:.3e} over {} coords",
            report.max_rel_err,
            report.coords_checked
        );
    }
}
