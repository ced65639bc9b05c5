//! Desk-scale training behavior: the convex affine fit, network forward
//! composition, and a small end-to-end run that learns a flat structuring
//! element.

use morphlearn::datasets::synthetic_corpus;
use morphlearn::image::{mse, Image, PadMode};
use morphlearn::layers::{forward, LayerState};
use morphlearn::morphology::{dilate, flat_kernel};
use morphlearn::train::{train, TrainConfig};
use morphlearn::{Kernel, LayerKind, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_images(count: usize) -> Vec<Image<f64>> {
    synthetic_corpus::<f64>()
        .into_iter()
        .cycle()
        .take(count)
        .collect()
}

#[test]
fn scale_bias_only_network_fits_the_identity() {
    // target = input: the loss is convex in (scale, bias) with optimum (1, 0)
    // enough batches per epoch that each learning-rate cut shows progress
    // within the plateau patience, letting the schedule ratchet down
    let data: Vec<(Image<f64>, Image<f64>)> = small_images(256)
        .into_iter()
        .map(|f| (f.clone(), f))
        .collect();
    let net = Network::new(vec![LayerState::scale_bias(0.3, 0.4).unwrap()]).unwrap();
    let cfg = TrainConfig {
        max_epochs: 400,
        seed: 3,
        ..TrainConfig::default()
    };
    let result = train(net, &data, &cfg).unwrap();
    let (scale, bias) = result.network.layers()[0].scale_and_bias().unwrap();
    assert!(result.final_loss() < 1e-3, "loss {}", result.final_loss());
    assert!((scale - 1.0).abs() < 1e-3, "scale {scale}");
    assert!(bias.abs() < 1e-3, "bias {bias}");
    assert!(!result.diverged);
}

#[test]
fn network_forward_composes_layer_forwards() {
    let f = &synthetic_corpus::<f64>()[0];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = Network::<f64>::for_scenario(LayerKind::SMorph, 2, 5, &mut rng).unwrap();
    let out = net.forward(f).unwrap();
    // manual composition: two smorph layers then the affine map
    let mode = PadMode::EdgeReplicate;
    let step1 = forward(f, &net.layers()[0], mode).unwrap();
    let step2 = forward(&step1, &net.layers()[1], mode).unwrap();
    let manual = forward(&step2, &net.layers()[2], mode).unwrap();
    assert_eq!(out, manual);
}

#[test]
fn freshly_initialized_smorph_network_is_close_to_the_local_mean() {
    // weights ~ N(0, 0.01^2) and alpha = 0 perturb the window mean only a little
    let f = &synthetic_corpus::<f64>()[1];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let net = Network::<f64>::for_scenario(LayerKind::SMorph, 1, 7, &mut rng).unwrap();
    let out = net.forward(f).unwrap();
    let mean_kernel = LayerState::smorph(Kernel::constant(7, 0.0).unwrap(), 0.0).unwrap();
    let local_mean = forward(f, &mean_kernel, PadMode::EdgeReplicate).unwrap();
    let max_gap = out
        .pixels()
        .iter()
        .zip(local_mean.pixels())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(max_gap < 0.05, "gap {max_gap}");
}

#[test]
fn zero_upstream_gives_zero_gradients_everywhere() {
    let f = &synthetic_corpus::<f64>()[2];
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let net = Network::<f64>::for_scenario(LayerKind::SMorph, 1, 5, &mut rng).unwrap();
    let zero = Image::constant(f.width(), f.height(), 0.0).unwrap();
    let grads = net.backward(f, &zero).unwrap();
    for g in grads {
        if let Some(dk) = g.d_kernel {
            assert!(dk.weights().iter().all(|&v| v == 0.0));
        }
        assert_eq!(g.d_shape_param, 0.0);
        assert_eq!(g.d_scale, 0.0);
        assert_eq!(g.d_bias, 0.0);
        assert!(g.d_input.pixels().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn scale_bias_gradient_matches_the_closed_form() {
    // for an affine-only network, d MSE / d bias = 2 * mean residual
    let f = &synthetic_corpus::<f64>()[3];
    let target = dilate(
        f,
        &flat_kernel(3, &[true; 9]).unwrap(),
        PadMode::EdgeReplicate,
    );
    let net = Network::new(vec![LayerState::scale_bias(1.0, 0.0).unwrap()]).unwrap();
    let grads = net.loss_gradients(f, &target).unwrap();
    let residual_mean: f64 = f
        .pixels()
        .iter()
        .zip(target.pixels())
        .map(|(o, t)| o - t)
        .sum::<f64>()
        / f.len() as f64;
    // params are [scale, bias]
    assert!((grads[1] - 2.0 * residual_mean).abs() < 1e-12);
    let _ = mse(f, &target).unwrap();
}

/// Multi-level blob images: graded values keep the max/min approximation
/// error alive at large alpha, which is what drives the shape parameter far
/// from zero on purely binary data it would stall early.
fn graded_images(count: usize) -> Vec<Image<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    (0..count)
        .map(|_| {
            let blobs: Vec<(f64, f64, f64, f64)> = [0.5, 0.75, 1.0]
                .iter()
                .map(|&level| {
                    (
                        rng.gen_range(3.0..13.0),
                        rng.gen_range(3.0..13.0),
                        rng.gen_range(1.5..3.5),
                        level,
                    )
                })
                .collect();
            Image::from_fn(16, 16, |x, y| {
                blobs
                    .iter()
                    .filter(|(cx, cy, rad, _)| {
                        (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) < rad * rad
                    })
                    .map(|&(_, _, _, level)| level)
                    .fold(0.0, f64::max)
            })
            .unwrap()
        })
        .collect()
}

#[test]
fn smorph_learns_dilation_by_a_flat_box() {
    // flat 3x3 target: zero weights, alpha large and positive at convergence
    let images = graded_images(200);
    let box3 = flat_kernel::<f64>(3, &[true; 9]).unwrap();
    let data: Vec<(Image<f64>, Image<f64>)> = images
        .iter()
        .map(|f| (f.clone(), dilate(f, &box3, PadMode::EdgeReplicate)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let net = Network::<f64>::for_scenario(LayerKind::SMorph, 1, 3, &mut rng).unwrap();
    // alpha moves a few thousandths per optimizer step at this scale, so
    // clearing 20 needs the epoch budget
    let cfg = TrainConfig {
        seed: 17,
        max_epochs: 3000,
        ..TrainConfig::default()
    };
    let result = train(net, &data, &cfg).unwrap();
    let layer = &result.network.layers()[0];
    let alpha = layer.shape_param().unwrap();
    assert!(alpha > 20.0, "alpha {alpha}");
    let zero_target = Kernel::constant(3, 0.0).unwrap();
    let rmse = morphlearn::rmse(layer.kernel().unwrap(), &zero_target).unwrap();
    assert!(rmse < 0.1, "rmse {rmse}");
    assert!(!result.diverged);

    // the erosion twin converges to the opposite sign
    let data: Vec<(Image<f64>, Image<f64>)> = images
        .iter()
        .map(|f| {
            (
                f.clone(),
                morphlearn::morphology::erode(f, &box3, PadMode::EdgeReplicate),
            )
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let net = Network::<f64>::for_scenario(LayerKind::SMorph, 1, 3, &mut rng).unwrap();
    let result = train(net, &data, &cfg).unwrap();
    let alpha = result.network.layers()[0].shape_param().unwrap();
    assert!(alpha < -20.0, "alpha {alpha}");
}

#[test]
fn absurd_learning_rates_trip_the_divergence_guard() {
    // an enormous step size makes the loss explode; the guard stops the run
    // and flags it instead of looping to max_epochs
    let images = small_images(32);
    let box3 = flat_kernel::<f64>(3, &[true; 9]).unwrap();
    let data: Vec<(Image<f64>, Image<f64>)> = images
        .iter()
        .map(|f| (f.clone(), dilate(f, &box3, PadMode::EdgeReplicate)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let net = Network::<f64>::for_scenario(LayerKind::SMorph, 1, 3, &mut rng).unwrap();
    let cfg = TrainConfig {
        seed: 29,
        initial_lr: 1e4,
        max_epochs: 200,
        ..TrainConfig::default()
    };
    let result = train(net, &data, &cfg).unwrap();
    assert!(result.diverged, "guard did not fire");
    assert!(result.epochs() < 200);
}

#[test]
fn identical_seeds_reproduce_identical_histories() {
    let images = small_images(96);
    let box3 = flat_kernel::<f64>(3, &[true; 9]).unwrap();
    let data: Vec<(Image<f64>, Image<f64>)> = images
        .iter()
        .map(|f| (f.clone(), dilate(f, &box3, PadMode::EdgeReplicate)))
        .collect();
    let cfg = TrainConfig {
        seed: 23,
        max_epochs: 12,
        ..TrainConfig::default()
    };
    let mut histories = Vec::new();
    for _ in 0..2 {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let net = Network::<f64>::for_scenario(LayerKind::SMorph, 1, 3, &mut rng).unwrap();
        let result = train(net, &data, &cfg).unwrap();
        histories.push(morphlearn::io::loss_history_csv_string(&result.history));
    }
    assert_eq!(histories[0], histories[1]);
}
