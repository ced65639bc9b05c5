//! Scenario harness: builds the network for one (operation, structuring
//! element, layer kind) scenario, trains it, computes the report metrics, and
//! runs whole matrices, parameter sweeps and the gradient-check suite. Runs
//! at `f64`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datasets::{
    apply_op, expected_kernels, load_images, make_pairs, target_se, MorphOp, SEName,
    ScenarioSpec,
};
use crate::error::{Error, Result};
use crate::gradcheck::{self, CheckReport};
use crate::image::{Image, PadMode};
use crate::io::{
    write_kernel_csv, write_loss_history_csv, write_network_bundle, write_pgm,
};
use crate::kernel::rmse;
use crate::layers::{self, LayerKind, LayerState};
use crate::network::Network;
use crate::train::{train, TrainConfig, TrainResult};

/// Everything a run needs beyond the scenario itself.
#[derive(Debug, Clone)]
pub struct HarnessConfig {
    pub train: TrainConfig,
    /// training pairs per scenario (desk-scale default; the full protocol
    /// uses all 60000 digits)
    pub samples: usize,
    /// directory holding `train-images-idx3-ubyte`; synthetic corpus if absent
    pub mnist_dir: Option<PathBuf>,
    /// where reports, kernels and images go; nothing is written if absent
    pub out_dir: Option<PathBuf>,
    /// kernel side of the trainable layers
    pub kernel_side: usize,
    /// scenario-level parallelism for matrix runs
    pub workers: usize,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            samples: 1000,
            mnist_dir: None,
            out_dir: None,
            kernel_side: 7,
            workers: 1,
        }
    }
}

/// Metrics of one converged (or failed) scenario run.
#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub spec: ScenarioSpec,
    pub final_loss: f64,
    /// RMSE of each learned kernel against the kernel it should recover
    pub kernel_rmse: Vec<f64>,
    /// final `p` or `alpha` of each morphological layer
    pub shape_param_final: Vec<f64>,
    pub epochs: usize,
    pub wall_time_secs: f64,
    /// divergence guard fired or training errored
    pub failed: bool,
}

impl ScenarioReport {
    pub fn csv_header() -> &'static str {
        "op,se,kind,final_loss,rmse_l1,rmse_l2,param_l1,param_l2,epochs"
    }

    pub fn csv_row(&self) -> String {
        let get = |v: &Vec<f64>, i: usize| -> String {
            v.get(i).map(|x| format!("{x}")).unwrap_or_default()
        };
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.spec.op,
            self.spec.se,
            self.spec.layer,
            self.final_loss,
            get(&self.kernel_rmse, 0),
            get(&self.kernel_rmse, 1),
            get(&self.shape_param_final, 0),
            get(&self.shape_param_final, 1),
            self.epochs
        )
    }
}

/// Train one scenario and also hand back the raw training result (learned
/// network, loss history) for callers that need more than the report.
pub fn run_scenario_detailed(
    spec: &ScenarioSpec,
    cfg: &HarnessConfig,
) -> Result<(ScenarioReport, TrainResult<f64>)> {
    let started = Instant::now();
    let images = load_images::<f64>(cfg.mnist_dir.as_deref(), spec.sample_count)?;
    let pairs = make_pairs(&images, spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let net = Network::<f64>::for_scenario(
        spec.layer,
        spec.op.layer_count(),
        cfg.kernel_side,
        &mut rng,
    )?;
    let result = train(net, &pairs, &cfg.train)?;

    let expected = expected_kernels::<f64>(spec.op, spec.se);
    let mut kernel_rmse = Vec::new();
    let mut shape_param_final = Vec::new();
    for (i, layer) in result
        .network
        .layers()
        .iter()
        .filter(|l| l.kind() != LayerKind::ScaleBias)
        .enumerate()
    {
        let learned = layer.kernel().expect("window layer");
        kernel_rmse.push(rmse(learned, &expected[i])?);
        shape_param_final.push(layer.shape_param().expect("window layer"));
    }

    let report = ScenarioReport {
        spec: *spec,
        final_loss: result.final_loss(),
        kernel_rmse,
        shape_param_final,
        epochs: result.epochs(),
        wall_time_secs: started.elapsed().as_secs_f64(),
        failed: result.diverged,
    };

    if let Some(dir) = &cfg.out_dir {
        write_scenario_outputs(dir, spec, &report, &result)?;
    }
    Ok((report, result))
}

/// Train one scenario and report its metrics.
pub fn run_scenario(spec: &ScenarioSpec, cfg: &HarnessConfig) -> Result<ScenarioReport> {
    run_scenario_detailed(spec, cfg).map(|(report, _)| report)
}

fn write_scenario_outputs(
    dir: &Path,
    spec: &ScenarioSpec,
    report: &ScenarioReport,
    result: &TrainResult<f64>,
) -> Result<()> {
    let base = dir.join(spec.label());
    std::fs::create_dir_all(&base)?;
    write_loss_history_csv(base.join("loss_history.csv"), &result.history)?;
    write_network_bundle(base.join("network.txt"), &result.network)?;
    let expected = expected_kernels::<f64>(spec.op, spec.se);
    let morph_layers: Vec<&LayerState<f64>> = result
        .network
        .layers()
        .iter()
        .filter(|l| l.kind() != LayerKind::ScaleBias)
        .collect();
    for (i, layer) in morph_layers.iter().enumerate() {
        let learned = layer.kernel().expect("window layer");
        write_kernel_csv(base.join(format!("kernel_l{}.csv", i + 1)), learned)?;
        kernel_pgm(&base.join(format!("kernel_l{}.pgm", i + 1)), learned)?;
        write_kernel_csv(base.join(format!("target_l{}.csv", i + 1)), &expected[i])?;
        kernel_pgm(&base.join(format!("target_l{}.pgm", i + 1)), &expected[i])?;
    }
    std::fs::write(
        base.join("report.csv"),
        format!("{}\n{}\n", ScenarioReport::csv_header(), report.csv_row()),
    )?;
    Ok(())
}

fn kernel_pgm(path: &Path, kernel: &crate::kernel::Kernel<f64>) -> Result<()> {
    let img = Image::new(kernel.side(), kernel.side(), kernel.weights().to_vec())?;
    write_pgm(path, &img)
}

/// Run the cartesian product of scenarios, writing one aggregated CSV plus
/// per-scenario outputs. Failures are recorded and the run continues.
pub fn run_matrix(
    ops: &[MorphOp],
    ses: &[SEName],
    kinds: &[LayerKind],
    cfg: &HarnessConfig,
) -> Result<Vec<ScenarioReport>> {
    let mut specs = Vec::new();
    for &op in ops {
        for &se in ses {
            for &kind in kinds {
                specs.push(ScenarioSpec::new(op, se, kind, cfg.samples)?);
            }
        }
    }

    let run_one = |spec: &ScenarioSpec| -> ScenarioReport {
        match run_scenario(spec, cfg) {
            Ok(report) => report,
            Err(err) => {
                eprintln!("scenario {} failed: {err}", spec.label());
                ScenarioReport {
                    spec: *spec,
                    final_loss: f64::NAN,
                    kernel_rmse: Vec::new(),
                    shape_param_final: Vec::new(),
                    epochs: 0,
                    wall_time_secs: 0.0,
                    failed: true,
                }
            }
        }
    };

    let reports: Vec<ScenarioReport> = if cfg.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
        pool.install(|| specs.par_iter().map(run_one).collect())
    } else {
        specs.iter().map(run_one).collect()
    };

    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        let mut csv = String::from(ScenarioReport::csv_header());
        csv.push('\n');
        for r in &reports {
            csv.push_str(&r.csv_row());
            csv.push('\n');
        }
        std::fs::write(dir.join("matrix.csv"), csv)?;
    }
    Ok(reports)
}

/// One frame of a parameter sweep.
#[derive(Debug, Clone)]
pub struct SweepFrame {
    pub param: f64,
    /// max-abs distance between the layer output and the oracle target
    pub distance: f64,
}

/// Apply one layer kind at each parameter value to a sample image and measure
/// the distance to the oracle operation the sign aims at. Writes the frames
/// plus the input and the oracle target as PGM files when an output directory
/// is configured.
pub fn demo_sweep(
    kind: LayerKind,
    se: SEName,
    params: &[f64],
    cfg: &HarnessConfig,
) -> Result<Vec<SweepFrame>> {
    if params.is_empty() {
        return Err(Error::EmptyInput);
    }
    let images = load_images::<f64>(cfg.mnist_dir.as_deref(), 1)?;
    let raw = &images[0];
    let kernel = target_se::<f64>(se);
    let mode = PadMode::EdgeReplicate;

    // CHM-based layers see the rescaled image; SMorph the raw one
    let needs_rescale = matches!(kind, LayerKind::PConv | LayerKind::LMorph);
    let input = if needs_rescale {
        crate::image::rescale_unit_band(raw)?
    } else {
        raw.clone()
    };

    let out_base = match &cfg.out_dir {
        Some(dir) => {
            let base = dir.join(format!("sweep-{kind}-{se}"));
            std::fs::create_dir_all(&base)?;
            write_pgm(base.join("input.pgm"), &input)?;
            Some(base)
        }
        None => None,
    };

    let mut frames = Vec::with_capacity(params.len());
    for (i, &param) in params.iter().enumerate() {
        let (output, target) = sweep_frame(kind, &input, &kernel, param, mode)?;
        let distance = output
            .pixels()
            .iter()
            .zip(target.pixels())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if let Some(base) = &out_base {
            write_pgm(base.join(format!("frame_{i}_param_{param}.pgm")), &output)?;
            if i == 0 || i + 1 == params.len() {
                write_pgm(base.join(format!("oracle_{i}.pgm")), &target)?;
            }
        }
        frames.push(SweepFrame { param, distance });
    }
    Ok(frames)
}

fn sweep_frame(
    kind: LayerKind,
    input: &Image<f64>,
    kernel: &crate::kernel::Kernel<f64>,
    param: f64,
    mode: PadMode<f64>,
) -> Result<(Image<f64>, Image<f64>)> {
    let dilating = param >= 0.0;
    let (output, target) = match kind {
        LayerKind::PConv => {
            // encode the target shape in the weights: b = (1/p) ln w, so the
            // limits are dilation by the kernel and erosion by the kernel
            let w = kernel.map(|v| (param.abs() * v).exp())?;
            let state = LayerState::pconv(w, param)?;
            let out = layers::pconv_forward(input, &state, mode)?;
            let target = if dilating {
                crate::morphology::dilate(input, kernel, mode)
            } else {
                crate::morphology::erode(input, kernel, mode)
            };
            (out, target)
        }
        LayerKind::LMorph => {
            let state = LayerState::lmorph(kernel.clone(), param)?;
            let out = layers::lmorph_forward(input, &state, mode)?;
            let op = if dilating {
                MorphOp::Dilation
            } else {
                MorphOp::Erosion
            };
            (out, apply_op(input, op, kernel, mode))
        }
        LayerKind::SMorph => {
            let state = LayerState::smorph(kernel.clone(), param)?;
            let out = layers::smorph_forward(input, &state, mode)?;
            let op = if dilating {
                MorphOp::Dilation
            } else {
                MorphOp::Erosion
            };
            (out, apply_op(input, op, kernel, mode))
        }
        LayerKind::ScaleBias => {
            return Err(Error::InvalidConfig(
                "sweep needs a morphological layer kind".into(),
            ))
        }
    };
    Ok((output, target))
}

/// Run the finite-difference suite and print one line per check.
pub fn run_gradcheck(configs: usize, seed: u64) -> Result<(Vec<CheckReport>, bool)> {
    let reports = gradcheck::run_full_suite(configs, seed)?;
    let mut all_pass = true;
    for r in &reports {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        println!(
            "{status} {}: max rel err {:.3e} over {} coordinates ({} configs, tol {:.0e})",
            r.label, r.max_rel_err, r.coords_checked, r.configs, r.tolerance
        );
        all_pass &= r.passed();
    }
    Ok((reports, all_pass))
}
