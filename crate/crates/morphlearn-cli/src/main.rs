//! Command-line harness: train single scenarios, run scenario matrices,
//! render parameter sweeps, and check analytic gradients against finite
//! differences.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use morphlearn::datasets::{MorphOp, SEName, ScenarioSpec};
use morphlearn::harness::{demo_sweep, run_gradcheck, run_matrix, run_scenario, ScenarioReport};
use morphlearn::LayerKind;

#[derive(Parser)]
#[command(name = "morphlearn", version, about = "Learn grayscale morphological operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// flat key=value config file; flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
    /// training pairs per scenario (default 1000)
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// directory with train-images-idx3-ubyte (or set MNIST_DIR); synthetic
    /// corpus if absent
    #[arg(long)]
    mnist_dir: Option<PathBuf>,
    /// where reports, kernels and images are written
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// scenario-level parallelism for matrix runs
    #[arg(long)]
    workers: Option<usize>,
    /// train on all 60000 digits (requires MNIST)
    #[arg(long)]
    full_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train one scenario and print its report
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        op: MorphOp,
        #[arg(long)]
        se: SEName,
        #[arg(long)]
        layer: LayerKind,
    },
    /// Train the cartesian product of operations, structuring elements and
    /// layer kinds
    Matrix {
        #[command(flatten)]
        common: CommonArgs,
        /// comma-separated subset, e.g. dilation,erosion
        #[arg(long, value_delimiter = ',')]
        ops: Option<Vec<MorphOp>>,
        #[arg(long, value_delimiter = ',')]
        ses: Option<Vec<SEName>>,
        #[arg(long, value_delimiter = ',')]
        layers: Option<Vec<LayerKind>>,
    },
    /// Apply one layer at several parameter values and write the frames as
    /// PGM images next to the oracle target
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        layer: LayerKind,
        #[arg(long)]
        se: SEName,
        /// comma-separated parameter values, e.g. 1,5,20,50
        #[arg(long, value_delimiter = ',')]
        params: Option<Vec<f64>>,
    },
    /// Run the finite-difference gradient-check suite
    Gradcheck {
        /// random configurations per layer kind
        #[arg(long, default_value_t = 100)]
        configs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_common(common: &CommonArgs) -> Result<config::FileConfig> {
    match &common.config {
        Some(path) => config::FileConfig::load(path),
        None => Ok(config::FileConfig::default()),
    }
}

fn print_report(report: &ScenarioReport) {
    let status = if report.failed { "FAILED" } else { "ok" };
    println!(
        "[{status}] {} loss {:.3e} epochs {} time {:.1}s",
        report.spec.label(),
        report.final_loss,
        report.epochs,
        report.wall_time_secs
    );
    for (i, (rmse, param)) in report
        .kernel_rmse
        .iter()
        .zip(&report.shape_param_final)
        .enumerate()
    {
        println!("  layer {}: kernel rmse {rmse:.4}  shape param {param:.3}", i + 1);
    }
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train {
            common,
            op,
            se,
            layer,
        } => {
            let file = load_common(&common)?;
            let merged = config::merge(
                &file,
                common.samples,
                common.seed,
                common.mnist_dir.clone(),
                common.out_dir.clone(),
                common.workers,
                common.full_scale,
                None,
                None,
                None,
            )?;
            let spec = ScenarioSpec::new(op, se, layer, merged.harness.samples)
                .context("building scenario")?;
            let report = run_scenario(&spec, &merged.harness)?;
            print_report(&report);
            Ok(if report.failed {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Matrix {
            common,
            ops,
            ses,
            layers,
        } => {
            let file = load_common(&common)?;
            let merged = config::merge(
                &file,
                common.samples,
                common.seed,
                common.mnist_dir.clone(),
                common.out_dir.clone(),
                common.workers,
                common.full_scale,
                ops,
                ses,
                layers,
            )?;
            let reports = run_matrix(&merged.ops, &merged.ses, &merged.kinds, &merged.harness)?;
            println!("{}", ScenarioReport::csv_header());
            for r in &reports {
                println!("{}", r.csv_row());
            }
            let failures = reports.iter().filter(|r| r.failed).count();
            if failures > 0 {
                eprintln!("{failures} scenario(s) failed");
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            common,
            layer,
            se,
            params,
        } => {
            let file = load_common(&common)?;
            let merged = config::merge(
                &file,
                common.samples,
                common.seed,
                common.mnist_dir.clone(),
                common.out_dir.clone(),
                common.workers,
                common.full_scale,
                None,
                None,
                None,
            )?;
            let params = params.unwrap_or_else(|| default_sweep(layer));
            let frames = demo_sweep(layer, se, &params, &merged.harness)?;
            println!("param,max_abs_distance_to_oracle");
            for f in &frames {
                println!("{},{}", f.param, f.distance);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck { configs, seed } => {
            let (_, all_pass) = run_gradcheck(configs, seed)?;
            Ok(if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn default_sweep(kind: LayerKind) -> Vec<f64> {
    match kind {
        LayerKind::SMorph => vec![1.0, 5.0, 20.0, 50.0],
        _ => vec![1.0, 5.0, 20.0, 40.0],
    }
}
