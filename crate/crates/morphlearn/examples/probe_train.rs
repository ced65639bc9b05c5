use morphlearn::datasets::{MorphOp, SEName, ScenarioSpec};
use morphlearn::harness::{run_scenario_detailed, HarnessConfig};
use morphlearn::LayerKind;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let kind = match args.get(1).map(|s| s.as_str()) {
        Some("pconv") => LayerKind::PConv,
        Some("lmorph") => LayerKind::LMorph,
        _ => LayerKind::SMorph,
    };
    let op = match args.get(2).map(|s| s.as_str()) {
        Some("erosion") => MorphOp::Erosion,
        Some("closing") => MorphOp::Closing,
        Some("opening") => MorphOp::Opening,
        _ => MorphOp::Dilation,
    };
    let se = match args.get(3).map(|s| s.as_str()) {
        Some("disk3") => SEName::Disk3,
        _ => SEName::Cross7,
    };
    let mut cfg = HarnessConfig::default();
    cfg.train.seed = 7;
    let spec = ScenarioSpec::new(op, se, kind, 1000).unwrap();
    let (report, result) = run_scenario_detailed(&spec, &cfg).unwrap();
    println!(
        "{}: loss {:.3e} epochs {} time {:.1}s converged {} diverged {}",
        spec.label(),
        report.final_loss,
        report.epochs,
        report.wall_time_secs,
        result.converged,
        result.diverged
    );
    for (i, (r, p)) in report
        .kernel_rmse
        .iter()
        .zip(&report.shape_param_final)
        .enumerate()
    {
        println!("  layer {}: rmse {:.4} param {:+.2}", i + 1, r, p);
    }
    // epoch milestones
    for e in result.history.iter().step_by(10) {
        println!("  epoch {:>4} loss {:.4e} lr {:.0e}", e.epoch, e.mean_loss, e.lr);
    }
}
