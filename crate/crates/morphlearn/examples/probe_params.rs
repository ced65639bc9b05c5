use morphlearn::datasets::{expected_kernels, load_images, make_pairs, MorphOp, SEName, ScenarioSpec};
use morphlearn::train::{train, TrainConfig};
use morphlearn::{LayerKind, Network};
use rand::SeedableRng;

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
    let epochs: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(200);
    let seed: u64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(7);
    let samples: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let images = load_images::<f64>(None, samples).unwrap();
    let spec = ScenarioSpec::new(op, se, kind, samples).unwrap();
    let pairs = make_pairs(&images, &spec).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let net = Network::<f64>::for_scenario(kind, op.layer_count(), 7, &mut rng).unwrap();
    let mut cfg = TrainConfig::default();
    cfg.seed = seed;
    cfg.max_epochs = epochs;
    let t0 = std::time::Instant::now();
    let result = train(net, &pairs, &cfg).unwrap();
    let net = &result.network;
    println!(
        "{} {} {} seed {}: loss {:.3e} epochs {} ({:.0}s) converged {}",
        kind, op, se, seed, result.final_loss(), result.epochs(), t0.elapsed().as_secs_f64(), result.converged
    );
    let expected = expected_kernels::<f64>(op, se);
    let morph: Vec<_> = net.layers().iter().filter(|l| l.kind() != LayerKind::ScaleBias).collect();
    for (i, layer) in morph.iter().enumerate() {
        let k = layer.kernel().unwrap();
        let rmse = morphlearn::rmse(k, &expected[i]).unwrap();
        println!("  layer {}: param {:+.2} rmse {:.4}", i + 1, layer.shape_param().unwrap(), rmse);
        for ky in 0..7 {
            let row: Vec<String> = (0..7).map(|kx| format!("{:+.2}", k.get(kx, ky))).collect();
            println!("    {}", row.join(" "));
        }
    }
    let (s, b) = net.layers().last().unwrap().scale_and_bias().unwrap();
    println!("  scale {s:+.4} bias {b:+.4}");
}
