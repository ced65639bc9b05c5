use morphlearn::datasets::{synthetic_corpus, target_se, SEName};
use morphlearn::image::{rescale_unit_band, PadMode};
use morphlearn::layers::{lmorph_forward, pconv_forward, smorph_forward, LayerState};
use morphlearn::morphology::{dilate, erode};
use morphlearn::Kernel;

fn maxdiff(a: &morphlearn::Image<f64>, b: &morphlearn::Image<f64>) -> f64 {
    a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn main() {
    let imgs: Vec<_> = synthetic_corpus::<f64>().into_iter().take(20)
        .map(|f| rescale_unit_band(&f).unwrap()).collect();
    let mode = PadMode::EdgeReplicate;
    for se_name in SEName::all() {
        let se = target_se::<f64>(se_name);
        let mut worst = [0.0f64; 6]; // smorph+ smorph- lmorph+ lmorph- pconv+ pconv-
        for f in &imgs {
            let st = LayerState::smorph(se.clone(), 50.0).unwrap();
            worst[0] = worst[0].max(maxdiff(&smorph_forward(f, &st, mode).unwrap(), &dilate(f, &se, mode)));
            let st = LayerState::smorph(se.clone(), -50.0).unwrap();
            worst[1] = worst[1].max(maxdiff(&smorph_forward(f, &st, mode).unwrap(), &erode(f, &se.negated(), mode)));
            let st = LayerState::lmorph(se.clone(), 40.0).unwrap();
            worst[2] = worst[2].max(maxdiff(&lmorph_forward(f, &st, mode).unwrap(), &dilate(f, &se, mode)));
            let st = LayerState::lmorph(se.clone(), -40.0).unwrap();
            worst[3] = worst[3].max(maxdiff(&lmorph_forward(f, &st, mode).unwrap(), &erode(f, &se.negated(), mode)));
            // pconv: w = 1 on support, e^{-|p|} off; b = (1/p) ln w
            for (i, p) in [(4usize, 40.0f64), (5, -40.0)] {
                let w = se.map(|v| if v > 0.0 { 1.0 } else { (-p.abs()).exp() }).unwrap();
                let b = Kernel::new(7, w.weights().iter().map(|&x| x.ln() / p).collect()).unwrap();
                let st = LayerState::pconv(w, p).unwrap();
                let out = pconv_forward(f, &st, mode).unwrap();
                let target = if p > 0.0 { dilate(f, &b, mode) } else { erode(f, &b.negated(), mode) };
                worst[i] = worst[i].max(maxdiff(&out, &target));
            }
        }
        println!("{se_name:>9}: smorph +{:.4} -{:.4} | lmorph +{:.4} -{:.4} | pconv +{:.4} -{:.4}",
            worst[0], worst[1], worst[2], worst[3], worst[4], worst[5]);
    }
}
