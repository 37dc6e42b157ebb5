use std::time::Instant;

use sepgan::models::{generator_plan, ModelConfig, Scale, Variant};
use sepgan::params::Parameters;
use sepgan::{Rng, Tape, Tensor};

fn main() {
    for v in [Variant::Baseline, Variant::DepthwiseG] {
        let cfg = ModelConfig::preset(Scale::Desk, v);
        let plan = generator_plan(&cfg).unwrap();
        let mut rng = Rng::new(0);
        for l in &plan.layers {
            let mut params = Parameters::new();
            l.spec.init_params("x", &mut params, &mut rng);
            let x = Tensor::full([8, l.spec.in_channels, l.in_h, l.in_w], 0.3);
            let reps = 20;
            let (mut tf, mut tb) = (0.0, 0.0);
            for _ in 0..reps {
                let mut tape = Tape::new();
                let p = params.bind(&mut tape, true);
                let xv = tape.leaf(x.clone(), true);
                let t0 = Instant::now();
                let y = l.spec.forward(&mut tape, xv, &p).unwrap();
                let m = tape.mean(y);
                tf += t0.elapsed().as_secs_f64();
                let t1 = Instant::now();
                tape.backward(m).unwrap();
                tb += t1.elapsed().as_secs_f64();
            }
            println!(
                "{v:<12} {:<6} {:<18} fwd {:7.2} ms  bwd {:7.2} ms",
                l.name,
                l.spec.kind.as_str(),
                tf / reps as f64 * 1e3,
                tb / reps as f64 * 1e3
            );
        }
    }
}
