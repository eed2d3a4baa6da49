use datasets::gen_stability;
use models::{build_model, ModelConfig, ModelKind};
use nn::tape::Tape;
use numkit::RandomStream;

#[test]
#[ignore = "manual phase-timing probe"]
fn phase_timing() {
    let pair = gen_stability(42, 128, 16, 64, 127);
    for kind in [ModelKind::Gpt, ModelKind::Edelta] {
        let cfg = ModelConfig::matched(kind, 64, 127);
        let model = build_model(&cfg, &mut RandomStream::new(1)).unwrap();
        let idx: Vec<usize> = (0..64).collect();
        let (x, y) = pair.train.gather(&idx);

        let t0 = std::time::Instant::now();
        let mut tape = Tape::new();
        let fwd = model.forward(&mut tape, &x);
        let loss = tape.mse_loss(fwd.output, &y);
        let t_fwd = t0.elapsed().as_secs_f64();

        let t1 = std::time::Instant::now();
        let grads = tape.backward(loss);
        let t_bwd = t1.elapsed().as_secs_f64();
        std::hint::black_box(&grads);

        println!("{kind}: forward {t_fwd:.2}s backward {t_bwd:.2}s nodes {}", tape.len());
    }
}
