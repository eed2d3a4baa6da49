use datasets::gen_stability;
use models::{ModelConfig, ModelKind};
use trainer::{train_run, TrainOptions};

/// Manual probe for sizing full benchmark runs; not part of the suite.
#[test]
#[ignore = "manual timing probe"]
fn time_one_stability_iteration_per_kind() {
    let pair = gen_stability(42, 128, 16, 64, 127);
    for kind in ModelKind::ALL {
        let cfg = ModelConfig::matched(kind, 64, 127);
        let opts = TrainOptions {
            iters: 3,
            batch: 64,
            log_every: 1000,
        };
        let t0 = std::time::Instant::now();
        let out = train_run(&cfg, &pair.train, &pair.val, 42, &opts).unwrap();
        let secs = t0.elapsed().as_secs_f64();
        println!(
            "{kind}: 3 iters in {secs:.2}s => {:.2}s/iter (final val {:.3e})",
            secs / 3.0,
            out.record.final_val_loss
        );
    }
}
