use crate::adamw::{adamw_step, clip_gradients, AdamHyper, OptimState};
use crate::metrics::{cosine_alignment, norm_deviation, norm_profile};
use crate::record::{RunRecord, StepRecord};
use crate::schedule::lr_at;
use crate::TrainerError;
use datasets::Dataset;
use models::{build_model, Model, ModelKind};
use nn::tape::Tape;
use numkit::{RandomStream, Tensor};

pub const DEFAULT_ITERS: usize = 2000;
pub const DEFAULT_BATCH: usize = 64;
pub const LOG_EVERY: usize = 50;

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub iters: usize,
    pub batch: usize,
    pub log_every: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            iters: DEFAULT_ITERS,
            batch: DEFAULT_BATCH,
            log_every: LOG_EVERY,
        }
    }
}

impl TrainOptions {
    /// Reduced desk-scale profile for quick runs.
    pub fn fast() -> Self {
        Self {
            iters: 500,
            ..Self::default()
        }
    }
}

pub struct TrainOutcome {
    pub record: RunRecord,
    pub model: Model,
}

/// Epoch-reshuffled sequential minibatch cursor.
struct Batcher {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
    stream: RandomStream,
}

impl Batcher {
    fn new(n: usize, batch: usize, mut stream: RandomStream) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        stream.shuffle(&mut order);
        Self {
            order,
            pos: 0,
            batch: batch.min(n),
            stream,
        }
    }

    fn next(&mut self) -> Vec<usize> {
        if self.pos + self.batch > self.order.len() {
            self.stream.shuffle(&mut self.order);
            self.pos = 0;
        }
        let idx = self.order[self.pos..self.pos + self.batch].to_vec();
        self.pos += self.batch;
        idx
    }
}

/// Full validation MSE, evaluated forward-only in batches.
pub fn eval_mse(model: &Model, ds: &Dataset, batch: usize) -> f64 {
    let mut total_sq = 0.0;
    let mut total_n = 0usize;
    let mut start = 0;
    while start < ds.count {
        let end = (start + batch).min(ds.count);
        let idx: Vec<usize> = (start..end).collect();
        let (x, y) = ds.gather(&idx);
        let (pred, _) = model.predict(&x);
        let n = y.len();
        let sq: f64 = pred
            .data()
            .iter()
            .zip(y.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        total_sq += sq;
        total_n += n;
        start = end;
    }
    total_sq / total_n as f64
}

/// Train one model on one dataset, deterministically in the seed.
///
/// The model is initialized from the "init" substream and batches are drawn
/// from the "shuffle" substream; datasets are never mutated. Logging happens
/// every `log_every` iterations and at the final iteration. A non-finite
/// gradient aborts the run: the error carries the partial record.
pub fn train_run(
    config: &models::ModelConfig,
    train_ds: &Dataset,
    val_ds: &Dataset,
    seed: u64,
    opts: &TrainOptions,
) -> Result<TrainOutcome, TrainerError> {
    if train_ds.task_dim != config.task_dim || train_ds.seq_len != config.seq_len {
        return Err(TrainerError::Config(format!(
            "dataset geometry ({}, {}) does not match config ({}, {})",
            train_ds.seq_len, train_ds.task_dim, config.seq_len, config.task_dim
        )));
    }
    let started = std::time::Instant::now();
    let root = RandomStream::new(seed);
    let mut model = build_model(config, &mut root.substream("init"))
        .map_err(|e| TrainerError::Config(e.to_string()))?;
    let mut state = OptimState::new(&model.params, AdamHyper::default());
    let mut batcher = Batcher::new(train_ds.count, opts.batch, root.substream("shuffle"));

    let mut record = RunRecord {
        config: config.clone(),
        seed,
        dataset: train_ds.name.clone(),
        steps: Vec::new(),
        final_val_loss: f64::NAN,
        norm_deviation: None,
        norm_profile: None,
        cosine_alignment: None,
        aborted: None,
        wall_clock_secs: 0.0,
    };

    if opts.iters == 0 {
        record.final_val_loss = eval_mse(&model, val_ds, opts.batch);
        record.wall_clock_secs = started.elapsed().as_secs_f64();
        return Ok(TrainOutcome { record, model });
    }

    let is_gated = config.kind == ModelKind::Edelta;
    for i in 0..opts.iters {
        let idx = batcher.next();
        let (x, y) = train_ds.gather(&idx);
        let mut tape = Tape::new();
        let fwd = model.forward(&mut tape, &x);
        let task = tape.mse_loss(fwd.output, &y);
        let total = if is_gated && config.lambda_gate > 0.0 {
            let mut terms = vec![task];
            let bsz = tape.value(fwd.gammas[0]).len();
            let ones = tape.constant(Tensor::new(vec![bsz], vec![1.0; bsz]).unwrap());
            for &g in &fwd.gammas {
                let om = tape.sub(ones, g);
                let prod = tape.mul(g, om);
                let scaled = tape.scale(prod, 4.0 * config.lambda_gate);
                terms.push(tape.mean_all(scaled));
            }
            tape.sum_scalars(&terms)
        } else {
            task
        };
        let train_loss = tape.value(task).item();
        let gammas: Vec<f64> = fwd
            .gammas
            .iter()
            .map(|&g| {
                let t = tape.value(g);
                t.data().iter().sum::<f64>() / t.len() as f64
            })
            .collect();

        let mut grads = tape.backward(total);
        model.params.zero_grads();
        model.params.absorb(&fwd.binding, &mut grads);
        drop(tape);

        let clipped = clip_gradients(&mut model.params, state.hyper.clip);
        let grad_norm = match clipped {
            Ok(n) => n,
            Err(e) => {
                record.aborted = Some(format!("non-finite gradient at iteration {}", i + 1));
                record.wall_clock_secs = started.elapsed().as_secs_f64();
                return Err(TrainerError::Aborted {
                    source: Box::new(e),
                    record: Box::new(record),
                });
            }
        };
        let lr = lr_at(i + 1);
        if let Err(e) = adamw_step(&mut model.params, &mut state, lr) {
            record.aborted = Some(format!("non-finite gradient at iteration {}", i + 1));
            record.wall_clock_secs = started.elapsed().as_secs_f64();
            return Err(TrainerError::Aborted {
                source: Box::new(e),
                record: Box::new(record),
            });
        }

        let iter = i + 1;
        if iter % opts.log_every == 0 || iter == opts.iters {
            let val_loss = eval_mse(&model, val_ds, opts.batch);
            record.steps.push(StepRecord {
                iter,
                train_loss,
                val_loss,
                lr,
                grad_norm,
                gammas,
            });
        }
    }

    record.final_val_loss = eval_mse(&model, val_ds, opts.batch);
    if val_ds.name.starts_with("stability") {
        let echo = val_ds.input_row(0);
        let positions = (val_ds.seq_len - 1).min(100);
        record.norm_deviation = Some(norm_deviation(&model, &echo, positions));
        record.norm_profile = Some(norm_profile(&model, &echo, positions));
    }
    if val_ds.name.starts_with("reflection") {
        let (x, y) = val_ds.gather(&(0..val_ds.count).collect::<Vec<_>>());
        let (pred, _) = model.predict(&x);
        let (align, _) = cosine_alignment(&pred, &y);
        record.cosine_alignment = Some(align);
    }
    record.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(TrainOutcome { record, model })
}
